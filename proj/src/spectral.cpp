#include "fesense/spectral.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "fesense/errors.hpp"
#include "fesense/math_util.hpp"

namespace fesense {

namespace {

std::uint64_t width_to_ps(double bin_width_s, const char* what) {
  const double ps = bin_width_s * 1e12;
  const auto rounded = static_cast<std::uint64_t>(std::llround(ps));
  if (!(bin_width_s > 0) || rounded < 1 || std::abs(ps - static_cast<double>(rounded)) > 1e-6 * ps)
    throw validation_error(std::string(what) + " must round to an integer picosecond count >= 1");
  return rounded;
}

}  // namespace

std::size_t Spectrum::grid_bin(double f_hz) const {
  const double k = f_hz * duration_s;
  const double r = std::round(k);
  if (std::abs(k - r) > 1e-6 || r < 0 || r >= static_cast<double>(psd.size())) {
    std::ostringstream msg;
    msg << "frequency " << f_hz << " Hz is not on the spectrum grid (resolution "
        << resolution_hz() << " Hz)";
    throw validation_error(msg.str());
  }
  return static_cast<std::size_t>(r);
}

TimeSeries bin_tags(const TagStream& stream, double bin_width_s) {
  const std::uint64_t width_ps = width_to_ps(bin_width_s, "bin width");
  const std::uint64_t duration_ps = stream.duration_ps();
  if (duration_ps < width_ps) throw validation_error("stream shorter than one bin");
  const std::uint64_t n = (duration_ps + width_ps - 1) / width_ps;
  if (n > (std::uint64_t{1} << 31)) throw validation_error("bin grid too fine for this duration");
  TimeSeries ts;
  ts.bin_width_s = bin_width_s;
  ts.counts.assign(static_cast<std::size_t>(n), 0);
  for (std::uint64_t t : stream.tags_ps()) {
    std::uint64_t k = t / width_ps;
    if (k == n) k = n - 1;  // tag exactly at the stream end
    ++ts.counts[static_cast<std::size_t>(k)];
  }
  return ts;
}

namespace {

// Shared segment walk; iterate(visit) must call visit(tag_ps) in order.
template <class Iterate>
void segment_loop(std::uint64_t duration_ps, double segment_s, double bin_width_s,
                  const SegmentFn& fn, Iterate&& iterate) {
  const std::uint64_t width_ps = width_to_ps(bin_width_s, "bin width");
  const std::uint64_t seg_ps = width_to_ps(segment_s, "segment length");
  if (seg_ps % width_ps != 0)
    throw validation_error("segment length must be a multiple of the bin width");
  const std::uint64_t bins_per_seg = seg_ps / width_ps;
  if (bins_per_seg > (std::uint64_t{1} << 31))
    throw validation_error("bin grid too fine for this segment length");
  const std::uint64_t n_full = duration_ps / seg_ps;
  if (n_full == 0) return;

  TimeSeries ts;
  ts.bin_width_s = bin_width_s;
  ts.counts.assign(static_cast<std::size_t>(bins_per_seg), 0);
  std::uint64_t current = 0;
  auto flush_to = [&](std::uint64_t target) {
    while (current < target && current < n_full) {
      ts.start_time_s = static_cast<double>(current) * segment_s;
      fn(static_cast<std::size_t>(current), ts);
      std::fill(ts.counts.begin(), ts.counts.end(), 0);
      ++current;
    }
  };
  iterate([&](std::uint64_t t) {
    const std::uint64_t seg = t / seg_ps;
    if (seg >= n_full) return;  // partial tail dropped
    if (seg > current) flush_to(seg);
    ++ts.counts[static_cast<std::size_t>((t - seg * seg_ps) / width_ps)];
  });
  flush_to(n_full);
}

}  // namespace

void for_each_segment(const TagStream& stream, double segment_s, double bin_width_s,
                      const SegmentFn& fn) {
  segment_loop(stream.duration_ps(), segment_s, bin_width_s, fn, [&](auto&& visit) {
    for (std::uint64_t t : stream.tags_ps()) visit(t);
  });
}

void for_each_segment_file(const std::filesystem::path& path, double segment_s,
                           double bin_width_s, const SegmentFn& fn) {
  TagFileReader reader(path);
  segment_loop(reader.header().duration_ps, segment_s, bin_width_s, fn, [&](auto&& visit) {
    std::vector<std::uint64_t> buffer(1 << 20);
    for (;;) {
      const std::size_t got = reader.next(buffer);
      if (got == 0) break;
      for (std::size_t i = 0; i < got; ++i) visit(buffer[i]);
    }
  });
}

namespace {

Spectrum psd_of_buffer(std::vector<double>&& data, double bin_width_s, Window window,
                       bool keep_amplitude) {
  const std::size_t n = data.size();
  if (n < 2) throw validation_error("need at least two bins for a spectrum");

  double mean = 0.0;
  for (double v : data) mean += v;
  mean /= static_cast<double>(n);
  for (double& v : data) v -= mean;

  double gain = 1.0;
  if (window == Window::hann) {
    gain = 0.5;  // coherent gain of the periodic Hann window
    for (std::size_t i = 0; i < n; ++i)
      data[i] *= 0.5 - 0.5 * std::cos(kTwoPi * static_cast<double>(i) / static_cast<double>(n));
  }

  const std::size_t n_out = n / 2 + 1;
  auto* out = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * n_out));
  if (!out) throw simulation_error("fftw allocation failed");
  fftw_plan plan = fftw_plan_dft_r2c_1d(static_cast<int>(n), data.data(), out, FFTW_ESTIMATE);
  if (!plan) {
    fftw_free(out);
    throw simulation_error("fftw plan creation failed");
  }
  fftw_execute(plan);
  fftw_destroy_plan(plan);

  Spectrum s;
  s.bin_width_s = bin_width_s;
  s.duration_s = bin_width_s * static_cast<double>(n);
  s.window = window;
  s.psd.resize(n_out);
  if (keep_amplitude) s.amplitude.resize(n_out);
  s.power_only = !keep_amplitude;
  const double inv_gain = 1.0 / gain;
  for (std::size_t k = 0; k < n_out; ++k) {
    const double re = out[k][0] * inv_gain;
    const double im = out[k][1] * inv_gain;
    s.psd[k] = re * re + im * im;
    if (keep_amplitude) s.amplitude[k] = {re, im};
  }
  fftw_free(out);
  return s;
}

}  // namespace

Spectrum psd(const TimeSeries& series, Window window, bool keep_amplitude) {
  std::vector<double> data(series.counts.begin(), series.counts.end());
  return psd_of_buffer(std::move(data), series.bin_width_s, window, keep_amplitude);
}

Spectrum psd(const SampledSeries& series, Window window, bool keep_amplitude) {
  std::vector<double> data = series.values;
  return psd_of_buffer(std::move(data), series.bin_width_s, window, keep_amplitude);
}

namespace {

void check_same_grid(const Spectrum& a, const Spectrum& b, const char* what) {
  if (a.psd.size() != b.psd.size() || a.bin_width_s != b.bin_width_s ||
      a.window != b.window || a.background_subtracted != b.background_subtracted)
    throw validation_error(std::string(what) + ": spectra are not on identical grids");
}

}  // namespace

Spectrum average_psd(std::span<const Spectrum> spectra) {
  if (spectra.empty()) throw validation_error("average_psd needs at least one spectrum");
  Spectrum acc;
  acc.bin_width_s = spectra[0].bin_width_s;
  acc.duration_s = spectra[0].duration_s;
  acc.window = spectra[0].window;
  acc.background_subtracted = spectra[0].background_subtracted;
  acc.power_only = true;
  acc.n_averages = 0;
  acc.psd.assign(spectra[0].psd.size(), 0.0);
  double weight_sum = 0.0;
  for (const auto& s : spectra) {
    check_same_grid(spectra[0], s, "average_psd");
    const double w = s.n_averages;
    for (std::size_t k = 0; k < acc.psd.size(); ++k) acc.psd[k] += w * s.psd[k];
    weight_sum += w;
    acc.n_averages += s.n_averages;
    acc.clamped_bins += s.clamped_bins;
  }
  for (double& v : acc.psd) v /= weight_sum;
  return acc;
}

Spectrum onoff_subtract(const Spectrum& on, const Spectrum& off) {
  check_same_grid(on, off, "onoff_subtract");
  Spectrum s;
  s.bin_width_s = on.bin_width_s;
  s.duration_s = on.duration_s;
  s.window = on.window;
  s.n_averages = on.n_averages;
  s.power_only = true;
  s.background_subtracted = true;
  s.psd.resize(on.psd.size());
  for (std::size_t k = 0; k < s.psd.size(); ++k) {
    const double d = on.psd[k] - off.psd[k];
    if (d < 0) {
      s.psd[k] = 0.0;
      ++s.clamped_bins;
    } else {
      s.psd[k] = d;
    }
  }
  return s;
}

FloorEstimate noise_floor(const Spectrum& spectrum, const FloorOptions& options) {
  const double lo = options.band_lo_hz > 0 ? options.band_lo_hz : 2.0 * spectrum.resolution_hz();
  const double hi = options.band_hi_hz > 0 ? options.band_hi_hz : spectrum.nyquist_hz();
  if (!(lo < hi)) throw validation_error("noise floor band is empty");
  auto k_lo = static_cast<std::size_t>(std::max(1.0, std::ceil(lo * spectrum.duration_s)));
  auto k_hi = static_cast<std::size_t>(
      std::min(static_cast<double>(spectrum.psd.size()) - 1.0,
               std::floor(hi * spectrum.duration_s)));
  std::vector<std::size_t> excluded;
  for (double f : options.known_peaks_hz) {
    const double kb = std::round(f * spectrum.duration_s);
    for (int d = -options.exclude_halfwidth_bins; d <= options.exclude_halfwidth_bins; ++d) {
      const double k = kb + d;
      if (k >= 0) excluded.push_back(static_cast<std::size_t>(k));
    }
  }
  std::sort(excluded.begin(), excluded.end());
  std::vector<double> band;
  band.reserve(k_hi - k_lo + 1);
  for (std::size_t k = k_lo; k <= k_hi; ++k) {
    if (std::binary_search(excluded.begin(), excluded.end(), k)) continue;
    band.push_back(spectrum.psd[k]);
  }
  FloorEstimate est;
  est.n_bins = band.size();
  if (band.empty()) throw validation_error("noise floor band contains no usable bins");
  std::sort(band.begin(), band.end());
  const std::size_t m = band.size();
  est.median = (m % 2 == 1) ? band[m / 2] : 0.5 * (band[m / 2 - 1] + band[m / 2]);
  // Median-to-mean correction for an n-average exponential power
  // estimate: exact ln 2 at n = 1, Wilson-Hilferty beyond.
  const double n = spectrum.n_averages;
  const double c = (spectrum.n_averages == 1)
                       ? std::numbers::ln2
                       : std::pow(1.0 - 1.0 / (9.0 * n), 3.0);
  est.mean_equivalent = est.median / c;
  return est;
}

SnrScaling snr_scaling(std::span<const Spectrum> spectra, std::span<const double> times_s,
                       double signal_freq_hz, const FloorOptions& floor_opts) {
  if (spectra.size() != times_s.size())
    throw validation_error("snr_scaling: one time per spectrum required");
  if (spectra.size() < 4) throw validation_error("snr_scaling needs at least 4 time points");
  for (std::size_t i = 1; i < times_s.size(); ++i)
    if (!(times_s[i] > times_s[i - 1]))
      throw validation_error("snr_scaling times must be strictly increasing");
  if (!(times_s.back() >= 10.0 * times_s.front()))
    throw validation_error("snr_scaling times must span at least one decade");

  FloorOptions opts = floor_opts;
  if (std::find(opts.known_peaks_hz.begin(), opts.known_peaks_hz.end(), signal_freq_hz) ==
      opts.known_peaks_hz.end())
    opts.known_peaks_hz.push_back(signal_freq_hz);

  std::vector<SnrPoint> points;
  for (std::size_t i = 0; i < spectra.size(); ++i) {
    const auto& s = spectra[i];
    SnrPoint p;
    p.time_s = times_s[i];
    p.peak_psd = s.psd[s.grid_bin(signal_freq_hz)];
    p.n_averages = static_cast<double>(s.n_averages);
    const FloorEstimate fl = noise_floor(s, opts);
    p.floor_psd = fl.mean_equivalent;
    points.push_back(p);
  }
  return fit_snr_powerlaw(points);
}

SnrScaling fit_snr_powerlaw(std::span<const SnrPoint> points) {
  if (points.size() < 4) throw validation_error("snr fit needs at least 4 time points");
  for (std::size_t i = 1; i < points.size(); ++i)
    if (!(points[i].time_s > points[i - 1].time_s))
      throw validation_error("snr fit times must be strictly increasing");

  SnrScaling out;
  std::size_t usable = 0;
  for (const SnrPoint& given : points) {
    SnrPoint p = given;
    if (p.floor_psd <= 0)
      throw simulation_error("noise floor is zero; SNR is undefined and the fit is refused");
    p.snr = std::sqrt(std::max(p.peak_psd - p.floor_psd, 0.0) / p.floor_psd);
    p.used_in_fit = p.snr > 0;
    usable += p.used_in_fit ? 1 : 0;
    out.points.push_back(p);
  }
  if (usable == 0)
    throw simulation_error(
        "signal bin below the noise floor at every time point; fit refused");
  if (usable < 4)
    throw simulation_error("fewer than 4 time points with signal above the floor; fit refused");

  // Weighted least squares on (ln t, ln snr). A peak of excess rho floor
  // units over an n-window average has var(rho) = (2 rho + 1)/n, so
  // var(ln snr) = (2 rho + 1) / (4 rho^2 n). Weights must come from a
  // smoothed rho, not each point's own estimate, or upward fluctuations
  // would boost their own weight: fit unweighted first, then reweight
  // from the fitted curve.
  double amp = 0.0, expo = 0.0;
  for (int pass = 0; pass < 2; ++pass) {
    double sw = 0, sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (const auto& p : out.points) {
      if (!p.used_in_fit) continue;
      double w = 1.0;
      if (pass > 0) {
        const double snr_pred = amp * std::pow(p.time_s, expo);
        const double rho = snr_pred * snr_pred;
        const double n_avg = p.n_averages > 0 ? p.n_averages : 1.0;
        w = 4.0 * rho * rho * n_avg / (2.0 * rho + 1.0);
      }
      const double x = std::log(p.time_s);
      const double y = std::log(p.snr);
      sw += w;
      sx += w * x;
      sy += w * y;
      sxx += w * x * x;
      sxy += w * x * y;
    }
    const double det = sw * sxx - sx * sx;
    if (!(det > 0)) throw simulation_error("snr fit is degenerate; fit refused");
    expo = (sw * sxy - sx * sy) / det;
    amp = std::exp((sy - expo * sx) / sw);
  }
  out.exponent = expo;
  out.amplitude = amp;
  return out;
}

void write_spectrum_csv(const Spectrum& spectrum, std::ostream& out) {
  out << "# fesense spectrum v1\n";
  out.precision(17);
  out << "# bin_width_s=" << spectrum.bin_width_s << "\n";
  out << "# duration_s=" << spectrum.duration_s << "\n";
  out << "# n_averages=" << spectrum.n_averages << "\n";
  out << "# window=" << (spectrum.window == Window::hann ? "hann" : "none") << "\n";
  out << "# power_only=" << (spectrum.power_only ? 1 : 0) << "\n";
  out << "# background_subtracted=" << (spectrum.background_subtracted ? 1 : 0) << "\n";
  out << "# clamped_bins=" << spectrum.clamped_bins << "\n";
  out << "frequency_hz,amplitude_re,amplitude_im,psd\n";
  for (std::size_t k = 0; k < spectrum.psd.size(); ++k) {
    const double re = spectrum.power_only ? 0.0 : spectrum.amplitude[k].real();
    const double im = spectrum.power_only ? 0.0 : spectrum.amplitude[k].imag();
    out << spectrum.freq_of(k) << "," << re << "," << im << "," << spectrum.psd[k] << "\n";
  }
}

Spectrum read_spectrum_csv(std::istream& in) {
  Spectrum s;
  std::string line;
  bool header_done = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto eq = line.find('=');
      if (eq == std::string::npos) continue;
      const std::string key = line.substr(2, eq - 2);
      const std::string val = line.substr(eq + 1);
      if (key == "bin_width_s") s.bin_width_s = std::stod(val);
      else if (key == "duration_s") s.duration_s = std::stod(val);
      else if (key == "n_averages") s.n_averages = static_cast<std::uint32_t>(std::stoul(val));
      else if (key == "window") s.window = (val == "hann") ? Window::hann : Window::none;
      else if (key == "power_only") s.power_only = (val == "1");
      else if (key == "background_subtracted") s.background_subtracted = (val == "1");
      else if (key == "clamped_bins") s.clamped_bins = std::stoull(val);
      continue;
    }
    if (!header_done) {  // column header row
      header_done = true;
      continue;
    }
    double f, re, im, p;
    if (std::sscanf(line.c_str(), "%lf,%lf,%lf,%lf", &f, &re, &im, &p) != 4)
      throw io_error("malformed spectrum csv row: " + line);
    if (!s.power_only) s.amplitude.emplace_back(re, im);
    s.psd.push_back(p);
  }
  if (s.psd.empty() || !(s.bin_width_s > 0) || !(s.duration_s > 0))
    throw io_error("spectrum csv missing data or header");
  return s;
}

}  // namespace fesense
