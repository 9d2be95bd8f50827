#include "fesense/phase_lock.hpp"

#include <cmath>
#include <limits>
#include <ostream>
#include <sstream>

#include "fesense/errors.hpp"
#include "fesense/math_util.hpp"

namespace fesense {

void validate_reference(const ReferenceSpec& ref) {
  if (!(ref.omega1_hz > 0) || !(ref.omega2_hz > ref.omega1_hz))
    throw validation_error("reference needs 0 < omega1_hz < omega2_hz");
  if (!(ref.min_amplitude >= 0))
    throw validation_error("reference min_amplitude must be >= 0");
  if (!(ref.phase_std_threshold_rad > 0))
    throw validation_error("reference phase_std_threshold_rad must be > 0");
}

RefPhases extract_reference_phases(const Spectrum& spectrum, const ReferenceSpec& ref,
                                   const FloorOptions& floor_opts) {
  validate_reference(ref);
  if (spectrum.power_only || spectrum.amplitude.empty())
    throw validation_error("reference extraction needs a complex spectrum");

  FloorOptions opts = floor_opts;
  opts.known_peaks_hz.push_back(ref.omega1_hz);
  opts.known_peaks_hz.push_back(ref.omega2_hz);
  const FloorEstimate fl = noise_floor(spectrum, opts);

  RefPhases out;
  const double freqs[2] = {ref.omega1_hz, ref.omega2_hz};
  double* phis[2] = {&out.phi1, &out.phi2};
  double* sigmas[2] = {&out.sigma1, &out.sigma2};
  for (int i = 0; i < 2; ++i) {
    const std::size_t k = spectrum.grid_bin(freqs[i]);
    const std::complex<double> a = spectrum.amplitude[k];
    const double mag = std::abs(a);
    if (ref.min_amplitude > 0 && mag < ref.min_amplitude) {
      std::ostringstream msg;
      msg << "reference peak at " << freqs[i] << " Hz has amplitude " << mag
          << ", below the minimum " << ref.min_amplitude;
      throw simulation_error(msg.str());
    }
    // Additive noise of power `floor` splits evenly between quadratures.
    const double sigma = mag > 0 ? std::sqrt(0.5 * fl.mean_equivalent) / mag
                                 : std::numeric_limits<double>::infinity();
    if (sigma > ref.phase_std_threshold_rad) {
      std::ostringstream msg;
      msg << "reference peak at " << freqs[i] << " Hz is too noisy for phase locking "
          << "(estimated phase std " << sigma << " rad exceeds "
          << ref.phase_std_threshold_rad << ")";
      throw simulation_error(msg.str());
    }
    *phis[i] = std::arg(a);
    *sigmas[i] = sigma;
  }
  return out;
}

namespace {

// Comb bin table for a spectrum grid; index i holds (bin, n).
std::vector<std::pair<std::size_t, std::int32_t>> comb_bins(const Spectrum& s,
                                                            const ReferenceSpec& ref) {
  const double delta = ref.delta_hz();
  const double res = s.resolution_hz();
  const double ny = s.nyquist_hz();
  const auto n_lo = static_cast<std::int64_t>(std::ceil((res - ref.omega1_hz) / delta - 1e-9));
  const auto n_hi = static_cast<std::int64_t>(std::floor((ny - ref.omega1_hz) / delta + 1e-9));
  std::vector<std::pair<std::size_t, std::int32_t>> out;
  for (std::int64_t n = n_lo; n <= n_hi; ++n) {
    const double f = ref.omega1_hz + static_cast<double>(n) * delta;
    if (f < res - 1e-9) continue;
    std::size_t bin;
    try {
      bin = s.grid_bin(f);
    } catch (const validation_error&) {
      std::ostringstream msg;
      msg << "comb line " << n << " at " << f
          << " Hz is off the spectrum grid; choose a duration that makes the "
             "reference comb commensurate";
      throw validation_error(msg.str());
    }
    out.emplace_back(bin, static_cast<std::int32_t>(n));
  }
  return out;
}

}  // namespace

PhasedSpectrum phase_correct(const Spectrum& spectrum, double phi1, double phi2,
                             const ReferenceSpec& ref) {
  validate_reference(ref);
  if (spectrum.power_only || spectrum.amplitude.empty())
    throw validation_error("phase correction needs a complex spectrum");
  PhasedSpectrum ps;
  ps.ref = ref;
  ps.spectrum = spectrum;
  ps.comb_index.assign(spectrum.amplitude.size(), PhasedSpectrum::kOffComb);
  for (const auto& [bin, n] : comb_bins(spectrum, ref)) {
    const double angle = -(phi1 + static_cast<double>(n) * (phi2 - phi1));
    ps.spectrum.amplitude[bin] *= std::complex<double>(std::cos(angle), std::sin(angle));
    ps.comb_index[bin] = n;
  }
  ps.phase_rad.resize(spectrum.amplitude.size());
  for (std::size_t k = 0; k < ps.phase_rad.size(); ++k)
    ps.phase_rad[k] = std::arg(ps.spectrum.amplitude[k]);
  return ps;
}

PhasedSpectrum coherent_average(std::span<const PhasedSpectrum> traces) {
  if (traces.empty()) throw validation_error("coherent_average needs at least one trace");
  const PhasedSpectrum& head = traces[0];
  PhasedSpectrum out;
  out.ref = head.ref;
  out.comb_index = head.comb_index;
  out.spectrum.bin_width_s = head.spectrum.bin_width_s;
  out.spectrum.duration_s = head.spectrum.duration_s;
  out.spectrum.window = head.spectrum.window;
  out.spectrum.n_averages = 0;
  const std::size_t nbins = head.spectrum.amplitude.size();
  out.spectrum.amplitude.assign(nbins, {0.0, 0.0});
  out.spectrum.psd.assign(nbins, 0.0);

  for (const auto& tr : traces) {
    if (tr.spectrum.amplitude.size() != nbins ||
        tr.spectrum.bin_width_s != head.spectrum.bin_width_s ||
        tr.spectrum.duration_s != head.spectrum.duration_s ||
        tr.spectrum.window != head.spectrum.window)
      throw validation_error("coherent_average: traces are not on identical grids");
    if (tr.ref.omega1_hz != head.ref.omega1_hz || tr.ref.omega2_hz != head.ref.omega2_hz)
      throw validation_error("coherent_average: traces use different references");
    for (std::size_t k = 0; k < nbins; ++k) {
      out.spectrum.amplitude[k] += tr.spectrum.amplitude[k];
      out.spectrum.psd[k] += tr.spectrum.psd[k];
    }
    out.spectrum.n_averages += tr.spectrum.n_averages;
  }
  const double inv_m = 1.0 / static_cast<double>(traces.size());
  out.phase_rad.resize(nbins);
  for (std::size_t k = 0; k < nbins; ++k) {
    out.spectrum.amplitude[k] *= inv_m;
    if (out.on_comb(k)) {
      // Coherent: power of the complex mean.
      out.spectrum.psd[k] = std::norm(out.spectrum.amplitude[k]);
    } else {
      // Incoherent: mean power; the mean amplitude is not meaningful here.
      out.spectrum.psd[k] *= inv_m;
      out.spectrum.amplitude[k] = {0.0, 0.0};
    }
    out.phase_rad[k] = std::arg(out.spectrum.amplitude[k]);
  }
  return out;
}

void write_phased_csv(const PhasedSpectrum& ps, std::ostream& out) {
  out << "# fesense phased spectrum v1\n";
  out.precision(17);
  out << "# bin_width_s=" << ps.spectrum.bin_width_s << "\n";
  out << "# duration_s=" << ps.spectrum.duration_s << "\n";
  out << "# n_averages=" << ps.spectrum.n_averages << "\n";
  out << "# omega1_hz=" << ps.ref.omega1_hz << "\n";
  out << "# omega2_hz=" << ps.ref.omega2_hz << "\n";
  out << "frequency_hz,amplitude_re,amplitude_im,psd,phase_rad,comb_index\n";
  for (std::size_t k = 0; k < ps.spectrum.psd.size(); ++k) {
    out << ps.spectrum.freq_of(k) << "," << ps.spectrum.amplitude[k].real() << ","
        << ps.spectrum.amplitude[k].imag() << "," << ps.spectrum.psd[k] << ","
        << ps.phase_rad[k] << ",";
    if (ps.on_comb(k)) out << ps.comb_index[k];
    out << "\n";
  }
}

nlohmann::json to_json(const ReferenceSpec& ref) {
  return {{"omega1_hz", ref.omega1_hz},
          {"omega2_hz", ref.omega2_hz},
          {"min_amplitude", ref.min_amplitude},
          {"phase_std_threshold_rad", ref.phase_std_threshold_rad}};
}

ReferenceSpec reference_from_json(const nlohmann::json& j) {
  ReferenceSpec ref;
  ref.omega1_hz = j.at("omega1_hz").get<double>();
  ref.omega2_hz = j.at("omega2_hz").get<double>();
  ref.min_amplitude = j.value("min_amplitude", 0.0);
  ref.phase_std_threshold_rad = j.value("phase_std_threshold_rad", 0.1);
  validate_reference(ref);
  return ref;
}

}  // namespace fesense
