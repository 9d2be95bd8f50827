#include "fesense/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <ctime>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "fesense/config.hpp"
#include "fesense/errors.hpp"
#include "fesense/fit.hpp"
#include "fesense/lindblad.hpp"
#include "fesense/math_util.hpp"
#include "fesense/odmr.hpp"
#include "fesense/phase_lock.hpp"
#include "fesense/photon_sim.hpp"
#include "fesense/rng.hpp"
#include "fesense/sha256.hpp"
#include "fesense/signal.hpp"
#include "fesense/spectral.hpp"
#include "fesense/svg_plot.hpp"
#include "fesense/tag_stream.hpp"

namespace fesense {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------- config

double need_num(const json& j, const char* key) {
  if (!j.contains(key)) throw validation_error(std::string("config: missing key '") + key + "'");
  if (!j.at(key).is_number())
    throw validation_error(std::string("config: key '") + key + "' must be a number");
  return j.at(key).get<double>();
}

double opt_num(const json& j, const char* key, double dflt) {
  if (!j.contains(key)) return dflt;
  if (!j.at(key).is_number())
    throw validation_error(std::string("config: key '") + key + "' must be a number");
  return j.at(key).get<double>();
}

std::uint64_t opt_seed(const json& j) {
  if (!j.contains("seed")) return 1;
  return j.at("seed").get<std::uint64_t>();
}

OdmrParams odmr_from_config(const json& cfg) {
  if (!cfg.contains("odmr")) throw validation_error("config: missing 'odmr' object");
  return odmr_from_json(cfg.at("odmr"));
}

double projection_from_config(const json& cfg) {
  if (cfg.contains("projection_angle_rad") && cfg.contains("projection_angle_deg"))
    throw validation_error("config: give projection_angle_rad or _deg, not both");
  if (cfg.contains("projection_angle_rad")) return cfg.at("projection_angle_rad").get<double>();
  if (cfg.contains("projection_angle_deg"))
    return cfg.at("projection_angle_deg").get<double>() * kPi / 180.0;
  return kDefaultProjectionAngleRad;
}

double drive_from_config(const json& cfg, const OdmrParams& odmr) {
  return opt_num(cfg, "drive_frequency_hz", sensing_point(odmr));
}

// ------------------------------------------------------------------ time

std::string utc_now_string() {
  const std::time_t now = std::time(nullptr);
  std::tm tm_utc{};
  gmtime_r(&now, &tm_utc);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
  return buf;
}

// ------------------------------------------------------------------- csv

struct CsvTable {
  std::vector<std::string> headers;
  std::vector<std::vector<std::string>> rows;

  std::size_t col(const std::string& name) const {
    for (std::size_t i = 0; i < headers.size(); ++i)
      if (headers[i] == name) return i;
    throw io_error("csv: missing column '" + name + "'");
  }
  bool empty_cell(std::size_t r, std::size_t c) const { return rows[r][c].empty(); }
  double num(std::size_t r, std::size_t c) const {
    const std::string& s = rows[r][c];
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end == s.c_str()) throw io_error("csv: non-numeric cell '" + s + "'");
    return v;
  }
  std::vector<double> column(const std::string& name) const {
    const std::size_t c = col(name);
    std::vector<double> out;
    out.reserve(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) out.push_back(num(r, c));
    return out;
  }
};

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

CsvTable read_csv_table(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open " + path.string());
  CsvTable t;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    auto cells = split_csv_line(line);
    if (t.headers.empty())
      t.headers = std::move(cells);
    else
      t.rows.push_back(std::move(cells));
  }
  if (t.headers.empty()) throw io_error("empty csv: " + path.string());
  return t;
}

// ------------------------------------------------------------- artifacts

struct RunWriter {
  fs::path dir;
  std::vector<ManifestFile> files;
  std::vector<fs::path> created;

  void note(const std::string& rel) {
    const fs::path p = dir / rel;
    ManifestFile f;
    f.path = rel;
    f.bytes = fs::file_size(p);
    f.sha256 = sha256_file_hex(p);
    files.push_back(std::move(f));
    created.push_back(p);
  }

  void put(const std::string& rel, const std::string& contents) {
    atomic_write_file(dir / rel, contents);
    note(rel);
  }

  void cleanup() {
    for (const auto& p : created) {
      std::error_code ec;
      fs::remove(p, ec);
    }
  }
};

AssertionRecord make_check(std::string name, double value, double low, double high,
                           bool recomputable, std::string detail) {
  AssertionRecord a;
  a.name = std::move(name);
  a.value = value;
  a.low = low;
  a.high = high;
  a.recomputable = recomputable;
  a.detail = std::move(detail);
  a.passed = std::isfinite(value) && value >= low && value <= high;
  return a;
}

struct Analysis {
  std::map<std::string, double> values;
  std::vector<std::pair<std::string, json>> reports;  // rel path -> json artifact
};

double value_of(const Analysis& a, const std::string& key) {
  auto it = a.values.find(key);
  if (it == a.values.end()) throw verification_error("analysis missed value '" + key + "'");
  return it->second;
}

// --------------------------------------------------------------- helpers

// Alias of frequency f onto the [0, nyquist] grid of a sampled spectrum.
double fold_alias(double f, double nyquist) {
  const double period = 2.0 * nyquist;
  double r = std::fmod(f, period);
  if (r < 0) r += period;
  return r <= nyquist ? r : period - r;
}

// Running mean of per-segment power spectra.
struct PsdAccumulator {
  Spectrum acc;
  std::size_t count = 0;

  void add(const Spectrum& s) {
    if (count == 0) {
      acc = s;
      acc.amplitude.clear();
      acc.power_only = true;
    } else {
      if (acc.psd.size() != s.psd.size()) throw simulation_error("segment grids diverged");
      for (std::size_t k = 0; k < s.psd.size(); ++k) acc.psd[k] += s.psd[k];
    }
    ++count;
  }

  Spectrum mean() const {
    if (count == 0) throw simulation_error("no segments accumulated");
    Spectrum m = acc;
    const double inv = 1.0 / static_cast<double>(count);
    for (auto& v : m.psd) v *= inv;
    m.n_averages = static_cast<std::uint32_t>(count);
    return m;
  }
};

Spectrum averaged_segments(const TagStream& stream, double segment_s, double bin_width_s) {
  PsdAccumulator acc;
  for_each_segment(stream, segment_s, bin_width_s,
                   [&](std::size_t, const TimeSeries& seg) { acc.add(psd(seg, Window::none, false)); });
  return acc.mean();
}

// Max-preserving decimation for plot series; peaks survive.
void decimate_for_plot(const Spectrum& s, std::size_t max_points, std::vector<double>& fx,
                       std::vector<double>& fy) {
  const std::size_t n = s.psd.size();
  const std::size_t chunk = std::max<std::size_t>(1, n / max_points);
  for (std::size_t k = 1; k < n; k += chunk) {
    std::size_t best = k;
    for (std::size_t j = k; j < std::min(n, k + chunk); ++j)
      if (s.psd[j] > s.psd[best]) best = j;
    fx.push_back(s.freq_of(best));
    fy.push_back(s.psd[best]);
  }
}

std::string format_row(std::initializer_list<double> vals) {
  std::ostringstream os;
  os.precision(17);
  bool first = true;
  for (double v : vals) {
    if (!first) os << ',';
    os << v;
    first = false;
  }
  return os.str();
}

Spectrum load_spectrum(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open " + path.string());
  return read_spectrum_csv(in);
}

double bessel_j(int order, double x) {
  const int m = std::abs(order);
  double v = std::cyl_bessel_j(static_cast<double>(m), x);
  if (order < 0 && (m % 2) != 0) v = -v;
  return v;
}

// ======================================================== sensitivity-table

OdmrParams table_row_params(const json& row, double gyro) {
  OdmrParams p;
  p.linewidth_hz = need_num(row, "linewidth_hz");
  p.contrast = need_num(row, "contrast");
  p.count_rate_hz = need_num(row, "count_rate_hz");
  p.gyromagnetic_hz_per_t = gyro;
  if (row.value("lineshape", "single_lorentzian") == std::string("hyperfine_triplet"))
    p.lineshape = LineshapeKind::hyperfine_triplet;
  p.hyperfine_splitting_hz = row.value("hyperfine_splitting_hz", p.hyperfine_splitting_hz);
  validate_odmr(p);
  return p;
}

Analysis analyze_sensitivity(const fs::path& dir, const json& cfg) {
  Analysis a;
  const CsvTable t = read_csv_table(dir / "sensitivity_table.csv");
  const double gyro = opt_num(cfg, "gyromagnetic_hz_per_t", kDefaultGyromagneticHzPerT);
  const auto& rows = cfg.at("rows");
  if (t.rows.size() != rows.size())
    throw verification_error("sensitivity_table.csv row count differs from config");
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const OdmrParams p = table_row_params(rows[i], gyro);
    a.values["eta_ut_row" + std::to_string(i)] = sensitivity(p) * 1e6;
  }
  a.values["rows"] = static_cast<double>(rows.size());
  return a;
}

std::vector<AssertionRecord> build_asserts_sensitivity(const json& cfg, const Analysis& a) {
  std::vector<AssertionRecord> out;
  const std::size_t n = cfg.at("rows").size();
  out.push_back(make_check("rows", value_of(a, "rows"), static_cast<double>(n),
                           static_cast<double>(n), true, "table row count"));
  if (cfg.contains("expected_eta_ut_per_sqrt_hz")) {
    const auto& exp = cfg.at("expected_eta_ut_per_sqrt_hz");
    if (exp.size() != n)
      throw validation_error("expected_eta_ut_per_sqrt_hz must match rows length");
    const double tol = opt_num(cfg, "eta_rel_tolerance", 0.02);
    for (std::size_t i = 0; i < n; ++i) {
      const double e = exp[i].get<double>();
      out.push_back(make_check("eta_row" + std::to_string(i),
                               value_of(a, "eta_ut_row" + std::to_string(i)), e * (1.0 - tol),
                               e * (1.0 + tol), true, "sensitivity, uT per sqrt(Hz)"));
    }
  }
  return out;
}

std::vector<AssertionRecord> run_sensitivity(const json& cfg, RunWriter& w) {
  if (!cfg.contains("rows") || !cfg.at("rows").is_array() || cfg.at("rows").empty())
    throw validation_error("sensitivity-table config needs a non-empty 'rows' array");
  const double gyro = opt_num(cfg, "gyromagnetic_hz_per_t", kDefaultGyromagneticHzPerT);

  std::ostringstream csv;
  csv.precision(17);
  csv << "label,linewidth_hz,contrast,count_rate_hz,lineshape,sensing_offset_hz,"
         "sensitivity_t_per_sqrt_hz,sensitivity_ut_per_sqrt_hz,linearity_bound_t\n";
  std::vector<double> idx, etas;
  std::size_t i = 0;
  for (const auto& row : cfg.at("rows")) {
    const OdmrParams p = table_row_params(row, gyro);
    const double eta = sensitivity(p);
    const std::string label = row.value("label", "row" + std::to_string(i));
    csv << label << ',' << p.linewidth_hz << ',' << p.contrast << ',' << p.count_rate_hz << ','
        << (p.lineshape == LineshapeKind::hyperfine_triplet ? "hyperfine_triplet"
                                                            : "single_lorentzian")
        << ',' << (sensing_point(p) - p.center_freq_hz) << ',' << eta << ',' << eta * 1e6 << ','
        << linearity_bound(p) << "\n";
    idx.push_back(static_cast<double>(i));
    etas.push_back(eta * 1e6);
    ++i;
  }
  w.put("sensitivity_table.csv", csv.str());

  SvgPlot plot("Shot-noise sensitivity by parameter set", "row", "uT / sqrt(Hz)");
  plot.add_series("sensitivity", idx, etas, true);
  plot.write(w.dir / "sensitivity.svg");
  w.note("sensitivity.svg");

  return build_asserts_sensitivity(cfg, analyze_sensitivity(w.dir, cfg));
}

// ============================================================= snr-scaling

// Divisors of the 300 s default stream, so every window length tiles the
// whole record and no tail data is discarded.
std::vector<double> snr_times(const json& cfg) {
  std::vector<double> t{10, 15, 20, 25, 30, 50, 60, 75, 100, 150, 300};
  if (cfg.contains("times_s")) t = cfg.at("times_s").get<std::vector<double>>();
  return t;
}

FloorOptions snr_floor_opts(const json& cfg, double f_sig, double nyquist) {
  FloorOptions fo;
  if (cfg.contains("noise_band_hz")) {
    fo.band_lo_hz = cfg.at("noise_band_hz").at(0).get<double>();
    fo.band_hi_hz = cfg.at("noise_band_hz").at(1).get<double>();
  }
  for (int k = 2; k <= 5; ++k) fo.known_peaks_hz.push_back(fold_alias(k * f_sig, nyquist));
  return fo;
}

Analysis analyze_snr(const fs::path& dir, const json& cfg) {
  Analysis a;
  const CsvTable t = read_csv_table(dir / "snr_points.csv");
  std::vector<SnrPoint> pts;
  const std::size_t ct = t.col("time_s"), cp = t.col("peak_psd"), cf = t.col("floor_psd");
  const std::size_t cn = t.col("n_windows");
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    SnrPoint p;
    p.time_s = t.num(r, ct);
    p.peak_psd = t.num(r, cp);
    p.floor_psd = t.num(r, cf);
    p.n_averages = t.num(r, cn);
    pts.push_back(p);
  }
  const SnrScaling sc = fit_snr_powerlaw(pts);

  const OdmrParams odmr = odmr_from_config(cfg);
  const json& tone = cfg.at("tone");
  const double b_proj =
      need_num(tone, "amplitude_t") * std::cos(projection_from_config(cfg));
  // Sensitivity per point is field * sqrt(t) / (2 snr); combine the points
  // by a variance-weighted geometric mean instead of extrapolating the
  // power-law intercept back to t = 1 s, which would amplify slope noise.
  // Weights use the fitted curve's snr, not each point's own estimate.
  double sw = 0.0, swl = 0.0;
  for (const auto& p : sc.points) {
    if (!p.used_in_fit) continue;
    const double snr_pred = sc.amplitude * std::pow(p.time_s, sc.exponent);
    const double rho = snr_pred * snr_pred;
    const double wgt = 4.0 * rho * rho * p.n_averages / (2.0 * rho + 1.0);
    sw += wgt;
    swl += wgt * std::log(b_proj * std::sqrt(p.time_s) / (2.0 * p.snr));
  }
  const double eta_emp = std::exp(swl / sw);
  const double eta_fe = sensitivity(odmr);

  a.values["exponent"] = sc.exponent;
  a.values["amplitude"] = sc.amplitude;
  a.values["eta_ratio"] = eta_emp / eta_fe;

  json rep;
  rep["model"] = "snr = amplitude * t^exponent";
  rep["exponent"] = sc.exponent;
  rep["amplitude"] = sc.amplitude;
  rep["eta_definition"] = "weighted geometric mean of field*sqrt(t)/(2*snr)";
  rep["eta_empirical_t_per_sqrt_hz"] = eta_emp;
  rep["eta_shot_noise_t_per_sqrt_hz"] = eta_fe;
  rep["eta_ratio"] = eta_emp / eta_fe;
  json jpts = json::array();
  for (const auto& p : sc.points)
    jpts.push_back({{"time_s", p.time_s},
                    {"peak_psd", p.peak_psd},
                    {"floor_psd", p.floor_psd},
                    {"snr", p.snr},
                    {"used_in_fit", p.used_in_fit}});
  rep["points"] = jpts;
  a.reports.emplace_back("snr_fit.json", rep);
  return a;
}

std::vector<AssertionRecord> build_asserts_snr(const json& cfg, const Analysis& a) {
  std::vector<AssertionRecord> out;
  const double b_exp = opt_num(cfg, "expected_exponent", 0.5);
  const double b_tol = opt_num(cfg, "exponent_tolerance", 0.05);
  const double rmax = opt_num(cfg, "sensitivity_ratio_max", 1.5);
  out.push_back(make_check("snr_exponent", value_of(a, "exponent"), b_exp - b_tol, b_exp + b_tol,
                           true, "power-law exponent of SNR vs averaging time"));
  out.push_back(make_check("sensitivity_ratio", value_of(a, "eta_ratio"), 1.0 / rmax, rmax, true,
                           "empirical sensitivity over shot-noise prediction"));
  return out;
}

std::vector<AssertionRecord> run_snr(const json& cfg, RunWriter& w) {
  const OdmrParams odmr = odmr_from_config(cfg);
  const double drive = drive_from_config(cfg, odmr);
  const double duration = opt_num(cfg, "duration_s", 300.0);
  const double bin_w = opt_num(cfg, "bin_width_s", 5e-5);
  const std::vector<double> times = snr_times(cfg);
  if (!cfg.contains("tone")) throw validation_error("snr-scaling config needs a 'tone' object");
  const json& jt = cfg.at("tone");

  ToneSpec tone;
  tone.frequency_hz = need_num(jt, "frequency_hz");
  tone.amplitude_t = need_num(jt, "amplitude_t");
  tone.phase_rad = opt_num(jt, "phase_rad", 0.0);

  SignalSpec spec;
  spec.components.push_back(tone);
  spec.projection_angle_rad = projection_from_config(cfg);
  const Signal sig(validate_signal_spec(spec));

  DetectorModel det;
  if (cfg.contains("detector")) det = detector_from_json(cfg.at("detector"));

  const DrivePoint dp{drive};
  const auto rate = [&](double t) { return transduce(odmr, dp, sig.evaluate(t)); };
  const TagStream stream =
      simulate_stream(rate, odmr.count_rate_hz, duration, det, opt_seed(cfg));
  if (cfg.value("write_tags", false)) {
    write_tag_file(stream, w.dir / "tags.ftg");
    w.note("tags.ftg");
  }

  const double nyquist = 0.5 / bin_w;
  const FloorOptions fo = snr_floor_opts(cfg, tone.frequency_hz, nyquist);

  std::vector<Spectrum> spectra;
  spectra.reserve(times.size());
  for (double t : times) spectra.push_back(averaged_segments(stream, t, bin_w));
  const SnrScaling sc = snr_scaling(spectra, times, tone.frequency_hz, fo);

  std::ostringstream csv;
  csv.precision(17);
  csv << "time_s,n_windows,peak_psd,floor_psd,snr,used_in_fit\n";
  std::vector<double> xs, ys, xf, yf;
  for (std::size_t i = 0; i < sc.points.size(); ++i) {
    const auto& p = sc.points[i];
    csv << p.time_s << ',' << spectra[i].n_averages << ',' << p.peak_psd << ',' << p.floor_psd
        << ',' << p.snr << ',' << (p.used_in_fit ? 1 : 0) << "\n";
    if (p.used_in_fit) {
      xs.push_back(p.time_s);
      ys.push_back(p.snr);
      xf.push_back(p.time_s);
      yf.push_back(sc.amplitude * std::pow(p.time_s, sc.exponent));
    }
  }
  w.put("snr_points.csv", csv.str());

  Analysis a = analyze_snr(w.dir, cfg);
  for (const auto& [rel, j] : a.reports) w.put(rel, canonical_json(j) + "\n");

  SvgPlot plot("SNR vs averaging time", "t (s)", "SNR");
  plot.set_log_x(true);
  plot.set_log_y(true);
  plot.add_series("measured", xs, ys, true);
  plot.add_series("power-law fit", xf, yf, false);
  plot.write(w.dir / "snr_scaling.svg");
  w.note("snr_scaling.svg");

  return build_asserts_snr(cfg, a);
}

// ========================================================== bandwidth-sweep

double resolve_curve_bandwidth(const json& curve, const json& cfg) {
  if (curve.contains("bandwidth_hz") && curve.contains("power_w"))
    throw validation_error("curve: give bandwidth_hz or power_w, not both");
  if (curve.contains("bandwidth_hz")) return curve.at("bandwidth_hz").get<double>();
  if (!curve.contains("power_w"))
    throw validation_error("curve needs bandwidth_hz or power_w");
  std::vector<std::pair<double, double>> cal = default_power_calibration();
  if (cfg.contains("calibration")) {
    cal.clear();
    for (const auto& p : cfg.at("calibration"))
      cal.emplace_back(p.at(0).get<double>(), p.at(1).get<double>());
  }
  return bandwidth_from_power(curve.at("power_w").get<double>(), cal);
}

// Log-spaced tone grid snapped onto the segment's frequency resolution.
std::vector<double> sweep_freqs(double fc, const json& cfg, double segment_s) {
  const int n = static_cast<int>(opt_num(cfg, "points_per_curve", 9));
  if (n < 5) throw validation_error("points_per_curve must be >= 5");
  const double lo = opt_num(cfg, "f_lo_factor", 0.1) * fc;
  const double hi = opt_num(cfg, "f_hi_factor", 4.0) * fc;
  const double res = 1.0 / segment_s;
  std::vector<double> freqs;
  for (int i = 0; i < n; ++i) {
    const double f = lo * std::pow(hi / lo, static_cast<double>(i) / (n - 1));
    const double snapped = std::max(res, std::round(f / res) * res);
    if (freqs.empty() || snapped > freqs.back()) freqs.push_back(snapped);
  }
  if (freqs.size() < 5) throw validation_error("tone grid collapsed; raise segment_s");
  return freqs;
}

double pick_bin_width(double f, double segment_s) {
  static const double widths[] = {5e-5, 2.5e-5, 1e-5, 5e-6, 2.5e-6, 1e-6,
                                  5e-7, 2.5e-7, 1e-7, 5e-8, 2.5e-8};
  const double half_res = 0.5 / segment_s;
  for (double w : widths) {
    if (w > 1.0 / (2.5 * f)) continue;
    const double ratio = segment_s / w;
    if (std::abs(ratio - std::round(ratio)) > 1e-6) continue;
    // Transduction harmonics of the tone alias back into the spectrum; if
    // one lands on the fundamental's own bin (e.g. 3f at exactly 4 samples
    // per period) it contaminates the peak, so take a finer width instead.
    const double nyq = 0.5 / w;
    bool collision = false;
    for (int k = 2; k <= 6 && !collision; ++k)
      collision = std::abs(fold_alias(k * f, nyq) - f) < half_res;
    if (!collision) return w;
  }
  throw validation_error("no bin width supports a tone at " + std::to_string(f) + " Hz");
}

// Counting photons in bins of width w integrates the rate over each bin, which
// attenuates a tone's power by sinc^2(pi f w).  The bin width snaps to a new
// value as the sweep climbs, so the attenuation jumps between points; divide
// it back out before fitting.  The shot-noise floor is white and needs no
// such correction.
double bin_power_gain(double f, double bin_width_s) {
  const double x = std::numbers::pi * f * bin_width_s;
  if (std::abs(x) < 1e-12) return 1.0;
  const double s = std::sin(x) / x;
  return s * s;
}

Analysis analyze_bandwidth(const fs::path& dir, const json& cfg) {
  Analysis a;
  const auto& curves = cfg.at("curves");
  bool any_power = false;
  double fc_prev = 0.0;
  for (std::size_t i = 0; i < curves.size(); ++i) {
    const double fc_target = resolve_curve_bandwidth(curves[i], cfg);
    if (curves[i].contains("power_w")) any_power = true;
    if (!(fc_target > fc_prev))
      throw validation_error("curves must have strictly increasing bandwidths");
    fc_prev = fc_target;

    const CsvTable t = read_csv_table(dir / ("curve_" + std::to_string(i) + "_response.csv"));
    const std::vector<double> f = t.column("frequency_hz");
    const std::vector<double> bw = t.column("bin_width_s");
    const std::vector<double> pk = t.column("peak_psd");
    const std::vector<double> flr = t.column("floor_psd");
    const std::vector<double> ns = t.column("n_segments");
    const std::vector<double> seg = t.column("segment_s");
    // Fit the floor-subtracted, binning-corrected response with the model
    // offset pinned at zero.  The per-point spread comes from the peak
    // estimator: a coherent bin of net power p over a floor n has per-segment
    // variance n^2 (2 p/n + 1).
    std::vector<double> y(f.size()), sig(f.size());
    for (std::size_t k = 0; k < f.size(); ++k) {
      const double gain = bin_power_gain(f[k], bw[k]);
      const double net = std::max(pk[k] - flr[k], 0.0);
      const double scale = 4.0 / (seg[k] * seg[k] * gain);
      y[k] = scale * net;
      sig[k] = scale * flr[k] * std::sqrt((2.0 * net / flr[k] + 1.0) / ns[k]);
    }
    FitOptions fopts;
    fopts.fixed_bandwidth_offset = 0.0;
    const FitResult fr = fit(FitModel::bandwidth, f, y, sig, {}, fopts);

    a.values["fc_ratio_" + std::to_string(i)] = fr.param("f_c") / fc_target;
    a.values["rolloff_b_" + std::to_string(i)] = fr.param("b");
    json rep = fr.to_json();
    rep["target_bandwidth_hz"] = fc_target;
    a.reports.emplace_back("curve_" + std::to_string(i) + "_fit.json", rep);
  }
  if (any_power) {
    std::vector<std::pair<double, double>> cal = default_power_calibration();
    if (cfg.contains("calibration")) {
      cal.clear();
      for (const auto& p : cfg.at("calibration"))
        cal.emplace_back(p.at(0).get<double>(), p.at(1).get<double>());
    }
    bool mono = true;
    for (std::size_t k = 1; k < cal.size(); ++k)
      mono = mono && cal[k].second > cal[k - 1].second && cal[k].first > cal[k - 1].first;
    a.values["calibration_monotone"] = mono ? 1.0 : 0.0;
  }
  return a;
}

std::vector<AssertionRecord> build_asserts_bandwidth(const json& cfg, const Analysis& a) {
  std::vector<AssertionRecord> out;
  const double fc_tol = opt_num(cfg, "fc_rel_tolerance", 0.05);
  const double b_lo = opt_num(cfg, "rolloff_b_low", 0.9);
  const double b_hi = opt_num(cfg, "rolloff_b_high", 1.1);
  for (std::size_t i = 0; i < cfg.at("curves").size(); ++i) {
    out.push_back(make_check("bandwidth_recovered_" + std::to_string(i),
                             value_of(a, "fc_ratio_" + std::to_string(i)), 1.0 - fc_tol,
                             1.0 + fc_tol, true, "fitted corner over configured corner"));
    out.push_back(make_check("rolloff_b_" + std::to_string(i),
                             value_of(a, "rolloff_b_" + std::to_string(i)), b_lo, b_hi, true,
                             "fitted rolloff exponent"));
  }
  if (a.values.count("calibration_monotone"))
    out.push_back(make_check("calibration_monotone", value_of(a, "calibration_monotone"), 1.0,
                             1.0, true, "power-to-bandwidth table strictly increasing"));
  return out;
}

std::vector<AssertionRecord> run_bandwidth(const json& cfg, RunWriter& w) {
  if (!cfg.contains("curves") || cfg.at("curves").empty())
    throw validation_error("bandwidth-sweep config needs a non-empty 'curves' array");
  const OdmrParams odmr = odmr_from_config(cfg);
  const double drive = drive_from_config(cfg, odmr);
  const double proj = projection_from_config(cfg);
  // Default tone pushes the spin 15% of the way to the linearity bound:
  // strong enough to dominate shot noise, mild enough that compression
  // only rescales the response without bending its shape.
  const double amp =
      opt_num(cfg, "tone_amplitude_t", 0.15 * linearity_bound(odmr) / std::cos(proj));
  const double segment_s = opt_num(cfg, "segment_s", 0.25);
  const int n_segments = static_cast<int>(opt_num(cfg, "segments_per_point", 8));
  const double rolloff = opt_num(cfg, "rolloff_exponent", 1.0);
  const double dead = opt_num(cfg, "dead_time_s", 0.0);
  Rng master(opt_seed(cfg));

  SvgPlot plot("Detector response curves", "f (Hz)", "response ((counts/s)^2)");
  plot.set_log_x(true);
  plot.set_log_y(true);

  const DrivePoint dp{drive};
  for (std::size_t i = 0; i < cfg.at("curves").size(); ++i) {
    const double fc = resolve_curve_bandwidth(cfg.at("curves")[i], cfg);
    const std::vector<double> freqs = sweep_freqs(fc, cfg, segment_s);

    std::ostringstream csv;
    csv.precision(17);
    csv << "frequency_hz,bin_width_s,segment_s,n_segments,peak_psd,floor_psd,response_power\n";
    std::vector<double> px, py;
    for (double f : freqs) {
      const double bw = pick_bin_width(f, segment_s);
      const std::uint64_t seed = master.raw();

      SignalSpec spec;
      spec.components.push_back(ToneSpec{f, amp, 0.0});
      spec.projection_angle_rad = proj;
      const Signal sig(validate_signal_spec(spec));

      DetectorModel det;
      det.bandwidth_hz = fc;
      det.rolloff_exponent = rolloff;
      det.dead_time_s = dead;
      det.filter_step_s = 1.0 / (16.0 * f);

      const auto rate = [&](double t) { return transduce(odmr, dp, sig.evaluate(t)); };
      const TagStream stream =
          simulate_stream(rate, odmr.count_rate_hz, segment_s * n_segments, det, seed);
      const Spectrum s = averaged_segments(stream, segment_s, bw);

      FloorOptions fo;
      fo.band_lo_hz = std::max(2.0 * s.resolution_hz(), f / 4.0);
      fo.band_hi_hz = std::min(4.0 * f, 0.9 * s.nyquist_hz());
      fo.known_peaks_hz = {f};
      for (int k = 2; k <= 5; ++k)
        fo.known_peaks_hz.push_back(fold_alias(k * f, s.nyquist_hz()));
      const FloorEstimate fl = noise_floor(s, fo);

      const double peak = s.psd[s.grid_bin(f)];
      const double resp = 4.0 * std::max(peak - fl.mean_equivalent, 0.0) /
                          (segment_s * segment_s * bin_power_gain(f, bw));
      csv << f << ',' << bw << ',' << segment_s << ',' << n_segments << ',' << peak << ','
          << fl.mean_equivalent << ',' << resp << "\n";
      px.push_back(f);
      py.push_back(resp);
    }
    w.put("curve_" + std::to_string(i) + "_response.csv", csv.str());
    plot.add_series("fc = " + std::to_string(static_cast<long long>(fc)) + " Hz", px, py, true);
  }

  Analysis a = analyze_bandwidth(w.dir, cfg);
  for (const auto& [rel, j] : a.reports) w.put(rel, canonical_json(j) + "\n");

  plot.write(w.dir / "response.svg");
  w.note("response.svg");
  return build_asserts_bandwidth(cfg, a);
}

// =========================================================== lindblad-sweep

std::vector<double> lindblad_freqs(const json& cfg) {
  if (cfg.contains("frequencies_hz")) return cfg.at("frequencies_hz").get<std::vector<double>>();
  const int n = static_cast<int>(opt_num(cfg, "n_frequencies", 10));
  const double lo = opt_num(cfg, "f_lo_hz", 3e3);
  const double hi = opt_num(cfg, "f_hi_hz", 3e6);
  if (n < 5 || !(hi > lo) || !(lo > 0))
    throw validation_error("lindblad sweep needs n >= 5 and 0 < f_lo < f_hi");
  std::vector<double> f(n);
  for (int i = 0; i < n; ++i) f[i] = lo * std::pow(hi / lo, static_cast<double>(i) / (n - 1));
  return f;
}

Analysis analyze_lindblad(const fs::path& dir, const json& cfg) {
  Analysis a;
  const CsvTable t = read_csv_table(dir / "response_curves.csv");
  const std::vector<double> sat = t.column("saturation");
  const std::vector<double> f = t.column("frequency_hz");
  const std::vector<double> y = t.column("response");
  const std::vector<double> sats = cfg.at("saturations").get<std::vector<double>>();

  std::vector<double> fcs, bs;
  for (std::size_t i = 0; i < sats.size(); ++i) {
    std::vector<double> fx, fy;
    for (std::size_t r = 0; r < sat.size(); ++r)
      if (sat[r] == sats[i]) {
        fx.push_back(f[r]);
        fy.push_back(y[r]);
      }
    if (fx.size() < 5) throw verification_error("response curve too short in csv");
    const FitResult fr = fit(FitModel::bandwidth, fx, fy);
    const std::string k = std::to_string(i);
    a.values["fc_s" + k] = fr.param("f_c");
    a.values["b_s" + k] = fr.param("b");
    a.values["converged_s" + k] = fr.converged ? 1.0 : 0.0;
    json rep = fr.to_json();
    rep["saturation"] = sats[i];
    a.reports.emplace_back("fit_s" + k + ".json", rep);
    fcs.push_back(fr.param("f_c"));
    bs.push_back(fr.param("b"));
  }

  bool fc_mono = true;
  for (std::size_t i = 1; i < fcs.size(); ++i) fc_mono = fc_mono && fcs[i] > fcs[i - 1];
  a.values["fc_monotone"] = fc_mono ? 1.0 : 0.0;
  const double dir0 = bs.size() > 1 ? (bs.back() > bs.front() ? 1.0 : -1.0) : 1.0;
  bool b_mono = true;
  for (std::size_t i = 1; i < bs.size(); ++i) b_mono = b_mono && dir0 * (bs[i] - bs[i - 1]) > 0;
  a.values["b_monotone"] = b_mono ? 1.0 : 0.0;
  return a;
}

std::vector<AssertionRecord> build_asserts_lindblad(const json& cfg, const Analysis& a) {
  std::vector<AssertionRecord> out;
  const std::size_t n = cfg.at("saturations").size();
  for (std::size_t i = 0; i < n; ++i)
    out.push_back(make_check("fit_converged_s" + std::to_string(i),
                             value_of(a, "converged_s" + std::to_string(i)), 1.0, 1.0, true,
                             "response fit converged"));
  out.push_back(make_check("fc_monotone", value_of(a, "fc_monotone"), 1.0, 1.0, true,
                           "fitted corner rises with saturation"));
  out.push_back(make_check("b_monotone", value_of(a, "b_monotone"), 1.0, 1.0, true,
                           "fitted rolloff drifts one way with saturation"));
  return out;
}

std::vector<AssertionRecord> run_lindblad(const json& cfg, RunWriter& w) {
  if (!cfg.contains("base")) throw validation_error("lindblad-sweep config needs 'base'");
  if (!cfg.contains("saturations") || cfg.at("saturations").empty())
    throw validation_error("lindblad-sweep config needs a non-empty 'saturations' array");
  const LindbladParams base = lindblad_from_json(cfg.at("base"));
  const double alpha = opt_num(cfg, "alpha", 1.0);
  const double offset = opt_num(cfg, "offset", 2e-4);
  const std::vector<double> sats = cfg.at("saturations").get<std::vector<double>>();
  for (std::size_t i = 1; i < sats.size(); ++i)
    if (!(sats[i] > sats[i - 1]))
      throw validation_error("saturations must be strictly increasing");
  const std::vector<double> freqs = lindblad_freqs(cfg);

  ResponseOptions opts;
  opts.convergence_tol = opt_num(cfg, "convergence_tol", 1e-3);
  opts.max_duration_s = opt_num(cfg, "max_duration_s", 1.0);

  const auto curves = sweep_response(base, alpha, sats, freqs, offset, opts);

  std::ostringstream csv;
  csv.precision(17);
  csv << "saturation,gamma1_s,gamma2_s,frequency_hz,response\n";
  SvgPlot plot("Spin response vs drive frequency", "f (Hz)", "response + offset");
  plot.set_log_x(true);
  plot.set_log_y(true);
  for (const auto& c : curves) {
    for (std::size_t k = 0; k < c.freq_hz.size(); ++k)
      csv << c.saturation << ',' << c.gamma1_s << ',' << c.gamma2_s << ',' << c.freq_hz[k] << ','
          << c.amplitude[k] << "\n";
    std::ostringstream lbl;
    lbl << "s = " << c.saturation;
    plot.add_series(lbl.str(), c.freq_hz, c.amplitude, true);
  }
  w.put("response_curves.csv", csv.str());

  Analysis a = analyze_lindblad(w.dir, cfg);
  for (const auto& [rel, j] : a.reports) w.put(rel, canonical_json(j) + "\n");

  plot.write(w.dir / "lindblad_response.svg");
  w.note("lindblad_response.svg");
  return build_asserts_lindblad(cfg, a);
}

// ================================================================ multitone

std::vector<double> multitone_known_peaks(const std::vector<double>& tones, double nyquist) {
  std::vector<double> peaks;
  for (double f : tones) {
    peaks.push_back(f);
    peaks.push_back(fold_alias(2.0 * f, nyquist));
    peaks.push_back(fold_alias(3.0 * f, nyquist));
  }
  for (std::size_t i = 0; i < tones.size(); ++i)
    for (std::size_t j = i + 1; j < tones.size(); ++j) {
      peaks.push_back(fold_alias(tones[i] + tones[j], nyquist));
      peaks.push_back(fold_alias(std::abs(tones[i] - tones[j]), nyquist));
    }
  return peaks;
}

Analysis analyze_multitone(const fs::path& dir, const json& cfg) {
  Analysis a;
  const Spectrum s = load_spectrum(dir / "spectrum.csv");
  std::vector<double> tones;
  for (const auto& t : cfg.at("tones")) tones.push_back(need_num(t, "frequency_hz"));

  FloorOptions fo;
  fo.known_peaks_hz = multitone_known_peaks(tones, s.nyquist_hz());
  const FloorEstimate fl = noise_floor(s, fo);
  if (!(fl.mean_equivalent > 0)) throw simulation_error("multitone noise floor is zero");

  json rep;
  rep["floor_psd"] = fl.mean_equivalent;
  rep["resolution_hz"] = s.resolution_hz();
  json jt = json::array();
  for (std::size_t i = 0; i < tones.size(); ++i) {
    const double peak = s.psd[s.grid_bin(tones[i])];
    a.values["peak_ratio_" + std::to_string(i)] = peak / fl.mean_equivalent;
    jt.push_back({{"frequency_hz", tones[i]}, {"peak_psd", peak},
                  {"peak_over_floor", peak / fl.mean_equivalent}});
  }
  rep["tones"] = jt;

  // Valley between the closest pair of tones, excluding the peak skirts.
  std::vector<double> sorted = tones;
  std::sort(sorted.begin(), sorted.end());
  std::size_t ia = 0;
  for (std::size_t i = 1; i + 1 < sorted.size(); ++i)
    if (sorted[i + 1] - sorted[i] < sorted[ia + 1] - sorted[ia]) ia = i;
  const std::size_t ka = s.grid_bin(sorted[ia]) + 4, kb = s.grid_bin(sorted[ia + 1]) - 4;
  if (kb <= ka) throw validation_error("tones too close for a valley at this resolution");
  double valley = 0.0;
  for (std::size_t k = ka; k <= kb; ++k) valley = std::max(valley, s.psd[k]);
  const double pa = s.psd[s.grid_bin(sorted[ia])], pb = s.psd[s.grid_bin(sorted[ia + 1])];
  a.values["valley_ratio"] = valley / std::min(pa, pb);
  a.values["resolution_hz"] = s.resolution_hz();
  rep["valley_psd"] = valley;
  rep["valley_ratio"] = a.values["valley_ratio"];
  a.reports.emplace_back("peaks.json", rep);
  return a;
}

std::vector<AssertionRecord> build_asserts_multitone(const json& cfg, const Analysis& a) {
  std::vector<AssertionRecord> out;
  const double res = opt_num(cfg, "expected_resolution_hz", 1.0);
  const double min_ratio = opt_num(cfg, "min_peak_floor_ratio", 25.0);
  const double valley_max = opt_num(cfg, "valley_ratio_max", 0.1);
  out.push_back(make_check("resolution", value_of(a, "resolution_hz"), res, res, true,
                           "spectral resolution, Hz"));
  for (std::size_t i = 0; i < cfg.at("tones").size(); ++i)
    out.push_back(make_check("tone_visible_" + std::to_string(i),
                             value_of(a, "peak_ratio_" + std::to_string(i)), min_ratio, 1e300,
                             true, "peak psd over noise floor"));
  out.push_back(make_check("pair_resolved", value_of(a, "valley_ratio"), 0.0, valley_max, true,
                           "valley between the closest tones over the smaller peak"));
  return out;
}

std::vector<AssertionRecord> run_multitone(const json& cfg, RunWriter& w) {
  if (!cfg.contains("tones") || cfg.at("tones").size() < 2)
    throw validation_error("multitone config needs >= 2 tones");
  const OdmrParams odmr = odmr_from_config(cfg);
  const double drive = drive_from_config(cfg, odmr);
  const double duration = opt_num(cfg, "duration_s", 30.0);
  const double segment_s = opt_num(cfg, "segment_s", 1.0);
  const double bin_w = opt_num(cfg, "bin_width_s", 5e-6);

  SignalSpec spec;
  for (const auto& t : cfg.at("tones"))
    spec.components.push_back(
        ToneSpec{need_num(t, "frequency_hz"), need_num(t, "amplitude_t"),
                 opt_num(t, "phase_rad", 0.0)});
  spec.projection_angle_rad = projection_from_config(cfg);
  const Signal sig(validate_signal_spec(spec));

  const DrivePoint dp{drive};
  const auto rate = [&](double t) { return transduce(odmr, dp, sig.evaluate(t)); };
  const TagStream stream =
      simulate_stream(rate, odmr.count_rate_hz, duration, DetectorModel{}, opt_seed(cfg));
  const Spectrum avg = averaged_segments(stream, segment_s, bin_w);

  std::ostringstream csv;
  write_spectrum_csv(avg, csv);
  w.put("spectrum.csv", csv.str());

  Analysis a = analyze_multitone(w.dir, cfg);
  for (const auto& [rel, j] : a.reports) w.put(rel, canonical_json(j) + "\n");

  std::vector<double> fx, fy;
  decimate_for_plot(avg, 1500, fx, fy);
  SvgPlot plot("Averaged power spectrum", "f (Hz)", "psd");
  plot.set_log_y(true);
  plot.add_series("psd", fx, fy, false);
  plot.write(w.dir / "spectrum.svg");
  w.note("spectrum.svg");

  return build_asserts_multitone(cfg, a);
}

// ============================================================ phase-coherent

struct PhaseCfg {
  OdmrParams odmr;
  double drive = 0.0;
  ReferenceSpec ref;
  double ref_amp1 = 0.0, ref_amp2 = 0.0;
  PhaseModSpec pm;
  double projection = 0.0;
  int n_traces = 0;
  double trace_s = 0.0;
  double bin_w = 0.0;
  int orders = 2;
  FloorOptions floor;
};

PhaseCfg parse_phase_cfg(const json& cfg) {
  PhaseCfg c;
  c.odmr = odmr_from_config(cfg);
  c.drive = drive_from_config(cfg, c.odmr);
  const json& jr = cfg.at("references");
  c.ref.omega1_hz = need_num(jr, "omega1_hz");
  c.ref.omega2_hz = need_num(jr, "omega2_hz");
  c.ref.min_amplitude = opt_num(jr, "min_amplitude", 0.0);
  c.ref.phase_std_threshold_rad = opt_num(jr, "phase_std_threshold_rad", 0.1);
  validate_reference(c.ref);
  // Zero reference amplitudes (the default) add no extra tones: the comb's
  // own lines at omega1/omega2 serve as the phase reference.
  c.ref_amp1 = opt_num(jr, "amplitude1_t", 0.0);
  c.ref_amp2 = opt_num(jr, "amplitude2_t", c.ref_amp1);
  const json& jp = cfg.at("pm");
  c.pm.carrier_hz = need_num(jp, "carrier_hz");
  c.pm.mod_frequency_hz = need_num(jp, "mod_frequency_hz");
  c.pm.mod_depth_rad = need_num(jp, "mod_depth_rad");
  c.pm.amplitude_t = need_num(jp, "amplitude_t");
  c.projection = projection_from_config(cfg);
  c.n_traces = static_cast<int>(opt_num(cfg, "n_traces", 40));
  if (c.n_traces < 4) throw validation_error("phase-coherent needs n_traces >= 4");
  c.trace_s = opt_num(cfg, "trace_s", 1.0);
  c.bin_w = opt_num(cfg, "bin_width_s", 2e-6);
  c.orders = static_cast<int>(opt_num(cfg, "sideband_orders", 2));

  const double delta = c.ref.delta_hz();
  const double off = c.pm.carrier_hz - c.ref.omega1_hz;
  if (std::abs(off / delta - std::round(off / delta)) > 1e-9)
    throw validation_error("pm carrier must sit on the reference comb");
  if (std::abs(c.pm.mod_frequency_hz - delta) > 1e-9 * delta)
    throw validation_error("pm modulation must equal the reference spacing");

  c.floor.band_lo_hz = opt_num(cfg, "floor_lo_hz", 2e3);
  c.floor.band_hi_hz = opt_num(cfg, "floor_hi_hz", 2e5);
  const double ny = 0.5 / c.bin_w;
  auto add = [&](double f) { c.floor.known_peaks_hz.push_back(fold_alias(f, ny)); };
  add(c.ref.omega1_hz);
  add(c.ref.omega2_hz);
  for (int m = -4; m <= 4; ++m) add(c.pm.carrier_hz + m * delta);
  add(2 * c.ref.omega1_hz);
  add(2 * c.ref.omega2_hz);
  add(c.ref.omega1_hz + c.ref.omega2_hz);
  add(delta);
  add(2 * c.pm.carrier_hz);
  add(c.pm.carrier_hz + c.ref.omega1_hz);
  add(c.pm.carrier_hz - c.ref.omega1_hz);
  add(c.pm.carrier_hz + c.ref.omega2_hz);
  add(c.pm.carrier_hz - c.ref.omega2_hz);
  return c;
}

int carrier_comb_index(const PhaseCfg& c) {
  return static_cast<int>(std::llround((c.pm.carrier_hz - c.ref.omega1_hz) / c.ref.delta_hz()));
}

Analysis analyze_phase(const fs::path& dir, const json& cfg) {
  Analysis a;
  const PhaseCfg c = parse_phase_cfg(cfg);
  const int n0 = carrier_comb_index(c);

  const CsvTable t = read_csv_table(dir / "comb.csv");
  const std::size_t ci = t.col("comb_index"), cre = t.col("corrected_re"),
                    cim = t.col("corrected_im"), cup = t.col("uncorrected_power"),
                    cso = t.col("sideband_order"), csp = t.col("det_phase_spread_rad");

  std::map<int, std::complex<double>> amp;
  std::map<int, double> uncorr, spread;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    if (t.empty_cell(r, cso)) continue;
    const int m = static_cast<int>(t.num(r, cso));
    amp[m] = {t.num(r, cre), t.num(r, cim)};
    uncorr[m] = t.num(r, cup);
    spread[m] = t.num(r, csp);
    (void)ci;
  }
  if (amp.count(0) == 0) throw verification_error("comb.csv lacks the carrier line");

  const double scale = std::abs(amp[0]) / bessel_j(0, c.pm.mod_depth_rad);
  double spread_max = 0.0, sign_err_max = 0.0, sum_corr = 0.0, sum_unc = 0.0;
  for (const auto& [m, z] : amp) {
    if (std::abs(m) > c.orders) continue;
    const double jm = bessel_j(m, c.pm.mod_depth_rad);
    if (m != 0)
      a.values["bessel_order_" + std::to_string(m)] = std::abs(z) / (scale * std::abs(jm));
    const double expected = jm >= 0 ? 0.0 : kPi;
    sign_err_max = std::max(sign_err_max, std::abs(wrap_angle(std::arg(z) - expected)));
    spread_max = std::max(spread_max, spread.at(m));
    sum_corr += std::norm(z);
    sum_unc += uncorr.at(m);
  }
  a.values["suppression_x_traces"] =
      static_cast<double>(c.n_traces) * sum_unc / sum_corr;
  a.values["phase_spread_max"] = spread_max;
  a.values["sign_error_max"] = sign_err_max;

  const CsvTable rt = read_csv_table(dir / "refs.csv");
  const std::size_t s1 = rt.col("sigma1_rad"), s2 = rt.col("sigma2_rad");
  double sig_max = 0.0;
  for (std::size_t r = 0; r < rt.rows.size(); ++r)
    sig_max = std::max({sig_max, rt.num(r, s1), rt.num(r, s2)});
  a.values["ref_sigma_max"] = sig_max;

  json rep;
  rep["carrier_comb_index"] = n0;
  rep["scale_amplitude"] = scale;
  json lines = json::array();
  for (const auto& [m, z] : amp) {
    if (std::abs(m) > c.orders) continue;
    lines.push_back({{"order", m},
                     {"bessel", bessel_j(m, c.pm.mod_depth_rad)},
                     {"corrected_amplitude", std::abs(z)},
                     {"corrected_phase_rad", std::arg(z)},
                     {"uncorrected_power", uncorr.at(m)}});
  }
  rep["lines"] = lines;
  a.reports.emplace_back("bessel_lines.json", rep);
  return a;
}

std::vector<AssertionRecord> build_asserts_phase(const json& cfg, const Analysis& a) {
  std::vector<AssertionRecord> out;
  const PhaseCfg c = parse_phase_cfg(cfg);
  const double btol = opt_num(cfg, "bessel_rel_tolerance", 0.05);
  for (int m = -c.orders; m <= c.orders; ++m) {
    if (m == 0) continue;
    out.push_back(make_check("bessel_order_" + std::to_string(m),
                             value_of(a, "bessel_order_" + std::to_string(m)), 1.0 - btol,
                             1.0 + btol, true, "sideband over carrier against the Bessel ratio"));
  }
  out.push_back(make_check("incoherent_suppression", value_of(a, "suppression_x_traces"), 0.5,
                           2.0, true, "uncorrected over corrected comb power, times traces"));
  out.push_back(make_check("phase_spread", value_of(a, "phase_spread_max"), 0.0,
                           opt_num(cfg, "phase_spread_max_rad", 1e-2), true,
                           "noise-free cross-trace phase spread after correction"));
  out.push_back(make_check("phase_sign_pattern", value_of(a, "sign_error_max"), 0.0,
                           opt_num(cfg, "sign_tolerance_rad", 0.2), true,
                           "corrected phases sit at 0 or pi per Bessel sign"));
  out.push_back(make_check("reference_phase_noise", value_of(a, "ref_sigma_max"), 0.0,
                           c.ref.phase_std_threshold_rad, true,
                           "largest per-trace reference phase sigma"));
  return out;
}

std::vector<AssertionRecord> run_phase(const json& cfg, RunWriter& w) {
  const PhaseCfg c = parse_phase_cfg(cfg);
  Rng master(opt_seed(cfg));

  SignalSpec spec;
  if (c.ref_amp1 > 0) spec.components.push_back(ToneSpec{c.ref.omega1_hz, c.ref_amp1, 0.0});
  if (c.ref_amp2 > 0) spec.components.push_back(ToneSpec{c.ref.omega2_hz, c.ref_amp2, 0.0});
  spec.components.push_back(c.pm);
  spec.projection_angle_rad = c.projection;
  const Signal sig(validate_signal_spec(spec));
  const DrivePoint dp{c.drive};

  std::vector<double> offsets;
  std::vector<std::uint64_t> seeds;
  for (int k = 0; k < c.n_traces; ++k) {
    offsets.push_back(master.uniform(0.0, 1.0));
    seeds.push_back(master.raw());
  }

  const std::size_t nbins = static_cast<std::size_t>(std::llround(c.trace_s / c.bin_w));
  std::vector<std::complex<double>> sum_corr, sum_unc;
  std::vector<double> sum_psd;
  std::vector<std::int32_t> comb_idx;
  std::vector<std::map<int, double>> det_phases(static_cast<std::size_t>(2 * c.orders + 1));
  const int n0 = carrier_comb_index(c);

  std::ostringstream refs_csv;
  refs_csv.precision(17);
  refs_csv << "trace,t_offset_s,phi1_rad,phi2_rad,sigma1_rad,sigma2_rad\n";

  for (int k = 0; k < c.n_traces; ++k) {
    const double off = offsets[k];
    const auto rate = [&](double t) { return transduce(c.odmr, dp, sig.evaluate(t + off)); };
    const TagStream stream =
        simulate_stream(rate, c.odmr.count_rate_hz, c.trace_s, DetectorModel{}, seeds[k]);
    const Spectrum s = psd(bin_tags(stream, c.bin_w), Window::none, true);

    const RefPhases rp = extract_reference_phases(s, c.ref, c.floor);
    refs_csv << k << ',' << off << ',' << rp.phi1 << ',' << rp.phi2 << ',' << rp.sigma1 << ','
             << rp.sigma2 << "\n";

    const PhasedSpectrum corr = phase_correct(s, rp.phi1, rp.phi2, c.ref);
    const PhasedSpectrum unc = phase_correct(s, 0.0, 0.0, c.ref);
    if (k == 0) {
      sum_corr.assign(corr.spectrum.amplitude.size(), {0.0, 0.0});
      sum_unc.assign(corr.spectrum.amplitude.size(), {0.0, 0.0});
      sum_psd.assign(corr.spectrum.psd.size(), 0.0);
      comb_idx = corr.comb_index;
    }
    for (std::size_t q = 0; q < sum_psd.size(); ++q) {
      sum_psd[q] += corr.spectrum.psd[q];
      if (corr.on_comb(q)) {
        sum_corr[q] += corr.spectrum.amplitude[q];
        sum_unc[q] += unc.spectrum.amplitude[q];
      }
    }

    // Shot-noise-free replica of the same trace: expected counts per bin.
    SampledSeries clean;
    clean.bin_width_s = c.bin_w;
    clean.values.resize(nbins);
    for (std::size_t q = 0; q < nbins; ++q)
      clean.values[q] = rate((static_cast<double>(q) + 0.5) * c.bin_w) * c.bin_w;
    const Spectrum sc = psd(clean, Window::none, true);
    const RefPhases rpc = extract_reference_phases(sc, c.ref, c.floor);
    const PhasedSpectrum corr_clean = phase_correct(sc, rpc.phi1, rpc.phi2, c.ref);
    for (int m = -c.orders; m <= c.orders; ++m) {
      const std::size_t bin =
          sc.grid_bin(c.pm.carrier_hz + static_cast<double>(m) * c.ref.delta_hz());
      det_phases[static_cast<std::size_t>(m + c.orders)][k] = corr_clean.phase_rad[bin];
    }
  }
  w.put("refs.csv", refs_csv.str());

  // Coherent average across traces.
  const double inv = 1.0 / static_cast<double>(c.n_traces);
  PhasedSpectrum avg;
  avg.ref = c.ref;
  avg.comb_index = comb_idx;
  avg.spectrum.bin_width_s = c.bin_w;
  avg.spectrum.duration_s = static_cast<double>(nbins) * c.bin_w;
  avg.spectrum.n_averages = static_cast<std::uint32_t>(c.n_traces);
  avg.spectrum.window = Window::none;
  avg.spectrum.amplitude.resize(sum_psd.size());
  avg.spectrum.psd.resize(sum_psd.size());
  avg.phase_rad.resize(sum_psd.size());
  for (std::size_t q = 0; q < sum_psd.size(); ++q) {
    if (comb_idx[q] != PhasedSpectrum::kOffComb) {
      const std::complex<double> z = sum_corr[q] * inv;
      avg.spectrum.amplitude[q] = z;
      avg.spectrum.psd[q] = std::norm(z);
      avg.phase_rad[q] = std::arg(z);
    } else {
      avg.spectrum.amplitude[q] = 0.0;
      avg.spectrum.psd[q] = sum_psd[q] * inv;
      avg.phase_rad[q] = 0.0;
    }
  }

  std::ostringstream pcsv;
  write_phased_csv(avg, pcsv);
  w.put("phased_avg.csv", pcsv.str());

  // Per-line table around the carrier.
  std::ostringstream comb_csv;
  comb_csv.precision(17);
  comb_csv << "comb_index,frequency_hz,corrected_re,corrected_im,corrected_power,"
              "uncorrected_power,phase_rad,sideband_order,bessel_abs,det_phase_spread_rad\n";
  std::vector<double> line_f, line_corr, line_unc;
  for (std::size_t q = 0; q < sum_psd.size(); ++q) {
    if (comb_idx[q] == PhasedSpectrum::kOffComb) continue;
    const std::complex<double> zc = sum_corr[q] * inv;
    const std::complex<double> zu = sum_unc[q] * inv;
    const int m = static_cast<int>(comb_idx[q]) - n0;
    comb_csv << comb_idx[q] << ',' << avg.spectrum.freq_of(q) << ',' << zc.real() << ','
             << zc.imag() << ',' << std::norm(zc) << ',' << std::norm(zu) << ','
             << std::arg(zc) << ',';
    if (std::abs(m) <= c.orders) {
      // Circular spread of the noise-free phases across traces.
      const auto& ph = det_phases[static_cast<std::size_t>(m + c.orders)];
      std::complex<double> mv{0.0, 0.0};
      for (const auto& [tr, p] : ph) mv += std::polar(1.0, p);
      mv *= 1.0 / static_cast<double>(ph.size());
      double dev = 0.0;
      for (const auto& [tr, p] : ph)
        dev = std::max(dev, std::abs(wrap_angle(p - std::arg(mv))));
      comb_csv << m << ',' << std::abs(bessel_j(m, c.pm.mod_depth_rad)) << ',' << dev;
    } else {
      comb_csv << ",,";
    }
    comb_csv << "\n";
    line_f.push_back(avg.spectrum.freq_of(q));
    line_corr.push_back(std::norm(zc));
    line_unc.push_back(std::norm(zu));
  }
  w.put("comb.csv", comb_csv.str());

  Analysis a = analyze_phase(w.dir, cfg);
  for (const auto& [rel, j] : a.reports) w.put(rel, canonical_json(j) + "\n");

  SvgPlot plot("Comb-line power, corrected vs uncorrected", "f (Hz)", "power");
  plot.set_log_y(true);
  plot.add_series("coherent", line_f, line_corr, true);
  plot.add_series("uncorrected", line_f, line_unc, true);
  plot.write(w.dir / "comb.svg");
  w.note("comb.svg");

  return build_asserts_phase(cfg, a);
}

// ================================================================ telegraph

std::pair<double, double> telegraph_fit_band(const json& cfg) {
  const double dwell = need_num(cfg.at("telegraph"), "mean_dwell_s");
  double lo = 4.0, hi = 4.0 / (kPi * dwell);
  if (cfg.contains("fit_band_hz")) {
    lo = cfg.at("fit_band_hz").at(0).get<double>();
    hi = cfg.at("fit_band_hz").at(1).get<double>();
  }
  if (!(hi > lo) || !(lo > 0)) throw validation_error("fit_band_hz must satisfy 0 < lo < hi");
  return {lo, hi};
}

FitResult fit_telegraph_band(const Spectrum& on, const Spectrum& off, double lo, double hi) {
  std::vector<double> x, y, sig;
  const double n_avg = on.n_averages;
  for (std::size_t k = 1; k < on.psd.size(); ++k) {
    const double f = on.freq_of(k);
    if (f < lo || f > hi) continue;
    x.push_back(f);
    // Fit the raw difference, negative bins included: clamping them at
    // zero would lift the apparent tail and push the knee out.
    y.push_back(on.psd[k] - off.psd[k]);
    // Propagated spread of on - off; each mean has sigma ~ psd / sqrt(n).
    sig.push_back(std::sqrt(on.psd[k] * on.psd[k] + off.psd[k] * off.psd[k]) /
                  std::sqrt(n_avg));
  }
  if (x.size() < 8) throw validation_error("telegraph fit band holds too few bins");
  return fit(FitModel::telegraph, x, y, sig);
}

FitResult fit_telegraph_input(const Spectrum& input, double lo, double hi) {
  std::vector<double> x, y;
  for (std::size_t k = 1; k < input.psd.size(); ++k) {
    const double f = input.freq_of(k);
    if (f < lo || f > hi) continue;
    x.push_back(f);
    y.push_back(input.psd[k]);
  }
  if (x.size() < 8) throw validation_error("telegraph fit band holds too few bins");
  return fit(FitModel::telegraph, x, y);
}

Analysis analyze_telegraph(const fs::path& dir, const json& cfg) {
  Analysis a;
  const auto [lo, hi] = telegraph_fit_band(cfg);
  const double dwell_true = need_num(cfg.at("telegraph"), "mean_dwell_s");

  const Spectrum on = load_spectrum(dir / "on_psd.csv");
  const Spectrum off = load_spectrum(dir / "off_psd.csv");
  const Spectrum input = load_spectrum(dir / "input_psd.csv");

  const FitResult photon = fit_telegraph_band(on, off, lo, hi);
  const FitResult inp = fit_telegraph_input(input, lo, hi);

  a.values["dwell_photon_ratio"] = photon.param("mean_dwell") / dwell_true;
  a.values["dwell_input_ratio"] = inp.param("mean_dwell") / dwell_true;
  a.values["route_ratio"] = photon.param("mean_dwell") / inp.param("mean_dwell");

  json jp = photon.to_json();
  jp["true_mean_dwell_s"] = dwell_true;
  jp["fit_band_hz"] = {lo, hi};
  a.reports.emplace_back("fit_photon.json", jp);
  json ji = inp.to_json();
  ji["true_mean_dwell_s"] = dwell_true;
  ji["fit_band_hz"] = {lo, hi};
  a.reports.emplace_back("fit_input.json", ji);
  return a;
}

std::vector<AssertionRecord> build_asserts_telegraph(const json& cfg, const Analysis& a) {
  std::vector<AssertionRecord> out;
  const double dt = opt_num(cfg, "dwell_rel_tolerance", 0.10);
  const double rt = opt_num(cfg, "route_rel_tolerance", 0.10);
  out.push_back(make_check("dwell_from_photons", value_of(a, "dwell_photon_ratio"), 1.0 - dt,
                           1.0 + dt, true, "fitted dwell over configured dwell, photon route"));
  out.push_back(make_check("dwell_from_input", value_of(a, "dwell_input_ratio"), 1.0 - dt,
                           1.0 + dt, true, "fitted dwell over configured dwell, input route"));
  out.push_back(make_check("routes_agree", value_of(a, "route_ratio"), 1.0 / (1.0 + rt),
                           1.0 + rt, true, "photon-route dwell over input-route dwell"));
  return out;
}

std::vector<AssertionRecord> run_telegraph(const json& cfg, RunWriter& w) {
  const OdmrParams odmr = odmr_from_config(cfg);
  const double drive = drive_from_config(cfg, odmr);
  const json& jt = cfg.at("telegraph");
  const double bin_w = opt_num(cfg, "bin_width_s", 1e-4);
  Rng master(opt_seed(cfg));

  TelegraphSpec tg;
  tg.mean_dwell_s = need_num(jt, "mean_dwell_s");
  tg.amplitude_t = need_num(jt, "amplitude_t");
  tg.trace_duration_s = opt_num(jt, "trace_duration_s", 1.0);
  tg.n_traces = static_cast<int>(opt_num(jt, "n_traces", 200));
  tg.seed = master.raw();

  SignalSpec spec;
  spec.components.push_back(tg);
  spec.projection_angle_rad = projection_from_config(cfg);
  const Signal sig(validate_signal_spec(spec));

  const DrivePoint dp{drive};
  const double rate_off = transduce(odmr, dp, 0.0);
  PsdAccumulator on_acc, off_acc, in_acc;
  const std::size_t nbins =
      static_cast<std::size_t>(std::llround(tg.trace_duration_s / bin_w));

  for (int k = 0; k < tg.n_traces; ++k) {
    const double base = static_cast<double>(k) * tg.trace_duration_s;
    const auto rate = [&](double t) { return transduce(odmr, dp, sig.evaluate(base + t)); };
    const std::uint64_t seed_on = master.raw(), seed_off = master.raw();

    const TagStream on = simulate_stream(rate, odmr.count_rate_hz, tg.trace_duration_s,
                                         DetectorModel{}, seed_on);
    on_acc.add(psd(bin_tags(on, bin_w), Window::none, false));

    const TagStream off =
        simulate_stream([&](double) { return rate_off; }, odmr.count_rate_hz,
                        tg.trace_duration_s, DetectorModel{}, seed_off);
    off_acc.add(psd(bin_tags(off, bin_w), Window::none, false));

    SampledSeries field;
    field.bin_width_s = bin_w;
    field.values.resize(nbins);
    for (std::size_t q = 0; q < nbins; ++q)
      field.values[q] = sig.evaluate(base + (static_cast<double>(q) + 0.5) * bin_w);
    in_acc.add(psd(field, Window::none, false));
  }

  const Spectrum on_avg = on_acc.mean();
  const Spectrum off_avg = off_acc.mean();
  const Spectrum diff = onoff_subtract(on_avg, off_avg);
  const Spectrum in_avg = in_acc.mean();

  auto dump = [&](const char* rel, const Spectrum& s) {
    std::ostringstream os;
    write_spectrum_csv(s, os);
    w.put(rel, os.str());
  };
  dump("on_psd.csv", on_avg);
  dump("off_psd.csv", off_avg);
  dump("diff_psd.csv", diff);
  dump("input_psd.csv", in_avg);

  std::ostringstream sw;
  write_telegraph_csv(sig.telegraphs().front(), sw);
  w.put("switching.csv", sw.str());

  Analysis a = analyze_telegraph(w.dir, cfg);
  for (const auto& [rel, j] : a.reports) w.put(rel, canonical_json(j) + "\n");

  const auto [lo, hi] = telegraph_fit_band(cfg);
  std::vector<double> fx, fy, mx, my;
  const json& jp = a.reports.front().second;
  const double a_fit = jp.at("params").at("amplitude").at("value").get<double>();
  const double t_fit = jp.at("params").at("mean_dwell").at("value").get<double>();
  for (std::size_t k = 1; k < diff.psd.size(); ++k) {
    const double f = diff.freq_of(k);
    if (f < lo || f > hi) continue;
    fx.push_back(f);
    fy.push_back(diff.psd[k]);
    mx.push_back(f);
    my.push_back(telegraph_psd(a_fit, t_fit, f));
  }
  SvgPlot plot("Telegraph power spectrum, background subtracted", "f (Hz)", "psd");
  plot.set_log_x(true);
  plot.set_log_y(true);
  plot.add_series("on - off", fx, fy, true);
  plot.add_series("Lorentzian dwell fit", mx, my, false);
  plot.write(w.dir / "telegraph_psd.svg");
  w.note("telegraph_psd.svg");

  return build_asserts_telegraph(cfg, a);
}

// ---------------------------------------------------------------- dispatch

Analysis analyze_kind(ExperimentKind kind, const fs::path& dir, const json& cfg) {
  switch (kind) {
    case ExperimentKind::sensitivity_table: return analyze_sensitivity(dir, cfg);
    case ExperimentKind::snr_scaling: return analyze_snr(dir, cfg);
    case ExperimentKind::bandwidth_sweep: return analyze_bandwidth(dir, cfg);
    case ExperimentKind::lindblad_sweep: return analyze_lindblad(dir, cfg);
    case ExperimentKind::multitone: return analyze_multitone(dir, cfg);
    case ExperimentKind::phase_coherent: return analyze_phase(dir, cfg);
    case ExperimentKind::telegraph: return analyze_telegraph(dir, cfg);
  }
  throw validation_error("unknown experiment kind");
}

std::vector<AssertionRecord> build_asserts_kind(ExperimentKind kind, const json& cfg,
                                                const Analysis& a) {
  switch (kind) {
    case ExperimentKind::sensitivity_table: return build_asserts_sensitivity(cfg, a);
    case ExperimentKind::snr_scaling: return build_asserts_snr(cfg, a);
    case ExperimentKind::bandwidth_sweep: return build_asserts_bandwidth(cfg, a);
    case ExperimentKind::lindblad_sweep: return build_asserts_lindblad(cfg, a);
    case ExperimentKind::multitone: return build_asserts_multitone(cfg, a);
    case ExperimentKind::phase_coherent: return build_asserts_phase(cfg, a);
    case ExperimentKind::telegraph: return build_asserts_telegraph(cfg, a);
  }
  throw validation_error("unknown experiment kind");
}

std::vector<AssertionRecord> run_kind(ExperimentKind kind, const json& cfg, RunWriter& w) {
  switch (kind) {
    case ExperimentKind::sensitivity_table: return run_sensitivity(cfg, w);
    case ExperimentKind::snr_scaling: return run_snr(cfg, w);
    case ExperimentKind::bandwidth_sweep: return run_bandwidth(cfg, w);
    case ExperimentKind::lindblad_sweep: return run_lindblad(cfg, w);
    case ExperimentKind::multitone: return run_multitone(cfg, w);
    case ExperimentKind::phase_coherent: return run_phase(cfg, w);
    case ExperimentKind::telegraph: return run_telegraph(cfg, w);
  }
  throw validation_error("unknown experiment kind");
}

}  // namespace

ExperimentKind experiment_kind_from_name(const std::string& name) {
  if (name == "sensitivity-table") return ExperimentKind::sensitivity_table;
  if (name == "snr-scaling") return ExperimentKind::snr_scaling;
  if (name == "bandwidth-sweep") return ExperimentKind::bandwidth_sweep;
  if (name == "lindblad-sweep") return ExperimentKind::lindblad_sweep;
  if (name == "multitone") return ExperimentKind::multitone;
  if (name == "phase-coherent") return ExperimentKind::phase_coherent;
  if (name == "telegraph") return ExperimentKind::telegraph;
  throw validation_error("unknown experiment kind '" + name + "'");
}

std::string experiment_kind_name(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::sensitivity_table: return "sensitivity-table";
    case ExperimentKind::snr_scaling: return "snr-scaling";
    case ExperimentKind::bandwidth_sweep: return "bandwidth-sweep";
    case ExperimentKind::lindblad_sweep: return "lindblad-sweep";
    case ExperimentKind::multitone: return "multitone";
    case ExperimentKind::phase_coherent: return "phase-coherent";
    case ExperimentKind::telegraph: return "telegraph";
  }
  throw validation_error("unknown experiment kind");
}

json RunManifest::to_json() const {
  json j;
  j["schema"] = schema;
  j["tool_version"] = tool_version;
  j["kind"] = kind;
  j["name"] = name;
  j["seed"] = seed;
  j["created_utc"] = created_utc;
  j["config_digest"] = config_digest;
  j["wall_time_s"] = wall_time_s;
  json jf = json::array();
  for (const auto& f : files)
    jf.push_back({{"path", f.path}, {"bytes", f.bytes}, {"sha256", f.sha256}});
  j["files"] = jf;
  json ja = json::array();
  for (const auto& a : assertions)
    ja.push_back({{"name", a.name},
                  {"passed", a.passed},
                  {"value", a.value},
                  {"low", a.low},
                  {"high", a.high},
                  {"recomputable", a.recomputable},
                  {"detail", a.detail}});
  j["assertions"] = ja;
  j["passed"] = passed;
  return j;
}

RunManifest RunManifest::from_json(const json& j) {
  RunManifest m;
  m.schema = j.at("schema").get<int>();
  m.tool_version = j.at("tool_version").get<std::string>();
  m.kind = j.at("kind").get<std::string>();
  m.name = j.at("name").get<std::string>();
  m.seed = j.at("seed").get<std::uint64_t>();
  m.created_utc = j.at("created_utc").get<std::string>();
  m.config_digest = j.at("config_digest").get<std::string>();
  m.wall_time_s = j.value("wall_time_s", 0.0);
  for (const auto& f : j.at("files")) {
    ManifestFile mf;
    mf.path = f.at("path").get<std::string>();
    mf.bytes = f.at("bytes").get<std::uint64_t>();
    mf.sha256 = f.at("sha256").get<std::string>();
    m.files.push_back(std::move(mf));
  }
  for (const auto& a : j.at("assertions")) {
    AssertionRecord ar;
    ar.name = a.at("name").get<std::string>();
    ar.passed = a.at("passed").get<bool>();
    ar.value = a.at("value").get<double>();
    ar.low = a.at("low").get<double>();
    ar.high = a.at("high").get<double>();
    ar.recomputable = a.at("recomputable").get<bool>();
    ar.detail = a.value("detail", "");
    m.assertions.push_back(std::move(ar));
  }
  m.passed = j.at("passed").get<bool>();
  return m;
}

RunManifest run_experiment(const json& config, const fs::path& out_dir) {
  if (!config.is_object()) throw validation_error("config must be a JSON object");
  if (!config.contains("kind")) throw validation_error("config: missing 'kind'");
  const ExperimentKind kind = experiment_kind_from_name(config.at("kind").get<std::string>());

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw io_error("cannot create " + out_dir.string() + ": " + ec.message());

  RunWriter w;
  w.dir = out_dir;
  const std::string config_text = canonical_json(config) + "\n";
  const auto t0 = std::chrono::steady_clock::now();

  RunManifest m;
  try {
    w.put("config.json", config_text);
    m.assertions = run_kind(kind, config, w);
  } catch (...) {
    w.cleanup();
    throw;
  }

  m.schema = 1;
  m.tool_version = version_string();
  m.kind = experiment_kind_name(kind);
  m.name = config.value("name", m.kind);
  m.seed = opt_seed(config);
  m.created_utc = utc_now_string();
  m.config_digest = sha256_hex(config_text);
  m.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (config.contains("max_wall_s"))
    m.assertions.push_back(make_check("wall_time", m.wall_time_s, 0.0,
                                      need_num(config, "max_wall_s"), false,
                                      "run wall time, seconds"));
  m.files = w.files;
  m.passed = true;
  for (const auto& a : m.assertions) m.passed = m.passed && a.passed;

  atomic_write_file(out_dir / "manifest.json", canonical_json(m.to_json()) + "\n");
  return m;
}

RunManifest run_experiment_file(const fs::path& config_path, const fs::path& out_dir) {
  return run_experiment(read_json_file(config_path), out_dir);
}

VerifyReport verify_run(const fs::path& run_dir) {
  VerifyReport rep;
  rep.passed = true;
  auto fail = [&](const std::string& msg) {
    rep.passed = false;
    rep.failures.push_back(msg);
  };

  const fs::path mpath = run_dir / "manifest.json";
  if (!fs::exists(mpath)) throw io_error("no manifest.json in " + run_dir.string());
  const RunManifest m = RunManifest::from_json(read_json_file(mpath));

  for (const auto& f : m.files) {
    const fs::path p = run_dir / f.path;
    if (!fs::exists(p)) {
      fail("missing file: " + f.path);
      continue;
    }
    if (fs::file_size(p) != f.bytes) {
      fail("size mismatch: " + f.path);
      continue;
    }
    if (sha256_file_hex(p) != f.sha256) fail("checksum mismatch: " + f.path);
  }

  json config;
  bool have_config = false;
  if (fs::exists(run_dir / "config.json")) {
    std::ifstream in(run_dir / "config.json");
    std::ostringstream ss;
    ss << in.rdbuf();
    if (sha256_hex(ss.str()) != m.config_digest) fail("config digest mismatch");
    config = json::parse(ss.str());
    have_config = true;
  } else {
    fail("missing file: config.json");
  }

  json ja = json::array();
  if (have_config && rep.passed) {
    const ExperimentKind kind = experiment_kind_from_name(m.kind);
    const Analysis a = analyze_kind(kind, run_dir, config);
    const auto fresh = build_asserts_kind(kind, config, a);

    std::map<std::string, AssertionRecord> by_name;
    for (const auto& r : fresh) by_name[r.name] = r;
    for (const auto& stored : m.assertions) {
      json e{{"name", stored.name}, {"stored_value", stored.value}};
      if (!stored.recomputable) {
        const bool ok = std::isfinite(stored.value) && stored.value >= stored.low &&
                        stored.value <= stored.high;
        if (ok != stored.passed) fail("assertion flag inconsistent: " + stored.name);
        e["recomputed"] = false;
      } else if (!by_name.count(stored.name)) {
        fail("assertion no longer produced: " + stored.name);
      } else {
        const AssertionRecord& r = by_name[stored.name];
        e["recomputed_value"] = r.value;
        if (!nearly_equal(r.value, stored.value, 1e-9, 1e-12))
          fail("assertion value drifted: " + stored.name);
        if (r.passed != stored.passed) fail("assertion flag inconsistent: " + stored.name);
      }
      ja.push_back(e);
    }
    for (const auto& r : fresh)
      if (std::none_of(m.assertions.begin(), m.assertions.end(),
                       [&](const AssertionRecord& s) { return s.name == r.name; }))
        fail("assertion missing from manifest: " + r.name);
  }

  bool all = true;
  for (const auto& s : m.assertions) all = all && s.passed;
  if (all != m.passed) fail("manifest passed flag inconsistent");

  rep.details["run"] = run_dir.string();
  rep.details["kind"] = m.kind;
  rep.details["assertions"] = ja;
  rep.details["failures"] = rep.failures;
  rep.details["manifest_passed"] = m.passed;
  return rep;
}

}  // namespace fesense
