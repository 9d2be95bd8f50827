// Pipeline-level acceptance gates. Each criterion drives the full stack —
// signal synthesis through photon statistics to recovery — against fixed
// seeds and prints one PASS/FAIL line; details follow only on failure.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <complex>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fesense/errors.hpp"
#include "fesense/experiment.hpp"
#include "fesense/lindblad.hpp"
#include "fesense/math_util.hpp"
#include "fesense/odmr.hpp"
#include "fesense/photon_sim.hpp"
#include "fesense/signal.hpp"
#include "fesense/spectral.hpp"
#include "fesense/tag_stream.hpp"
#include "oracles.hpp"

using namespace fesense;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path g_root;

struct Gate {
  bool pass = true;
  std::vector<std::string> notes;

  void expect(bool ok, const std::string& what) {
    if (!ok) pass = false;
    notes.push_back(std::string(ok ? "ok    " : "FAILED") + "  " + what);
  }
  void note(const std::string& what) { notes.push_back("        " + what); }
};

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

RunManifest run_cfg(const char* text, const std::string& leaf) {
  return run_experiment(json::parse(text), g_root / leaf);
}

void gate_manifest(Gate& g, const RunManifest& m) {
  for (const auto& a : m.assertions)
    g.expect(a.passed,
             m.name + ": " + a.name + " = " + num(a.value) + " in [" + num(a.low) + ", " +
                 num(a.high) + "]");
}

// ------------------------------------------------------------- criterion 1

void sensitivity_table(Gate& g) {
  static const char* cfg = R"json({
    "kind": "sensitivity-table",
    "name": "table",
    "rows": [
      {"label": "single-a", "linewidth_hz": 9.6e6, "contrast": 0.1162, "count_rate_hz": 72000},
      {"label": "single-b", "linewidth_hz": 8.0e6, "contrast": 0.1058, "count_rate_hz": 60000},
      {"label": "ensemble", "linewidth_hz": 15e6, "contrast": 0.0161, "count_rate_hz": 3.7e6,
       "lineshape": "hyperfine_triplet"}
    ],
    "expected_eta_ut_per_sqrt_hz": [8.5, 8.5, 13.3],
    "eta_rel_tolerance": 0.02
  })json";
  gate_manifest(g, run_cfg(cfg, "table"));
}

// ------------------------------------------------------------- criterion 2

void snr_vs_time(Gate& g) {
  static const char* cfg = R"json({
    "kind": "snr-scaling",
    "name": "snr",
    "seed": 17,
    "odmr": {"linewidth_hz": 8.0e6, "contrast": 0.1058, "count_rate_hz": 60000},
    "tone": {"frequency_hz": 4500, "amplitude_t": 4.5e-6},
    "duration_s": 300,
    "max_wall_s": 60
  })json";
  gate_manifest(g, run_cfg(cfg, "snr"));
}

// ------------------------------------------------------------- criterion 3

void linearity_and_harmonics(Gate& g) {
  OdmrParams p;
  p.linewidth_hz = 8.0e6;
  p.contrast = 0.30;
  p.count_rate_hz = 1.0e6;
  validate_odmr(p);

  const double bound = linearity_bound(p);
  const double closed = std::sqrt(3.0) * p.linewidth_hz / p.gyromagnetic_hz_per_t;
  g.expect(std::abs(bound / closed - 1.0) < 1e-12,
           "bound matches sqrt(3) Gamma / gyro: " + num(bound * 1e6) + " uT");
  g.expect(std::abs(bound / 495e-6 - 1.0) <= 0.02,
           "bound within 2% of 495 uT: " + num(bound * 1e6) + " uT");

  // harmonic content of the transduced rate, by quadrature
  const DrivePoint dp{sensing_point(p)};
  const auto ratio2 = [&](double b_amp) {
    const double f = 1000.0;
    const auto wave = [&](double t) {
      return transduce(p, dp, b_amp * std::sin(kTwoPi * f * t));
    };
    return oracle::fourier_mag(wave, 1.0 / f, 2) / oracle::fourier_mag(wave, 1.0 / f, 1);
  };
  const double r_strong = ratio2(0.3 * bound);
  const double r_weak = ratio2(0.01 * bound);
  g.expect(r_strong > 1e-3, "0.3x bound: 2nd/1st harmonic = " + num(r_strong));
  g.expect(r_weak < 5e-4, "0.01x bound: 2nd/1st harmonic = " + num(r_weak) + " < 0.05%");

  // photon route at 0.3x: the second harmonic stands clear of the shot floor
  SignalSpec spec;
  spec.components.push_back(ToneSpec{1000.0, 0.3 * bound, 0.0});
  spec.projection_angle_rad = 0.0;
  const Signal sig(validate_signal_spec(spec));
  const auto rate = [&](double t) { return transduce(p, dp, sig.evaluate(t)); };
  const TagStream stream = simulate_stream(rate, p.count_rate_hz, 8.0, DetectorModel{}, 33);
  std::vector<Spectrum> segs;
  for_each_segment(stream, 1.0, 2.5e-5, [&](std::size_t, const TimeSeries& s) {
    segs.push_back(psd(s, Window::none, false));
  });
  const Spectrum avg = average_psd(segs);
  FloorOptions fo;
  for (int k = 1; k <= 5; ++k) fo.known_peaks_hz.push_back(1000.0 * k);
  const FloorEstimate fl = noise_floor(avg, fo);
  const double p1 = avg.psd[avg.grid_bin(1000.0)];
  const double p2 = avg.psd[avg.grid_bin(2000.0)];
  g.expect(p2 > 25.0 * fl.mean_equivalent,
           "photon psd: 2nd harmonic " + num(p2 / fl.mean_equivalent) + "x floor");
  const double measured = std::sqrt((p2 - fl.mean_equivalent) / (p1 - fl.mean_equivalent));
  g.expect(std::abs(measured / r_strong - 1.0) < 0.3,
           "photon 2nd/1st " + num(measured) + " vs quadrature " + num(r_strong));
}

// ------------------------------------------------------------- criterion 4

void bandwidth_recovery(Gate& g) {
  static const char* cfg = R"json({
    "kind": "bandwidth-sweep",
    "name": "bw",
    "seed": 31,
    "odmr": {"linewidth_hz": 1.0e7, "contrast": 0.30, "count_rate_hz": 1.0e7},
    "calibration": [[3.0e-5, 1.0e4], [1.0e-4, 1.0e5], [3.0e-4, 1.0e6]],
    "curves": [{"power_w": 3.0e-5}, {"power_w": 1.0e-4}, {"power_w": 3.0e-4}],
    "points_per_curve": 9,
    "segments_per_point": 8,
    "segment_s": 0.25
  })json";
  gate_manifest(g, run_cfg(cfg, "bw"));
}

// ------------------------------------------------------------- criterion 5

void master_equation(Gate& g) {
  // dense matrix-exponential oracle, a route the integrator never touches
  LindbladParams lp;
  lp.detuning_rad_s = 3.0e4;
  lp.rabi_rad_s = 2.0e4;
  lp.gamma1_s = 1.0e4;
  lp.gamma2_s = 5.0e3;
  lp.signal = ToneSpec{1.0, 0.0, 0.0};
  const double t_end = 2.0e-4;
  const EvolveResult r = evolve(lp, InitialState::excited, t_end, 1.0e-7, 100);

  oracle::Mat4 L = oracle::liouvillian(lp.detuning_rad_s, lp.rabi_rad_s, lp.gamma1_s,
                                       lp.gamma2_s);
  for (auto& v : L) v *= t_end;
  const auto want = oracle::apply4(oracle::expm(L), {1.0, 0.0, 0.0, 0.0});
  double err = 0.0;
  for (int i = 0; i < 4; ++i) err = std::max(err, std::abs(r.final_rho[i] - want[i]));
  g.expect(err < 1e-6, "integrator vs matrix exponential: " + num(err));
  g.expect(r.max_trace_error <= 1e-9, "trace error " + num(r.max_trace_error));
  g.expect(r.max_hermiticity_error <= 1e-12,
           "hermiticity error " + num(r.max_hermiticity_error));
  g.expect(r.min_eigenvalue >= -1e-9, "min eigenvalue " + num(r.min_eigenvalue));

  static const char* cfg = R"json({
    "kind": "lindblad-sweep",
    "name": "lindblad",
    "base": {
      "detuning_rad_s": 2.4e5,
      "rabi_rad_s": 2.0e5,
      "gamma1_s": 2.0e4,
      "gamma2_s": 2.0e5,
      "signal_frequency_hz": 1.0e4,
      "signal_amplitude_t": 2.0e-7
    },
    "alpha": 0.3,
    "offset": 2.0e-4,
    "saturations": [0.5, 2.0, 8.0],
    "n_frequencies": 12,
    "f_lo_hz": 3.0e3,
    "f_hi_hz": 3.0e6
  })json";
  gate_manifest(g, run_cfg(cfg, "lindblad"));
}

// ------------------------------------------------------------- criterion 6

void multitone_resolution(Gate& g) {
  static const char* cfg = R"json({
    "kind": "multitone",
    "name": "multitone",
    "seed": 61,
    "odmr": {"linewidth_hz": 1.0e7, "contrast": 0.30, "count_rate_hz": 1.0e7},
    "tones": [
      {"frequency_hz": 8600, "amplitude_t": 2.0e-5},
      {"frequency_hz": 9000, "amplitude_t": 2.0e-5},
      {"frequency_hz": 86000, "amplitude_t": 2.0e-5}
    ],
    "duration_s": 30.0,
    "segment_s": 1.0,
    "bin_width_s": 5.0e-6
  })json";
  gate_manifest(g, run_cfg(cfg, "multitone"));
}

// ------------------------------------------------------------- criterion 7

void phase_coherent_comb(Gate& g) {
  static const char* cfg = R"json({
    "kind": "phase-coherent",
    "name": "phase",
    "seed": 7,
    "odmr": {"linewidth_hz": 1.0e7, "contrast": 0.30, "count_rate_hz": 1.0e7},
    "references": {"omega1_hz": 10000, "omega2_hz": 11000},
    "pm": {"carrier_hz": 10000, "mod_frequency_hz": 1000,
           "mod_depth_rad": 1.5707963267948966, "amplitude_t": 1.2e-4},
    "n_traces": 100,
    "trace_s": 1.0
  })json";
  gate_manifest(g, run_cfg(cfg, "phase"));
}

// ------------------------------------------------------------- criterion 8

void telegraph_dwell(Gate& g) {
  static const char* cfg_fmt = R"json({
    "kind": "telegraph",
    "name": "%s",
    "seed": %d,
    "odmr": {"linewidth_hz": 1.0e7, "contrast": 0.30, "count_rate_hz": 3.7e6},
    "telegraph": {"mean_dwell_s": %s, "amplitude_t": 3.565e-4, "n_traces": 200}
  })json";
  struct Case {
    const char* name;
    int seed;
    const char* dwell;
  };
  for (const Case& c : {Case{"tg-1ms", 52, "0.001"}, Case{"tg-1p67ms", 54, "0.00167"},
                        Case{"tg-5ms", 53, "0.005"}}) {
    char cfg[512];
    std::snprintf(cfg, sizeof cfg, cfg_fmt, c.name, c.seed, c.dwell);
    gate_manifest(g, run_cfg(cfg, c.name));
  }
}

// ------------------------------------------------------------- criterion 9

void infrastructure(Gate& g) {
  // Parseval on a seeded random series
  {
    std::mt19937_64 rng(424242);
    std::normal_distribution<double> n(20.0, 4.0);
    SampledSeries series;
    series.bin_width_s = 1e-4;
    series.values.resize(4096);
    double mean = 0.0;
    for (auto& v : series.values) mean += (v = n(rng));
    mean /= static_cast<double>(series.values.size());
    const Spectrum s = psd(series);
    double lhs = s.psd[0] + s.psd[s.size() - 1];
    for (std::size_t k = 1; k + 1 < s.size(); ++k) lhs += 2.0 * s.psd[k];
    lhs /= static_cast<double>(series.values.size());
    double rhs = 0.0;
    for (double v : series.values) rhs += (v - mean) * (v - mean);
    g.expect(std::abs(lhs / rhs - 1.0) <= 1e-9,
             "Parseval: |ratio - 1| = " + num(std::abs(lhs / rhs - 1.0)));
  }

  // identical config + seed => byte-identical artifacts
  {
    static const char* cfg = R"json({
      "kind": "multitone",
      "name": "rerun",
      "seed": 99,
      "odmr": {"linewidth_hz": 1.0e7, "contrast": 0.30, "count_rate_hz": 1.0e6},
      "tones": [
        {"frequency_hz": 8600, "amplitude_t": 4.0e-5},
        {"frequency_hz": 9000, "amplitude_t": 4.0e-5},
        {"frequency_hz": 86000, "amplitude_t": 4.0e-5}
      ],
      "duration_s": 3.0,
      "segment_s": 1.0,
      "bin_width_s": 5.0e-6
    })json";
    const RunManifest a = run_cfg(cfg, "rerun_a");
    const RunManifest b = run_cfg(cfg, "rerun_b");
    std::map<std::string, std::string> ha, hb;
    for (const auto& f : a.files) ha[f.path] = f.sha256;
    for (const auto& f : b.files) hb[f.path] = f.sha256;
    g.expect(ha == hb && !ha.empty(),
             "rerun artifacts byte-identical (" + num(double(ha.size())) + " files)");
  }

  // 60 s of a 72 kcount/s stream binned at 100 ns and transformed, < 60 s
  {
    using clock = std::chrono::steady_clock;
    const auto t0 = clock::now();
    const TagStream stream = simulate_stream([](double) { return 72000.0; }, 72000.0, 60.0,
                                             DetectorModel{}, 12345);
    std::size_t n_segments = 0;
    double power = 0.0;
    for_each_segment(stream, 1.0, 1e-7, [&](std::size_t, const TimeSeries& seg) {
      const Spectrum s = psd(seg, Window::none, false);
      power += s.psd[1];
      ++n_segments;
    });
    const double wall = std::chrono::duration<double>(clock::now() - t0).count();
    g.expect(n_segments == 60 && power > 0.0,
             "bench transformed " + num(double(n_segments)) + " segments");
    g.expect(wall < 60.0, "bench wall " + num(wall) + " s for 60 s of stream (" +
                              num(double(stream.size())) + " tags)");
  }
}

}  // namespace

int main() {
  g_root = fs::temp_directory_path() / "fesense_acceptance";
  std::error_code ec;
  fs::remove_all(g_root, ec);
  fs::create_directories(g_root);

  struct Criterion {
    int id;
    const char* name;
    std::function<void(Gate&)> fn;
  };
  const std::vector<Criterion> criteria = {
      {1, "shot-noise sensitivity table", sensitivity_table},
      {2, "tone SNR vs averaging time", snr_vs_time},
      {3, "linearity bound and harmonic distortion", linearity_and_harmonics},
      {4, "detector bandwidth recovery", bandwidth_recovery},
      {5, "master-equation cross-validation", master_equation},
      {6, "multitone resolution", multitone_resolution},
      {7, "comb-locked phase averaging", phase_coherent_comb},
      {8, "telegraph dwell-time recovery", telegraph_dwell},
      {9, "infrastructure: Parseval, determinism, throughput", infrastructure},
  };

  int failures = 0;
  for (const auto& c : criteria) {
    Gate g;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      c.fn(g);
    } catch (const std::exception& e) {
      g.pass = false;
      g.notes.push_back(std::string("FAILED  exception: ") + e.what());
    }
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("[%s] criterion %d: %s (%.1f s)\n", g.pass ? "PASS" : "FAIL", c.id, c.name,
                wall);
    if (!g.pass)
      for (const auto& n : g.notes) std::printf("    %s\n", n.c_str());
    std::fflush(stdout);
    failures += g.pass ? 0 : 1;
  }

  if (failures == 0) {
    std::printf("all %d criteria passed\n", static_cast<int>(criteria.size()));
  } else {
    std::printf("%d of %d criteria FAILED\n", failures, static_cast<int>(criteria.size()));
  }
  return failures == 0 ? 0 : 1;
}
