#include "fesense.h"

#include <chrono>
#include <cstring>
#include <exception>
#include <filesystem>
#include <new>
#include <sstream>
#include <string>
#include <vector>

#include "fesense/config.hpp"
#include "fesense/errors.hpp"
#include "fesense/experiment.hpp"
#include "fesense/fit.hpp"
#include "fesense/odmr.hpp"
#include "fesense/photon_sim.hpp"
#include "fesense/signal.hpp"
#include "fesense/spectral.hpp"
#include "fesense/tag_stream.hpp"

using nlohmann::json;

struct fe_report {
  std::string body;
  int passed = 0;
};

namespace {

thread_local std::string g_last_error;

template <typename Fn>
fe_status guarded(Fn&& fn) {
  try {
    fn();
    g_last_error.clear();
    return FE_OK;
  } catch (const fesense::validation_error& e) {
    g_last_error = e.what();
    return FE_ERR_INVALID_ARGUMENT;
  } catch (const fesense::io_error& e) {
    g_last_error = e.what();
    return FE_ERR_IO;
  } catch (const fesense::verification_error& e) {
    g_last_error = e.what();
    return FE_ERR_VERIFICATION;
  } catch (const json::exception& e) {
    g_last_error = e.what();
    return FE_ERR_INVALID_ARGUMENT;
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return FE_ERR_RUNTIME;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return FE_ERR_RUNTIME;
  }
}

fe_status need(const void* p, const char* what) {
  g_last_error = std::string("null ") + what;
  (void)p;
  return FE_ERR_INVALID_ARGUMENT;
}

fe_report* wrap(const json& j, bool passed) {
  auto* r = new fe_report;
  r->body = fesense::canonical_json(j);
  r->passed = passed ? 1 : 0;
  return r;
}

json parse_arg(const char* text, const char* what) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded())
    throw fesense::validation_error(std::string(what) + " is not valid JSON");
  return j;
}

fesense::OdmrParams odmr_arg(const char* odmr_json) {
  return fesense::odmr_from_json(parse_arg(odmr_json, "odmr parameters"));
}

}  // namespace

extern "C" {

const char* fe_version(void) {
  static const std::string v = fesense::version_string();
  return v.c_str();
}

const char* fe_last_error(void) { return g_last_error.c_str(); }

int fe_report_passed(const fe_report* report) { return report ? report->passed : -1; }

const char* fe_report_json(const fe_report* report) {
  return report ? report->body.c_str() : "";
}

void fe_report_free(fe_report* report) { delete report; }

fe_status fe_run_experiment(const char* config_json, const char* out_dir,
                            fe_report** out_report) {
  if (!config_json) return need(config_json, "config_json");
  if (!out_dir) return need(out_dir, "out_dir");
  if (!out_report) return need(out_report, "out_report");
  *out_report = nullptr;
  return guarded([&] {
    const json cfg = parse_arg(config_json, "config");
    const fesense::RunManifest m = fesense::run_experiment(cfg, out_dir);
    *out_report = wrap(m.to_json(), m.passed);
  });
}

fe_status fe_verify_run(const char* run_dir, fe_report** out_report) {
  if (!run_dir) return need(run_dir, "run_dir");
  if (!out_report) return need(out_report, "out_report");
  *out_report = nullptr;
  return guarded([&] {
    const fesense::VerifyReport rep = fesense::verify_run(run_dir);
    *out_report = wrap(rep.details, rep.passed);
  });
}

fe_status fe_inspect_run(const char* run_dir, fe_report** out_report) {
  if (!run_dir) return need(run_dir, "run_dir");
  if (!out_report) return need(out_report, "out_report");
  *out_report = nullptr;
  return guarded([&] {
    const json j = fesense::read_json_file(std::filesystem::path(run_dir) / "manifest.json");
    const fesense::RunManifest m = fesense::RunManifest::from_json(j);
    *out_report = wrap(m.to_json(), m.passed);
  });
}

fe_status fe_odmr_sensitivity(const char* odmr_json, double* out_t_per_sqrt_hz) {
  if (!odmr_json) return need(odmr_json, "odmr_json");
  if (!out_t_per_sqrt_hz) return need(out_t_per_sqrt_hz, "output pointer");
  return guarded([&] { *out_t_per_sqrt_hz = fesense::sensitivity(odmr_arg(odmr_json)); });
}

fe_status fe_odmr_sensing_point(const char* odmr_json, double* out_hz) {
  if (!odmr_json) return need(odmr_json, "odmr_json");
  if (!out_hz) return need(out_hz, "output pointer");
  return guarded([&] { *out_hz = fesense::sensing_point(odmr_arg(odmr_json)); });
}

fe_status fe_odmr_linearity_bound(const char* odmr_json, double* out_t) {
  if (!odmr_json) return need(odmr_json, "odmr_json");
  if (!out_t) return need(out_t, "output pointer");
  return guarded([&] { *out_t = fesense::linearity_bound(odmr_arg(odmr_json)); });
}

fe_status fe_simulate_tags(const char* config_json, const char* tag_path) {
  if (!config_json) return need(config_json, "config_json");
  if (!tag_path) return need(tag_path, "tag_path");
  return guarded([&] {
    const json cfg = parse_arg(config_json, "config");
    const fesense::OdmrParams odmr = fesense::odmr_from_json(cfg.at("odmr"));
    const fesense::SignalSpec spec = fesense::signal_spec_from_json(cfg.at("signal"));
    const fesense::Signal sig(fesense::validate_signal_spec(spec));
    const double duration = cfg.at("duration_s").get<double>();
    fesense::DetectorModel det;
    if (cfg.contains("detector")) det = fesense::detector_from_json(cfg.at("detector"));
    const double drive =
        cfg.value("drive_frequency_hz", fesense::sensing_point(odmr));
    const std::uint64_t seed = cfg.value("seed", std::uint64_t{1});
    const fesense::DrivePoint dp{drive};
    const auto rate = [&](double t) {
      return fesense::transduce(odmr, dp, sig.evaluate(t));
    };
    const fesense::TagStream stream =
        fesense::simulate_stream(rate, odmr.count_rate_hz, duration, det, seed);
    fesense::write_tag_file(stream, tag_path);
  });
}

fe_status fe_tagfile_info(const char* tag_path, unsigned long long* out_n_tags,
                          double* out_duration_s, unsigned long long* out_seed) {
  if (!tag_path) return need(tag_path, "tag_path");
  return guarded([&] {
    fesense::TagFileReader reader(tag_path);
    if (out_n_tags) *out_n_tags = reader.header().count;
    if (out_duration_s) *out_duration_s = static_cast<double>(reader.header().duration_ps) * 1e-12;
    if (out_seed) *out_seed = reader.header().seed;
  });
}

fe_status fe_spectrum_csv_from_tags(const char* tag_path, double bin_width_s,
                                    double segment_s, const char* csv_path) {
  if (!tag_path) return need(tag_path, "tag_path");
  if (!csv_path) return need(csv_path, "csv_path");
  return guarded([&] {
    const fesense::TagStream stream = fesense::read_tag_file(tag_path);
    fesense::Spectrum out;
    if (segment_s > 0.0) {
      std::size_t count = 0;
      fesense::for_each_segment(
          stream, segment_s, bin_width_s,
          [&](std::size_t, const fesense::TimeSeries& seg) {
            const fesense::Spectrum s = fesense::psd(seg, fesense::Window::none, false);
            if (count == 0) {
              out = s;
            } else {
              for (std::size_t k = 0; k < s.psd.size(); ++k) out.psd[k] += s.psd[k];
            }
            ++count;
          });
      if (count == 0) throw fesense::validation_error("segment_s exceeds the stream length");
      for (auto& v : out.psd) v /= static_cast<double>(count);
      out.amplitude.clear();
      out.power_only = true;
      out.n_averages = static_cast<std::uint32_t>(count);
    } else {
      out = fesense::psd(fesense::bin_tags(stream, bin_width_s), fesense::Window::none, true);
    }
    std::ostringstream os;
    fesense::write_spectrum_csv(out, os);
    fesense::atomic_write_file(csv_path, os.str());
  });
}

fe_status fe_fit_xy(const char* model, size_t n, const double* x, const double* y,
                    const double* sigma, fe_report** out_report) {
  if (!model) return need(model, "model");
  if (!x) return need(x, "x");
  if (!y) return need(y, "y");
  if (!out_report) return need(out_report, "out_report");
  *out_report = nullptr;
  return guarded([&] {
    fesense::FitModel m;
    const std::string name(model);
    if (name == "lorentzian") m = fesense::FitModel::lorentzian;
    else if (name == "hyperfine-triplet") m = fesense::FitModel::hyperfine_triplet;
    else if (name == "bandwidth") m = fesense::FitModel::bandwidth;
    else if (name == "telegraph") m = fesense::FitModel::telegraph;
    else if (name == "powerlaw") m = fesense::FitModel::powerlaw;
    else throw fesense::validation_error("unknown fit model '" + name + "'");
    const std::vector<double> vx(x, x + n), vy(y, y + n);
    std::vector<double> vs;
    if (sigma) vs.assign(sigma, sigma + n);
    const fesense::FitResult fr = fesense::fit(m, vx, vy, vs);
    *out_report = wrap(fr.to_json(), fr.converged);
  });
}

fe_status fe_bench(double duration_s, double rate_hz, double bin_width_s,
                   unsigned long long seed, fe_report** out_report) {
  if (!out_report) return need(out_report, "out_report");
  *out_report = nullptr;
  return guarded([&] {
    using clock = std::chrono::steady_clock;
    const auto secs = [](auto a, auto b) {
      return std::chrono::duration<double>(b - a).count();
    };
    const auto t0 = clock::now();
    const fesense::TagStream stream = fesense::simulate_stream(
        [rate_hz](double) { return rate_hz; }, rate_hz, duration_s,
        fesense::DetectorModel{}, seed);
    const auto t1 = clock::now();

    // Streams longer than a second go through 1 s segments (the acquisition
    // default) so transform memory stays flat no matter the duration.
    std::size_t n_segments = 0, n_bins = 0, n_freq = 0;
    double fft_seconds = 0.0, total_power = 0.0;
    const auto transform = [&](const fesense::TimeSeries& seg) {
      const auto f0 = clock::now();
      const fesense::Spectrum s = fesense::psd(seg, fesense::Window::none, false);
      fft_seconds += secs(f0, clock::now());
      n_bins = seg.counts.size();
      n_freq = s.psd.size();
      for (double v : s.psd) total_power += v;
      ++n_segments;
    };
    if (duration_s > 1.0) {
      fesense::for_each_segment(stream, 1.0, bin_width_s,
                                [&](std::size_t, const fesense::TimeSeries& seg) {
                                  transform(seg);
                                });
    } else {
      transform(fesense::bin_tags(stream, bin_width_s));
    }
    const auto t2 = clock::now();

    json j;
    j["n_tags"] = stream.size();
    j["n_segments"] = n_segments;
    j["n_bins"] = n_bins;  // per segment
    j["n_freq_bins"] = n_freq;
    j["total_power"] = total_power;  // keeps the transforms observable
    j["simulate_s"] = secs(t0, t1);
    j["bin_s"] = secs(t1, t2) - fft_seconds;
    j["fft_s"] = fft_seconds;
    j["total_s"] = secs(t0, t2);
    j["realtime_factor"] = duration_s / secs(t0, t2);
    *out_report = wrap(j, secs(t0, t2) < duration_s);
  });
}

}  // extern "C"
