#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace fesense {

// Experiment kinds accepted in config files.
//   sensitivity-table  Eq.-style sensitivity numbers for parameter sets
//   snr-scaling        tone SNR versus averaging time, power-law fit
//   bandwidth-sweep    detector response curves and rolloff fits
//   lindblad-sweep     master-equation response versus saturation
//   multitone          several tones resolved in one averaged spectrum
//   phase-coherent     comb-locked coherent averaging of a PM signal
//   telegraph          random telegraph dwell-time recovery, two routes
enum class ExperimentKind {
  sensitivity_table,
  snr_scaling,
  bandwidth_sweep,
  lindblad_sweep,
  multitone,
  phase_coherent,
  telegraph,
};

ExperimentKind experiment_kind_from_name(const std::string& name);
std::string experiment_kind_name(ExperimentKind kind);

struct AssertionRecord {
  std::string name;
  bool passed = false;
  double value = 0.0;
  double low = 0.0;   // inclusive bounds on value
  double high = 0.0;
  bool recomputable = true;  // verify re-derives value from artifacts
  std::string detail;
};

struct ManifestFile {
  std::string path;  // relative to the run directory
  std::uint64_t bytes = 0;
  std::string sha256;
};

struct RunManifest {
  int schema = 1;
  std::string tool_version;
  std::string kind;
  std::string name;
  std::uint64_t seed = 0;
  std::string created_utc;
  std::string config_digest;
  double wall_time_s = 0.0;
  std::vector<ManifestFile> files;
  std::vector<AssertionRecord> assertions;
  bool passed = false;

  nlohmann::json to_json() const;
  static RunManifest from_json(const nlohmann::json& j);
};

// Runs the experiment described by the config into out_dir (created if
// missing). Writes every artifact, a normalized copy of the config, and
// manifest.json last. Partial artifacts are removed when a failure
// aborts the run.
RunManifest run_experiment(const nlohmann::json& config, const std::filesystem::path& out_dir);
RunManifest run_experiment_file(const std::filesystem::path& config_path,
                                const std::filesystem::path& out_dir);

struct VerifyReport {
  bool passed = false;
  std::vector<std::string> failures;
  nlohmann::json details;
};

// Re-hashes every file in the manifest and re-derives each recomputable
// assertion from the artifacts alone. A mismatch against the recorded
// values fails the report.
VerifyReport verify_run(const std::filesystem::path& run_dir);

}  // namespace fesense
