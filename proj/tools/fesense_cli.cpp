// Command-line front end over the fesense C API.
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "fesense.h"
#include "json.hpp"

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

int exit_code(fe_status st) {
  switch (st) {
    case FE_OK: return 0;
    case FE_ERR_INVALID_ARGUMENT: return 1;
    case FE_ERR_IO: return 2;
    case FE_ERR_RUNTIME: return 2;
    case FE_ERR_VERIFICATION: return 3;
  }
  return 2;
}

int fail(fe_status st) {
  std::fprintf(stderr, "error: %s\n", fe_last_error());
  return exit_code(st);
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    std::fprintf(stderr, "error: cannot open %s\n", path.c_str());
    std::exit(2);
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void print_assertions(const json& manifest) {
  for (const auto& a : manifest.at("assertions")) {
    std::printf("  [%s] %-28s value=%-14.8g bounds=[%.8g, %.8g]  %s\n",
                a.at("passed").get<bool>() ? "PASS" : "FAIL",
                a.at("name").get<std::string>().c_str(), a.at("value").get<double>(),
                a.at("low").get<double>(), a.at("high").get<double>(),
                a.value("detail", "").c_str());
  }
}

std::string default_out_dir(const std::string& config_path) {
  const char* root = std::getenv("FESENSE_OUTPUT_ROOT");
  const fs::path base = root && *root ? fs::path(root) : fs::path("runs");
  return (base / fs::path(config_path).stem()).string();
}

int cmd_run(const std::string& config_path, std::string out_dir) {
  if (out_dir.empty()) out_dir = default_out_dir(config_path);
  const std::string cfg = slurp(config_path);
  fe_report* rep = nullptr;
  const fe_status st = fe_run_experiment(cfg.c_str(), out_dir.c_str(), &rep);
  if (st != FE_OK) return fail(st);
  const json m = json::parse(fe_report_json(rep));
  std::printf("run %s -> %s\n", m.at("kind").get<std::string>().c_str(), out_dir.c_str());
  print_assertions(m);
  std::printf("%s (%.2f s)\n", fe_report_passed(rep) ? "PASSED" : "FAILED",
              m.value("wall_time_s", 0.0));
  const int rc = fe_report_passed(rep) ? 0 : 3;
  fe_report_free(rep);
  return rc;
}

int cmd_verify(const std::string& run_dir) {
  fe_report* rep = nullptr;
  const fe_status st = fe_verify_run(run_dir.c_str(), &rep);
  if (st != FE_OK) return fail(st);
  const json j = json::parse(fe_report_json(rep));
  for (const auto& f : j.at("failures"))
    std::printf("  mismatch: %s\n", f.get<std::string>().c_str());
  std::printf("verify %s: %s\n", run_dir.c_str(),
              fe_report_passed(rep) ? "CLEAN" : "MISMATCH");
  const int rc = fe_report_passed(rep) ? 0 : 3;
  fe_report_free(rep);
  return rc;
}

int cmd_inspect(const std::string& run_dir) {
  fe_report* rep = nullptr;
  const fe_status st = fe_inspect_run(run_dir.c_str(), &rep);
  if (st != FE_OK) return fail(st);
  const json m = json::parse(fe_report_json(rep));
  std::printf("kind:    %s\nname:    %s\nseed:    %llu\ncreated: %s\nfiles:   %zu\n",
              m.at("kind").get<std::string>().c_str(),
              m.at("name").get<std::string>().c_str(),
              static_cast<unsigned long long>(m.at("seed").get<std::uint64_t>()),
              m.at("created_utc").get<std::string>().c_str(), m.at("files").size());
  print_assertions(m);
  std::printf("%s\n", fe_report_passed(rep) ? "PASSED" : "FAILED");
  fe_report_free(rep);
  return 0;
}

int cmd_bench(double duration, double rate, double bin_width, unsigned long long seed) {
  fe_report* rep = nullptr;
  const fe_status st = fe_bench(duration, rate, bin_width, seed, &rep);
  if (st != FE_OK) return fail(st);
  std::printf("%s\n", json::parse(fe_report_json(rep)).dump(2).c_str());
  const int rc = fe_report_passed(rep) ? 0 : 3;
  fe_report_free(rep);
  return rc;
}

int cmd_simulate(const std::string& config_path, const std::string& tag_path) {
  const std::string cfg = slurp(config_path);
  const fe_status st = fe_simulate_tags(cfg.c_str(), tag_path.c_str());
  if (st != FE_OK) return fail(st);
  unsigned long long n = 0;
  double dur = 0.0;
  if (fe_tagfile_info(tag_path.c_str(), &n, &dur, nullptr) == FE_OK)
    std::printf("%s: %llu tags over %.6g s\n", tag_path.c_str(), n, dur);
  return 0;
}

int cmd_info(const std::string& tag_path) {
  unsigned long long n = 0, seed = 0;
  double dur = 0.0;
  const fe_status st = fe_tagfile_info(tag_path.c_str(), &n, &dur, &seed);
  if (st != FE_OK) return fail(st);
  std::printf("tags:     %llu\nduration: %.9g s\nseed:     %llu\nmean:     %.6g counts/s\n",
              n, dur, seed, dur > 0 ? static_cast<double>(n) / dur : 0.0);
  return 0;
}

int cmd_spectrum(const std::string& tag_path, const std::string& csv_path, double bin_width,
                 double segment) {
  const fe_status st =
      fe_spectrum_csv_from_tags(tag_path.c_str(), bin_width, segment, csv_path.c_str());
  if (st != FE_OK) return fail(st);
  std::printf("wrote %s\n", csv_path.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Photon-stream magnetometry simulator and analysis toolkit"};
  app.set_version_flag("--version", std::string(fe_version()));
  app.require_subcommand(1);

  std::string config_path, out_dir, run_dir, tag_path, csv_path;
  double duration = 60.0, rate = 72000.0, bin_width = 1e-7, segment = 0.0;
  unsigned long long seed = 1;

  auto* run = app.add_subcommand("run", "Run an experiment from a JSON config");
  run->add_option("config", config_path, "experiment config (JSON)")->required();
  run->add_option("-o,--out", out_dir,
                  "output directory (default: $FESENSE_OUTPUT_ROOT or ./runs, plus the "
                  "config stem)");

  auto* verify = app.add_subcommand("verify", "Re-check a finished run directory");
  verify->add_option("run_dir", run_dir, "run directory")->required();

  auto* inspect = app.add_subcommand("inspect", "Print a run's manifest");
  inspect->add_option("run_dir", run_dir, "run directory")->required();

  auto* bench = app.add_subcommand("bench", "Time the simulate/bin/transform pipeline");
  bench->add_option("--duration", duration, "simulated seconds");
  bench->add_option("--rate", rate, "mean count rate, counts/s");
  bench->add_option("--bin-width", bin_width, "histogram bin, seconds");
  bench->add_option("--seed", seed, "random seed");

  auto* simulate = app.add_subcommand("simulate", "Write a photon tag stream");
  simulate->add_option("config", config_path, "stream config (JSON)")->required();
  simulate->add_option("tags", tag_path, "output tag file")->required();

  auto* info = app.add_subcommand("info", "Print a tag file's header");
  info->add_option("tags", tag_path, "tag file")->required();

  auto* spectrum = app.add_subcommand("spectrum", "Power spectrum of a tag file as CSV");
  spectrum->add_option("tags", tag_path, "tag file")->required();
  spectrum->add_option("csv", csv_path, "output CSV")->required();
  spectrum->add_option("--bin-width", bin_width, "histogram bin, seconds")->required();
  spectrum->add_option("--segment", segment, "average over segments of this length, seconds");

  CLI11_PARSE(app, argc, argv);

  if (run->parsed()) return cmd_run(config_path, out_dir);
  if (verify->parsed()) return cmd_verify(run_dir);
  if (inspect->parsed()) return cmd_inspect(run_dir);
  if (bench->parsed()) return cmd_bench(duration, rate, bin_width, seed);
  if (simulate->parsed()) return cmd_simulate(config_path, tag_path);
  if (info->parsed()) return cmd_info(tag_path);
  if (spectrum->parsed()) return cmd_spectrum(tag_path, csv_path, bin_width, segment);
  return 0;
}
