#pragma once

#include <limits>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace fesense {

enum class FitModel {
  lorentzian,        // baseline * (1 - C / (1 + (2(f-f0)/G)^2))
  hyperfine_triplet, // three equal dips of depth C/3 split by a fixed spacing
  bandwidth,         // A / (1 + (f/fc)^2)^b + c
  telegraph,         // A^2 / (2T ((1/T)^2 + (pi f)^2))
  powerlaw,          // A x^b
};

struct FitOptions {
  int max_iterations = 500;
  double rel_tol = 1e-10;   // relative change of the squared residual norm
  double step_tol = 1e-12;  // max internal parameter step
  double fixed_hyperfine_splitting_hz = 2.1e6;
  // Finite: pin the bandwidth model's additive offset at this value and fit
  // only {amplitude, f_c, b}. Use for background-subtracted responses, where
  // a free offset sits at zero with no leverage.
  double fixed_bandwidth_offset = std::numeric_limits<double>::quiet_NaN();
  // 0 = model default (unit weights for line fits, sigma ~ y for power
  // spectra), 1 = force unit, 2 = force proportional-to-y.
  int sigma_mode = 0;
};

struct FitResult {
  std::string model;
  std::vector<std::string> names;
  std::vector<double> params;
  std::vector<double> sigmas;  // from (J^T J)^-1 scaled by reduced chi^2
  double residual_norm = 0.0;  // sqrt(sum of squared weighted residuals)
  double chi2_reduced = 0.0;
  bool converged = false;
  int iterations = 0;
  std::size_t n_points = 0;

  double param(const std::string& name) const;
  double sigma(const std::string& name) const;
  nlohmann::json to_json() const;
  static FitResult from_json(const nlohmann::json& j);
};

// Damped Gauss-Newton with a Levenberg-Marquardt trust factor. Positive
// parameters run through a log reparameterization, so they stay positive
// without constraints. Initial values may be empty (auto heuristics) or
// give every parameter in model order. Throws simulation_error when the
// Jacobian goes singular, naming the degenerate parameter.
FitResult fit(FitModel model, std::span<const double> x, std::span<const double> y,
              std::span<const double> sigma = {}, std::span<const double> init = {},
              const FitOptions& options = {});

// Model evaluators, usable for overlays and residual checks.
double lorentzian_eval(double f0, double gamma, double contrast, double baseline, double f);
double hyperfine_triplet_eval(double f0, double gamma, double contrast, double baseline,
                              double splitting, double f);
double bandwidth_eval(double amplitude, double f_c, double b, double c, double f);
double telegraph_psd(double amplitude, double mean_dwell, double f);
double powerlaw_eval(double amplitude, double exponent, double x);

const std::vector<std::string>& fit_param_names(FitModel model);
std::string fit_model_name(FitModel model);
FitModel fit_model_from_name(const std::string& name);

}  // namespace fesense
