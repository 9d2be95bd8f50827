#pragma once

#include <array>
#include <complex>
#include <cstdint>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "fesense/signal.hpp"

namespace fesense {

// Two-level density matrix, row-major {r00, r01, r10, r11} in the
// {excited, ground} basis.
using Rho = std::array<std::complex<double>, 4>;

// Spin-1/2 system driven near resonance in the rotating frame:
//   H = (detuning - gyro * b(t)) S_z - rabi * S_x,   S = sigma / 2
// with collapse channels L1 = sqrt(gamma1/2) sigma_minus (relaxation) and
// L2 = sqrt(gamma2/2) sigma_z (dephasing), entering the master equation as
//   drho/dt = -i [H, rho] + sum_j (2 Lj rho Lj+ - Lj+ Lj rho - rho Lj+ Lj).
// With this normalization the populations relax at exactly gamma1 and the
// coherences decay at gamma1/2 + 2 gamma2.
struct LindbladParams {
  double detuning_rad_s = 0.0;
  double rabi_rad_s = 0.0;    // gyro * B1, given directly
  double gamma1_s = 0.0;
  double gamma2_s = 0.0;
  ToneSpec signal;            // b(t), tesla; amplitude 0 disables
  double gyro_rad_s_per_t = kTwoPi * kDefaultGyromagneticHzPerT;
};

void validate_lindblad(const LindbladParams& p);

// Largest rate in the problem; the integrator requires dt <= 0.1 / this.
double lindblad_max_rate(const LindbladParams& p);

enum class InitialState { ground, excited };

struct EvolveResult {
  std::vector<double> t_s;
  std::vector<double> sz;  // <S_z> at the sampled times
  Rho final_rho{};
  double max_trace_error = 0.0;
  double max_hermiticity_error = 0.0;
  double min_eigenvalue = 0.0;
};

// Fixed-step RK4. Samples <S_z> every sample_stride steps (and at the
// end). Physicality is checked as the integration runs: trace within
// 1e-9 of one, Hermiticity within 1e-12, eigenvalues above -1e-9;
// violations raise simulation_error with the failing time.
EvolveResult evolve(const LindbladParams& p, InitialState init, double t_end_s, double dt_s,
                    std::uint32_t sample_stride = 1);

struct ResponseOptions {
  double transient_factor = 5.0;   // transient = factor / min nonzero rate
  int min_periods = 3;
  double convergence_tol = 1e-3;   // relative change of pp between periods
  double max_duration_s = 1.0;
  double dt_scale = 0.1;           // dt = dt_scale / max rate
};

// Half peak-to-peak of <S_z> once the drive response has settled.
// Requires at least one nonzero relaxation rate; failure to settle within
// max_duration raises simulation_error suggesting a longer window.
double response_amplitude(const LindbladParams& p, const ResponseOptions& options = {});

struct ResponseCurve {
  double saturation = 0.0;  // s
  double gamma1_s = 0.0;
  double gamma2_s = 0.0;
  double offset = 0.0;      // constant floor added to every amplitude
  std::vector<double> freq_hz;
  std::vector<double> amplitude;  // response + offset
};

// Scales gamma1 -> gamma1 (1+s) and gamma2 -> gamma2 (1+alpha s) for each
// saturation value and sweeps the signal frequency. The curves are meant
// to be handed to the bandwidth model fit.
std::vector<ResponseCurve> sweep_response(const LindbladParams& base, double alpha,
                                          std::span<const double> saturations,
                                          std::span<const double> freqs_hz, double offset,
                                          const ResponseOptions& options = {});

nlohmann::json to_json(const LindbladParams& p);
LindbladParams lindblad_from_json(const nlohmann::json& j);

}  // namespace fesense
