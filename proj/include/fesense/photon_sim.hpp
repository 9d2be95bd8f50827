#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "fesense/tag_stream.hpp"

namespace fesense {

// Detection chain response: an n-pole low-pass acting on the photon rate
// plus a non-paralyzable dead time. bandwidth_hz is the -3 dB point of
// the cascade; rolloff_exponent b sets the asymptotic slope 1/f^(2b) in
// power, realized with ceil(b) identical poles.
struct DetectorModel {
  double bandwidth_hz = std::numeric_limits<double>::infinity();  // inf = no filter
  double rolloff_exponent = 1.0;                                  // >= 0.5
  double dead_time_s = 0.0;
  // Integration substep for tracking fast rate content through the
  // filter; 0 picks pole_time_constant / 16. Set at most
  // 1 / (16 * f_signal) when the rate carries content near or above the
  // filter corner.
  double filter_step_s = 0.0;
};

void validate_detector(const DetectorModel& m);

// Number of poles and per-pole corner for a matched cascade -3 dB point:
// f_pole = f_c / sqrt(2^(1/n) - 1).
int detector_poles(const DetectorModel& m);
double detector_pole_freq_hz(const DetectorModel& m);

// |H(f)|^2 of the realized pole cascade, normalized to 1 at DC.
double detector_power_response(const DetectorModel& m, double f_hz);

// Causal cascade of identical one-pole low-passes advanced with an
// exact exponential update, treating the input as piecewise linear over
// each substep. Stateful; feed times monotonically.
class RateFilter {
 public:
  RateFilter(double pole_freq_hz, int n_poles, double step_s);
  void reset(double t0, double x0);
  double advance(double t_target, const std::function<double(double)>& x);
  double current_time() const { return t_; }

 private:
  double tau_;
  double step_;
  double t_ = 0.0;
  double last_input_ = 0.0;
  std::vector<double> state_;
};

// Draws photon tags on [0, duration) by thinning a Poisson process of
// intensity rate_max against the filtered rate. rate_fn must return
// values in [0, rate_max]; exceeding the bound raises simulation_error.
// Timestamps are rounded to integer picoseconds; a collision bumps the
// later tag by 1 ps.
TagStream simulate_stream(const std::function<double(double)>& rate_fn, double rate_max,
                          double duration_s, const DetectorModel& detector, std::uint64_t seed);

// Maps an excitation power to a detector bandwidth by piecewise-linear
// interpolation of a calibration table (power ascending, bandwidth
// strictly increasing). Out-of-range powers clamp to the table edge with
// a warning.
double bandwidth_from_power(double power_w,
                            std::span<const std::pair<double, double>> calibration);

// Stand-in calibration covering 30 uW to 10 mW; replace with measured
// points when available.
std::vector<std::pair<double, double>> default_power_calibration();

nlohmann::json to_json(const DetectorModel& m);
DetectorModel detector_from_json(const nlohmann::json& j);

}  // namespace fesense
