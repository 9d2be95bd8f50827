#pragma once

#include <cstdint>
#include <iosfwd>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "fesense/math_util.hpp"

namespace fesense {

// Single magnetic tone, b(t) = amplitude * cos(2 pi f t + phase).
struct ToneSpec {
  double frequency_hz = 0.0;
  double amplitude_t = 0.0;  // tesla
  double phase_rad = 0.0;    // normalized to [-pi, pi) on validation
};

// Phase-modulated carrier, b(t) = amplitude * cos(2 pi fc t + m sin(2 pi fm t)).
struct PhaseModSpec {
  double carrier_hz = 0.0;
  double mod_frequency_hz = 0.0;
  double mod_depth_rad = 0.0;
  double amplitude_t = 0.0;
};

// Random telegraph field: two levels +-amplitude/2, dwell times drawn
// exponentially with the given mean, realized as n_traces independent
// traces laid end to end on one timeline.
struct TelegraphSpec {
  double mean_dwell_s = 0.0;
  double amplitude_t = 0.0;
  double trace_duration_s = 0.0;
  int n_traces = 1;
  std::uint64_t seed = 0;
};

using SignalComponent = std::variant<ToneSpec, PhaseModSpec, TelegraphSpec>;

struct SignalSpec {
  std::vector<SignalComponent> components;
  double projection_angle_rad = kDefaultProjectionAngleRad;
};

struct TelegraphTrace {
  double initial_level_t = 0.0;        // +-amplitude/2
  std::vector<double> switch_times_s;  // strictly increasing, inside [0, trace_duration)
};

struct TelegraphRealization {
  TelegraphSpec spec;
  std::vector<TelegraphTrace> traces;

  double total_duration_s() const { return spec.trace_duration_s * spec.n_traces; }
  // Level at time t on the concatenated timeline, before projection.
  double value_at(double t) const;
};

TelegraphRealization generate_telegraph(const TelegraphSpec& spec);

// Throws validation_error on out-of-range parameters; normalizes tone
// phases into [-pi, pi). Warns when trace_duration < 10 * mean_dwell.
SignalSpec validate_signal_spec(SignalSpec spec);

// A realized signal: telegraph components are drawn once at construction,
// after which evaluate() is pure.
class Signal {
 public:
  explicit Signal(SignalSpec spec);

  // Projected field at time t (tesla). t must lie in [0, max_time()].
  double evaluate(double t) const;

  // Finite when a telegraph component bounds the timeline, +inf otherwise.
  double max_time_s() const { return max_time_; }

  // Rough highest frequency content, used to pick integration substeps.
  double bandwidth_hint_hz() const;

  const SignalSpec& spec() const { return spec_; }
  const std::vector<TelegraphRealization>& telegraphs() const { return telegraphs_; }

 private:
  SignalSpec spec_;
  double projection_ = 1.0;
  double max_time_ = 0.0;
  std::vector<TelegraphRealization> telegraphs_;  // parallel to telegraph components
};

// CSV rows: trace_id,switch_time_s,level_t. Row with switch_time_s = 0
// carries the initial level of each trace.
void write_telegraph_csv(const TelegraphRealization& real, std::ostream& out);

nlohmann::json to_json(const SignalSpec& spec);
SignalSpec signal_spec_from_json(const nlohmann::json& j);

}  // namespace fesense
