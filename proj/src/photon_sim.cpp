#include "fesense/photon_sim.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "fesense/errors.hpp"
#include "fesense/math_util.hpp"
#include "fesense/rng.hpp"

namespace fesense {

void validate_detector(const DetectorModel& m) {
  if (!(m.bandwidth_hz > 0))
    throw validation_error("detector bandwidth_hz must be > 0 (inf disables the filter)");
  if (!(m.rolloff_exponent >= 0.5) || !std::isfinite(m.rolloff_exponent))
    throw validation_error("detector rolloff_exponent must be >= 0.5");
  if (!(m.dead_time_s >= 0) || m.dead_time_s > 50e-9)
    throw validation_error("detector dead_time_s must lie in [0, 50 ns]");
  if (!(m.filter_step_s >= 0) || !std::isfinite(m.filter_step_s))
    throw validation_error("detector filter_step_s must be >= 0");
}

int detector_poles(const DetectorModel& m) {
  return static_cast<int>(std::ceil(m.rolloff_exponent - 1e-12));
}

double detector_pole_freq_hz(const DetectorModel& m) {
  const int n = detector_poles(m);
  // Each pole contributes 1/(1 + (f/fp)^2); fp is chosen so the cascade
  // is -3 dB at bandwidth_hz.
  return m.bandwidth_hz / std::sqrt(std::pow(2.0, 1.0 / n) - 1.0);
}

double detector_power_response(const DetectorModel& m, double f_hz) {
  if (!std::isfinite(m.bandwidth_hz)) return 1.0;
  const int n = detector_poles(m);
  const double x = f_hz / detector_pole_freq_hz(m);
  return std::pow(1.0 / (1.0 + x * x), n);
}

RateFilter::RateFilter(double pole_freq_hz, int n_poles, double step_s)
    : tau_(1.0 / (kTwoPi * pole_freq_hz)), step_(step_s > 0 ? step_s : tau_ / 16.0) {
  if (!(pole_freq_hz > 0) || n_poles < 1)
    throw validation_error("rate filter needs pole_freq_hz > 0 and n_poles >= 1");
  state_.assign(static_cast<std::size_t>(n_poles), 0.0);
}

void RateFilter::reset(double t0, double x0) {
  t_ = t0;
  last_input_ = x0;
  std::fill(state_.begin(), state_.end(), x0);  // start settled
}

double RateFilter::advance(double t_target, const std::function<double(double)>& x) {
  const double dt = t_target - t_;
  if (dt < 0) throw simulation_error("rate filter fed non-monotonic time");
  if (dt == 0) return state_.back();
  const int n_sub = std::max(1, static_cast<int>(std::ceil(dt / step_ - 1e-12)));
  const double h = dt / n_sub;
  const double a = h / tau_;
  const double em = std::exp(-a);
  const double decay = 1.0 - em;             // weight of the input start value
  const double ramp = 1.0 + std::expm1(-a) / a;  // 1 - (1 - e^-a)/a, stable for small a
  double t0 = t_;
  for (int s = 0; s < n_sub; ++s) {
    const double t1 = (s == n_sub - 1) ? t_target : t0 + h;
    const double x1 = x(t1);
    double in0 = last_input_;
    double in1 = x1;
    for (double& y : state_) {
      const double old = y;
      y = old * em + in0 * decay + (in1 - in0) * ramp;
      in0 = old;
      in1 = y;
    }
    last_input_ = x1;
    t0 = t1;
  }
  t_ = t_target;
  return state_.back();
}

TagStream simulate_stream(const std::function<double(double)>& rate_fn, double rate_max,
                          double duration_s, const DetectorModel& detector, std::uint64_t seed) {
  validate_detector(detector);
  if (!(rate_max > 0) || !std::isfinite(rate_max))
    throw validation_error("rate_max must be positive and finite");
  if (!(duration_s > 0) || duration_s > 9e6)
    throw validation_error("duration_s must lie in (0, 9e6] for picosecond timestamps");

  const auto duration_ps = static_cast<std::uint64_t>(std::llround(duration_s * 1e12));
  auto checked = [&](double t) {
    const double r = rate_fn(t);
    if (!(r >= 0) || !std::isfinite(r))
      throw simulation_error("rate function returned a negative or non-finite value");
    if (r > rate_max * (1.0 + 1e-9)) {
      std::ostringstream msg;
      msg << "instantaneous rate " << r << " exceeds rate_max " << rate_max << " at t=" << t;
      throw simulation_error(msg.str());
    }
    return r;
  };

  const bool filtered = std::isfinite(detector.bandwidth_hz);
  RateFilter filt(filtered ? detector_pole_freq_hz(detector) : 1.0,
                  filtered ? detector_poles(detector) : 1, detector.filter_step_s);
  if (filtered) filt.reset(0.0, checked(0.0));

  Rng rng(seed);
  std::vector<std::uint64_t> tags;
  tags.reserve(static_cast<std::size_t>(
      std::min(2.5e8, rate_max * duration_s * 0.5 + 1024.0)));
  const double mean_gap = 1.0 / rate_max;
  double t = 0.0;
  double last_accept = -std::numeric_limits<double>::infinity();
  for (;;) {
    t += rng.exponential(mean_gap);
    if (t >= duration_s) break;
    const double r = filtered ? filt.advance(t, checked) : checked(t);
    if (rng.uniform() * rate_max >= r) continue;
    if (t - last_accept < detector.dead_time_s) continue;  // detector still dead
    last_accept = t;
    auto ps = static_cast<std::uint64_t>(std::llround(t * 1e12));
    if (!tags.empty() && ps <= tags.back()) ps = tags.back() + 1;
    if (ps > duration_ps) continue;  // rounding pushed past the end
    tags.push_back(ps);
  }
  return TagStream(duration_ps, seed, std::move(tags));
}

double bandwidth_from_power(double power_w,
                            std::span<const std::pair<double, double>> calibration) {
  if (calibration.size() < 2)
    throw validation_error("power calibration needs at least two points");
  for (std::size_t i = 1; i < calibration.size(); ++i) {
    if (!(calibration[i].first > calibration[i - 1].first))
      throw validation_error("power calibration powers must be strictly ascending");
    if (!(calibration[i].second > calibration[i - 1].second))
      throw validation_error("power calibration bandwidths must be strictly increasing");
  }
  if (!(power_w > 0) || !std::isfinite(power_w))
    throw validation_error("power_w must be positive and finite");
  if (power_w <= calibration.front().first) {
    if (power_w < calibration.front().first) {
      std::ostringstream msg;
      msg << "power " << power_w << " W below calibration range; clamping to "
          << calibration.front().first << " W";
      warn(msg.str());
    }
    return calibration.front().second;
  }
  if (power_w >= calibration.back().first) {
    if (power_w > calibration.back().first) {
      std::ostringstream msg;
      msg << "power " << power_w << " W above calibration range; clamping to "
          << calibration.back().first << " W";
      warn(msg.str());
    }
    return calibration.back().second;
  }
  auto it = std::upper_bound(calibration.begin(), calibration.end(), power_w,
                             [](double v, const auto& p) { return v < p.first; });
  const auto& hi = *it;
  const auto& lo = *(it - 1);
  const double frac = (power_w - lo.first) / (hi.first - lo.first);
  return lo.second + frac * (hi.second - lo.second);
}

std::vector<std::pair<double, double>> default_power_calibration() {
  return {{30e-6, 1.0e4}, {100e-6, 3.0e4}, {300e-6, 9.0e4},
          {1e-3, 2.8e5},  {3e-3, 7.0e5},   {10e-3, 2.0e6}};
}

nlohmann::json to_json(const DetectorModel& m) {
  nlohmann::json j = {{"rolloff_exponent", m.rolloff_exponent},
                      {"dead_time_s", m.dead_time_s},
                      {"filter_step_s", m.filter_step_s}};
  if (std::isfinite(m.bandwidth_hz)) j["bandwidth_hz"] = m.bandwidth_hz;
  return j;
}

DetectorModel detector_from_json(const nlohmann::json& j) {
  DetectorModel m;
  if (j.contains("bandwidth_hz")) m.bandwidth_hz = j.at("bandwidth_hz").get<double>();
  m.rolloff_exponent = j.value("rolloff_exponent", m.rolloff_exponent);
  m.dead_time_s = j.value("dead_time_s", m.dead_time_s);
  m.filter_step_s = j.value("filter_step_s", m.filter_step_s);
  validate_detector(m);
  return m;
}

}  // namespace fesense
