#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <utility>
#include <vector>

#include "doctest.h"
#include "fesense/errors.hpp"
#include "fesense/photon_sim.hpp"

using namespace fesense;

TEST_CASE("detector pole mapping keeps the cascade -3 dB point") {
  DetectorModel one;
  one.bandwidth_hz = 1e5;
  one.rolloff_exponent = 1.0;
  CHECK(detector_poles(one) == 1);
  CHECK(detector_pole_freq_hz(one) == doctest::Approx(1e5).epsilon(1e-12));
  CHECK(detector_power_response(one, 1e5) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(detector_power_response(one, 5e5) == doctest::Approx(1.0 / 26.0).epsilon(1e-12));

  DetectorModel two;
  two.bandwidth_hz = 1e5;
  two.rolloff_exponent = 2.0;
  CHECK(detector_poles(two) == 2);
  // two identical poles at fc / sqrt(sqrt(2) - 1) give |H(fc)|^2 = 1/2
  CHECK(detector_pole_freq_hz(two) ==
        doctest::Approx(1e5 / std::sqrt(std::sqrt(2.0) - 1.0)).epsilon(1e-12));
  CHECK(detector_power_response(two, 1e5) == doctest::Approx(0.5).epsilon(1e-9));
}

TEST_CASE("detector validation enforces the documented ranges") {
  DetectorModel m;
  m.bandwidth_hz = 0.0;
  CHECK_THROWS_AS(validate_detector(m), validation_error);
  m.bandwidth_hz = 1e5;
  m.rolloff_exponent = 0.2;
  CHECK_THROWS_AS(validate_detector(m), validation_error);
  m.rolloff_exponent = 1.0;
  m.dead_time_s = -1e-9;
  CHECK_THROWS_AS(validate_detector(m), validation_error);
  m.dead_time_s = 0.0;
  CHECK_NOTHROW(validate_detector(m));
}

TEST_CASE("rate filter attenuates a tone like the analytic one-pole response") {
  // 1 pole at 1 kHz driven at 5 kHz: |H| = 1/sqrt(26).
  const double pole = 1000.0, f = 5000.0;
  RateFilter filt(pole, 1, 2e-6);
  filt.reset(0.0, 1.0);
  auto input = [&](double t) { return 1.0 + 0.5 * std::sin(2 * std::numbers::pi * f * t); };
  // settle through 20 time constants
  double t = 20.0 / (2 * std::numbers::pi * pole);
  filt.advance(t, input);
  double lo = 1e9, hi = -1e9;
  const double dt = 1.0 / (400.0 * f);
  for (int i = 0; i < 800; ++i) {  // two periods
    t += dt;
    const double y = filt.advance(t, input);
    lo = std::min(lo, y);
    hi = std::max(hi, y);
  }
  const double gain = (hi - lo) / 2.0 / 0.5;
  CHECK(gain == doctest::Approx(1.0 / std::sqrt(26.0)).epsilon(0.02));
}

TEST_CASE("constant-rate stream reproduces Poisson counting statistics") {
  const double rate = 1e5, dur = 10.0;
  const TagStream s = simulate_stream([&](double) { return rate; }, rate, dur,
                                      DetectorModel{}, 12345);
  const double expect = rate * dur;
  CHECK(std::abs(static_cast<double>(s.size()) - expect) < 5.0 * std::sqrt(expect));
  // strictly increasing integer-picosecond tags inside the duration
  std::uint64_t prev = 0;
  bool first = true;
  for (std::uint64_t tag : s.tags_ps()) {
    if (!first) CHECK(tag > prev);
    prev = tag;
    first = false;
  }
  CHECK(s.tags_ps().back() <= s.duration_ps());
}

TEST_CASE("simulation is bit-identical under the same seed") {
  auto rate_fn = [](double t) { return 5e4 * (1.0 + 0.5 * std::sin(2e3 * t)); };
  const TagStream a = simulate_stream(rate_fn, 1e5, 2.0, DetectorModel{}, 777);
  const TagStream b = simulate_stream(rate_fn, 1e5, 2.0, DetectorModel{}, 777);
  CHECK(a.tags_ps() == b.tags_ps());
  const TagStream c = simulate_stream(rate_fn, 1e5, 2.0, DetectorModel{}, 778);
  CHECK(a.tags_ps() != c.tags_ps());
}

TEST_CASE("rate exceeding the thinning bound raises a simulation error") {
  CHECK_THROWS_AS(simulate_stream([](double) { return 2e5; }, 1e5, 0.5,
                                  DetectorModel{}, 1),
                  simulation_error);
}

TEST_CASE("non-paralyzable dead time thins the detected rate to R/(1+R tau)") {
  // 50 ns is the largest dead time the model admits; at 5 Mcount/s it
  // removes 20% of the counts, far outside Poisson scatter.
  const double rate = 5e6, dead = 50e-9, dur = 2.0;
  DetectorModel m;
  m.dead_time_s = dead;
  const TagStream s = simulate_stream([&](double) { return rate; }, rate, dur, m, 42);
  const double expect = rate / (1.0 + rate * dead) * dur;
  CHECK(static_cast<double>(s.size()) == doctest::Approx(expect).epsilon(0.02));
  // no pair closer than the dead time (integer-ps rounding can shave 1 ps)
  const auto dead_ps = static_cast<std::uint64_t>(dead * 1e12);
  std::uint64_t min_gap = UINT64_MAX;
  for (std::size_t i = 1; i < s.size(); ++i)
    min_gap = std::min(min_gap, s.tags_ps()[i] - s.tags_ps()[i - 1]);
  CHECK(min_gap >= dead_ps - 1);

  DetectorModel bad;
  bad.dead_time_s = 1e-6;
  CHECK_THROWS_AS(validate_detector(bad), validation_error);
}

TEST_CASE("power-to-bandwidth calibration interpolates and clamps") {
  const std::vector<std::pair<double, double>> cal = {
      {3e-5, 1e4}, {1e-4, 1e5}, {3e-4, 1e6}};
  CHECK(bandwidth_from_power(3e-5, cal) == doctest::Approx(1e4));
  CHECK(bandwidth_from_power(1e-4, cal) == doctest::Approx(1e5));
  const double mid = bandwidth_from_power(6.5e-5, cal);
  CHECK(mid > 1e4);
  CHECK(mid < 1e5);
  // out-of-range clamps to the edge and warns
  static int warnings = 0;
  warnings = 0;
  auto old = set_warning_handler([](const std::string&) { ++warnings; });
  CHECK(bandwidth_from_power(1e-6, cal) == doctest::Approx(1e4));
  CHECK(bandwidth_from_power(1.0, cal) == doctest::Approx(1e6));
  set_warning_handler(old);
  CHECK(warnings == 2);
  // monotone table required
  const std::vector<std::pair<double, double>> bad = {{3e-5, 1e5}, {1e-4, 1e4}};
  CHECK_THROWS_AS(bandwidth_from_power(5e-5, bad), validation_error);
}

TEST_CASE("detector JSON round trip") {
  DetectorModel m;
  m.bandwidth_hz = 1e5;
  m.rolloff_exponent = 1.0;
  m.dead_time_s = 5e-8;
  DetectorModel r = detector_from_json(to_json(m));
  CHECK(r.bandwidth_hz == m.bandwidth_hz);
  CHECK(r.rolloff_exponent == m.rolloff_exponent);
  CHECK(r.dead_time_s == m.dead_time_s);
}
