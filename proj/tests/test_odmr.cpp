#include <cmath>

#include "doctest.h"
#include "fesense/errors.hpp"
#include "fesense/odmr.hpp"
#include "oracles.hpp"

using namespace fesense;

namespace {

OdmrParams make(double gamma_hz, double contrast, double rate,
                LineshapeKind kind = LineshapeKind::single_lorentzian) {
  OdmrParams p;
  p.linewidth_hz = gamma_hz;
  p.contrast = contrast;
  p.count_rate_hz = rate;
  p.lineshape = kind;
  return p;
}

}  // namespace

TEST_CASE("single-line dip depth and symmetry") {
  OdmrParams p = make(8e6, 0.1, 1e6);
  CHECK(lineshape(p, p.center_freq_hz) == doctest::Approx(0.9).epsilon(1e-12));
  // half width at half the dip depth: f0 + G/2 gives 1 - C/2
  CHECK(lineshape(p, p.center_freq_hz + 4e6) == doctest::Approx(0.95).epsilon(1e-12));
  CHECK(lineshape(p, p.center_freq_hz - 4e6) == doctest::Approx(0.95).epsilon(1e-12));
  CHECK(lineshape(p, p.center_freq_hz + 1e9) == doctest::Approx(1.0).epsilon(1e-4));
}

TEST_CASE("slope matches a finite-difference derivative") {
  OdmrParams p = make(8e6, 0.1058, 6e4);
  for (double off : {-6e6, -1e6, 0.5e6, 2.3e6, 9e6}) {
    const double f = p.center_freq_hz + off;
    const double h = 50.0;
    const double fd = (lineshape(p, f + h) - lineshape(p, f - h)) / (2 * h);
    CHECK(lineshape_slope(p, f) == doctest::Approx(fd).epsilon(1e-6));
  }
  OdmrParams t = make(8e6, 0.1058, 6e4, LineshapeKind::hyperfine_triplet);
  for (double off : {-3e6, 0.0, 1.4e6, 4e6}) {
    const double f = t.center_freq_hz + off;
    const double h = 50.0;
    const double fd = (lineshape(t, f + h) - lineshape(t, f - h)) / (2 * h);
    CHECK(lineshape_slope(t, f) == doctest::Approx(fd).epsilon(1e-6));
  }
}

TEST_CASE("hyperfine triplet splits the contrast into three equal dips") {
  OdmrParams t = make(4e6, 0.09, 1e6, LineshapeKind::hyperfine_triplet);
  t.hyperfine_splitting_hz = 2.1e6;
  // far wings approach unity
  CHECK(lineshape(t, t.center_freq_hz + 1e9) == doctest::Approx(1.0).epsilon(1e-4));
  // at each line center one dip contributes its full C/3, the neighbors a bit
  const double at_center = lineshape(t, t.center_freq_hz);
  const double side = 2.1e6;
  const double one = 0.03;
  const double expected = 1.0 - one - 2 * one / (1.0 + std::pow(2 * side / 4e6, 2));
  CHECK(at_center == doctest::Approx(expected).epsilon(1e-9));
}

TEST_CASE("sensing point of a single line sits G/(2 sqrt 3) above center") {
  OdmrParams p = make(8e6, 0.1058, 6e4);
  const double offset = sensing_point(p) - p.center_freq_hz;
  CHECK(offset == doctest::Approx(8e6 / (2.0 * std::sqrt(3.0))).epsilon(1e-9));
  CHECK(offset == doctest::Approx(2.3094e6).epsilon(1e-4));
}

TEST_CASE("triplet sensing point maximizes the slope magnitude") {
  OdmrParams t = make(8e6, 0.1058, 6e4, LineshapeKind::hyperfine_triplet);
  const double fs = sensing_point(t);
  // dense scan oracle over [f0, f0 + 2G]
  double best_f = t.center_freq_hz, best = 0.0;
  for (int i = 0; i <= 200000; ++i) {
    const double f = t.center_freq_hz + 2.0 * t.linewidth_hz * i / 200000.0;
    const double s = std::abs(lineshape_slope(t, f));
    if (s > best) {
      best = s;
      best_f = f;
    }
  }
  CHECK(std::abs(lineshape_slope(t, fs)) >= best * (1.0 - 1e-6));
  CHECK(fs == doctest::Approx(best_f).epsilon(1e-4));
}

TEST_CASE("tabulated sample sensitivities match Eq.-style arithmetic") {
  // Oracle: eta = (4 / (3 sqrt 3)) (G / gyro) / (C sqrt R), evaluated with
  // plain arithmetic here, independent of the library implementation.
  const double gyro = 2.8024e10;
  struct Row {
    double g, c, r, eta_utsqhz;
  };
  const Row rows[] = {
      {9.6e6, 0.1162, 72000.0, 8.5},
      {8.0e6, 0.1058, 60000.0, 8.5},
      {15e6, 0.0161, 3.7e6, 13.3},
  };
  for (const Row& row : rows) {
    const double oracle_eta =
        (4.0 / (3.0 * std::sqrt(3.0))) * (row.g / gyro) / (row.c * std::sqrt(row.r));
    const double eta = sensitivity(make(row.g, row.c, row.r));
    CHECK(eta == doctest::Approx(oracle_eta).epsilon(1e-12));
    CHECK(eta * 1e6 == doctest::Approx(row.eta_utsqhz).epsilon(0.02));
  }
}

TEST_CASE("linearity bound for an 8 MHz line is about 495 uT") {
  OdmrParams p = make(8e6, 0.1058, 6e4);
  CHECK(linearity_bound(p) ==
        doctest::Approx(std::sqrt(3.0) * 8e6 / 2.8024e10).epsilon(1e-12));
  CHECK(linearity_bound(p) * 1e6 == doctest::Approx(494.4).epsilon(2e-3));
}

TEST_CASE("transduce shifts the resonance by gamma * b") {
  OdmrParams p = make(8e6, 0.1058, 6e4);
  const DrivePoint d{sensing_point(p)};
  for (double b : {0.0, 1e-6, -4.5e-6, 2e-4}) {
    const double expect = p.count_rate_hz * lineshape(p, d.mw_freq_hz - p.gyromagnetic_hz_per_t * b);
    CHECK(transduce(p, d, b) == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("harmonic content of the transduced waveform crosses the stated thresholds") {
  // Drive a tone through the static lineshape and decompose one period by
  // quadrature. At 0.3x the linearity bound the second harmonic is well
  // above any plausible noise floor; at 0.01x it is below 0.05% of the
  // fundamental in power.
  OdmrParams p = make(8e6, 0.1058, 6e4);
  const DrivePoint d{sensing_point(p)};
  const double bound = linearity_bound(p);
  const double f_sig = 1000.0, period = 1e-3;

  auto ratio2 = [&](double amp) {
    auto wave = [&](double t) {
      return transduce(p, d, amp * std::cos(2 * std::numbers::pi * f_sig * t));
    };
    const double c1 = oracle::fourier_mag(wave, period, 1);
    const double c2 = oracle::fourier_mag(wave, period, 2);
    return (c2 * c2) / (c1 * c1);
  };

  CHECK(ratio2(0.3 * bound) > 1e-3);    // plainly visible
  CHECK(ratio2(0.01 * bound) < 5e-4);   // below 0.05% of the fundamental
}

TEST_CASE("parameter validation rejects nonphysical models") {
  CHECK_THROWS_AS(validate_odmr(make(0.0, 0.1, 1e6)), validation_error);
  CHECK_THROWS_AS(validate_odmr(make(8e6, 0.0, 1e6)), validation_error);
  CHECK_THROWS_AS(validate_odmr(make(8e6, 1.5, 1e6)), validation_error);
  CHECK_THROWS_AS(validate_odmr(make(8e6, 0.1, -1.0)), validation_error);
  CHECK_NOTHROW(validate_odmr(make(8e6, 0.1, 1e6)));
}

TEST_CASE("odmr JSON round trip preserves fields and defaults the lineshape") {
  OdmrParams p = make(15e6, 0.0161, 3.7e6, LineshapeKind::hyperfine_triplet);
  p.hyperfine_splitting_hz = 2.1e6;
  OdmrParams r = odmr_from_json(to_json(p));
  CHECK(r.linewidth_hz == p.linewidth_hz);
  CHECK(r.contrast == p.contrast);
  CHECK(r.count_rate_hz == p.count_rate_hz);
  CHECK(r.lineshape == LineshapeKind::hyperfine_triplet);

  OdmrParams q = odmr_from_json(
      {{"linewidth_hz", 8e6}, {"contrast", 0.1}, {"count_rate_hz", 6e4}});
  CHECK(q.lineshape == LineshapeKind::single_lorentzian);
  CHECK(q.center_freq_hz == doctest::Approx(2.87e9));
}
