#include <cmath>
#include <numbers>
#include <vector>

#include "doctest.h"
#include "fesense/errors.hpp"
#include "fesense/phase_lock.hpp"
#include "fesense/spectral.hpp"
#include "oracles.hpp"

using namespace fesense;

namespace {

constexpr double kTau = 2.0 * std::numbers::pi;

// 1 s of samples at 10 us: 1 Hz resolution, comb frequencies on-grid.
SampledSeries sample(const std::function<double(double)>& f) {
  SampledSeries s;
  s.bin_width_s = 1e-5;
  s.values.resize(100000);
  for (std::size_t j = 0; j < s.values.size(); ++j)
    s.values[j] = f(static_cast<double>(j) * 1e-5);
  return s;
}

double pm(double t, double depth = std::numbers::pi / 2) {
  return std::cos(kTau * 10000.0 * t + depth * std::sin(kTau * 1000.0 * t));
}

}  // namespace

TEST_CASE("reference validation") {
  ReferenceSpec r;
  r.omega1_hz = 11000.0;
  r.omega2_hz = 10000.0;
  CHECK_THROWS_AS(validate_reference(r), validation_error);
  r.omega1_hz = 0.0;
  CHECK_THROWS_AS(validate_reference(r), validation_error);
  r.omega1_hz = 10000.0;
  r.omega2_hz = 11000.0;
  CHECK_NOTHROW(validate_reference(r));
  CHECK(r.delta_hz() == doctest::Approx(1000.0));
}

TEST_CASE("reference phases are read off the spectrum") {
  const double p1 = 0.7, p2 = -1.9;
  Spectrum sp = psd(sample([&](double t) {
    return std::cos(kTau * 10000.0 * t + p1) + std::cos(kTau * 11000.0 * t + p2);
  }));
  ReferenceSpec ref;
  ref.omega1_hz = 10000.0;
  ref.omega2_hz = 11000.0;
  RefPhases ph = extract_reference_phases(sp, ref);
  CHECK(ph.phi1 == doctest::Approx(p1).epsilon(1e-9));
  CHECK(ph.phi2 == doctest::Approx(p2).epsilon(1e-9));
  CHECK(ph.sigma1 < 1e-6);

  ReferenceSpec off = ref;
  off.omega1_hz = 10000.5;  // not on the 1 Hz grid
  CHECK_THROWS_AS(extract_reference_phases(sp, off), validation_error);

  ReferenceSpec harsh = ref;
  harsh.min_amplitude = 1e12;  // far above the actual peak
  CHECK_THROWS_AS(extract_reference_phases(sp, harsh), simulation_error);

  Spectrum power_only = sp;
  power_only.amplitude.clear();
  power_only.power_only = true;
  CHECK_THROWS_AS(extract_reference_phases(power_only, ref), validation_error);
}

TEST_CASE("phase correction rotates comb bins and tags their index") {
  Spectrum sp = psd(sample([&](double t) { return pm(t); }));
  ReferenceSpec ref;
  ref.omega1_hz = 10000.0;
  ref.omega2_hz = 11000.0;
  const double phi1 = 0.4, phi2 = 1.1;
  PhasedSpectrum ps = phase_correct(sp, phi1, phi2, ref);
  REQUIRE(ps.spectrum.size() == sp.size());
  // comb bins: f = 10 kHz + n * 1 kHz inside (0, 50 kHz]
  CHECK(ps.comb_index[sp.grid_bin(10000.0)] == 0);
  CHECK(ps.comb_index[sp.grid_bin(11000.0)] == 1);
  CHECK(ps.comb_index[sp.grid_bin(8000.0)] == -2);
  CHECK(ps.comb_index[sp.grid_bin(9999.0)] == PhasedSpectrum::kOffComb);
  CHECK(ps.on_comb(sp.grid_bin(12000.0)));
  // rotation subtracts phi1 + n (phi2 - phi1); power is untouched
  for (int n : {-2, -1, 0, 1, 2}) {
    const std::size_t k = sp.grid_bin(10000.0 + 1000.0 * n);
    const double want = std::arg(sp.amplitude[k]) - (phi1 + n * (phi2 - phi1));
    const double got = std::arg(ps.spectrum.amplitude[k]);
    CHECK(std::abs(std::remainder(got - want, kTau)) < 1e-12);
    CHECK(ps.spectrum.psd[k] == doctest::Approx(sp.psd[k]).epsilon(1e-12));
  }
}

TEST_CASE("comb-locked averaging beats offset scrambling") {
  // Each trace sees the same phase-modulated field with a different clock
  // offset. A time shift advances every spectral line by 2 pi f t0, which
  // the two-tone comb reference removes exactly; averaging uncorrected
  // spectra lets the lines cancel instead.
  ReferenceSpec ref;
  ref.omega1_hz = 10000.0;
  ref.omega2_hz = 11000.0;
  const std::vector<double> offsets = {0.0, 1.37e-4, 2.91e-4, 4.48e-4, 6.2e-4, 8.3e-4};
  std::vector<PhasedSpectrum> corrected, uncorrected;
  for (double t0 : offsets) {
    Spectrum sp = psd(sample([&](double t) { return pm(t + t0); }));
    RefPhases ph = extract_reference_phases(sp, ref);
    corrected.push_back(phase_correct(sp, ph.phi1, ph.phi2, ref));
    uncorrected.push_back(phase_correct(sp, 0.0, 0.0, ref));
  }
  PhasedSpectrum avg = coherent_average(corrected);
  PhasedSpectrum scrambled = coherent_average(uncorrected);

  const double n_half = 100000.0 / 2.0;
  for (int n = -2; n <= 2; ++n) {
    const std::size_t k = avg.spectrum.grid_bin(10000.0 + 1000.0 * n);
    const double expect = std::abs(oracle::bessel_j(std::abs(n), std::numbers::pi / 2));
    CHECK(std::abs(avg.spectrum.amplitude[k]) / n_half ==
          doctest::Approx(expect).epsilon(1e-6));
    // scrambled power at the line collapses well below the locked power
    CHECK(std::abs(scrambled.spectrum.amplitude[k]) <
          0.7 * std::abs(avg.spectrum.amplitude[k]));
  }
  // locked phases: J_n > 0 lines sit at 0, J_{-1} flips sign (phase pi)
  const std::size_t k_m1 = avg.spectrum.grid_bin(9000.0);
  const std::size_t k_p1 = avg.spectrum.grid_bin(11000.0);
  CHECK(std::abs(std::remainder(std::arg(avg.spectrum.amplitude[k_p1]), kTau)) < 1e-6);
  CHECK(std::abs(std::remainder(std::arg(avg.spectrum.amplitude[k_m1]) - std::numbers::pi,
                                kTau)) < 1e-6);
}

TEST_CASE("coherent averaging rejects mismatched references") {
  ReferenceSpec a;
  a.omega1_hz = 10000.0;
  a.omega2_hz = 11000.0;
  ReferenceSpec b = a;
  b.omega2_hz = 12000.0;
  Spectrum sp = psd(sample([&](double t) { return pm(t); }));
  std::vector<PhasedSpectrum> traces = {phase_correct(sp, 0.0, 0.0, a),
                                        phase_correct(sp, 0.0, 0.0, b)};
  CHECK_THROWS_AS(coherent_average(traces), validation_error);
}
