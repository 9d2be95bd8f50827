#include <cmath>
#include <complex>
#include <vector>

#include "doctest.h"
#include "fesense/errors.hpp"
#include "fesense/lindblad.hpp"
#include "oracles.hpp"

using namespace fesense;

namespace {

LindbladParams quiet(double detuning, double rabi, double g1, double g2) {
  LindbladParams p;
  p.detuning_rad_s = detuning;
  p.rabi_rad_s = rabi;
  p.gamma1_s = g1;
  p.gamma2_s = g2;
  p.signal = ToneSpec{1.0, 0.0, 0.0};  // amplitude 0: no drive modulation
  return p;
}

std::array<oracle::C, 4> vec_of(InitialState s) {
  // row-major (r00, r01, r10, r11) in the {excited, ground} basis
  if (s == InitialState::excited) return {1.0, 0.0, 0.0, 0.0};
  return {0.0, 0.0, 0.0, 1.0};
}

}  // namespace

TEST_CASE("evolution matches a dense matrix-exponential oracle to 1e-6") {
  const double detuning = 3e4, rabi = 2e4, g1 = 1e4, g2 = 5e3;
  LindbladParams p = quiet(detuning, rabi, g1, g2);
  const double t_end = 2e-4, dt = 1e-7;
  for (InitialState init : {InitialState::ground, InitialState::excited}) {
    EvolveResult res = evolve(p, init, t_end, dt, 100);
    const oracle::Mat4 L = oracle::liouvillian(detuning, rabi, g1, g2);

    // full density matrix at the end
    oracle::Mat4 Lt = L;
    for (auto& v : Lt) v *= t_end;
    const auto rho_ref = oracle::apply4(oracle::expm(Lt), vec_of(init));
    for (int i = 0; i < 4; ++i)
      CHECK(std::abs(res.final_rho[i] - rho_ref[i]) < 1e-6);

    // <S_z> along the sampled trajectory
    for (std::size_t k = 0; k < res.t_s.size(); k += 7) {
      oracle::Mat4 Ls = L;
      for (auto& v : Ls) v *= res.t_s[k];
      const auto rho_t = oracle::apply4(oracle::expm(Ls), vec_of(init));
      const double sz_ref = 0.5 * std::real(rho_t[0] - rho_t[3]);
      CHECK(std::abs(res.sz[k] - sz_ref) < 1e-6);
    }

    CHECK(res.max_trace_error <= 1e-9);
    CHECK(res.max_hermiticity_error <= 1e-12);
    CHECK(res.min_eigenvalue >= -1e-9);
  }
}

TEST_CASE("population relaxes at exactly gamma1 with no drive") {
  const double g1 = 2e4;
  LindbladParams p = quiet(0.0, 0.0, g1, 0.0);
  EvolveResult res = evolve(p, InitialState::excited, 2e-4, 5e-8, 200);
  for (std::size_t k = 0; k < res.t_s.size(); ++k) {
    const double expect = std::exp(-g1 * res.t_s[k]) - 0.5;
    CHECK(std::abs(res.sz[k] - expect) < 1e-8);
  }
}

TEST_CASE("pure dephasing leaves populations untouched") {
  LindbladParams p = quiet(0.0, 0.0, 0.0, 3e4);
  EvolveResult res = evolve(p, InitialState::excited, 1e-4, 5e-8, 100);
  for (double sz : res.sz) CHECK(sz == doctest::Approx(0.5).epsilon(1e-10));
}

TEST_CASE("resonant drive produces Rabi flips at the drive rate") {
  const double rabi = 6e4;
  LindbladParams p = quiet(0.0, rabi, 20.0, 20.0);
  const double half_period = std::numbers::pi / rabi;
  EvolveResult res = evolve(p, InitialState::ground, 2.0 * half_period, 2e-8, 25);
  // ground starts at sz = -1/2; the first maximum sits half a Rabi period in
  std::size_t imax = 0;
  for (std::size_t k = 0; k < res.sz.size(); ++k)
    if (res.sz[k] > res.sz[imax]) imax = k;
  CHECK(res.t_s[imax] == doctest::Approx(half_period).epsilon(0.01));
  CHECK(res.sz[imax] == doctest::Approx(0.5).epsilon(0.01));
}

TEST_CASE("a time step beyond the stability bound is rejected") {
  LindbladParams p = quiet(0.0, 1e5, 1e4, 1e4);
  CHECK_THROWS(evolve(p, InitialState::ground, 1e-3, 1e-3));
}

TEST_CASE("invalid rates are rejected") {
  CHECK_THROWS_AS(validate_lindblad(quiet(0.0, 1e4, -1.0, 0.0)), validation_error);
  CHECK_THROWS_AS(validate_lindblad(quiet(0.0, 1e4, 0.0, -1.0)), validation_error);
}

TEST_CASE("response amplitude needs an open relaxation channel") {
  LindbladParams p = quiet(2e5, 2e5, 0.0, 0.0);
  p.signal = ToneSpec{1e4, 2e-7, 0.0};
  CHECK_THROWS_AS(response_amplitude(p), simulation_error);
}

TEST_CASE("response rolls off between well-separated drive frequencies") {
  LindbladParams p = quiet(2e5, 2e5, 1e4, 1e5);
  p.signal = ToneSpec{3e3, 2e-7, 0.0};
  const double lo = response_amplitude(p);
  p.signal.frequency_hz = 3e5;
  const double hi = response_amplitude(p);
  CHECK(lo > 3.0 * hi);
  CHECK(hi > 0.0);
}

TEST_CASE("saturation sweep scales the rates as documented") {
  LindbladParams base = quiet(2e5, 2e5, 1e4, 1e5);
  base.signal = ToneSpec{1e4, 2e-7, 0.0};
  const std::vector<double> sats = {1.0, 3.0};
  const std::vector<double> freqs = {5e3, 5e4};
  const auto curves = sweep_response(base, 0.5, sats, freqs, 0.1);
  REQUIRE(curves.size() == 2);
  for (std::size_t i = 0; i < curves.size(); ++i) {
    CHECK(curves[i].gamma1_s == doctest::Approx(1e4 * (1.0 + sats[i])).epsilon(1e-12));
    CHECK(curves[i].gamma2_s ==
          doctest::Approx(1e5 * (1.0 + 0.5 * sats[i])).epsilon(1e-12));
    REQUIRE(curves[i].freq_hz.size() == 2);
    for (double a : curves[i].amplitude) CHECK(a > 0.1);  // offset included
  }
}

TEST_CASE("lindblad params survive a JSON round trip") {
  LindbladParams p = quiet(2.4e5, 2e5, 2e4, 2e5);
  p.signal = ToneSpec{1e4, 2e-7, 0.1};
  LindbladParams r = lindblad_from_json(to_json(p));
  CHECK(r.detuning_rad_s == p.detuning_rad_s);
  CHECK(r.rabi_rad_s == p.rabi_rad_s);
  CHECK(r.gamma1_s == p.gamma1_s);
  CHECK(r.gamma2_s == p.gamma2_s);
  CHECK(r.signal.frequency_hz == p.signal.frequency_hz);
  CHECK(r.signal.amplitude_t == p.signal.amplitude_t);
}
