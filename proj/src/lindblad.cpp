#include "fesense/lindblad.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <sstream>

#include "fesense/errors.hpp"

namespace fesense {

void validate_lindblad(const LindbladParams& p) {
  if (!std::isfinite(p.detuning_rad_s)) throw validation_error("detuning_rad_s must be finite");
  if (!(p.rabi_rad_s >= 0) || !std::isfinite(p.rabi_rad_s))
    throw validation_error("rabi_rad_s must be >= 0");
  if (!(p.gamma1_s >= 0) || !(p.gamma2_s >= 0))
    throw validation_error("relaxation rates must be >= 0");
  if (!(p.gyro_rad_s_per_t > 0)) throw validation_error("gyro_rad_s_per_t must be > 0");
  if (!(p.signal.frequency_hz > 0))
    throw validation_error("lindblad signal frequency_hz must be > 0");
  if (!(p.signal.amplitude_t >= 0))
    throw validation_error("lindblad signal amplitude_t must be >= 0");
}

double lindblad_max_rate(const LindbladParams& p) {
  double r = std::max(std::abs(p.detuning_rad_s), p.rabi_rad_s);
  r = std::max(r, p.gamma1_s);
  r = std::max(r, p.gamma2_s);
  if (p.signal.amplitude_t > 0) {
    r = std::max(r, kTwoPi * p.signal.frequency_hz);
    r = std::max(r, p.gyro_rad_s_per_t * p.signal.amplitude_t);
  }
  return r;
}

namespace {

struct Integrator {
  const LindbladParams& p;
  double gc;  // coherence decay, gamma1/2 + 2 gamma2
  Rho rho;
  double t = 0.0;

  explicit Integrator(const LindbladParams& params, InitialState init)
      : p(params), gc(0.5 * params.gamma1_s + 2.0 * params.gamma2_s) {
    rho = {0.0, 0.0, 0.0, 0.0};
    if (init == InitialState::excited)
      rho[0] = 1.0;
    else
      rho[3] = 1.0;
  }

  Rho rhs(double time, const Rho& r) const {
    const double b = p.signal.amplitude_t *
                     std::cos(kTwoPi * p.signal.frequency_hz * time + p.signal.phase_rad);
    const double a = p.detuning_rad_s - p.gyro_rad_s_per_t * b;
    const double om = p.rabi_rad_s;
    const std::complex<double> i(0.0, 1.0);
    const std::complex<double> pop_diff = r[0] - r[3];
    // -i [H, rho] with H = (a/2) sigma_z - (om/2) sigma_x.
    const std::complex<double> c00 = 0.5 * om * (r[1] - r[2]);
    const std::complex<double> c01 = a * r[1] + 0.5 * om * pop_diff;
    const std::complex<double> c10 = -a * r[2] - 0.5 * om * pop_diff;
    Rho d;
    d[0] = -i * c00 - p.gamma1_s * r[0];
    d[1] = -i * c01 - gc * r[1];
    d[2] = -i * c10 - gc * r[2];
    d[3] = i * c00 + p.gamma1_s * r[0];
    return d;
  }

  void step(double dt) {
    const Rho k1 = rhs(t, rho);
    Rho y;
    for (int j = 0; j < 4; ++j) y[j] = rho[j] + 0.5 * dt * k1[j];
    const Rho k2 = rhs(t + 0.5 * dt, y);
    for (int j = 0; j < 4; ++j) y[j] = rho[j] + 0.5 * dt * k2[j];
    const Rho k3 = rhs(t + 0.5 * dt, y);
    for (int j = 0; j < 4; ++j) y[j] = rho[j] + dt * k3[j];
    const Rho k4 = rhs(t + dt, y);
    for (int j = 0; j < 4; ++j)
      rho[j] += (dt / 6.0) * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
    t += dt;
  }

  double sz() const { return 0.5 * (rho[0].real() - rho[3].real()); }

  void check_physical(double trace_tol, double herm_tol, double eig_tol, EvolveResult* acc) const {
    const double trace_err = std::abs(rho[0].real() + rho[3].real() - 1.0) +
                             std::abs(rho[0].imag() + rho[3].imag());
    const double herm_err = std::abs(rho[1] - std::conj(rho[2])) +
                            std::abs(rho[0].imag()) + std::abs(rho[3].imag());
    const std::complex<double> c = 0.5 * (rho[1] + std::conj(rho[2]));
    const double mean = 0.5 * (rho[0].real() + rho[3].real());
    const double half_diff = 0.5 * (rho[0].real() - rho[3].real());
    const double min_eig = mean - std::sqrt(half_diff * half_diff + std::norm(c));
    if (acc) {
      acc->max_trace_error = std::max(acc->max_trace_error, trace_err);
      acc->max_hermiticity_error = std::max(acc->max_hermiticity_error, herm_err);
      acc->min_eigenvalue = std::min(acc->min_eigenvalue, min_eig);
    }
    if (trace_err > trace_tol || herm_err > herm_tol || min_eig < -eig_tol) {
      std::ostringstream msg;
      msg << "density matrix left the physical set at t=" << t << " s (trace error "
          << trace_err << ", hermiticity error " << herm_err << ", min eigenvalue "
          << min_eig << ")";
      throw simulation_error(msg.str());
    }
  }
};

constexpr double kTraceTol = 1e-9;
constexpr double kHermTol = 1e-12;
constexpr double kEigTol = 1e-9;

void check_dt(const LindbladParams& p, double dt) {
  const double cap = 0.1 / lindblad_max_rate(p);
  if (!(dt > 0)) throw validation_error("dt_s must be > 0");
  if (dt > cap * (1.0 + 1e-12)) {
    std::ostringstream msg;
    msg << "dt_s = " << dt << " exceeds the stability bound 0.1 / max_rate = " << cap;
    throw validation_error(msg.str());
  }
}

}  // namespace

EvolveResult evolve(const LindbladParams& p, InitialState init, double t_end_s, double dt_s,
                    std::uint32_t sample_stride) {
  validate_lindblad(p);
  if (!(t_end_s > 0)) throw validation_error("t_end_s must be > 0");
  check_dt(p, dt_s);
  if (sample_stride == 0) sample_stride = 1;

  const auto steps = static_cast<std::uint64_t>(std::ceil(t_end_s / dt_s - 1e-12));
  const double dt = t_end_s / static_cast<double>(steps);
  Integrator integ(p, init);
  EvolveResult res;
  res.min_eigenvalue = 1.0;
  res.t_s.push_back(0.0);
  res.sz.push_back(integ.sz());
  for (std::uint64_t s = 0; s < steps; ++s) {
    integ.step(dt);
    integ.check_physical(kTraceTol, kHermTol, kEigTol, &res);
    if ((s + 1) % sample_stride == 0 || s + 1 == steps) {
      res.t_s.push_back(integ.t);
      res.sz.push_back(integ.sz());
    }
  }
  res.final_rho = integ.rho;
  return res;
}

double response_amplitude(const LindbladParams& p, const ResponseOptions& options) {
  validate_lindblad(p);
  double min_rate = std::numeric_limits<double>::infinity();
  if (p.gamma1_s > 0) min_rate = std::min(min_rate, p.gamma1_s);
  if (p.gamma2_s > 0) min_rate = std::min(min_rate, p.gamma2_s);
  if (!std::isfinite(min_rate))
    throw simulation_error(
        "no relaxation channel is open, so no quasi-steady response exists");

  const double dt = options.dt_scale / lindblad_max_rate(p);
  check_dt(p, dt);
  const double period = 1.0 / p.signal.frequency_hz;
  const auto block_steps =
      std::max<std::uint64_t>(8, static_cast<std::uint64_t>(std::llround(period / dt)));
  const double transient = options.transient_factor / min_rate;
  const auto transient_steps = static_cast<std::uint64_t>(std::ceil(transient / dt));

  Integrator integ(p, InitialState::ground);
  EvolveResult scratch;
  scratch.min_eigenvalue = 1.0;
  for (std::uint64_t s = 0; s < transient_steps; ++s) {
    integ.step(dt);
    if (s % 64 == 0) integ.check_physical(kTraceTol, kHermTol, kEigTol, &scratch);
  }

  struct Block {
    double lo, hi;
  };
  std::deque<Block> recent;
  double prev_pp = -1.0;
  const auto max_blocks = static_cast<std::uint64_t>(
      std::ceil(options.max_duration_s / (static_cast<double>(block_steps) * dt)));
  for (std::uint64_t blk = 0; blk < max_blocks; ++blk) {
    Block b{integ.sz(), integ.sz()};
    for (std::uint64_t s = 0; s < block_steps; ++s) {
      integ.step(dt);
      const double v = integ.sz();
      b.lo = std::min(b.lo, v);
      b.hi = std::max(b.hi, v);
      if (s % 64 == 0) integ.check_physical(kTraceTol, kHermTol, kEigTol, &scratch);
    }
    recent.push_back(b);
    if (recent.size() > static_cast<std::size_t>(options.min_periods)) recent.pop_front();
    const double pp = b.hi - b.lo;
    const bool settled = prev_pp >= 0 &&
                         std::abs(pp - prev_pp) <= options.convergence_tol * std::max(pp, 1e-12);
    prev_pp = pp;
    if (settled && recent.size() == static_cast<std::size_t>(options.min_periods)) {
      double lo = recent.front().lo, hi = recent.front().hi;
      for (const auto& r : recent) {
        lo = std::min(lo, r.lo);
        hi = std::max(hi, r.hi);
      }
      return 0.5 * (hi - lo);
    }
  }
  throw simulation_error(
      "response did not settle within max_duration_s; increase the measurement window");
}

std::vector<ResponseCurve> sweep_response(const LindbladParams& base, double alpha,
                                          std::span<const double> saturations,
                                          std::span<const double> freqs_hz, double offset,
                                          const ResponseOptions& options) {
  validate_lindblad(base);
  if (!(alpha >= 0)) throw validation_error("alpha must be >= 0");
  if (!(offset >= 0)) throw validation_error("offset must be >= 0");
  std::vector<ResponseCurve> curves;
  for (double s : saturations) {
    if (!(s >= 0)) throw validation_error("saturation values must be >= 0");
    LindbladParams p = base;
    p.gamma1_s = base.gamma1_s * (1.0 + s);
    p.gamma2_s = base.gamma2_s * (1.0 + alpha * s);
    ResponseCurve curve;
    curve.saturation = s;
    curve.gamma1_s = p.gamma1_s;
    curve.gamma2_s = p.gamma2_s;
    curve.offset = offset;
    for (double f : freqs_hz) {
      if (!(f > 0)) throw validation_error("sweep frequencies must be > 0");
      p.signal.frequency_hz = f;
      curve.freq_hz.push_back(f);
      curve.amplitude.push_back(response_amplitude(p, options) + offset);
    }
    curves.push_back(std::move(curve));
  }
  return curves;
}

nlohmann::json to_json(const LindbladParams& p) {
  return {{"detuning_rad_s", p.detuning_rad_s},
          {"rabi_rad_s", p.rabi_rad_s},
          {"gamma1_s", p.gamma1_s},
          {"gamma2_s", p.gamma2_s},
          {"signal_frequency_hz", p.signal.frequency_hz},
          {"signal_amplitude_t", p.signal.amplitude_t},
          {"signal_phase_rad", p.signal.phase_rad},
          {"gyro_rad_s_per_t", p.gyro_rad_s_per_t}};
}

LindbladParams lindblad_from_json(const nlohmann::json& j) {
  LindbladParams p;
  p.detuning_rad_s = j.value("detuning_rad_s", 0.0);
  p.rabi_rad_s = j.at("rabi_rad_s").get<double>();
  p.gamma1_s = j.at("gamma1_s").get<double>();
  p.gamma2_s = j.at("gamma2_s").get<double>();
  p.signal.frequency_hz = j.at("signal_frequency_hz").get<double>();
  p.signal.amplitude_t = j.value("signal_amplitude_t", 0.0);
  p.signal.phase_rad = j.value("signal_phase_rad", 0.0);
  p.gyro_rad_s_per_t = j.value("gyro_rad_s_per_t", p.gyro_rad_s_per_t);
  validate_lindblad(p);
  return p;
}

}  // namespace fesense
