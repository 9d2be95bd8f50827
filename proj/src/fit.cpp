#include "fesense/fit.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <sstream>

#include "fesense/errors.hpp"
#include "fesense/math_util.hpp"

namespace fesense {

double lorentzian_eval(double f0, double gamma, double contrast, double baseline, double f) {
  const double z = 2.0 * (f - f0) / gamma;
  return baseline * (1.0 - contrast / (1.0 + z * z));
}

double hyperfine_triplet_eval(double f0, double gamma, double contrast, double baseline,
                              double splitting, double f) {
  double dip = 0.0;
  for (int k = -1; k <= 1; ++k) {
    const double z = 2.0 * (f - f0 - k * splitting) / gamma;
    dip += (contrast / 3.0) / (1.0 + z * z);
  }
  return baseline * (1.0 - dip);
}

double bandwidth_eval(double amplitude, double f_c, double b, double c, double f) {
  const double w = (f / f_c) * (f / f_c);
  return amplitude * std::pow(1.0 + w, -b) + c;
}

double telegraph_psd(double amplitude, double mean_dwell, double f) {
  const double inv_t = 1.0 / mean_dwell;
  const double pf = kPi * f;
  return amplitude * amplitude / (2.0 * mean_dwell * (inv_t * inv_t + pf * pf));
}

double powerlaw_eval(double amplitude, double exponent, double x) {
  return amplitude * std::pow(x, exponent);
}

namespace {

enum class SigmaDefault { unit, proportional };

struct ModelDef {
  std::string name;
  std::vector<std::string> pnames;
  std::vector<bool> positive;
  SigmaDefault sigma_default;
  std::function<double(const double*, double)> eval;              // (params, x)
  std::function<void(const double*, double, double*)> jacobian;   // d eval / d params
  std::function<std::vector<double>(std::span<const double>, std::span<const double>)> init;
};

std::vector<double> sorted_copy(std::span<const double> v) {
  std::vector<double> s(v.begin(), v.end());
  std::sort(s.begin(), s.end());
  return s;
}

// Rough plateau / tail / knee read of a monotone-falling power spectrum,
// shared by the bandwidth and telegraph initializers. Assumes x ascending.
struct KneeGuess {
  double plateau = 0.0;
  double tail = 0.0;
  double f_half = 0.0;
};

KneeGuess guess_knee(std::span<const double> x, std::span<const double> y) {
  KneeGuess g;
  const std::size_t m = y.size();
  const std::size_t head = std::max<std::size_t>(1, m / 10);
  const std::size_t tail = std::max<std::size_t>(1, m / 10);
  double acc = 0.0;
  for (std::size_t i = 0; i < head; ++i) acc += y[i];
  g.plateau = acc / static_cast<double>(head);
  acc = 0.0;
  for (std::size_t i = m - tail; i < m; ++i) acc += y[i];
  g.tail = acc / static_cast<double>(tail);
  const double half = g.tail + 0.5 * (g.plateau - g.tail);
  g.f_half = x.back();
  for (std::size_t i = 1; i < m; ++i) {
    if (y[i] < half && y[i - 1] >= half) {
      const double frac = (y[i - 1] - half) / (y[i - 1] - y[i]);
      g.f_half = x[i - 1] + frac * (x[i] - x[i - 1]);
      break;
    }
  }
  if (!(g.f_half > 0)) g.f_half = x[m / 2] > 0 ? x[m / 2] : 1.0;
  return g;
}

ModelDef make_lorentzian(double /*splitting*/) {
  ModelDef d;
  d.name = "lorentzian";
  d.pnames = {"f0", "gamma", "contrast", "baseline"};
  d.positive = {false, true, true, true};
  d.sigma_default = SigmaDefault::unit;
  d.eval = [](const double* p, double f) {
    return lorentzian_eval(p[0], p[1], p[2], p[3], f);
  };
  d.jacobian = [](const double* p, double f, double* out) {
    const double z = 2.0 * (f - p[0]) / p[1];
    const double u = 1.0 / (1.0 + z * z);
    out[0] = -p[3] * p[2] * 4.0 * z * u * u / p[1];
    out[1] = -p[3] * p[2] * 2.0 * z * z * u * u / p[1];
    out[2] = -p[3] * u;
    out[3] = 1.0 - p[2] * u;
  };
  d.init = [](std::span<const double> x, std::span<const double> y) {
    const auto ys = sorted_copy(y);
    const double baseline = ys[ys.size() - 1 - ys.size() / 20];  // near-max, outlier safe
    std::size_t imin = 0;
    for (std::size_t i = 1; i < y.size(); ++i)
      if (y[i] < y[imin]) imin = i;
    const double depth = std::max(1e-3, 1.0 - y[imin] / baseline);
    // Half-depth span estimates the width.
    const double half = baseline * (1.0 - 0.5 * depth);
    double lo = x.front(), hi = x.back();
    for (std::size_t i = imin; i-- > 0;)
      if (y[i] > half) {
        lo = x[i];
        break;
      }
    for (std::size_t i = imin + 1; i < y.size(); ++i)
      if (y[i] > half) {
        hi = x[i];
        break;
      }
    const double gamma = std::max(hi - lo, (x.back() - x.front()) / 100.0);
    return std::vector<double>{x[imin], gamma, std::min(depth, 0.95), baseline};
  };
  return d;
}

ModelDef make_triplet(double splitting) {
  ModelDef d = make_lorentzian(splitting);
  d.name = "hyperfine_triplet";
  d.eval = [splitting](const double* p, double f) {
    return hyperfine_triplet_eval(p[0], p[1], p[2], p[3], splitting, f);
  };
  d.jacobian = [splitting](const double* p, double f, double* out) {
    out[0] = out[1] = out[2] = 0.0;
    double dip = 0.0;
    for (int k = -1; k <= 1; ++k) {
      const double z = 2.0 * (f - p[0] - k * splitting) / p[1];
      const double u = 1.0 / (1.0 + z * z);
      dip += u / 3.0;
      out[0] += -p[3] * (p[2] / 3.0) * 4.0 * z * u * u / p[1];
      out[1] += -p[3] * (p[2] / 3.0) * 2.0 * z * z * u * u / p[1];
      out[2] += -p[3] * u / 3.0;
    }
    out[3] = 1.0 - p[2] * dip;
  };
  auto base_init = d.init;
  d.init = [base_init, splitting](std::span<const double> x, std::span<const double> y) {
    auto p = base_init(x, y);
    // The observed dip mixes three lines; scale the contrast guess by the
    // overlap of the side lines at the center.
    const double zs = 2.0 * splitting / p[1];
    const double leak = 2.0 / (1.0 + zs * zs);
    p[2] = std::min(0.95, p[2] * 3.0 / (1.0 + leak));
    return p;
  };
  return d;
}

ModelDef make_bandwidth();

// Pinned-offset variant: the offset is a known constant, not a parameter.
ModelDef make_bandwidth_fixed(double c0) {
  ModelDef d;
  d.name = "bandwidth";
  d.pnames = {"amplitude", "f_c", "b"};
  d.positive = {true, true, true};
  d.sigma_default = SigmaDefault::proportional;
  d.eval = [c0](const double* p, double f) {
    return bandwidth_eval(p[0], p[1], p[2], c0, f);
  };
  d.jacobian = [](const double* p, double f, double* out) {
    const double w = (f / p[1]) * (f / p[1]);
    const double g = std::pow(1.0 + w, -p[2]);
    out[0] = g;
    out[1] = 2.0 * p[0] * p[2] * w * std::pow(1.0 + w, -p[2] - 1.0) / p[1];
    out[2] = -p[0] * g * std::log1p(w);
  };
  d.init = [](std::span<const double> x, std::span<const double> y) {
    auto p = make_bandwidth().init(x, y);
    p.resize(3);
    return p;
  };
  return d;
}

ModelDef make_bandwidth() {
  ModelDef d;
  d.name = "bandwidth";
  d.pnames = {"amplitude", "f_c", "b", "c"};
  d.positive = {true, true, true, true};
  d.sigma_default = SigmaDefault::proportional;
  d.eval = [](const double* p, double f) { return bandwidth_eval(p[0], p[1], p[2], p[3], f); };
  d.jacobian = [](const double* p, double f, double* out) {
    const double w = (f / p[1]) * (f / p[1]);
    const double g = std::pow(1.0 + w, -p[2]);
    out[0] = g;
    out[1] = 2.0 * p[0] * p[2] * w * std::pow(1.0 + w, -p[2] - 1.0) / p[1];
    out[2] = -p[0] * g * std::log1p(w);
    out[3] = 1.0;
  };
  d.init = [](std::span<const double> x, std::span<const double> y) {
    const KneeGuess g = guess_knee(x, y);
    const double c = std::max(g.tail, 1e-9 * g.plateau);
    const double a = std::max(g.plateau - c, 1e-6 * g.plateau);
    // Slope of the falling section in log-log gives the exponent.
    double b = 1.0;
    const double y_hi = g.tail + 0.3 * (g.plateau - g.tail);
    const double y_lo = g.tail + 0.03 * (g.plateau - g.tail);
    double x1 = 0, y1 = 0, x2 = 0, y2 = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
      if (y[i] < y_hi && x1 == 0) {
        x1 = x[i];
        y1 = y[i] - g.tail;
      }
      if (y[i] < y_lo && x2 == 0) {
        x2 = x[i];
        y2 = y[i] - g.tail;
      }
    }
    if (x1 > 0 && x2 > x1 && y1 > 0 && y2 > 0)
      b = std::clamp(-std::log(y2 / y1) / std::log(x2 / x1) / 2.0, 0.3, 4.0);
    return std::vector<double>{a, g.f_half, b, c};
  };
  return d;
}

ModelDef make_telegraph() {
  ModelDef d;
  d.name = "telegraph";
  d.pnames = {"amplitude", "mean_dwell"};
  d.positive = {true, true};
  d.sigma_default = SigmaDefault::proportional;
  d.eval = [](const double* p, double f) { return telegraph_psd(p[0], p[1], f); };
  d.jacobian = [](const double* p, double f, double* out) {
    const double y = telegraph_psd(p[0], p[1], f);
    const double v = kPi * f * p[1];
    out[0] = 2.0 * y / p[0];
    out[1] = (y / p[1]) * (1.0 - v * v) / (1.0 + v * v);
  };
  d.init = [](std::span<const double> x, std::span<const double> y) {
    const KneeGuess g = guess_knee(x, y);
    const double t0 = 1.0 / (kPi * g.f_half);
    const double plateau = std::max(g.plateau, 1e-12);
    // S(0) = A^2 T / 2 at the plateau, corrected for the first point
    // sitting slightly up the knee.
    const double s0 = plateau * (1.0 + std::pow(kPi * x.front() * t0, 2.0));
    return std::vector<double>{std::sqrt(2.0 * s0 / t0), t0};
  };
  return d;
}

ModelDef make_powerlaw() {
  ModelDef d;
  d.name = "powerlaw";
  d.pnames = {"amplitude", "exponent"};
  d.positive = {true, false};
  d.sigma_default = SigmaDefault::unit;
  d.eval = [](const double* p, double x) { return powerlaw_eval(p[0], p[1], x); };
  d.jacobian = [](const double* p, double x, double* out) {
    const double g = std::pow(x, p[1]);
    out[0] = g;
    out[1] = p[0] * g * std::log(x);
  };
  d.init = [](std::span<const double> x, std::span<const double> y) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (!(x[i] > 0) || !(y[i] > 0)) continue;
      const double lx = std::log(x[i]);
      const double ly = std::log(y[i]);
      sx += lx;
      sy += ly;
      sxx += lx * lx;
      sxy += lx * ly;
      ++n;
    }
    if (n < 2) return std::vector<double>{1.0, 1.0};
    const double det = static_cast<double>(n) * sxx - sx * sx;
    const double b = (static_cast<double>(n) * sxy - sx * sy) / det;
    const double a = std::exp((sy - b * sx) / static_cast<double>(n));
    return std::vector<double>{a, b};
  };
  return d;
}

ModelDef make_model(FitModel model, const FitOptions& options) {
  switch (model) {
    case FitModel::lorentzian: return make_lorentzian(0.0);
    case FitModel::hyperfine_triplet: return make_triplet(options.fixed_hyperfine_splitting_hz);
    case FitModel::bandwidth:
      return std::isfinite(options.fixed_bandwidth_offset)
                 ? make_bandwidth_fixed(options.fixed_bandwidth_offset)
                 : make_bandwidth();
    case FitModel::telegraph: return make_telegraph();
    case FitModel::powerlaw: return make_powerlaw();
  }
  throw validation_error("unknown fit model");
}

// Cholesky solve of (A + lambda diag(A)) d = g; returns false when the
// damped matrix is still not positive definite.
bool solve_damped(const std::vector<double>& a, const std::vector<double>& g, double lambda,
                  std::size_t n, std::vector<double>& d) {
  std::vector<double> m(a);
  for (std::size_t j = 0; j < n; ++j) m[j * n + j] += lambda * a[j * n + j];
  std::vector<double> l(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      double s = m[i * n + j];
      for (std::size_t k = 0; k < j; ++k) s -= l[i * n + k] * l[j * n + k];
      if (i == j) {
        if (!(s > 0)) return false;
        l[i * n + i] = std::sqrt(s);
      } else {
        l[i * n + j] = s / l[j * n + j];
      }
    }
  }
  d.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double s = g[i];
    for (std::size_t k = 0; k < i; ++k) s -= l[i * n + k] * d[k];
    d[i] = s / l[i * n + i];
  }
  for (std::size_t i = n; i-- > 0;) {
    double s = d[i];
    for (std::size_t k = i + 1; k < n; ++k) s -= l[k * n + i] * d[k];
    d[i] = s / l[i * n + i];
  }
  return true;
}

// Inverse via Cholesky of the undamped normal matrix; false on failure.
bool invert_spd(const std::vector<double>& a, std::size_t n, std::vector<double>& inv) {
  inv.assign(n * n, 0.0);
  std::vector<double> e(n, 0.0), col;
  for (std::size_t j = 0; j < n; ++j) {
    std::fill(e.begin(), e.end(), 0.0);
    e[j] = 1.0;
    if (!solve_damped(a, e, 0.0, n, col)) return false;
    for (std::size_t i = 0; i < n; ++i) inv[i * n + j] = col[i];
  }
  return true;
}

}  // namespace

FitResult fit(FitModel model, std::span<const double> x, std::span<const double> y,
              std::span<const double> sigma, std::span<const double> init,
              const FitOptions& options) {
  const ModelDef def = make_model(model, options);
  const std::size_t n = def.pnames.size();
  const std::size_t m = x.size();
  if (y.size() != m) throw validation_error("fit: x and y sizes differ");
  if (m <= n) throw validation_error("fit: need more points than parameters");
  if (!sigma.empty() && sigma.size() != m)
    throw validation_error("fit: sigma size must match the data");
  if (!init.empty() && init.size() != n)
    throw validation_error("fit: initial values must cover every parameter");
  if (model == FitModel::powerlaw)
    for (double v : x)
      if (!(v > 0)) throw validation_error("powerlaw fit needs x > 0");

  // Weights.
  std::vector<double> w(m);
  const bool prop = options.sigma_mode == 2 ||
                    (options.sigma_mode == 0 && def.sigma_default == SigmaDefault::proportional);
  if (!sigma.empty()) {
    for (std::size_t i = 0; i < m; ++i) {
      if (!(sigma[i] > 0)) throw validation_error("fit: sigma values must be > 0");
      w[i] = 1.0 / sigma[i];
    }
  } else if (prop && options.sigma_mode != 1) {
    double ymax = 0.0;
    for (double v : y) ymax = std::max(ymax, std::abs(v));
    if (ymax == 0.0) ymax = 1.0;
    for (std::size_t i = 0; i < m; ++i) w[i] = 1.0 / std::max(std::abs(y[i]), 1e-9 * ymax);
  } else {
    std::fill(w.begin(), w.end(), 1.0);
  }

  std::vector<double> p = init.empty() ? def.init(x, y) : std::vector<double>(init.begin(), init.end());
  for (std::size_t j = 0; j < n; ++j)
    if (def.positive[j] && !(p[j] > 0))
      throw validation_error("fit: parameter '" + def.pnames[j] + "' must start positive");

  // Internal coordinates: log for positive parameters.
  std::vector<double> q(n);
  auto to_q = [&](const std::vector<double>& pp) {
    for (std::size_t j = 0; j < n; ++j) q[j] = def.positive[j] ? std::log(pp[j]) : pp[j];
  };
  auto to_p = [&](const std::vector<double>& qq, std::vector<double>& pp) {
    for (std::size_t j = 0; j < n; ++j) pp[j] = def.positive[j] ? std::exp(qq[j]) : qq[j];
  };
  to_q(p);

  auto ssr_of = [&](const std::vector<double>& pp) {
    double s = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      const double r = (y[i] - def.eval(pp.data(), x[i])) * w[i];
      s += r * r;
    }
    return s;
  };

  double ssr = ssr_of(p);
  double lambda = 1e-3;
  bool converged = false;
  int iter = 0;
  std::vector<double> jtj(n * n), jtr(n), jrow(n), delta, q_try(n), p_try(n);

  for (; iter < options.max_iterations; ++iter) {
    std::fill(jtj.begin(), jtj.end(), 0.0);
    std::fill(jtr.begin(), jtr.end(), 0.0);
    for (std::size_t i = 0; i < m; ++i) {
      def.jacobian(p.data(), x[i], jrow.data());
      for (std::size_t j = 0; j < n; ++j) {
        jrow[j] *= w[i];
        if (def.positive[j]) jrow[j] *= p[j];  // d/dq = p * d/dp
      }
      const double r = (y[i] - def.eval(p.data(), x[i])) * w[i];
      for (std::size_t j = 0; j < n; ++j) {
        jtr[j] += jrow[j] * r;
        for (std::size_t k = 0; k <= j; ++k) jtj[j * n + k] += jrow[j] * jrow[k];
      }
    }
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t k = j + 1; k < n; ++k) jtj[j * n + k] = jtj[k * n + j];

    for (std::size_t j = 0; j < n; ++j) {
      const double d = jtj[j * n + j];
      if (!(d > 0) || !std::isfinite(d))
        throw simulation_error("singular Jacobian: parameter '" + def.pnames[j] +
                               "' has no leverage on the data");
    }

    bool stepped = false;
    while (lambda < 1e14) {
      if (solve_damped(jtj, jtr, lambda, n, delta)) {
        for (std::size_t j = 0; j < n; ++j) q_try[j] = q[j] + delta[j];
        to_p(q_try, p_try);
        bool finite = true;
        for (double v : p_try)
          if (!std::isfinite(v)) finite = false;
        const double ssr_try = finite ? ssr_of(p_try) : std::numeric_limits<double>::infinity();
        if (ssr_try <= ssr) {
          double max_step = 0.0;
          for (double v : delta) max_step = std::max(max_step, std::abs(v));
          const double drop = ssr - ssr_try;
          q = q_try;
          p = p_try;
          const double ssr_prev = ssr;
          ssr = ssr_try;
          lambda = std::max(lambda / 3.0, 1e-12);
          stepped = true;
          if (drop <= options.rel_tol * std::max(ssr_prev, 1e-300) ||
              max_step < options.step_tol)
            converged = true;
          break;
        }
      }
      lambda *= 4.0;
    }
    if (!stepped || converged) {
      if (!stepped) converged = true;  // no downhill direction left
      ++iter;
      break;
    }
  }

  FitResult res;
  res.model = def.name;
  res.names = def.pnames;
  res.params = p;
  res.converged = converged;
  res.iterations = iter;
  res.n_points = m;
  res.residual_norm = std::sqrt(ssr);
  res.chi2_reduced = (m > n) ? ssr / static_cast<double>(m - n) : 0.0;

  // Covariance in internal coordinates, scaled by reduced chi^2.
  std::fill(jtj.begin(), jtj.end(), 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    def.jacobian(p.data(), x[i], jrow.data());
    for (std::size_t j = 0; j < n; ++j) {
      jrow[j] *= w[i];
      if (def.positive[j]) jrow[j] *= p[j];
    }
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t k = 0; k <= j; ++k) jtj[j * n + k] += jrow[j] * jrow[k];
  }
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t k = j + 1; k < n; ++k) jtj[j * n + k] = jtj[k * n + j];
  std::vector<double> cov;
  res.sigmas.assign(n, 0.0);
  if (invert_spd(jtj, n, cov)) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = std::sqrt(std::max(cov[j * n + j], 0.0) * res.chi2_reduced);
      if (def.positive[j]) s *= p[j];
      res.sigmas[j] = s;
    }
  }
  return res;
}

double FitResult::param(const std::string& name) const {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return params[i];
  throw validation_error("fit result has no parameter named '" + name + "'");
}

double FitResult::sigma(const std::string& name) const {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return sigmas[i];
  throw validation_error("fit result has no parameter named '" + name + "'");
}

nlohmann::json FitResult::to_json() const {
  nlohmann::json params_j = nlohmann::json::object();
  for (std::size_t i = 0; i < names.size(); ++i)
    params_j[names[i]] = {{"value", params[i]}, {"sigma", sigmas[i]}};
  return {{"model", model},
          {"order", names},
          {"params", params_j},
          {"residual_norm", residual_norm},
          {"chi2_reduced", chi2_reduced},
          {"converged", converged},
          {"iterations", iterations},
          {"n_points", n_points}};
}

FitResult FitResult::from_json(const nlohmann::json& j) {
  FitResult r;
  r.model = j.at("model").get<std::string>();
  r.names = j.at("order").get<std::vector<std::string>>();
  for (const auto& name : r.names) {
    r.params.push_back(j.at("params").at(name).at("value").get<double>());
    r.sigmas.push_back(j.at("params").at(name).at("sigma").get<double>());
  }
  r.residual_norm = j.at("residual_norm").get<double>();
  r.chi2_reduced = j.at("chi2_reduced").get<double>();
  r.converged = j.at("converged").get<bool>();
  r.iterations = j.at("iterations").get<int>();
  r.n_points = j.at("n_points").get<std::size_t>();
  return r;
}

const std::vector<std::string>& fit_param_names(FitModel model) {
  static const std::vector<std::string> lorentzian = {"f0", "gamma", "contrast", "baseline"};
  static const std::vector<std::string> bandwidth = {"amplitude", "f_c", "b", "c"};
  static const std::vector<std::string> telegraph = {"amplitude", "mean_dwell"};
  static const std::vector<std::string> powerlaw = {"amplitude", "exponent"};
  switch (model) {
    case FitModel::lorentzian:
    case FitModel::hyperfine_triplet: return lorentzian;
    case FitModel::bandwidth: return bandwidth;
    case FitModel::telegraph: return telegraph;
    case FitModel::powerlaw: return powerlaw;
  }
  throw validation_error("unknown fit model");
}

std::string fit_model_name(FitModel model) {
  switch (model) {
    case FitModel::lorentzian: return "lorentzian";
    case FitModel::hyperfine_triplet: return "hyperfine_triplet";
    case FitModel::bandwidth: return "bandwidth";
    case FitModel::telegraph: return "telegraph";
    case FitModel::powerlaw: return "powerlaw";
  }
  throw validation_error("unknown fit model");
}

FitModel fit_model_from_name(const std::string& name) {
  if (name == "lorentzian") return FitModel::lorentzian;
  if (name == "hyperfine_triplet") return FitModel::hyperfine_triplet;
  if (name == "bandwidth") return FitModel::bandwidth;
  if (name == "telegraph") return FitModel::telegraph;
  if (name == "powerlaw") return FitModel::powerlaw;
  throw validation_error("unknown fit model: " + name);
}

}  // namespace fesense
