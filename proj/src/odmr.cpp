#include "fesense/odmr.hpp"

#include <cmath>
#include <string>

#include "fesense/errors.hpp"

namespace fesense {

void validate_odmr(const OdmrParams& p) {
  if (!(p.center_freq_hz > 0) || !std::isfinite(p.center_freq_hz))
    throw validation_error("odmr center_freq_hz must be > 0");
  if (!(p.linewidth_hz > 0) || !std::isfinite(p.linewidth_hz))
    throw validation_error("odmr linewidth_hz must be > 0");
  if (!(p.contrast > 0) || !(p.contrast < 1))
    throw validation_error("odmr contrast must lie in (0, 1)");
  if (!(p.count_rate_hz > 0) || !std::isfinite(p.count_rate_hz))
    throw validation_error("odmr count_rate_hz must be > 0");
  if (!(p.gyromagnetic_hz_per_t > 0) || !std::isfinite(p.gyromagnetic_hz_per_t))
    throw validation_error("odmr gyromagnetic_hz_per_t must be > 0");
  if (p.lineshape == LineshapeKind::hyperfine_triplet &&
      !(p.hyperfine_splitting_hz > 0))
    throw validation_error("odmr hyperfine_splitting_hz must be > 0");
}

namespace {

// Single dip centered at fc with depth c.
inline double dip(double f, double fc, double width, double c) {
  const double x = 2.0 * (f - fc) / width;
  return c / (1.0 + x * x);
}

inline double dip_slope(double f, double fc, double width, double c) {
  const double x = 2.0 * (f - fc) / width;
  const double d = 1.0 + x * x;
  return -c * 2.0 * x * (2.0 / width) / (d * d);
}

}  // namespace

double lineshape(const OdmrParams& p, double f_hz) {
  if (p.lineshape == LineshapeKind::single_lorentzian)
    return 1.0 - dip(f_hz, p.center_freq_hz, p.linewidth_hz, p.contrast);
  const double s = p.hyperfine_splitting_hz;
  const double c3 = p.contrast / 3.0;
  return 1.0 - dip(f_hz, p.center_freq_hz - s, p.linewidth_hz, c3) -
         dip(f_hz, p.center_freq_hz, p.linewidth_hz, c3) -
         dip(f_hz, p.center_freq_hz + s, p.linewidth_hz, c3);
}

double lineshape_slope(const OdmrParams& p, double f_hz) {
  if (p.lineshape == LineshapeKind::single_lorentzian)
    return -dip_slope(f_hz, p.center_freq_hz, p.linewidth_hz, p.contrast);
  const double s = p.hyperfine_splitting_hz;
  const double c3 = p.contrast / 3.0;
  return -dip_slope(f_hz, p.center_freq_hz - s, p.linewidth_hz, c3) -
         dip_slope(f_hz, p.center_freq_hz, p.linewidth_hz, c3) -
         dip_slope(f_hz, p.center_freq_hz + s, p.linewidth_hz, c3);
}

double sensing_point(const OdmrParams& p) {
  validate_odmr(p);
  if (p.lineshape == LineshapeKind::single_lorentzian)
    return p.center_freq_hz + p.linewidth_hz / (2.0 * std::sqrt(3.0));

  // Triplet: scan the region above center, then refine by golden section
  // on the slope magnitude. The max-slope point sits within a linewidth
  // of the outer line.
  const double lo = p.center_freq_hz;
  const double hi = p.center_freq_hz + p.hyperfine_splitting_hz + p.linewidth_hz;
  const int n = 2000;
  double best_f = lo, best = -1.0;
  for (int i = 0; i <= n; ++i) {
    const double f = lo + (hi - lo) * i / n;
    const double m = std::abs(lineshape_slope(p, f));
    if (m > best) {
      best = m;
      best_f = f;
    }
  }
  double a = best_f - (hi - lo) / n;
  double b = best_f + (hi - lo) / n;
  const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
  double x1 = b - invphi * (b - a);
  double x2 = a + invphi * (b - a);
  double m1 = std::abs(lineshape_slope(p, x1));
  double m2 = std::abs(lineshape_slope(p, x2));
  for (int it = 0; it < 80; ++it) {
    if (m1 < m2) {
      a = x1;
      x1 = x2;
      m1 = m2;
      x2 = a + invphi * (b - a);
      m2 = std::abs(lineshape_slope(p, x2));
    } else {
      b = x2;
      x2 = x1;
      m2 = m1;
      x1 = b - invphi * (b - a);
      m1 = std::abs(lineshape_slope(p, x1));
    }
  }
  return 0.5 * (a + b);
}

double transduce(const OdmrParams& p, DrivePoint drive, double field_t) {
  return p.count_rate_hz * lineshape(p, drive.mw_freq_hz - p.gyromagnetic_hz_per_t * field_t);
}

double sensitivity(const OdmrParams& p) {
  validate_odmr(p);
  return (4.0 / (3.0 * std::sqrt(3.0))) * (p.linewidth_hz / p.gyromagnetic_hz_per_t) /
         (p.contrast * std::sqrt(p.count_rate_hz));
}

double linearity_bound(const OdmrParams& p) {
  validate_odmr(p);
  return std::sqrt(3.0) * p.linewidth_hz / p.gyromagnetic_hz_per_t;
}

nlohmann::json to_json(const OdmrParams& p) {
  return {{"center_freq_hz", p.center_freq_hz},
          {"linewidth_hz", p.linewidth_hz},
          {"contrast", p.contrast},
          {"count_rate_hz", p.count_rate_hz},
          {"gyromagnetic_hz_per_t", p.gyromagnetic_hz_per_t},
          {"lineshape", p.lineshape == LineshapeKind::single_lorentzian ? "single_lorentzian"
                                                                        : "hyperfine_triplet"},
          {"hyperfine_splitting_hz", p.hyperfine_splitting_hz}};
}

OdmrParams odmr_from_json(const nlohmann::json& j) {
  OdmrParams p;
  p.center_freq_hz = j.value("center_freq_hz", p.center_freq_hz);
  p.linewidth_hz = j.at("linewidth_hz").get<double>();
  p.contrast = j.at("contrast").get<double>();
  p.count_rate_hz = j.at("count_rate_hz").get<double>();
  p.gyromagnetic_hz_per_t = j.value("gyromagnetic_hz_per_t", p.gyromagnetic_hz_per_t);
  const std::string kind = j.value("lineshape", std::string("single_lorentzian"));
  if (kind == "single_lorentzian")
    p.lineshape = LineshapeKind::single_lorentzian;
  else if (kind == "hyperfine_triplet")
    p.lineshape = LineshapeKind::hyperfine_triplet;
  else
    throw validation_error("unknown lineshape kind: " + kind);
  p.hyperfine_splitting_hz = j.value("hyperfine_splitting_hz", p.hyperfine_splitting_hz);
  validate_odmr(p);
  return p;
}

}  // namespace fesense
