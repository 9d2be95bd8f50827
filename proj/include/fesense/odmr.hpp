#pragma once

#include <nlohmann/json.hpp>

#include "fesense/math_util.hpp"

namespace fesense {

enum class LineshapeKind { single_lorentzian, hyperfine_triplet };

// Continuous-wave ODMR model of a single effective resonance. Linewidth is
// FWHM; contrast is the fractional dip depth; count_rate_hz is the photon
// rate far off resonance.
struct OdmrParams {
  double center_freq_hz = 2.87e9;
  double linewidth_hz = 0.0;
  double contrast = 0.0;
  double count_rate_hz = 0.0;
  double gyromagnetic_hz_per_t = kDefaultGyromagneticHzPerT;
  LineshapeKind lineshape = LineshapeKind::single_lorentzian;
  double hyperfine_splitting_hz = 2.1e6;
};

void validate_odmr(const OdmrParams& p);

struct DrivePoint {
  double mw_freq_hz = 0.0;
};

// Normalized emission rate at drive frequency f, in (0, 1]. The dip is
// 1 - C / (1 + (2 (f - f0) / G)^2); the triplet splits the same total
// contrast over three equally weighted lines.
double lineshape(const OdmrParams& p, double f_hz);

// Derivative of lineshape with respect to frequency, 1/Hz.
double lineshape_slope(const OdmrParams& p, double f_hz);

// Drive frequency of maximum slope magnitude above the center; closed
// form f0 + G / (2 sqrt(3)) for the single line, numeric for the triplet.
double sensing_point(const OdmrParams& p);

// Photon rate with field b applied: the resonance shifts by gamma * b, so
// the drive sits at an effective detuning f_mw - gamma * b.
double transduce(const OdmrParams& p, DrivePoint drive, double field_t);

// Shot-noise-limited sensitivity at the max-slope point, tesla / sqrt(Hz):
// (4 / (3 sqrt(3))) * (G / gamma) / (C sqrt(R)).
double sensitivity(const OdmrParams& p);

// Field scale where the slope-linear approximation degrades: sqrt(3) G / gamma.
double linearity_bound(const OdmrParams& p);

nlohmann::json to_json(const OdmrParams& p);
OdmrParams odmr_from_json(const nlohmann::json& j);

}  // namespace fesense
