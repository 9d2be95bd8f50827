#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "fesense/spectral.hpp"

namespace fesense {

// Bichromatic phase reference: two tones at omega1 < omega2 define a comb
// f_n = omega1 + n (omega2 - omega1) shared by every trace.
struct ReferenceSpec {
  double omega1_hz = 0.0;
  double omega2_hz = 0.0;
  // Reject traces whose reference peaks fall below this raw spectrum
  // amplitude (0 disables the amplitude gate).
  double min_amplitude = 0.0;
  // Reject traces whose estimated reference phase noise exceeds this.
  double phase_std_threshold_rad = 0.1;

  double delta_hz() const { return omega2_hz - omega1_hz; }
};

void validate_reference(const ReferenceSpec& ref);

struct RefPhases {
  double phi1 = 0.0;
  double phi2 = 0.0;
  double sigma1 = 0.0;  // phase noise estimate, sqrt(floor/2) / |peak|
  double sigma2 = 0.0;
};

// Reads the two reference phases off a complex spectrum. Throws
// simulation_error when a peak is below min_amplitude or its phase noise
// estimate exceeds the threshold; validation_error when the reference
// frequencies are off-grid or the spectrum carries no amplitudes.
RefPhases extract_reference_phases(const Spectrum& spectrum, const ReferenceSpec& ref,
                                   const FloorOptions& floor_opts = {});

// Spectrum with per-bin phases and comb membership. Comb bins carry the
// rotated amplitudes; psd always equals the uncorrected power.
struct PhasedSpectrum {
  static constexpr std::int32_t kOffComb = INT32_MIN;
  Spectrum spectrum;
  std::vector<double> phase_rad;
  std::vector<std::int32_t> comb_index;  // kOffComb away from the comb
  ReferenceSpec ref;

  bool on_comb(std::size_t k) const { return comb_index[k] != kOffComb; }
};

// Rotates every comb bin by -(phi1 + n (phi2 - phi1)). Every comb
// frequency inside (0, Nyquist] must sit on the spectrum grid.
PhasedSpectrum phase_correct(const Spectrum& spectrum, double phi1, double phi2,
                             const ReferenceSpec& ref);

// Complex mean on comb bins (psd = |mean|^2), power mean elsewhere.
// Grids and references must match across traces.
PhasedSpectrum coherent_average(std::span<const PhasedSpectrum> traces);

// Rows: frequency_hz, amplitude_re, amplitude_im, psd, phase_rad, comb_index
// (empty field off-comb).
void write_phased_csv(const PhasedSpectrum& ps, std::ostream& out);

nlohmann::json to_json(const ReferenceSpec& ref);
ReferenceSpec reference_from_json(const nlohmann::json& j);

}  // namespace fesense
