#pragma once

#include <complex>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

#include "fesense/tag_stream.hpp"

namespace fesense {

// Photon counts on a uniform grid of right-open, integer-picosecond bins.
struct TimeSeries {
  double bin_width_s = 0.0;
  double start_time_s = 0.0;
  std::vector<std::uint32_t> counts;
};

// Real-valued series on the same kind of grid (direct waveform samples).
struct SampledSeries {
  double bin_width_s = 0.0;
  double start_time_s = 0.0;
  std::vector<double> values;
};

enum class Window { none, hann };

// One-sided spectrum, DC through Nyquist, of a mean-subtracted series.
// amplitude[k] is the raw DFT coefficient divided by the window's
// coherent gain, so an on-grid tone of amplitude a gives |amplitude| =
// a N / 2 under any window. psd[k] = |amplitude[k]|^2 with no
// one-sided doubling applied.
struct Spectrum {
  double bin_width_s = 0.0;
  double duration_s = 0.0;  // N * bin_width
  std::uint32_t n_averages = 1;
  Window window = Window::none;
  bool power_only = false;
  bool background_subtracted = false;
  std::uint64_t clamped_bins = 0;  // bins floored at zero by subtraction
  std::vector<std::complex<double>> amplitude;  // empty when power_only
  std::vector<double> psd;

  std::size_t size() const { return psd.size(); }
  double resolution_hz() const { return 1.0 / duration_s; }
  double nyquist_hz() const { return 0.5 / bin_width_s; }
  double freq_of(std::size_t k) const { return static_cast<double>(k) / duration_s; }
  // Nearest bin; throws validation_error when f is off-grid by more than
  // a millionth of a bin.
  std::size_t grid_bin(double f_hz) const;
};

// bin width must round to an integer picosecond count >= 1. The grid
// covers [0, duration] with ceil(duration / width) bins; a tag exactly at
// the stream end lands in the last bin, so total counts are preserved.
TimeSeries bin_tags(const TagStream& stream, double bin_width_s);

// Walks a stream in segments of segment_s (an exact multiple of the bin
// width); the partial tail beyond the last full segment is dropped.
using SegmentFn = std::function<void(std::size_t index, const TimeSeries& segment)>;
void for_each_segment(const TagStream& stream, double segment_s, double bin_width_s,
                      const SegmentFn& fn);
void for_each_segment_file(const std::filesystem::path& path, double segment_s,
                           double bin_width_s, const SegmentFn& fn);

Spectrum psd(const TimeSeries& series, Window window = Window::none,
             bool keep_amplitude = true);
Spectrum psd(const SampledSeries& series, Window window = Window::none,
             bool keep_amplitude = true);

// Weighted mean of matching-grid power spectra; the result is power-only.
Spectrum average_psd(std::span<const Spectrum> spectra);

// on - off per bin, floored at zero; the count of floored bins is kept in
// clamped_bins. Grids and windows must match.
Spectrum onoff_subtract(const Spectrum& on, const Spectrum& off);

struct FloorOptions {
  double band_lo_hz = 0.0;   // 0 = 2 * resolution
  double band_hi_hz = 0.0;   // 0 = Nyquist
  int exclude_halfwidth_bins = 3;
  std::vector<double> known_peaks_hz;
};

struct FloorEstimate {
  double median = 0.0;           // raw band median
  double mean_equivalent = 0.0;  // median corrected for chi^2 skew
  std::size_t n_bins = 0;
};

// Median-based floor over the band, excluding a few bins around each
// known peak. The correction maps the median of an n-average exponential
// power estimate onto its mean: ln 2 for n = 1, Wilson-Hilferty above.
FloorEstimate noise_floor(const Spectrum& spectrum, const FloorOptions& options);

struct SnrPoint {
  double time_s = 0.0;
  double peak_psd = 0.0;
  double floor_psd = 0.0;   // mean-equivalent
  double n_averages = 1.0;  // windows averaged into this point's spectrum
  double snr = 0.0;         // sqrt(max(peak - floor, 0) / floor)
  bool used_in_fit = false;
};

struct SnrScaling {
  std::vector<SnrPoint> points;
  double amplitude = 0.0;  // A in snr = A t^b
  double exponent = 0.0;   // b
};

// Amplitude signal-to-noise versus averaging time from spectra averaged
// over disjoint windows of each length. Needs >= 4 points spanning >= 1
// decade; refuses the fit when the floor is zero or the signal bin never
// rises above the floor.
SnrScaling snr_scaling(std::span<const Spectrum> spectra, std::span<const double> times_s,
                       double signal_freq_hz, const FloorOptions& floor_opts);

// The fit step alone: recomputes snr and used_in_fit from each point's
// peak/floor and applies the same refusal rules as snr_scaling. Points
// must arrive in strictly increasing time order.
SnrScaling fit_snr_powerlaw(std::span<const SnrPoint> points);

void write_spectrum_csv(const Spectrum& spectrum, std::ostream& out);
Spectrum read_spectrum_csv(std::istream& in);

}  // namespace fesense
