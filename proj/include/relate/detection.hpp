#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "relate/core.hpp"

namespace relate {

inline constexpr std::size_t kFourierBands = 16;
inline constexpr std::size_t kWaveletLevels = 4;
inline constexpr double kLogFloor = 1e-12;
inline constexpr double kDefaultThreshold = 0.13;
inline constexpr double kDefaultPercentile = 99.0;
inline constexpr std::size_t kSegments = 5;

/// Per channel: zero-pad to a power of two, FFT, pool |X_k|^2 into `bands`
/// equal-width frequency bands over bins 0..N/2, log(energy + floor); then
/// average across channels.
std::vector<double> fourier_features(const Series& x, std::size_t bands = kFourierBands);

struct WaveletFeatures {
  std::vector<double> values;  // values[l] = log detail energy at level l+1
  std::size_t levels = 0;      // may be lower than requested for short series
};

/// Per channel: zero-pad, Haar decomposition, log detail energy per level; averaged across channels.
WaveletFeatures wavelet_features(const Series& x, std::size_t levels = kWaveletLevels);

enum class DetectorKind { Fourier, Wavelet };
std::string to_string(DetectorKind k);

struct SpectralDetector {
  DetectorKind kind = DetectorKind::Fourier;
  std::vector<double> means;
  std::vector<double> stds;  // floored at 1e-8
  double threshold = 0.0;    // percentile of clean training scores
  double percentile = kDefaultPercentile;
  std::size_t resolution = 0;  // bands (Fourier) or levels (Wavelet)

  std::vector<double> features(const Series& x) const;
  /// max_j |z_j| over features.
  double score(const Series& x) const;
  bool flags(const Series& x) const { return score(x) > threshold; }
};

/// Linear-interpolation percentile (p in [0,100]) of an unsorted sample.
double percentile_of(std::vector<double> values, double p);

SpectralDetector fit_detector(DetectorKind kind, const Samples& clean_train, double percentile = kDefaultPercentile);

/// Fraction of samples whose score exceeds the detector threshold.
double detection_rate(const SpectralDetector& d, const Samples& samples);

struct DetectorPair {
  SpectralDetector fourier;
  SpectralDetector wavelet;
};

DetectorPair fit_detectors(const Samples& clean_train, double percentile = kDefaultPercentile);

enum class DataCase { Clean = 1, FullyAttacked = 2, PartiallyAttacked = 3 };
std::string to_string(DataCase c);

struct CaseDecision {
  DataCase data_case = DataCase::Clean;
  double fused = 0.0;
};

/// fused = max of the two rates; Case1 if fused < T, Case2 if fused > 1 - T, Case3 otherwise.
CaseDecision classify_case(double fourier_rate, double wavelet_rate, double threshold = kDefaultThreshold);

/// Nearest of {20, 40, 60, 80}; midpoints snap down. Requires T < fused < 1 - T.
int snap_intensity(double fused, double threshold = kDefaultThreshold);

enum class SegmentVerdict { Clean, Attacked };

struct SegmentReport {
  std::vector<std::pair<std::size_t, std::size_t>> bounds;  // [begin, end) per segment
  std::vector<double> fused_rates;
  std::vector<SegmentVerdict> verdicts;
};

/// Contiguous equal blocks, remainder in the last one.
std::vector<std::pair<std::size_t, std::size_t>> segment_bounds(std::size_t n, std::size_t segments = kSegments);

/// Verdict Attacked iff the segment's fused rate exceeds 0.5.
SegmentReport classify_segments(const DetectorPair& detectors, const Samples& samples, std::size_t segments = kSegments);

struct DetectionReport {
  double fourier_rate = 0.0;
  double wavelet_rate = 0.0;
  double fused_rate = 0.0;
  DataCase data_case = DataCase::Clean;
  std::optional<int> intensity;               // Case 3 only
  std::optional<SegmentReport> segments;      // Case 3 only
};

DetectionReport detect(const DetectorPair& detectors, const Samples& samples, double threshold = kDefaultThreshold);

/// Structured text rendering used by the `detect` command.
std::string format_report(const DetectionReport& r);

}  // namespace relate
