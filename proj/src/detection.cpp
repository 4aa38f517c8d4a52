#include "relate/detection.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "relate/spectral.hpp"

namespace relate {

std::vector<double> fourier_features(const Series& x, std::size_t bands) {
  if (bands == 0) throw ContractError("fourier_features: bands must be >= 1");
  std::vector<double> out(bands, 0.0);
  for (std::size_t c = 0; c < x.channels; ++c) {
    const auto spec = spectral::fft_padded(x.channel(c));
    const std::size_t half = spec.size() / 2;
    std::vector<double> energy(bands, 0.0);
    for (std::size_t k = 0; k <= half; ++k) {
      const std::size_t band = half == 0 ? 0 : std::min(bands - 1, k * bands / half);
      energy[band] += std::norm(spec[k]);
    }
    for (std::size_t b = 0; b < bands; ++b) out[b] += std::log(energy[b] + kLogFloor);
  }
  for (auto& v : out) v /= static_cast<double>(x.channels);
  return out;
}

WaveletFeatures wavelet_features(const Series& x, std::size_t levels) {
  WaveletFeatures wf;
  std::size_t max_levels = 0;
  while ((std::size_t{2} << max_levels) <= x.length) ++max_levels;  // floor(log2 L)
  wf.levels = std::min(levels, max_levels);
  wf.values.assign(wf.levels, 0.0);
  if (wf.levels == 0) return wf;
  const std::size_t n = spectral::next_pow2(x.length);
  std::vector<double> padded(n, 0.0);
  for (std::size_t c = 0; c < x.channels; ++c) {
    std::fill(padded.begin(), padded.end(), 0.0);
    const auto ch = x.channel(c);
    std::copy(ch.begin(), ch.end(), padded.begin());
    const auto d = spectral::haar_decompose(padded, wf.levels);
    for (std::size_t l = 0; l < wf.levels; ++l) {
      double e = 0.0;
      for (double v : d.details[l]) e += v * v;
      wf.values[l] += std::log(e + kLogFloor);
    }
  }
  for (auto& v : wf.values) v /= static_cast<double>(x.channels);
  return wf;
}

std::string to_string(DetectorKind k) { return k == DetectorKind::Fourier ? "fourier" : "wavelet"; }

std::vector<double> SpectralDetector::features(const Series& x) const {
  if (kind == DetectorKind::Fourier) return fourier_features(x, resolution);
  return wavelet_features(x, resolution).values;
}

double SpectralDetector::score(const Series& x) const {
  const auto f = features(x);
  if (f.size() != means.size()) throw ContractError("detector feature size mismatch");
  double s = 0.0;
  for (std::size_t j = 0; j < f.size(); ++j) s = std::max(s, std::abs(f[j] - means[j]) / stds[j]);
  return s;
}

double percentile_of(std::vector<double> values, double p) {
  if (values.empty()) throw ContractError("percentile of an empty set");
  std::sort(values.begin(), values.end());
  const double rank = std::clamp(p, 0.0, 100.0) / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(rank));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (rank - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

SpectralDetector fit_detector(DetectorKind kind, const Samples& clean_train, double percentile) {
  if (clean_train.size() < 10) throw ContractError("fit_detector: need at least 10 clean samples");
  if (!(percentile > 0.0 && percentile < 100.0)) throw ContractError("fit_detector: percentile must lie in (0, 100)");
  SpectralDetector d;
  d.kind = kind;
  d.percentile = percentile;
  if (kind == DetectorKind::Fourier) d.resolution = kFourierBands;
  else d.resolution = wavelet_features(clean_train.front().x, kWaveletLevels).levels;

  std::vector<std::vector<double>> feats;
  feats.reserve(clean_train.size());
  for (const auto& s : clean_train) feats.push_back(d.features(s.x));
  const std::size_t m = feats.front().size();
  const double n = static_cast<double>(feats.size());
  d.means.assign(m, 0.0);
  d.stds.assign(m, 0.0);
  for (const auto& f : feats)
    for (std::size_t j = 0; j < m; ++j) d.means[j] += f[j] / n;
  for (const auto& f : feats)
    for (std::size_t j = 0; j < m; ++j) d.stds[j] += (f[j] - d.means[j]) * (f[j] - d.means[j]);
  for (auto& s : d.stds) s = std::max(std::sqrt(s / (n - 1.0)), 1e-8);

  std::vector<double> scores;
  scores.reserve(feats.size());
  for (const auto& f : feats) {
    double s = 0.0;
    for (std::size_t j = 0; j < m; ++j) s = std::max(s, std::abs(f[j] - d.means[j]) / d.stds[j]);
    scores.push_back(s);
  }
  d.threshold = percentile_of(std::move(scores), percentile);
  return d;
}

double detection_rate(const SpectralDetector& d, const Samples& samples) {
  if (samples.empty()) throw ContractError("detection_rate: empty sample set");
  std::size_t flagged = 0;
  for (const auto& s : samples) flagged += d.flags(s.x);
  return static_cast<double>(flagged) / static_cast<double>(samples.size());
}

DetectorPair fit_detectors(const Samples& clean_train, double percentile) {
  return {fit_detector(DetectorKind::Fourier, clean_train, percentile),
          fit_detector(DetectorKind::Wavelet, clean_train, percentile)};
}

std::string to_string(DataCase c) {
  switch (c) {
    case DataCase::Clean: return "case1-clean";
    case DataCase::FullyAttacked: return "case2-fully-attacked";
    case DataCase::PartiallyAttacked: return "case3-partially-attacked";
  }
  return "unknown";
}

CaseDecision classify_case(double fourier_rate, double wavelet_rate, double threshold) {
  if (!(fourier_rate >= 0.0 && fourier_rate <= 1.0 && wavelet_rate >= 0.0 && wavelet_rate <= 1.0))
    throw ContractError("classify_case: detection rates must lie in [0, 1]");
  CaseDecision d;
  d.fused = std::max(fourier_rate, wavelet_rate);
  if (d.fused < threshold) d.data_case = DataCase::Clean;
  else if (d.fused > 1.0 - threshold) d.data_case = DataCase::FullyAttacked;
  else d.data_case = DataCase::PartiallyAttacked;
  return d;
}

int snap_intensity(double fused, double threshold) {
  if (!(fused > threshold && fused < 1.0 - threshold))
    throw ContractError("snap_intensity: fused rate outside the partial-attack band");
  const double pct = fused * 100.0;
  int best = 20;
  double best_dist = std::numeric_limits<double>::infinity();
  for (int level : {20, 40, 60, 80}) {
    const double dist = std::abs(pct - level);
    if (dist < best_dist - 1e-9) {  // ties keep the lower level
      best = level;
      best_dist = dist;
    }
  }
  return best;
}

std::vector<std::pair<std::size_t, std::size_t>> segment_bounds(std::size_t n, std::size_t segments) {
  if (segments == 0 || n < segments) throw ContractError("segment_bounds: need at least one sample per segment");
  std::vector<std::pair<std::size_t, std::size_t>> out;
  const std::size_t size = n / segments;
  for (std::size_t i = 0; i < segments; ++i) out.emplace_back(i * size, i + 1 == segments ? n : (i + 1) * size);
  return out;
}

SegmentReport classify_segments(const DetectorPair& detectors, const Samples& samples, std::size_t segments) {
  if (samples.size() < segments) throw ContractError("classify_segments: fewer samples than segments");
  SegmentReport r;
  r.bounds = segment_bounds(samples.size(), segments);
  for (auto [b, e] : r.bounds) {
    const Samples seg(samples.begin() + static_cast<std::ptrdiff_t>(b), samples.begin() + static_cast<std::ptrdiff_t>(e));
    const double fused = std::max(detection_rate(detectors.fourier, seg), detection_rate(detectors.wavelet, seg));
    r.fused_rates.push_back(fused);
    r.verdicts.push_back(fused > 0.5 ? SegmentVerdict::Attacked : SegmentVerdict::Clean);
  }
  return r;
}

DetectionReport detect(const DetectorPair& detectors, const Samples& samples, double threshold) {
  DetectionReport r;
  r.fourier_rate = detection_rate(detectors.fourier, samples);
  r.wavelet_rate = detection_rate(detectors.wavelet, samples);
  const auto decision = classify_case(r.fourier_rate, r.wavelet_rate, threshold);
  r.fused_rate = decision.fused;
  r.data_case = decision.data_case;
  if (r.data_case == DataCase::PartiallyAttacked) {
    r.intensity = snap_intensity(r.fused_rate, threshold);
    if (samples.size() >= kSegments) r.segments = classify_segments(detectors, samples, kSegments);
  }
  return r;
}

std::string format_report(const DetectionReport& r) {
  char buf[64];
  std::ostringstream os;
  std::snprintf(buf, sizeof buf, "%.4f", r.fourier_rate);
  os << "fourier_rate=" << buf << '\n';
  std::snprintf(buf, sizeof buf, "%.4f", r.wavelet_rate);
  os << "wavelet_rate=" << buf << '\n';
  std::snprintf(buf, sizeof buf, "%.4f", r.fused_rate);
  os << "fused_rate=" << buf << '\n';
  os << "case=" << to_string(r.data_case) << '\n';
  os << "intensity=" << (r.intensity ? std::to_string(*r.intensity) : std::string("none")) << '\n';
  os << "segments=";
  if (r.segments) {
    for (std::size_t i = 0; i < r.segments->verdicts.size(); ++i)
      os << (i ? "," : "") << (r.segments->verdicts[i] == SegmentVerdict::Attacked ? 'A' : 'C');
  } else {
    os << "none";
  }
  os << '\n';
  return os.str();
}

}  // namespace relate
