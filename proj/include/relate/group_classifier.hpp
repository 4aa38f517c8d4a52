#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "relate/attacks.hpp"
#include "relate/core.hpp"
#include "relate/models.hpp"

namespace relate {

inline constexpr std::size_t kGroupStats = 6;
inline constexpr std::size_t kGroupFeatures = 2 * kGroupStats;

/// Per-sample statistics, in order: high-band energy ratio, spectral flatness,
/// first-difference kurtosis, first-difference max/mean ratio,
/// log(level-1 / level-L wavelet energy), cross-channel sign agreement of first differences.
std::array<double, kGroupStats> sample_group_stats(const Series& x);

/// Means of the six statistics followed by their (population) standard deviations.
using GroupFeatureVector = std::array<double, kGroupFeatures>;

/// Order invariant: per-feature values are sorted before aggregation.
GroupFeatureVector extract_group_features(const Samples& samples);

struct LabeledGroupVector {
  GroupFeatureVector features{};
  AttackGroup group = AttackGroup::IterationBased;
  std::string source;  // "<dataset>/<attack>[/b<k>]"
};

/// Dataset plus the model used to generate its training perturbations.
struct GroupSource {
  const Dataset* dataset = nullptr;
  const TrainedModel* reference = nullptr;
};

/// The vector of `attacked` plus `bootstrap` resamples drawn with replacement.
std::vector<LabeledGroupVector> group_vectors(const Samples& attacked, AttackGroup group, const std::string& tag,
                                              std::uint64_t seed, std::size_t bootstrap);

/// One vector per (dataset, attack) on the validation split, plus `bootstrap`
/// resampled vectors each drawn with replacement from the attacked split.
std::vector<LabeledGroupVector> build_group_training_set(const std::vector<GroupSource>& sources,
                                                         const std::vector<AttackSpec>& attacks, std::uint64_t seed,
                                                         std::size_t bootstrap = 8);

struct Stump {
  std::size_t feature = 0;
  double threshold = 0.0;  // goes left when x[feature] <= threshold
  double left = 0.0;
  double right = 0.0;
};

struct BoostOptions {
  std::size_t rounds = 100;
  double learning_rate = 0.3;
  double lambda = 1.0;     // L2 penalty on leaf weights
  double subsample = 1.0;  // row fraction per round, drawn from the seed
};

/// Logistic-loss boosted stumps. The raw score is for Group 1 (iteration-based).
struct GroupClassifier {
  double base_score = 0.0;
  double learning_rate = 0.3;
  std::vector<Stump> stumps;

  bool trained() const { return !stumps.empty(); }
  double raw_score(const GroupFeatureVector& f) const;
  /// Probability of Group 1.
  double probability(const GroupFeatureVector& f) const;
};

GroupClassifier train_group_classifier(const std::vector<LabeledGroupVector>& data, const BoostOptions& options,
                                       std::uint64_t seed);

struct GroupPrediction {
  AttackGroup group = AttackGroup::IterationBased;
  double probability_group1 = 0.5;
  double confidence = 0.0;  // |2p - 1|
};

GroupPrediction predict_group(const GroupClassifier& clf, const GroupFeatureVector& features);
GroupPrediction predict_group(const GroupClassifier& clf, const Samples& samples);

nlohmann::json group_classifier_to_json(const GroupClassifier& clf);
GroupClassifier group_classifier_from_json(const nlohmann::json& j);

}  // namespace relate
