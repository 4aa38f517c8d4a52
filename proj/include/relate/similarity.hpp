#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "relate/core.hpp"
#include "relate/nn.hpp"

namespace relate {

inline constexpr std::size_t kEmbeddingDim = 128;

struct EncoderOptions {
  double learning_rate = 0.01;
  std::size_t epochs = 3;
  std::size_t batch_size = 16;
};

/// Conv(C->16,k5) ReLU Conv(16->32,k5) ReLU AdaptiveMaxPool(4) Dropout(0.25) Dense(128->K).
/// Every encoder starts from the same seed-derived initialization (only the
/// first conv differs in shape across channel counts).
class EmbeddingEncoder {
 public:
  EmbeddingEncoder() = default;
  EmbeddingEncoder(std::size_t channels, std::size_t length, std::size_t classes, std::vector<double> params);

  std::size_t channels() const { return channels_; }
  std::size_t length() const { return length_; }
  std::size_t num_classes() const { return classes_; }
  const std::vector<double>& parameters() const { return params_; }
  const nn::Network& network() const { return net_; }

  /// Pooled activations before the dropout/linear head (length 128).
  std::vector<double> embed(const Series& x) const;
  std::size_t predict(const Series& x) const;
  double forward_macs() const { return net_.forward_macs(); }

 private:
  std::size_t channels_ = 0, length_ = 0, classes_ = 0;
  nn::Network net_;
  std::vector<double> params_;
};

nn::Network encoder_network(std::size_t channels, std::size_t length, std::size_t classes);

/// `init_seed` is shared across datasets; `seed` drives batch order and dropout.
EmbeddingEncoder train_encoder(const Dataset& ds, std::uint64_t init_seed, std::uint64_t seed,
                               const EncoderOptions& options = {});

double encoder_accuracy(const EmbeddingEncoder& enc, const Samples& samples);

struct DatasetEmbedding {
  std::vector<double> vector;  // unit L2 norm
  std::string dataset;
  std::string condition;  // "clean", an attack condition, or a segment pattern id
};

/// L2-normalized mean of per-sample embeddings.
DatasetEmbedding dataset_embedding(const EmbeddingEncoder& enc, const Samples& samples, std::string dataset = {},
                                   std::string condition = "clean");

double cosine_similarity(std::span<const double> a, std::span<const double> b);

/// Classic DTW with |a_i - b_j| local cost and unit steps (i+1, j+1, both).
double dtw_distance(std::span<const double> a, std::span<const double> b);

/// W1 between empirical distributions: mean |sorted a - sorted b| for equal
/// sizes, otherwise the integral of |F_a^-1 - F_b^-1| over the quantile axis.
double wasserstein_1d(std::span<const double> a, std::span<const double> b);

/// Dataset-level summaries used by the DTW / Wasserstein alternates:
/// mean over samples of the channel-averaged series, and all values pooled.
std::vector<double> mean_channel_averaged_series(const Samples& samples);
std::vector<double> pooled_values(const Samples& samples);

/// Sorted values, thinned to `points` mid-rank order statistics when longer.
inline constexpr std::size_t kQuantileSketch = 1024;
std::vector<double> quantile_sketch(std::vector<double> values, std::size_t points);

enum class SimilarityMetric { Cosine, Dtw, Wasserstein };
std::string to_string(SimilarityMetric m);
SimilarityMetric metric_from_string(const std::string& s);

/// Everything a metric needs about one dataset under one condition.
struct SimilarityProfile {
  DatasetEmbedding embedding;
  std::vector<double> mean_series;
  std::vector<double> values;  // quantile sketch of the pooled values
};

SimilarityProfile make_profile(const EmbeddingEncoder& enc, const Samples& samples, const std::string& dataset,
                               const std::string& condition);

/// Higher is more similar: cosine as is, distances negated.
double similarity(const SimilarityProfile& a, const SimilarityProfile& b, SimilarityMetric metric);

struct Match {
  std::string name;
  double score = 0.0;
};

/// argmax score; exact ties go to the lexicographically smaller name.
Match most_similar(const std::vector<Match>& candidates);
Match most_similar_dataset(const SimilarityProfile& incoming, const std::vector<SimilarityProfile>& candidates,
                           SimilarityMetric metric = SimilarityMetric::Cosine);

/// Mode of `winners`; ties by higher mean score among the tied names, then lexicographic.
std::string majority_vote(const std::vector<Match>& winners);

nlohmann::json encoder_to_json(const EmbeddingEncoder& enc);
EmbeddingEncoder encoder_from_json(const nlohmann::json& j);
nlohmann::json profile_to_json(const SimilarityProfile& p);
SimilarityProfile profile_from_json(const nlohmann::json& j);

}  // namespace relate
