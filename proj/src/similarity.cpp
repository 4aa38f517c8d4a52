#include "relate/similarity.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "relate/models.hpp"

namespace relate {

namespace {
constexpr std::size_t kEmbedStop = 5;  // conv relu conv relu pool | dropout dense
}

nn::Network encoder_network(std::size_t channels, std::size_t length, std::size_t classes) {
  using namespace nn;
  Network net(channels, length);
  net.add<Conv1d>(channels, 16, 5)
      .add<Relu>()
      .add<Conv1d>(16, 32, 5)
      .add<Relu>()
      .add<AdaptiveMaxPool>(4)
      .add<Dropout>(0.25)
      .add<Dense>(kEmbeddingDim, classes);
  return net;
}

EmbeddingEncoder::EmbeddingEncoder(std::size_t channels, std::size_t length, std::size_t classes,
                                   std::vector<double> params)
    : channels_(channels), length_(length), classes_(classes), net_(encoder_network(channels, length, classes)),
      params_(std::move(params)) {
  if (params_.size() != net_.num_params()) throw ContractError("encoder parameter count mismatch");
}

std::vector<double> EmbeddingEncoder::embed(const Series& x) const {
  if (x.channels != channels_ || x.length != length_) throw ContractError("encoder input shape mismatch");
  return net_.forward(params_, x, nullptr, nullptr, kEmbedStop).values;
}

std::size_t EmbeddingEncoder::predict(const Series& x) const {
  if (x.channels != channels_ || x.length != length_) throw ContractError("encoder input shape mismatch");
  const auto logits = net_.forward(params_, x).values;
  return static_cast<std::size_t>(std::max_element(logits.begin(), logits.end()) - logits.begin());
}

EmbeddingEncoder train_encoder(const Dataset& ds, std::uint64_t init_seed, std::uint64_t seed,
                               const EncoderOptions& options) {
  validate(ds);
  const auto net = encoder_network(ds.channels, ds.length, ds.num_classes);
  auto fit = sgd_fit(net, net.init_params(init_seed), ds, {options.learning_rate, options.epochs, options.batch_size},
                     seed, "encoder");
  return EmbeddingEncoder(ds.channels, ds.length, ds.num_classes, std::move(fit.params));
}

double encoder_accuracy(const EmbeddingEncoder& enc, const Samples& samples) {
  if (samples.empty()) throw ContractError("accuracy of an empty sample list");
  std::size_t correct = 0;
  for (const auto& s : samples) correct += enc.predict(s.x) == s.label;
  return static_cast<double>(correct) / static_cast<double>(samples.size());
}

DatasetEmbedding dataset_embedding(const EmbeddingEncoder& enc, const Samples& samples, std::string dataset,
                                   std::string condition) {
  if (samples.empty()) throw ContractError("dataset_embedding: empty sample set");
  std::vector<double> mean(kEmbeddingDim, 0.0);
  for (const auto& s : samples) {
    const auto e = enc.embed(s.x);
    for (std::size_t i = 0; i < kEmbeddingDim; ++i) mean[i] += e[i];
  }
  double norm = 0.0;
  for (auto& v : mean) {
    v /= static_cast<double>(samples.size());
    norm += v * v;
  }
  norm = std::sqrt(norm);
  if (!(norm > 0.0) || !std::isfinite(norm)) throw ContractError("degenerate embedding");
  for (auto& v : mean) v /= norm;
  return {std::move(mean), std::move(dataset), std::move(condition)};
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ContractError("cosine_similarity: dimension mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) throw ContractError("cosine_similarity: zero vector");
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

double dtw_distance(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw ContractError("dtw_distance: empty sequence");
  const std::size_t n = a.size(), m = b.size();
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> prev(m + 1, inf), cur(m + 1, inf);
  prev[0] = 0.0;
  for (std::size_t i = 1; i <= n; ++i) {
    cur[0] = inf;
    for (std::size_t j = 1; j <= m; ++j)
      cur[j] = std::abs(a[i - 1] - b[j - 1]) + std::min({prev[j], cur[j - 1], prev[j - 1]});
    std::swap(prev, cur);
  }
  return prev[m];
}

double wasserstein_1d(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw ContractError("wasserstein_1d: empty sample");
  std::vector<double> x(a.begin(), a.end()), y(b.begin(), b.end());
  std::sort(x.begin(), x.end());
  std::sort(y.begin(), y.end());
  const std::size_t n = x.size(), m = y.size();
  if (n == m) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += std::abs(x[i] - y[i]);
    return s / static_cast<double>(n);
  }
  // Walk the merged quantile breakpoints i/n and j/m (integer cross-multiplied).
  double total = 0.0;
  std::size_t i = 0, j = 0;
  std::size_t pos = 0;  // current quantile in units of 1/(n*m)
  while (i < n && j < m) {
    const std::size_t next_i = (i + 1) * m, next_j = (j + 1) * n;
    const std::size_t next = std::min(next_i, next_j);
    total += std::abs(x[i] - y[j]) * static_cast<double>(next - pos);
    pos = next;
    if (next_i == next) ++i;
    if (next_j == next) ++j;
  }
  return total / (static_cast<double>(n) * static_cast<double>(m));
}

std::vector<double> mean_channel_averaged_series(const Samples& samples) {
  if (samples.empty()) throw ContractError("empty sample set");
  const std::size_t C = samples.front().x.channels, L = samples.front().x.length;
  std::vector<double> out(L, 0.0);
  for (const auto& s : samples)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t t = 0; t < L; ++t) out[t] += s.x.at(c, t);
  const double scale = 1.0 / static_cast<double>(samples.size() * C);
  for (auto& v : out) v *= scale;
  return out;
}

std::vector<double> pooled_values(const Samples& samples) {
  if (samples.empty()) throw ContractError("empty sample set");
  std::vector<double> out;
  for (const auto& s : samples) out.insert(out.end(), s.x.values.begin(), s.x.values.end());
  return out;
}

std::vector<double> quantile_sketch(std::vector<double> values, std::size_t points) {
  if (values.empty() || points == 0) throw ContractError("quantile_sketch: empty input");
  std::sort(values.begin(), values.end());
  if (values.size() <= points) return values;
  std::vector<double> out(points);
  const double n = static_cast<double>(values.size());
  for (std::size_t i = 0; i < points; ++i)
    out[i] = values[static_cast<std::size_t>((static_cast<double>(i) + 0.5) * n / static_cast<double>(points))];
  return out;
}

std::string to_string(SimilarityMetric m) {
  switch (m) {
    case SimilarityMetric::Cosine: return "cosine";
    case SimilarityMetric::Dtw: return "dtw";
    case SimilarityMetric::Wasserstein: return "wasserstein";
  }
  return "cosine";
}

SimilarityMetric metric_from_string(const std::string& s) {
  if (s == "cosine") return SimilarityMetric::Cosine;
  if (s == "dtw") return SimilarityMetric::Dtw;
  if (s == "wasserstein") return SimilarityMetric::Wasserstein;
  throw ContractError("unknown similarity metric '" + s + "' (expected cosine|dtw|wasserstein)");
}

SimilarityProfile make_profile(const EmbeddingEncoder& enc, const Samples& samples, const std::string& dataset,
                               const std::string& condition) {
  SimilarityProfile p;
  p.embedding = dataset_embedding(enc, samples, dataset, condition);
  p.mean_series = mean_channel_averaged_series(samples);
  p.values = quantile_sketch(pooled_values(samples), kQuantileSketch);
  return p;
}

double similarity(const SimilarityProfile& a, const SimilarityProfile& b, SimilarityMetric metric) {
  switch (metric) {
    case SimilarityMetric::Cosine: return cosine_similarity(a.embedding.vector, b.embedding.vector);
    case SimilarityMetric::Dtw: return -dtw_distance(a.mean_series, b.mean_series);
    case SimilarityMetric::Wasserstein: return -wasserstein_1d(a.values, b.values);
  }
  return 0.0;
}

Match most_similar(const std::vector<Match>& candidates) {
  if (candidates.empty()) throw ContractError("most_similar: no candidates");
  Match best = candidates.front();
  for (const auto& c : candidates)
    if (c.score > best.score || (c.score == best.score && c.name < best.name)) best = c;
  return best;
}

Match most_similar_dataset(const SimilarityProfile& incoming, const std::vector<SimilarityProfile>& candidates,
                           SimilarityMetric metric) {
  if (candidates.empty()) throw ContractError("most_similar_dataset: empty benchmark database");
  std::vector<Match> scored;
  for (const auto& c : candidates) scored.push_back({c.embedding.dataset, similarity(incoming, c, metric)});
  return most_similar(scored);
}

std::string majority_vote(const std::vector<Match>& winners) {
  if (winners.empty()) throw ContractError("majority_vote: empty list");
  std::map<std::string, std::pair<std::size_t, double>> tally;  // count, score sum
  for (const auto& w : winners) {
    auto& t = tally[w.name];
    ++t.first;
    t.second += w.score;
  }
  std::string best;
  std::size_t best_count = 0;
  double best_mean = -std::numeric_limits<double>::infinity();
  for (const auto& [name, t] : tally) {  // map order = lexicographic, so strict comparisons keep the smaller name
    const double mean = t.second / static_cast<double>(t.first);
    if (t.first > best_count || (t.first == best_count && mean > best_mean)) {
      best = name;
      best_count = t.first;
      best_mean = mean;
    }
  }
  return best;
}

nlohmann::json encoder_to_json(const EmbeddingEncoder& enc) {
  return {{"channels", enc.channels()},
          {"length", enc.length()},
          {"classes", enc.num_classes()},
          {"params", enc.parameters()}};
}

EmbeddingEncoder encoder_from_json(const nlohmann::json& j) {
  try {
    return EmbeddingEncoder(j.at("channels").get<std::size_t>(), j.at("length").get<std::size_t>(),
                            j.at("classes").get<std::size_t>(), j.at("params").get<std::vector<double>>());
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed encoder record: ") + e.what());
  }
}

nlohmann::json profile_to_json(const SimilarityProfile& p) {
  return {{"dataset", p.embedding.dataset},
          {"condition", p.embedding.condition},
          {"embedding", p.embedding.vector},
          {"mean_series", p.mean_series},
          {"values", p.values}};
}

SimilarityProfile profile_from_json(const nlohmann::json& j) {
  try {
    SimilarityProfile p;
    p.embedding.dataset = j.at("dataset").get<std::string>();
    p.embedding.condition = j.at("condition").get<std::string>();
    p.embedding.vector = j.at("embedding").get<std::vector<double>>();
    p.mean_series = j.at("mean_series").get<std::vector<double>>();
    p.values = j.at("values").get<std::vector<double>>();
    if (p.embedding.vector.size() != kEmbeddingDim) throw IoError("embedding dimension is not 128");
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed similarity profile: ") + e.what());
  }
}

}  // namespace relate
