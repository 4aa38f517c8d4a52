#include "relate/group_classifier.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "relate/detection.hpp"
#include "relate/spectral.hpp"

namespace relate {
namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

double sign_of(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

}  // namespace

std::array<double, kGroupStats> sample_group_stats(const Series& x) {
  const std::size_t C = x.channels, L = x.length;
  if (C == 0 || L < 2) throw ContractError("group features need series of length >= 2");
  double high_ratio = 0.0, flatness = 0.0, wave_ratio = 0.0;
  std::vector<double> diffs;
  diffs.reserve(C * (L - 1));
  std::size_t levels = 0;
  while ((std::size_t{2} << levels) <= L && levels < kWaveletLevels) ++levels;

  for (std::size_t c = 0; c < C; ++c) {
    const auto ch = x.channel(c);
    const auto spec = spectral::fft_padded(ch);
    const std::size_t half = spec.size() / 2;
    double total = 0.0, high = 0.0, log_sum = 0.0;
    for (std::size_t k = 1; k <= half; ++k) {
      const double p = std::norm(spec[k]);
      total += p;
      if (4 * k > spec.size()) high += p;
      log_sum += std::log(p + kLogFloor);
    }
    const double bins = static_cast<double>(std::max<std::size_t>(half, 1));
    high_ratio += total > 0.0 ? high / total : 0.0;
    const double arith = total / bins + kLogFloor;
    flatness += std::clamp(std::exp(log_sum / bins) / arith, 0.0, 1.0);

    if (levels > 0) {
      std::vector<double> padded(spectral::next_pow2(L), 0.0);
      std::copy(ch.begin(), ch.end(), padded.begin());
      const auto d = spectral::haar_decompose(padded, levels);
      double e1 = 0.0, el = 0.0;
      for (double v : d.details.front()) e1 += v * v;
      for (double v : d.details.back()) el += v * v;
      wave_ratio += std::log((e1 + kLogFloor) / (el + kLogFloor));
    }
    for (std::size_t t = 1; t < L; ++t) diffs.push_back(ch[t] - ch[t - 1]);
  }

  const double n = static_cast<double>(diffs.size());
  const double mean = std::accumulate(diffs.begin(), diffs.end(), 0.0) / n;
  double m2 = 0.0, m4 = 0.0, abs_sum = 0.0, abs_max = 0.0;
  for (double d : diffs) {
    const double z = d - mean;
    m2 += z * z;
    m4 += z * z * z * z;
    abs_sum += std::abs(d);
    abs_max = std::max(abs_max, std::abs(d));
  }
  m2 /= n;
  m4 /= n;
  const double kurtosis = m2 > 1e-300 ? m4 / (m2 * m2) : 0.0;
  const double max_mean = abs_sum > 0.0 ? abs_max / (abs_sum / n) : 0.0;

  double agreement = 0.0;
  for (std::size_t t = 1; t < L; ++t) {
    double s = 0.0;
    for (std::size_t c = 0; c < C; ++c) s += sign_of(x.at(c, t) - x.at(c, t - 1));
    agreement += std::abs(s) / static_cast<double>(C);
  }
  agreement /= static_cast<double>(L - 1);

  const double inv_c = 1.0 / static_cast<double>(C);
  return {high_ratio * inv_c, flatness * inv_c, kurtosis, max_mean, wave_ratio * inv_c, agreement};
}

GroupFeatureVector extract_group_features(const Samples& samples) {
  if (samples.size() < 2) throw ContractError("extract_group_features: need at least 2 samples");
  std::array<std::vector<double>, kGroupStats> columns;
  for (const auto& s : samples) {
    const auto st = sample_group_stats(s.x);
    for (std::size_t j = 0; j < kGroupStats; ++j) columns[j].push_back(st[j]);
  }
  GroupFeatureVector out{};
  const double n = static_cast<double>(samples.size());
  for (std::size_t j = 0; j < kGroupStats; ++j) {
    auto& col = columns[j];
    std::sort(col.begin(), col.end());  // summation order independent of sample order
    double mean = 0.0;
    for (double v : col) mean += v;
    mean /= n;
    double var = 0.0;
    for (double v : col) var += (v - mean) * (v - mean);
    out[j] = mean;
    out[kGroupStats + j] = std::sqrt(var / n);
  }
  return out;
}

std::vector<LabeledGroupVector> group_vectors(const Samples& attacked, AttackGroup group, const std::string& tag,
                                              std::uint64_t seed, std::size_t bootstrap) {
  std::vector<LabeledGroupVector> out;
  out.push_back({extract_group_features(attacked), group, tag});
  std::mt19937_64 rng(mix_seed(seed, 0xb007));
  std::uniform_int_distribution<std::size_t> pick(0, attacked.size() - 1);
  for (std::size_t b = 0; b < bootstrap; ++b) {
    Samples resampled;
    resampled.reserve(attacked.size());
    for (std::size_t i = 0; i < attacked.size(); ++i) resampled.push_back(attacked[pick(rng)]);
    out.push_back({extract_group_features(resampled), group, tag + "/b" + std::to_string(b)});
  }
  return out;
}

std::vector<LabeledGroupVector> build_group_training_set(const std::vector<GroupSource>& sources,
                                                         const std::vector<AttackSpec>& attacks, std::uint64_t seed,
                                                         std::size_t bootstrap) {
  std::vector<LabeledGroupVector> out;
  for (std::size_t si = 0; si < sources.size(); ++si) {
    const auto& src = sources[si];
    if (!src.dataset || !src.reference) throw ContractError("group training set: missing dataset or reference model");
    for (std::size_t ai = 0; ai < attacks.size(); ++ai) {
      const auto& spec = attacks[ai];
      const auto attacked = attack_dataset(*src.reference, src.dataset->val, spec, mix_seed(seed, si, ai));
      auto v = group_vectors(attacked.samples, group_of(spec.kind), src.dataset->name + "/" + spec.condition(),
                             mix_seed(seed, si, ai), bootstrap);
      out.insert(out.end(), v.begin(), v.end());
    }
  }
  return out;
}

double GroupClassifier::raw_score(const GroupFeatureVector& f) const {
  double z = base_score;
  for (const auto& s : stumps) z += f[s.feature] <= s.threshold ? s.left : s.right;
  return z;
}

double GroupClassifier::probability(const GroupFeatureVector& f) const { return sigmoid(raw_score(f)); }

GroupClassifier train_group_classifier(const std::vector<LabeledGroupVector>& data, const BoostOptions& options,
                                       std::uint64_t seed) {
  if (options.rounds == 0) throw ContractError("train_group_classifier: rounds must be >= 1");
  if (!(options.subsample > 0.0 && options.subsample <= 1.0))
    throw ContractError("train_group_classifier: subsample must lie in (0, 1]");
  const std::size_t n = data.size();
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = data[i].group == AttackGroup::IterationBased ? 1.0 : 0.0;
  const double positives = std::accumulate(y.begin(), y.end(), 0.0);
  if (n == 0 || positives == 0.0 || positives == static_cast<double>(n))
    throw ContractError("train_group_classifier: training set must contain both groups");

  GroupClassifier clf;
  clf.learning_rate = options.learning_rate;
  const double prior = positives / static_cast<double>(n);
  clf.base_score = std::log(prior / (1.0 - prior));

  std::vector<double> score(n, clf.base_score), g(n), h(n);
  std::vector<std::size_t> rows(n);
  std::mt19937_64 rng(mix_seed(seed, 0x57a4f));
  const auto take = std::max<std::size_t>(1, static_cast<std::size_t>(options.subsample * static_cast<double>(n)));

  for (std::size_t round = 0; round < options.rounds; ++round) {
    for (std::size_t i = 0; i < n; ++i) {
      const double p = sigmoid(score[i]);
      g[i] = p - y[i];
      h[i] = std::max(p * (1.0 - p), 1e-12);
    }
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    if (take < n) {
      std::shuffle(rows.begin(), rows.end(), rng);
      rows.resize(take);
    }
    double G = 0.0, H = 0.0;
    for (auto i : rows) {
      G += g[i];
      H += h[i];
    }
    const double lambda = options.lambda;
    const double parent = G * G / (H + lambda);

    Stump best;
    best.feature = 0;
    best.threshold = -std::numeric_limits<double>::infinity();
    double best_gain = -std::numeric_limits<double>::infinity();
    bool found = false;
    std::vector<std::size_t> order = rows;
    for (std::size_t j = 0; j < kGroupFeatures; ++j) {
      std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const double va = data[a].features[j], vb = data[b].features[j];
        return va < vb || (va == vb && a < b);
      });
      double gl = 0.0, hl = 0.0;
      for (std::size_t k = 0; k + 1 < order.size(); ++k) {
        gl += g[order[k]];
        hl += h[order[k]];
        const double v = data[order[k]].features[j], next = data[order[k + 1]].features[j];
        if (!(v < next)) continue;
        const double gr = G - gl, hr = H - hl;
        const double gain = gl * gl / (hl + lambda) + gr * gr / (hr + lambda) - parent;
        if (gain > best_gain) {
          best_gain = gain;
          found = true;
          best.feature = j;
          best.threshold = v + (next - v) / 2.0;
          best.left = -gl / (hl + lambda) * options.learning_rate;
          best.right = -gr / (hr + lambda) * options.learning_rate;
        }
      }
    }
    if (!found) {  // every feature constant on the rows: a single leaf
      best.threshold = std::numeric_limits<double>::max();
      best.left = best.right = -G / (H + lambda) * options.learning_rate;
    }
    for (std::size_t i = 0; i < n; ++i) score[i] += data[i].features[best.feature] <= best.threshold ? best.left : best.right;
    clf.stumps.push_back(best);
  }
  return clf;
}

GroupPrediction predict_group(const GroupClassifier& clf, const GroupFeatureVector& features) {
  if (!clf.trained()) throw ContractError("predict_group: classifier is untrained");
  GroupPrediction p;
  p.probability_group1 = clf.probability(features);
  p.group = p.probability_group1 >= 0.5 ? AttackGroup::IterationBased : AttackGroup::OptimizationDecisionBased;
  p.confidence = std::abs(2.0 * p.probability_group1 - 1.0);
  return p;
}

GroupPrediction predict_group(const GroupClassifier& clf, const Samples& samples) {
  if (!clf.trained()) throw ContractError("predict_group: classifier is untrained");
  return predict_group(clf, extract_group_features(samples));
}

nlohmann::json group_classifier_to_json(const GroupClassifier& clf) {
  nlohmann::json j;
  j["base_score"] = clf.base_score;
  j["learning_rate"] = clf.learning_rate;
  auto& trees = j["stumps"] = nlohmann::json::array();
  for (const auto& s : clf.stumps)
    trees.push_back({{"feature", s.feature}, {"threshold", s.threshold}, {"left", s.left}, {"right", s.right}});
  return j;
}

GroupClassifier group_classifier_from_json(const nlohmann::json& j) {
  try {
    GroupClassifier clf;
    clf.base_score = j.at("base_score").get<double>();
    clf.learning_rate = j.at("learning_rate").get<double>();
    for (const auto& t : j.at("stumps")) {
      Stump s;
      s.feature = t.at("feature").get<std::size_t>();
      if (s.feature >= kGroupFeatures) throw IoError("group classifier: feature index out of range");
      s.threshold = t.at("threshold").get<double>();
      s.left = t.at("left").get<double>();
      s.right = t.at("right").get<double>();
      clf.stumps.push_back(s);
    }
    return clf;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed group classifier: ") + e.what());
  }
}

}  // namespace relate
