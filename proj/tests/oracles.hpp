#pragma once

// Slow, obviously-correct reference implementations used as test oracles.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "relate/pipeline.hpp"

namespace relate::oracle {

// Minimum cost over every monotone warping path, by explicit enumeration.
inline double dtw_bruteforce(const std::vector<double>& a, const std::vector<double>& b) {
  double best = std::numeric_limits<double>::infinity();
  std::function<void(std::size_t, std::size_t, double)> walk = [&](std::size_t i, std::size_t j, double cost) {
    cost += std::abs(a[i] - b[j]);
    if (i + 1 == a.size() && j + 1 == b.size()) {
      best = std::min(best, cost);
      return;
    }
    if (i + 1 < a.size()) walk(i + 1, j, cost);
    if (j + 1 < b.size()) walk(i, j + 1, cost);
    if (i + 1 < a.size() && j + 1 < b.size()) walk(i + 1, j + 1, cost);
  };
  walk(0, 0, 0.0);
  return best;
}

// W1 as the integral of |F_a(x) - F_b(x)| over x.
inline double wasserstein_cdf(std::vector<double> a, std::vector<double> b) {
  std::vector<double> pts(a);
  pts.insert(pts.end(), b.begin(), b.end());
  std::sort(pts.begin(), pts.end());
  auto cdf = [](const std::vector<double>& s, double x) {
    std::size_t c = 0;
    for (double v : s) c += v <= x;
    return double(c) / double(s.size());
  };
  double total = 0.0;
  for (std::size_t k = 0; k + 1 < pts.size(); ++k) total += std::abs(cdf(a, pts[k]) - cdf(b, pts[k])) * (pts[k + 1] - pts[k]);
  return total;
}

inline std::string majority_vote(const std::vector<Match>& w) {
  std::vector<std::string> names;
  for (const auto& m : w)
    if (std::find(names.begin(), names.end(), m.name) == names.end()) names.push_back(m.name);
  std::string best;
  std::size_t best_n = 0;
  double best_mean = 0.0;
  for (const auto& n : names) {
    std::size_t cnt = 0;
    double sum = 0.0;
    for (const auto& m : w)
      if (m.name == n) ++cnt, sum += m.score;
    const double mean = sum / double(cnt);
    bool take = false;
    if (best.empty() || cnt > best_n) take = true;
    else if (cnt == best_n && mean > best_mean) take = true;
    else if (cnt == best_n && mean == best_mean && n < best) take = true;
    if (take) best = n, best_n = cnt, best_mean = mean;
  }
  return best;
}

// Repeated selection of the best remaining model.
inline std::vector<std::string> top3(const std::vector<PerformanceRecord>& rows, const std::string& dataset, bool by_asr,
                                     const std::vector<std::string>& conditions) {
  struct Row {
    std::string model;
    double score, f1;
  };
  std::vector<Row> pool;
  std::vector<std::string> seen;
  for (const auto& r : rows) {
    if (r.dataset != dataset || std::find(seen.begin(), seen.end(), r.model) != seen.end()) continue;
    seen.push_back(r.model);
    if (!by_asr) {
      for (const auto& q : rows)
        if (q.dataset == dataset && q.model == r.model && q.condition == "clean" && !q.failed) pool.push_back({r.model, q.accuracy, q.f1});
      continue;
    }
    double s = 0.0, f = 0.0;
    std::size_t n = 0;
    bool bad = false;
    for (const auto& c : conditions)
      for (const auto& q : rows)
        if (q.dataset == dataset && q.model == r.model && q.condition == c) {
          bad |= q.failed;
          s += q.asr;
          f += q.f1;
          ++n;
        }
    if (!bad && n == conditions.size()) pool.push_back({r.model, s / double(n), f / double(n)});
  }
  std::vector<std::string> out;
  while (out.size() < 3 && !pool.empty()) {
    std::size_t bi = 0;
    for (std::size_t i = 1; i < pool.size(); ++i) {
      const auto& a = pool[i];
      const auto& b = pool[bi];
      const bool better_score = by_asr ? a.score < b.score : a.score > b.score;
      if (better_score || (a.score == b.score && (a.f1 > b.f1 || (a.f1 == b.f1 && a.model < b.model)))) bi = i;
    }
    out.push_back(pool[bi].model);
    pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(bi));
  }
  return out;
}

inline Baselines baselines(const std::vector<double>& metrics, bool higher, std::uint64_t seed, std::size_t draws) {
  Baselines b;
  b.oracle = metrics[0];
  b.worst = metrics[0];
  for (double m : metrics) {
    if (higher ? m > b.oracle : m < b.oracle) b.oracle = m;
    if (higher ? m < b.worst : m > b.worst) b.worst = m;
  }
  std::mt19937_64 rng(mix_seed(seed, 0x4a1d0));
  std::uniform_int_distribution<std::size_t> pick(0, metrics.size() - 1);
  double sum = 0.0;
  for (std::size_t i = 0; i < draws; ++i) sum += metrics[pick(rng)];
  b.random_mean = sum / double(draws);
  return b;
}

}  // namespace relate::oracle
