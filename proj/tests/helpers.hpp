#pragma once

#include <random>

#include "relate/models.hpp"

namespace relate::test {

inline const Dataset& default_dataset() {
  static const Dataset ds = [] {
    SyntheticSpec s;
    s.seed = 7;
    return generate_synthetic_dataset(s);
  }();
  return ds;
}

inline const TrainedModel& default_mlp() {
  static const TrainedModel m = train(ModelSpec{Architecture::Mlp, 32, 0.01, 30, 16}, default_dataset(), 11);
  return m;
}

inline Series random_series(std::size_t c, std::size_t l, std::mt19937_64& rng, double sd = 1.0) {
  std::normal_distribution<double> g(0.0, sd);
  Series s(c, l);
  for (auto& v : s.values) v = g(rng);
  return s;
}

// K = 2 linear model with logit_0 = 0 and logit_1 = w.x + b.
inline TrainedModel binary_linear(const std::vector<double>& w, double b, std::size_t channels, std::size_t length) {
  std::vector<double> params(2 * w.size() + 2, 0.0);
  std::copy(w.begin(), w.end(), params.begin() + static_cast<std::ptrdiff_t>(w.size()));
  params[2 * w.size() + 1] = b;
  return TrainedModel(ModelSpec{Architecture::Linear, 1, 0.01, 0, 16}, channels, length, 2, params);
}

}  // namespace relate::test
