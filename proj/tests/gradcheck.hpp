#pragma once

#include <cmath>
#include <random>

#include "relate/nn.hpp"

namespace relate::test {

// Cross-entropy of net(x) against `label`, and its input gradient via backward().
inline double net_loss(const nn::Network& net, std::span<const double> params, const Series& x, std::size_t label,
                       Series* grad = nullptr) {
  nn::Trace trace;
  const auto out = net.forward(params, x, grad ? &trace : nullptr);
  const auto p = nn::softmax(out.values);
  if (grad) {
    Series g(out.channels, out.length);
    for (std::size_t k = 0; k < p.size(); ++k) g.values[k] = p[k] - (k == label ? 1.0 : 0.0);
    *grad = net.backward(params, g, trace, {});
  }
  return -std::log(std::max(p[label], 1e-300));
}

struct GradCheck {
  std::size_t agree = 0;
  std::size_t total = 0;
};

// Central differences with step h on `coords` random coordinates of x.
inline GradCheck check_input_gradient(const nn::Network& net, std::span<const double> params, const Series& x,
                                      std::size_t label, std::size_t coords, std::mt19937_64& rng, double h = 1e-4,
                                      double tol = 1e-3) {
  Series g;
  net_loss(net, params, x, label, &g);
  std::uniform_int_distribution<std::size_t> pick(0, x.values.size() - 1);
  GradCheck r;
  for (std::size_t c = 0; c < coords; ++c) {
    const std::size_t i = pick(rng);
    Series xp = x, xm = x;
    xp.values[i] += h;
    xm.values[i] -= h;
    const double fd = (net_loss(net, params, xp, label) - net_loss(net, params, xm, label)) / (2.0 * h);
    const double err = std::abs(fd - g.values[i]);
    const double scale = std::max(std::abs(fd), std::abs(g.values[i]));
    r.agree += (err <= tol * scale || err < 1e-9);
    ++r.total;
  }
  return r;
}

}  // namespace relate::test
