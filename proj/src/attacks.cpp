#include "relate/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

namespace relate {

std::vector<AttackKind> attacks_in(AttackGroup g) {
  std::vector<AttackKind> out;
  for (auto k : kAllAttacks)
    if (group_of(k) == g) out.push_back(k);
  return out;
}

std::string to_string(AttackKind k) {
  switch (k) {
    case AttackKind::Fgsm: return "fgsm";
    case AttackKind::Bim: return "bim";
    case AttackKind::Mim: return "mim";
    case AttackKind::AutoPgd: return "autopgd";
    case AttackKind::DeepFool: return "deepfool";
    case AttackKind::ElasticNet: return "elasticnet";
    case AttackKind::Boundary: return "boundary";
  }
  return "unknown";
}

std::string to_string(AttackGroup g) {
  return g == AttackGroup::IterationBased ? "group1-iteration" : "group2-optimization-decision";
}

AttackKind attack_from_string(const std::string& s) {
  for (auto k : kAllAttacks)
    if (to_string(k) == s) return k;
  throw ContractError("unknown attack '" + s + "'");
}

AttackGroup group_from_string(const std::string& s) {
  if (s == to_string(AttackGroup::IterationBased) || s == "1") return AttackGroup::IterationBased;
  if (s == to_string(AttackGroup::OptimizationDecisionBased) || s == "2") return AttackGroup::OptimizationDecisionBased;
  throw ContractError("unknown attack group '" + s + "'");
}

std::string AttackSpec::condition() const {
  std::ostringstream os;
  os << to_string(kind);
  if (group_of(kind) == AttackGroup::IterationBased) os << '@' << epsilon;
  return os.str();
}

AttackSpec default_attack(AttackKind kind, double epsilon) {
  AttackSpec s;
  s.kind = kind;
  s.epsilon = epsilon;
  switch (kind) {
    case AttackKind::Fgsm: s.iterations = 1; break;
    case AttackKind::Bim:
    case AttackKind::Mim:
    case AttackKind::AutoPgd: s.iterations = 10; break;
    case AttackKind::DeepFool: s.iterations = 50; break;
    case AttackKind::ElasticNet: s.iterations = 100; break;
    case AttackKind::Boundary: s.iterations = 500; break;
  }
  return s;
}

namespace {

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

void check_epsilon(double epsilon) {
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw ContractError("epsilon must lie in [0, 1]");
}

void project_linf(Series& xa, const Series& x, double epsilon) {
  for (std::size_t i = 0; i < xa.values.size(); ++i)
    xa.values[i] = std::clamp(xa.values[i], x.values[i] - epsilon, x.values[i] + epsilon);
}

double l2_distance(const Series& a, const Series& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) s += (a.values[i] - b.values[i]) * (a.values[i] - b.values[i]);
  return std::sqrt(s);
}

}  // namespace

Series fgsm(const TrainedModel& model, const Series& x, std::size_t label, double epsilon) {
  check_epsilon(epsilon);
  const auto lg = model.ascent_direction(x, label);
  Series out = x;
  for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] += epsilon * sign(lg.direction.values[i]);
  return out;
}

Series bim(const TrainedModel& model, const Series& x, std::size_t label, double epsilon, std::size_t iterations) {
  check_epsilon(epsilon);
  if (iterations < 1) throw ContractError("bim: iterations must be >= 1");
  const double alpha = epsilon / static_cast<double>(iterations);
  Series xa = x;
  for (std::size_t t = 0; t < iterations; ++t) {
    const auto lg = model.ascent_direction(xa, label);
    for (std::size_t i = 0; i < xa.values.size(); ++i) xa.values[i] += alpha * sign(lg.direction.values[i]);
    project_linf(xa, x, epsilon);
  }
  return xa;
}

Series mim(const TrainedModel& model, const Series& x, std::size_t label, double epsilon, std::size_t iterations,
           double momentum) {
  check_epsilon(epsilon);
  if (iterations < 1) throw ContractError("mim: iterations must be >= 1");
  if (!(momentum >= 0.0)) throw ContractError("mim: momentum must be >= 0");
  const double alpha = epsilon / static_cast<double>(iterations);
  Series xa = x;
  std::vector<double> g(x.values.size(), 0.0);
  for (std::size_t t = 0; t < iterations; ++t) {
    const auto lg = model.ascent_direction(xa, label);
    double l1 = 0.0;
    for (double v : lg.direction.values) l1 += std::abs(v);
    if (l1 == 0.0) continue;
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = momentum * g[i] + lg.direction.values[i] / l1;
    for (std::size_t i = 0; i < xa.values.size(); ++i) xa.values[i] += alpha * sign(g[i]);
    project_linf(xa, x, epsilon);
  }
  return xa;
}

PgdResult auto_pgd(const TrainedModel& model, const Series& x, std::size_t label, double epsilon, std::size_t iterations) {
  check_epsilon(epsilon);
  if (iterations < 2) throw ContractError("auto_pgd: iterations must be >= 2");
  double step = 2.0 * epsilon / static_cast<double>(iterations);
  PgdResult r;
  Series cur = x;
  auto lg = model.ascent_direction(cur, label);
  r.iterate_losses.push_back(lg.loss);
  r.x = cur;
  r.loss = lg.loss;
  double best_margin = lg.margin, prev_margin = lg.margin;  // ordered like the loss, without underflow
  std::size_t stalls = 0;
  for (std::size_t t = 0; t < iterations; ++t) {
    for (std::size_t i = 0; i < cur.values.size(); ++i) cur.values[i] += step * sign(lg.direction.values[i]);
    project_linf(cur, x, epsilon);
    lg = model.ascent_direction(cur, label);
    r.iterate_losses.push_back(lg.loss);
    if (lg.margin > best_margin) {
      best_margin = lg.margin;
      r.loss = lg.loss;
      r.x = cur;
    }
    stalls = lg.margin > prev_margin ? 0 : stalls + 1;
    prev_margin = lg.margin;
    if (stalls >= 2) {
      step *= 0.5;
      stalls = 0;
      // restart from the best iterate with the smaller step
      cur = r.x;
      lg = model.ascent_direction(cur, label);
      prev_margin = lg.margin;
    }
  }
  return r;
}

AttackOutcome deepfool(const TrainedModel& model, const Series& x, std::size_t label, std::size_t iterations,
                       double overshoot) {
  if (model.num_classes() < 2) throw ContractError("deepfool: model needs at least 2 classes");
  if (label >= model.num_classes()) throw ContractError("deepfool: label out of range");
  AttackOutcome out{x, false, 0};
  if (model.predict(x) != label) {
    out.adversarial = true;
    return out;
  }
  std::vector<double> r_total(x.values.size(), 0.0);
  Series xi = x;
  for (std::size_t step = 0; step < iterations; ++step) {
    std::vector<double> logits;
    const auto jac = model.logit_jacobian(xi, &logits);
    double best_pert = std::numeric_limits<double>::infinity();
    std::vector<double> best_w;
    double best_f = 0.0;
    for (std::size_t k = 0; k < model.num_classes(); ++k) {
      if (k == label) continue;
      std::vector<double> w(x.values.size());
      double norm2 = 0.0;
      for (std::size_t i = 0; i < w.size(); ++i) {
        w[i] = jac[k].values[i] - jac[label].values[i];
        norm2 += w[i] * w[i];
      }
      if (norm2 == 0.0) continue;
      const double f = logits[k] - logits[label];
      const double pert = std::abs(f) / std::sqrt(norm2);
      if (pert < best_pert) {
        best_pert = pert;
        best_w = std::move(w);
        best_f = f;
      }
    }
    if (best_w.empty()) break;  // flat logits: no direction to follow
    double norm2 = 0.0;
    for (double v : best_w) norm2 += v * v;
    const double coeff = std::abs(best_f) / norm2;
    for (std::size_t i = 0; i < r_total.size(); ++i) r_total[i] += coeff * best_w[i];
    for (std::size_t i = 0; i < xi.values.size(); ++i) xi.values[i] = x.values[i] + (1.0 + overshoot) * r_total[i];
    out.steps = step + 1;
    if (model.predict(xi) != label) {
      out.adversarial = true;
      break;
    }
  }
  out.x = xi;
  return out;
}

double soft_threshold(double v, double beta) {
  if (v > beta) return v - beta;
  if (v < -beta) return v + beta;
  return 0.0;
}

AttackOutcome elastic_net(const TrainedModel& model, const Series& x, std::size_t label, std::size_t iterations,
                          double beta) {
  if (!(beta > 0.0)) throw ContractError("elastic_net: beta must be > 0");
  if (label >= model.num_classes()) throw ContractError("elastic_net: label out of range");
  constexpr double step = 0.1;       // largest per-coordinate move of the loss step
  constexpr double l2_weight = 0.05;
  AttackOutcome out{x, false, 0};
  if (model.predict(x) != label) {
    out.adversarial = true;
    return out;
  }
  const std::size_t n = x.values.size();
  std::vector<double> delta(n, 0.0);
  std::vector<double> w(model.num_classes(), 0.0);
  double best_cost = std::numeric_limits<double>::infinity();
  Series xa = x;
  for (std::size_t t = 0; t < iterations; ++t) {
    for (std::size_t i = 0; i < n; ++i) xa.values[i] = x.values[i] + delta[i];
    const auto fwd = model.forward(xa);
    std::size_t runner = label == 0 ? 1 : 0;
    for (std::size_t k = 0; k < fwd.logits.size(); ++k)
      if (k != label && fwd.logits[k] > fwd.logits[runner]) runner = k;
    std::vector<double> g(n, 0.0);
    if (fwd.logits[label] >= fwd.logits[runner]) {
      std::fill(w.begin(), w.end(), 0.0);
      w[label] = 1.0;
      w[runner] = -1.0;
      const auto grad = model.logit_gradient(xa, w);
      double inf = 0.0;
      for (double v : grad.values) inf = std::max(inf, std::abs(v));
      if (inf > 0.0)
        for (std::size_t i = 0; i < n; ++i) g[i] = grad.values[i] / inf;
    }
    for (std::size_t i = 0; i < n; ++i) delta[i] = soft_threshold(delta[i] - step * (g[i] + 2.0 * l2_weight * delta[i]), beta);
    out.steps = t + 1;

    for (std::size_t i = 0; i < n; ++i) xa.values[i] = x.values[i] + delta[i];
    if (model.predict(xa) != label) {
      double l1 = 0.0, l2 = 0.0;
      for (double d : delta) {
        l1 += std::abs(d);
        l2 += d * d;
      }
      const double cost = beta * l1 + l2;
      if (cost < best_cost) {
        best_cost = cost;
        out.x = xa;
        out.adversarial = true;
      }
    }
  }
  if (!out.adversarial) out.x = xa;
  return out;
}

BoundaryResult boundary_attack(const LabelOracle& model, const Series& x, std::size_t label, std::size_t iterations,
                               std::uint64_t seed) {
  BoundaryResult r;
  r.outcome = {x, false, 0};
  if (model.predict(x) != label) {
    r.outcome.adversarial = true;
    return r;
  }
  std::mt19937_64 rng(mix_seed(seed, 0xb0da));
  std::normal_distribution<double> gauss(0.0, 1.0);
  const std::size_t n = x.values.size();

  double mean = 0.0, var = 0.0;
  for (double v : x.values) mean += v;
  mean /= static_cast<double>(n);
  for (double v : x.values) var += (v - mean) * (v - mean);
  const double sd = std::max(std::sqrt(var / static_cast<double>(n)), 1e-3);

  // Initialization: Gaussian draws around the sample's statistics until one is misclassified.
  Series start = x;
  bool found = false;
  for (std::size_t draw = 0; draw < 1000 && !found; ++draw) {
    for (auto& v : start.values) v = mean + sd * gauss(rng);
    found = model.predict(start) != label;
  }
  if (!found) throw ContractError("attack initialization failed");

  // Blend toward x while staying misclassified.
  double lo = 0.0, hi = 1.0;
  Series probe = x;
  for (int it = 0; it < 20; ++it) {
    const double mid = 0.5 * (lo + hi);
    for (std::size_t i = 0; i < n; ++i) probe.values[i] = x.values[i] + mid * (start.values[i] - x.values[i]);
    if (model.predict(probe) != label) hi = mid;
    else lo = mid;
  }
  Series adv = x;
  for (std::size_t i = 0; i < n; ++i) adv.values[i] = x.values[i] + hi * (start.values[i] - x.values[i]);
  double dist = l2_distance(adv, x);
  r.accepted_distances.push_back(dist);
  r.accepted_misclassified.push_back(1);

  double spherical = 0.05, source = 0.05;
  std::size_t window_trials = 0, window_hits = 0;
  std::vector<double> eta(n);
  Series cand = x;
  for (std::size_t t = 0; t < iterations; ++t) {
    if (dist <= 0.0) break;
    // direction from adv to x
    double dot = 0.0, norm2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) eta[i] = gauss(rng);
    for (std::size_t i = 0; i < n; ++i) dot += eta[i] * (x.values[i] - adv.values[i]);
    const double scale_dir = dot / (dist * dist);
    for (std::size_t i = 0; i < n; ++i) {
      eta[i] -= scale_dir * (x.values[i] - adv.values[i]);
      norm2 += eta[i] * eta[i];
    }
    const double eta_scale = norm2 > 0.0 ? spherical * dist / std::sqrt(norm2) : 0.0;
    for (std::size_t i = 0; i < n; ++i) cand.values[i] = adv.values[i] + eta_scale * eta[i];
    // back onto the sphere of radius dist, then contract toward x
    const double cd = l2_distance(cand, x);
    const double shrink = (dist / cd) * (1.0 - source);
    for (std::size_t i = 0; i < n; ++i) cand.values[i] = x.values[i] + shrink * (cand.values[i] - x.values[i]);
    const double new_dist = l2_distance(cand, x);

    ++window_trials;
    if (new_dist <= dist && model.predict(cand) != label) {
      ++window_hits;
      adv = cand;
      dist = new_dist;
      r.accepted_distances.push_back(dist);
      r.accepted_misclassified.push_back(1);
    }
    if (window_trials == 10) {
      const double rate = static_cast<double>(window_hits) / 10.0;
      if (rate > 0.5) {
        spherical = std::min(spherical * 1.5, 0.5);
        source = std::min(source * 1.5, 0.5);
      } else if (rate < 0.2) {
        spherical /= 1.5;
        source /= 1.5;
      }
      window_trials = window_hits = 0;
    }
    r.outcome.steps = t + 1;
  }
  r.outcome.x = adv;
  r.outcome.adversarial = true;
  return r;
}

AttackedSet attack_dataset(const TrainedModel& model, const Samples& samples, const AttackSpec& spec, std::uint64_t seed) {
  AttackedSet out;
  out.samples.reserve(samples.size());
  out.adversarial.assign(samples.size(), 0);
  out.errors.assign(samples.size(), std::string());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    Sample a{s.x, s.label};
    try {
      switch (spec.kind) {
        case AttackKind::Fgsm: a.x = fgsm(model, s.x, s.label, spec.epsilon); break;
        case AttackKind::Bim: a.x = bim(model, s.x, s.label, spec.epsilon, spec.iterations); break;
        case AttackKind::Mim: a.x = mim(model, s.x, s.label, spec.epsilon, spec.iterations, spec.momentum); break;
        case AttackKind::AutoPgd: a.x = auto_pgd(model, s.x, s.label, spec.epsilon, spec.iterations).x; break;
        case AttackKind::DeepFool: a.x = deepfool(model, s.x, s.label, spec.iterations, spec.overshoot).x; break;
        case AttackKind::ElasticNet: a.x = elastic_net(model, s.x, s.label, spec.iterations, spec.beta).x; break;
        case AttackKind::Boundary:
          a.x = boundary_attack(model, s.x, s.label, spec.iterations, mix_seed(seed, i)).outcome.x;
          break;
      }
    } catch (const ContractError& e) {
      out.errors[i] = e.what();
      a.x = s.x;
    }
    if (spec.clip_min || spec.clip_max)
      for (auto& v : a.x.values) {
        if (spec.clip_min) v = std::max(v, *spec.clip_min);
        if (spec.clip_max) v = std::min(v, *spec.clip_max);
      }
    out.adversarial[i] = model.predict(a.x) != s.label;
    out.samples.push_back(std::move(a));
  }
  return out;
}

double attack_success_rate(const LabelOracle& model, const Samples& clean, const Samples& attacked) {
  if (clean.size() != attacked.size()) throw ContractError("attack_success_rate: length mismatch");
  if (clean.empty()) return 0.0;
  std::size_t changed = 0;
  for (std::size_t i = 0; i < clean.size(); ++i) changed += model.predict(clean[i].x) != model.predict(attacked[i].x);
  return static_cast<double>(changed) / static_cast<double>(clean.size());
}

}  // namespace relate
