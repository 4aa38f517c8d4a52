#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "relate/attacks.hpp"

using namespace relate;

namespace {
double linf(const Series& a, const Series& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.values[i] - b.values[i]));
  return m;
}
double l2(const Series& a, const Series& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a.values[i] - b.values[i]) * (a.values[i] - b.values[i]);
  return std::sqrt(s);
}
double zero_fraction(const Series& a, const Series& b) {
  std::size_t z = 0;
  for (std::size_t i = 0; i < a.size(); ++i) z += a.values[i] == b.values[i];
  return double(z) / double(a.size());
}

// Labels from a quantized sum: zero gradient almost everywhere.
class StepOracle final : public LabelOracle {
 public:
  std::size_t predict(const Series& x) const override {
    double s = 0.0;
    for (double v : x.values) s += std::floor(4.0 * v);
    return s > 0.0 ? 1 : 0;
  }
  std::size_t num_classes() const override { return 2; }
};

class FixedOracle final : public LabelOracle {
 public:
  std::size_t predict(const Series& x) const override { return x.values[0] > 0.5 ? 1 : 0; }
  std::size_t num_classes() const override { return 2; }
};
}  // namespace

TEST_SUITE("attacks") {
  TEST_CASE("names round trip and taxonomy") {
    for (auto k : kAllAttacks) CHECK(attack_from_string(to_string(k)) == k);
    CHECK(group_of(AttackKind::Fgsm) == AttackGroup::IterationBased);
    CHECK(group_of(AttackKind::Boundary) == AttackGroup::OptimizationDecisionBased);
    CHECK(attacks_in(AttackGroup::IterationBased).size() == 4);
    CHECK(attacks_in(AttackGroup::OptimizationDecisionBased).size() == 3);
    CHECK_THROWS_AS(attack_from_string("nope"), ContractError);
  }

  TEST_CASE("fgsm") {
    const auto& m = test::default_mlp();
    const auto& ds = test::default_dataset();
    for (const auto& s : ds.test) {
      CHECK(fgsm(m, s.x, s.label, 0.0) == s.x);
      const auto adv = fgsm(m, s.x, s.label, 0.1);
      CHECK(linf(adv, s.x) <= 0.1 + 1e-9);
      const auto g = m.loss_and_input_gradient(s.x, s.label).grad;
      for (std::size_t i = 0; i < g.size(); ++i)
        if (g.values[i] != 0.0) CHECK(std::abs(adv.values[i] - s.x.values[i]) == doctest::Approx(0.1).epsilon(1e-12));
    }
  }

  TEST_CASE("gradient attacks still move on saturated models") {
    // logit gap ~1e4: every softmax term except the label's underflows
    const std::vector<double> w{50.0, -40.0, 30.0, -20.0};
    const auto m = test::binary_linear(w, 0.0, 1, 4);
    Series x(1, 4);
    x.values = {-50.0, 40.0, -30.0, 20.0};
    REQUIRE(m.predict(x) == 0);
    const auto raw = m.loss_and_input_gradient(x, 0);
    CHECK(std::all_of(raw.grad.values.begin(), raw.grad.values.end(), [](double v) { return v == 0.0; }));
    const auto adv = fgsm(m, x, 0, 0.1);
    for (std::size_t i = 0; i < w.size(); ++i) CHECK(adv.values[i] - x.values[i] == doctest::Approx(w[i] > 0 ? 0.1 : -0.1));
    CHECK(linf(bim(m, x, 0, 0.1, 10), x) == doctest::Approx(0.1));
    CHECK(linf(auto_pgd(m, x, 0, 0.1, 10).x, x) == doctest::Approx(0.1));
  }

  TEST_CASE("fgsm flips a linear model inside the l1 margin") {
    const std::vector<double> w{0.5, -1.0, 2.0, 0.25};
    const auto m = test::binary_linear(w, 0.0, 1, 4);
    const double eps = 0.1;  // eps * ||w||_1 = 0.375
    Series x(1, 4);
    x.values = {0.2, 0.1, 0.1, 0.0};  // margin w.x = 0.2
    REQUIRE(m.predict(x) == 1);
    const auto adv = fgsm(m, x, 1, eps);
    double moved = 0.0;
    for (std::size_t i = 0; i < 4; ++i) moved += w[i] * adv.values[i];
    CHECK(moved == doctest::Approx(0.2 - 0.375).epsilon(1e-12));
    CHECK(m.predict(adv) == 0);
  }

  TEST_CASE("bim and mim") {
    const auto& m = test::default_mlp();
    const auto& ds = test::default_dataset();
    std::size_t stronger = 0;
    for (const auto& s : ds.test) {
      CHECK(bim(m, s.x, s.label, 0.1, 1) == fgsm(m, s.x, s.label, 0.1));
      const auto b = bim(m, s.x, s.label, 0.1, 10);
      CHECK(linf(b, s.x) <= 0.1 + 1e-12);
      stronger += m.loss_and_input_gradient(b, s.label).loss >=
                  m.loss_and_input_gradient(fgsm(m, s.x, s.label, 0.1), s.label).loss;
      CHECK(mim(m, s.x, s.label, 0.1, 10, 0.0) == b);
      const auto mm = mim(m, s.x, s.label, 0.1, 10, 1.0);
      CHECK(linf(mm, s.x) <= 0.1 + 1e-12);
      CHECK(mim(m, s.x, s.label, 0.1, 10, 1.0) == mm);
    }
    CHECK(stronger >= ds.test.size() * 8 / 10);
  }

  TEST_CASE("auto pgd") {
    const auto& m = test::default_mlp();
    const auto& ds = test::default_dataset();
    std::size_t at_least = 0;
    for (const auto& s : ds.test) {
      const auto r = auto_pgd(m, s.x, s.label, 0.1, 10);
      CHECK(linf(r.x, s.x) <= 0.1 + 1e-12);
      CHECK(r.loss == *std::max_element(r.iterate_losses.begin(), r.iterate_losses.end()));
      CHECK(r.loss == doctest::Approx(m.loss_and_input_gradient(r.x, s.label).loss).epsilon(1e-12));
      at_least += r.loss >= m.loss_and_input_gradient(bim(m, s.x, s.label, 0.1, 10), s.label).loss;
    }
    CHECK(at_least >= ds.test.size() * 6 / 10);
  }

  TEST_CASE("deepfool on a linear model is the hyperplane projection") {
    const std::vector<double> w{0.3, -0.7, 1.1, 0.4, -0.2, 0.9};
    const double b = 0.15;
    const auto m = test::binary_linear(w, b, 2, 3);
    std::mt19937_64 rng(5);
    for (int t = 0; t < 20; ++t) {
      const auto x = test::random_series(2, 3, rng);
      double f = b, n2 = 0.0;
      for (std::size_t i = 0; i < w.size(); ++i) f += w[i] * x.values[i], n2 += w[i] * w[i];
      const std::size_t label = f > 0.0 ? 1 : 0;
      const auto r = deepfool(m, x, label, 50, 0.02);
      CHECK(r.adversarial);
      CHECK(r.steps == 1);
      for (std::size_t i = 0; i < w.size(); ++i)
        CHECK(r.x.values[i] == doctest::Approx(x.values[i] - 1.02 * f * w[i] / n2).epsilon(1e-6));
    }
  }

  TEST_CASE("deepfool perturbations are small and respect misclassified inputs") {
    const auto& m = test::default_mlp();
    const auto& ds = test::default_dataset();
    std::size_t flipped = 0, smaller = 0;
    for (const auto& s : ds.test) {
      const auto r = deepfool(m, s.x, s.label);
      if (m.predict(s.x) != s.label) {
        CHECK(r.x == s.x);
        CHECK(r.steps == 0);
        continue;
      }
      const auto f = fgsm(m, s.x, s.label, 0.1);
      if (!r.adversarial || m.predict(f) == s.label) continue;  // compare only where both flip
      ++flipped;
      smaller += l2(r.x, s.x) <= l2(f, s.x);
    }
    REQUIRE(flipped > 0);
    CHECK(smaller >= flipped * 7 / 10);
  }

  TEST_CASE("elastic net") {
    CHECK(soft_threshold(0.5, 0.2) == doctest::Approx(0.3));
    CHECK(soft_threshold(-0.1, 0.2) == 0.0);
    CHECK(soft_threshold(-0.5, 0.2) == doctest::Approx(-0.3));
    const auto& m = test::default_mlp();
    const auto& ds = test::default_dataset();
    std::size_t flipped = 0, sparser = 0;
    for (const auto& s : ds.test) {
      CHECK(elastic_net(m, s.x, s.label, 100, 10.0).x == s.x);
      const auto r = elastic_net(m, s.x, s.label);
      if (!r.adversarial || m.predict(s.x) != s.label) continue;
      ++flipped;
      sparser += zero_fraction(r.x, s.x) >= zero_fraction(bim(m, s.x, s.label, 0.1, 10), s.x);
    }
    REQUIRE(flipped > 0);
    CHECK(sparser >= flipped * 8 / 10);
  }

  TEST_CASE("boundary attack") {
    const auto& m = test::default_mlp();
    const auto& ds = test::default_dataset();
    for (std::size_t j = 0; j < 5; ++j) {
      const auto& s = ds.test[j];
      if (m.predict(s.x) != s.label) continue;
      const auto r = boundary_attack(m, s.x, s.label, 500, 3);
      REQUIRE(!r.accepted_distances.empty());
      for (char mis : r.accepted_misclassified) CHECK(mis == 1);
      for (std::size_t i = 1; i < r.accepted_distances.size(); ++i)
        CHECK(r.accepted_distances[i] <= r.accepted_distances[i - 1]);
      CHECK(r.outcome.adversarial);
      CHECK(m.predict(r.outcome.x) != s.label);
      CHECK(l2(r.outcome.x, s.x) == doctest::Approx(r.accepted_distances.back()).epsilon(1e-9));
      CHECK(boundary_attack(m, s.x, s.label, 500, 3).outcome.x == r.outcome.x);
    }
  }

  TEST_CASE("boundary attack needs only labels") {
    StepOracle oracle;
    std::mt19937_64 rng(9);
    std::size_t done = 0;
    for (int t = 0; t < 10; ++t) {
      auto x = test::random_series(1, 32, rng, 0.5);
      for (auto& v : x.values) v += 0.3;
      const auto label = oracle.predict(x);
      const auto r = boundary_attack(oracle, x, label, 300, t);
      CHECK(oracle.predict(r.outcome.x) != label);
      done += r.accepted_distances.back() < r.accepted_distances.front();
    }
    CHECK(done >= 8);
  }

  TEST_CASE("attack_dataset and success rate") {
    const auto& m = test::default_mlp();
    const auto& ds = test::default_dataset();
    const auto same = attack_dataset(m, ds.test, default_attack(AttackKind::Fgsm, 0.0), 1);
    CHECK(same.samples == ds.test);
    CHECK(attack_success_rate(m, ds.test, same.samples) == 0.0);
    for (auto k : kAllAttacks) {
      const auto r = attack_dataset(m, ds.test, default_attack(k, 0.1), 1);
      CHECK(r.samples.size() == ds.test.size());
      for (std::size_t i = 0; i < r.samples.size(); ++i) CHECK(r.samples[i].label == ds.test[i].label);
    }
    const double hi = attack_success_rate(m, ds.test, attack_dataset(m, ds.test, default_attack(AttackKind::Fgsm, 0.1), 1).samples);
    const double lo = attack_success_rate(m, ds.test, attack_dataset(m, ds.test, default_attack(AttackKind::Fgsm, 0.01), 1).samples);
    CHECK(hi > lo);

    FixedOracle o;
    Samples c, a;
    for (double v : {1.0, 0.0, 1.0}) c.push_back({Series(1, 1, v), 0});
    for (double v : {1.0, 1.0, 1.0}) a.push_back({Series(1, 1, v), 0});
    CHECK(attack_success_rate(o, c, a) == doctest::Approx(1.0 / 3.0));
    std::swap(c[0], c[1]);
    std::swap(a[0], a[1]);
    CHECK(attack_success_rate(o, c, a) == doctest::Approx(1.0 / 3.0));
    a.pop_back();
    CHECK_THROWS_AS(attack_success_rate(o, c, a), ContractError);
  }
}
