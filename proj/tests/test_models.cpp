#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gradcheck.hpp"
#include "helpers.hpp"
#include "relate/models.hpp"

using namespace relate;

TEST_SUITE("models") {
  TEST_CASE("zero-weight linear model gives uniform probabilities") {
    const std::size_t C = 2, L = 5, K = 4;
    TrainedModel m(ModelSpec{Architecture::Linear, 1, 0.01, 0, 16}, C, L, K, std::vector<double>(C * L * K + K, 0.0));
    std::mt19937_64 rng(1);
    const auto r = m.forward(test::random_series(C, L, rng));
    for (double p : r.probs) CHECK(p == doctest::Approx(0.25).epsilon(1e-12));
  }

  TEST_CASE("softmax normalization and shift invariance") {
    std::mt19937_64 rng(2);
    std::normal_distribution<double> g(0.0, 5.0);
    for (int t = 0; t < 50; ++t) {
      std::vector<double> z(6);
      for (auto& v : z) v = g(rng);
      const auto p = nn::softmax(z);
      CHECK(std::accumulate(p.begin(), p.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-6));
      auto shifted = z;
      for (auto& v : shifted) v += 123.4;
      const auto q = nn::softmax(shifted);
      for (std::size_t k = 0; k < p.size(); ++k) CHECK(q[k] == doctest::Approx(p[k]).epsilon(1e-9));
    }
    const auto big = nn::softmax(std::vector<double>{1000.0, 0.0});
    CHECK(std::isfinite(big[0]));
    CHECK(big[0] == doctest::Approx(1.0));
  }

  TEST_CASE("input gradients match finite differences for every architecture") {
    const std::size_t C = 2, L = 16, K = 3;
    std::mt19937_64 rng(3);
    for (auto a : kZoo) {
      CAPTURE(to_string(a));
      const ModelSpec spec{a, 6, 0.01, 0, 16};
      const auto net = build_network(spec, C, L, K);
      const auto params = net.init_params(17);
      test::GradCheck total;
      for (int s = 0; s < 5; ++s) {
        const auto x = test::random_series(C, L, rng);
        const auto r = test::check_input_gradient(net, params, x, s % K, 20, rng);
        total.agree += r.agree;
        total.total += r.total;
      }
      CHECK(total.agree >= total.total * 95 / 100);
    }
  }

  TEST_CASE("model gradient agrees with the network backward pass") {
    const auto& m = test::default_mlp();
    const auto& x = test::default_dataset().test[0];
    Series g;
    const double loss = test::net_loss(m.network(), m.parameters(), x.x, x.label, &g);
    const auto lg = m.loss_and_input_gradient(x.x, x.label);
    CHECK(lg.loss == doctest::Approx(loss).epsilon(1e-12));
    for (std::size_t i = 0; i < g.size(); ++i) CHECK(lg.grad.values[i] == doctest::Approx(g.values[i]).epsilon(1e-12));
  }

  TEST_CASE("linear model gradient equals the closed form") {
    const std::size_t C = 2, L = 4, K = 3, D = C * L;
    std::mt19937_64 rng(4);
    std::normal_distribution<double> g(0.0, 0.5);
    std::vector<double> params(D * K + K);
    for (auto& v : params) v = g(rng);
    TrainedModel m(ModelSpec{Architecture::Linear, 1, 0.01, 0, 16}, C, L, K, params);
    const auto x = test::random_series(C, L, rng);
    const std::size_t y = 1;
    // (softmax(Wx + b) - onehot(y))^T W
    std::vector<double> z(K);
    for (std::size_t k = 0; k < K; ++k) {
      z[k] = params[D * K + k];
      for (std::size_t i = 0; i < D; ++i) z[k] += params[k * D + i] * x.values[i];
    }
    double zmax = *std::max_element(z.begin(), z.end()), sum = 0.0;
    std::vector<double> p(K);
    for (std::size_t k = 0; k < K; ++k) sum += p[k] = std::exp(z[k] - zmax);
    for (auto& v : p) v /= sum;
    const auto lg = m.loss_and_input_gradient(x, y);
    CHECK(lg.loss == doctest::Approx(-std::log(p[y])).epsilon(1e-10));
    for (std::size_t i = 0; i < D; ++i) {
      double expect = 0.0;
      for (std::size_t k = 0; k < K; ++k) expect += (p[k] - (k == y ? 1.0 : 0.0)) * params[k * D + i];
      CHECK(lg.grad.values[i] == doctest::Approx(expect).epsilon(1e-10));
    }
  }

  TEST_CASE("saturated correct prediction has near-zero loss and gradient") {
    const std::size_t C = 1, L = 3;
    auto m = test::binary_linear({1.0, 1.0, 1.0}, 0.0, C, L);
    Series x(C, L, 20.0);
    const auto lg = m.loss_and_input_gradient(x, 1);
    CHECK(lg.loss < 1e-12);
    for (double v : lg.grad.values) CHECK(std::abs(v) < 1e-12);
  }

  TEST_CASE("ascent direction is a positive multiple of the loss gradient") {
    const auto& m = test::default_mlp();
    const auto& ds = test::default_dataset();
    for (std::size_t n = 0; n < 10; ++n) {
      const auto& s = ds.test[n];
      const auto lg = m.loss_and_input_gradient(s.x, s.label);
      const auto ad = m.ascent_direction(s.x, s.label);
      CHECK(ad.loss == doctest::Approx(lg.loss).epsilon(1e-12));
      const double p = std::exp(-lg.loss);  // probability of the label
      for (std::size_t i = 0; i < lg.grad.size(); ++i)
        CHECK(ad.direction.values[i] * (1.0 - p) == doctest::Approx(lg.grad.values[i]).epsilon(1e-6).scale(1e-12));
    }
  }

  TEST_CASE("mlp training on the default dataset") {
    const auto& ds = test::default_dataset();
    CHECK(accuracy(test::default_mlp(), ds.test) > 0.85);
    const auto again = train(ModelSpec{Architecture::Mlp, 32, 0.01, 30, 16}, ds, 11);
    CHECK(again.parameters() == test::default_mlp().parameters());
  }

  TEST_CASE("epochs = 0 returns the initialized model") {
    const auto& ds = test::default_dataset();
    const ModelSpec spec{Architecture::Mlp, 16, 0.01, 0, 16};
    const auto rep = train_with_report(spec, ds, 5);
    CHECK(rep.best_epoch == 0);
    const auto net = build_network(spec, ds.channels, ds.length, ds.num_classes);
    CHECK(rep.model.parameters() == net.init_params(mix_seed(5, static_cast<std::uint64_t>(Architecture::Mlp) + 1)));
    double mean = 0.0;  // chance level is an expectation over initializations
    for (std::uint64_t seed = 1; seed <= 10; ++seed) mean += accuracy(train(spec, ds, seed), ds.test) / 10.0;
    CHECK(std::abs(mean - 0.25) <= 0.15);
  }

  TEST_CASE("divergence is reported") {
    const auto& ds = test::default_dataset();
    try {
      train(ModelSpec{Architecture::Mlp, 16, 1e300, 3, 16}, ds, 1);
      FAIL("expected divergence");
    } catch (const DivergenceError& e) {
      CHECK(std::string(e.what()).find("epoch 1") != std::string::npos);
    }
  }

  TEST_CASE("tune") {
    const auto& ds = test::default_dataset();
    const ModelSpec good{Architecture::Mlp, 16, 0.01, 10, 16};
    CHECK(tune(Architecture::Mlp, ds, {good}, 1) == good);

    const ModelSpec bad{Architecture::Mlp, 16, 10.0, 10, 16};
    const auto r = tune_with_report(Architecture::Mlp, ds, {bad, good}, 1);
    CHECK(r.best == good);
    CHECK(r.grid_scores.size() == 2);

    // equal accuracy and equal cost: the earlier entry wins
    const ModelSpec good2{Architecture::Mlp, 16, 0.011, 10, 16};
    const auto a = tune_with_report(Architecture::Mlp, ds, {good, good2}, 1);
    const auto b = tune_with_report(Architecture::Mlp, ds, {good2, good}, 1);
    REQUIRE(a.grid_scores[0] == a.grid_scores[1]);
    CHECK(a.best == good);
    CHECK(b.best == good2);
    CHECK_THROWS_AS(tune(Architecture::Mlp, ds, {}, 1), ContractError);
  }

  TEST_CASE("metrics") {
    const std::vector<std::size_t> truth{0, 1, 0, 1}, all0{0, 0, 0, 0};
    CHECK(accuracy_from_predictions(truth, truth) == 1.0);
    CHECK(f1_macro_from_predictions(truth, truth) == 1.0);
    CHECK(accuracy_from_predictions(all0, truth) == 0.5);
    CHECK(f1_macro_from_predictions(all0, truth) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

    // hand-counted 3-class confusion
    const std::vector<std::size_t> t{0, 0, 1, 1, 2, 2}, p{0, 1, 1, 1, 2, 0};
    // class 0: P=1/2 R=1/2 F=1/2; class 1: P=2/3 R=1 F=4/5; class 2: P=1 R=1/2 F=2/3
    CHECK(f1_macro_from_predictions(p, t) == doctest::Approx((0.5 + 0.8 + 2.0 / 3.0) / 3.0).epsilon(1e-12));
    std::vector<std::size_t> tp = t, pp = p;
    std::rotate(tp.begin(), tp.begin() + 2, tp.end());
    std::rotate(pp.begin(), pp.begin() + 2, pp.end());
    CHECK(accuracy_from_predictions(pp, tp) == accuracy_from_predictions(p, t));
    CHECK_THROWS_AS(accuracy_from_predictions(p, std::vector<std::size_t>{0}), ContractError);
  }

  TEST_CASE("model json round trip") {
    const auto& m = test::default_mlp();
    const auto back = model_from_json(model_to_json(m));
    CHECK(back.parameters() == m.parameters());
    CHECK(back.spec() == m.spec());
    CHECK(predict_all(back, test::default_dataset().test) == predict_all(m, test::default_dataset().test));
  }
}
