#include <doctest.h>

#include <cmath>

#include "gradcheck.hpp"
#include "helpers.hpp"
#include "oracles.hpp"
#include "relate/similarity.hpp"

using namespace relate;

namespace {
const EmbeddingEncoder& default_encoder() {
  static const EmbeddingEncoder e = train_encoder(test::default_dataset(), 5, 5);
  return e;
}
double norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}
}  // namespace

TEST_SUITE("similarity") {
  TEST_CASE("encoder") {
    const auto& ds = test::default_dataset();
    const auto& e = default_encoder();
    CHECK(encoder_accuracy(e, ds.val) > 0.80);
    CHECK(train_encoder(ds, 5, 5).parameters() == e.parameters());
    CHECK(e.embed(ds.test[0].x).size() == kEmbeddingDim);
  }

  TEST_CASE("encoder input gradient matches finite differences") {
    const auto net = encoder_network(2, 32, 3);
    const auto params = net.init_params(8);
    std::mt19937_64 rng(6);
    test::GradCheck total;
    for (int s = 0; s < 5; ++s) {
      const auto r = test::check_input_gradient(net, params, test::random_series(2, 32, rng), s % 3, 20, rng);
      total.agree += r.agree;
      total.total += r.total;
    }
    CHECK(total.agree >= total.total * 95 / 100);
  }

  TEST_CASE("shared initialization across channel counts") {
    // every layer after the first conv has the same shape, so the same seed gives the same weights there
    const auto a = encoder_network(2, 64, 4).init_params(3);
    const auto b = encoder_network(5, 64, 4).init_params(3);
    const std::size_t first_a = 16 * 2 * 5 + 16, first_b = 16 * 5 * 5 + 16;
    REQUIRE(a.size() - first_a == b.size() - first_b);
    CHECK(std::equal(a.begin() + first_a, a.end(), b.begin() + first_b));
  }

  TEST_CASE("dataset embedding") {
    const auto& ds = test::default_dataset();
    const auto& e = default_encoder();
    const auto one = dataset_embedding(e, Samples{ds.val[0]});
    auto raw = e.embed(ds.val[0].x);
    const double n = norm(raw);
    for (std::size_t i = 0; i < raw.size(); ++i) CHECK(one.vector[i] == doctest::Approx(raw[i] / n).epsilon(1e-12));
    const auto base = dataset_embedding(e, ds.val);
    CHECK(norm(base.vector) == doctest::Approx(1.0).epsilon(1e-6));
    Samples twice = ds.val;
    twice.insert(twice.end(), ds.val.begin(), ds.val.end());
    const auto dup = dataset_embedding(e, twice);
    for (std::size_t i = 0; i < dup.vector.size(); ++i) CHECK(dup.vector[i] == doctest::Approx(base.vector[i]).epsilon(1e-12));
  }

  TEST_CASE("cosine") {
    const std::vector<double> a{1, 0}, b{1, 1}, c{0, 1}, d{0.3, -2.0, 5.0};
    CHECK(cosine_similarity(d, d) == doctest::Approx(1.0));
    CHECK(cosine_similarity(a, c) == 0.0);
    CHECK(cosine_similarity(a, b) == doctest::Approx(0.70710678).epsilon(1e-8));
    CHECK_THROWS_AS(cosine_similarity(a, d), ContractError);
  }

  TEST_CASE("dtw") {
    const std::vector<double> x{1, 2, 3}, y{1, 2, 2, 3};
    CHECK(dtw_distance(x, x) == 0.0);
    CHECK(dtw_distance(x, y) == 0.0);
    std::mt19937_64 rng(7);
    std::uniform_int_distribution<std::size_t> len(1, 6);
    std::normal_distribution<double> g(0.0, 1.0);
    for (int t = 0; t < 300; ++t) {
      std::vector<double> a(len(rng)), b(len(rng));
      for (auto& v : a) v = g(rng);
      for (auto& v : b) v = g(rng);
      CHECK(dtw_distance(a, b) == doctest::Approx(oracle::dtw_bruteforce(a, b)).epsilon(1e-12));
    }
  }

  TEST_CASE("wasserstein") {
    const std::vector<double> z{0, 0}, o{1, 1}, x{0.5, -1.0, 3.0};
    CHECK(wasserstein_1d(x, x) == 0.0);
    CHECK(wasserstein_1d(z, o) == doctest::Approx(1.0));
    std::mt19937_64 rng(8);
    std::uniform_int_distribution<std::size_t> len(1, 9);
    std::normal_distribution<double> g(0.0, 1.0);
    for (int t = 0; t < 300; ++t) {
      std::vector<double> a(len(rng)), b(len(rng));
      for (auto& v : a) v = g(rng);
      for (auto& v : b) v = g(rng) + 0.5;
      CHECK(wasserstein_1d(a, b) == doctest::Approx(oracle::wasserstein_cdf(a, b)).epsilon(1e-9));
    }
  }

  TEST_CASE("quantile sketch") {
    std::vector<double> v;
    for (int i = 0; i < 10; ++i) v.push_back(9 - i);
    const auto s = quantile_sketch(v, 20);
    CHECK(std::is_sorted(s.begin(), s.end()));
    CHECK(s.size() == 10);
    std::vector<double> big(4096);
    for (std::size_t i = 0; i < big.size(); ++i) big[i] = double(i);
    const auto t = quantile_sketch(big, 1024);
    REQUIRE(t.size() == 1024);
    CHECK(t[0] == 2.0);  // mid-rank of the first of 1024 equal slices
    CHECK(std::is_sorted(t.begin(), t.end()));
  }

  TEST_CASE("metrics by name") {
    for (auto m : {SimilarityMetric::Cosine, SimilarityMetric::Dtw, SimilarityMetric::Wasserstein})
      CHECK(metric_from_string(to_string(m)) == m);
    CHECK_THROWS_AS(metric_from_string("euclid"), ContractError);
  }

  TEST_CASE("most similar") {
    CHECK(most_similar({{"a", 0.9}, {"b", 0.3}}).name == "a");
    CHECK(most_similar({{"z", 0.5}, {"m", 0.5}}).name == "m");
    CHECK_THROWS_AS(most_similar({}), ContractError);

    const auto& ds = test::default_dataset();
    const auto& e = default_encoder();
    const auto inc = make_profile(e, ds.val, "in", "clean");
    auto other = ds.val;
    for (auto& s : other)
      for (auto& v : s.x.values) v = v * 3.0 + 1.0;
    const std::vector<SimilarityProfile> cands{make_profile(e, other, "b-other", "clean"), make_profile(e, ds.val, "a-same", "clean")};
    for (auto m : {SimilarityMetric::Cosine, SimilarityMetric::Dtw, SimilarityMetric::Wasserstein}) {
      const auto best = most_similar_dataset(inc, cands, m);
      CHECK(best.name == "a-same");
      CHECK(best.score == doctest::Approx(m == SimilarityMetric::Cosine ? 1.0 : 0.0));
    }
  }

  TEST_CASE("majority vote") {
    CHECK(majority_vote({{"A", 0.1}, {"A", 0.1}, {"B", 0.9}, {"C", 0.9}}) == "A");
    CHECK(majority_vote({{"A", 0.8}, {"A", 0.8}, {"B", 0.6}, {"B", 0.6}}) == "A");
    CHECK(majority_vote({{"B", 0.6}, {"B", 0.6}, {"A", 0.5}, {"A", 0.6}}) == "B");
    CHECK(majority_vote({{"B", 0.2}}) == "B");
    CHECK(majority_vote({{"B", 0.5}, {"A", 0.5}}) == "A");
    CHECK_THROWS_AS(majority_vote({}), ContractError);
  }

  TEST_CASE("majority vote agrees with the reference on random inputs") {
    std::mt19937_64 rng(9);
    std::uniform_int_distribution<int> len(1, 7), name(0, 3), score(0, 4);
    for (int t = 0; t < 1000; ++t) {
      std::vector<Match> w(len(rng));
      for (auto& m : w) m = {std::string(1, char('A' + name(rng))), 0.25 * score(rng)};
      CHECK(majority_vote(w) == oracle::majority_vote(w));
    }
  }

  TEST_CASE("json round trips") {
    const auto& ds = test::default_dataset();
    const auto& e = default_encoder();
    const auto back = encoder_from_json(encoder_to_json(e));
    CHECK(back.parameters() == e.parameters());
    CHECK(back.embed(ds.val[1].x) == e.embed(ds.val[1].x));
    const auto p = make_profile(e, ds.val, "x", "fgsm@0.1");
    const auto q = profile_from_json(profile_to_json(p));
    CHECK(q.embedding.vector == p.embedding.vector);
    CHECK(q.embedding.condition == "fgsm@0.1");
    CHECK(q.values == p.values);
    CHECK(q.mean_series == p.mean_series);
  }
}
