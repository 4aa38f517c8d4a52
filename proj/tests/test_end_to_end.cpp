#include <doctest.h>

#include "relate/pipeline.hpp"

using namespace relate;

namespace {
const Pbd& pbd() {
  static const Pbd p = [] {
    std::vector<Dataset> ds;
    for (const auto& s : default_pbd_specs(7)) ds.push_back(generate_synthetic_dataset(s));
    PbdConfig c;
    c.seed = 7;
    return build_pbd(ds, {std::begin(kZoo), std::end(kZoo)}, default_attack_suite(0.1), c);
  }();
  return p;
}

// same shape and family as PBD dataset i, fresh draw
Dataset sibling(std::size_t i, std::uint64_t seed) {
  auto s = default_pbd_specs(7)[i];
  s.seed = seed;
  s.name = "incoming";
  return generate_synthetic_dataset(s);
}

double best_clean(const std::string& dataset) {
  double best = 0.0;
  for (const auto& r : records_for(pbd(), dataset))
    if (r.condition == "clean" && !r.failed) best = std::max(best, r.accuracy);
  return best;
}
}  // namespace

TEST_SUITE("end_to_end") {
  TEST_CASE("clean sibling goes to case 1 and finds its sibling") {
    const auto r = run_pipeline(sibling(1, 501), Scenario::parse("clean"), pbd(), RunConfig{});
    CHECK(r.detection.data_case == DataCase::Clean);
    const auto& want = pbd().entries[1].name();
    CHECK(r.chosen_dataset == want);
    CHECK(r.metric_name == "accuracy");
    CHECK(std::abs(r.winner_metric - best_clean(want)) <= 0.03);
  }

  TEST_CASE("fgsm sibling goes to case 2, group 1, and beats random") {
    const auto r = run_pipeline(sibling(0, 502), Scenario::parse("fgsm"), pbd(), RunConfig{});
    CHECK(r.detection.data_case == DataCase::FullyAttacked);
    REQUIRE(r.group);
    CHECK(r.group->group == AttackGroup::IterationBased);
    REQUIRE(r.baselines);
    CHECK(r.metric_name == "asr");
    CHECK(r.winner_metric <= r.baselines->random_mean);
  }

  TEST_CASE("bim on segments 1 and 3 goes to case 3 at intensity 40") {
    const auto r = run_pipeline(sibling(2, 503), Scenario::parse("bim,clean,bim,clean,clean"), pbd(), RunConfig{});
    CHECK(r.detection.data_case == DataCase::PartiallyAttacked);
    REQUIRE(r.detection.intensity);
    CHECK(*r.detection.intensity == 40);
    REQUIRE(r.detection.segments);
    using V = SegmentVerdict;
    CHECK(r.detection.segments->verdicts ==
          std::vector<V>{V::Attacked, V::Clean, V::Attacked, V::Clean, V::Clean});
  }
}
