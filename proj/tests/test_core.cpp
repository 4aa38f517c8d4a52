#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "helpers.hpp"
#include "relate/core.hpp"
#include "relate/models.hpp"

using namespace relate;
namespace fs = std::filesystem;

namespace {
Samples toy_pool(std::size_t n, std::size_t classes) {
  Samples s;
  for (std::size_t i = 0; i < n; ++i) s.push_back({Series(1, 4, double(i)), i % classes});
  return s;
}

fs::path scratch_dir(const std::string& tag) {
  auto d = fs::temp_directory_path() / ("relate_test_" + tag);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}
}  // namespace

TEST_SUITE("core") {
  TEST_CASE("split sizes") {
    auto r = split_dataset(toy_pool(10, 2), 0);
    CHECK(r.train.size() == 8);
    CHECK(r.val.size() == 2);
    auto one = split_dataset(toy_pool(5, 1), 0);
    CHECK(one.train.size() == 4);
    CHECK(one.val.size() == 1);
    CHECK_THROWS_AS(split_dataset({}, 0), ContractError);
  }

  TEST_CASE("split is deterministic and a partition") {
    const auto pool = toy_pool(37, 3);
    auto a = split_dataset(pool, 5), b = split_dataset(pool, 5);
    CHECK(a.train == b.train);
    CHECK(a.val == b.val);
    std::multiset<double> seen;
    for (const auto& s : a.train) seen.insert(s.x.values[0]);
    for (const auto& s : a.val) seen.insert(s.x.values[0]);
    CHECK(seen.size() == 37);
    CHECK(std::set<double>(seen.begin(), seen.end()).size() == 37);
  }

  TEST_CASE("synthetic dataset shape") {
    SyntheticSpec s;
    s.seed = 7;
    const auto ds = generate_synthetic_dataset(s);
    CHECK(ds.train.size() + ds.val.size() + ds.test.size() == 160);
    CHECK(ds.num_classes == 4);
    CHECK(ds.channels == 3);
    CHECK(ds.length == 64);
    CHECK_NOTHROW(validate(ds));
    CHECK(ds == generate_synthetic_dataset(s));
    s.seed = 8;
    CHECK_FALSE(ds == generate_synthetic_dataset(s));
  }

  TEST_CASE("bad synthetic spec") {
    SyntheticSpec s;
    s.classes = 1;
    CHECK_THROWS_AS(generate_synthetic_dataset(s), ContractError);
  }

  TEST_CASE("linear probe separates the default dataset") {
    const auto& ds = test::default_dataset();
    const auto probe = train(ModelSpec{Architecture::Linear, 1, 0.01, 30, 16}, ds, 3);
    CHECK(accuracy(probe, ds.test) > 0.90);
  }

  TEST_CASE("validate rejects broken datasets") {
    auto ds = test::default_dataset();
    ds.train[0].label = 9;
    CHECK_THROWS_AS(validate(ds), ContractError);
    ds = test::default_dataset();
    ds.val[0].x.values[3] = std::nan("");
    CHECK_THROWS_AS(validate(ds), ContractError);
  }

  TEST_CASE("dataset file round trip") {
    const auto dir = scratch_dir("roundtrip");
    const auto& ds = test::default_dataset();
    write_dataset(ds, dir);
    auto back = read_dataset(dir);
    back.name = ds.name;
    CHECK(back == ds);
  }

  TEST_CASE("partition parse errors carry path and line") {
    const auto dir = scratch_dir("parse");
    const auto path = dir / "p.csv";
    {
      std::ofstream f(path);
      f << "#relate-ts v1 channels=1 length=3 classes=2\n0,1,2,3\n1,1,2\n";
    }
    try {
      read_partition(path);
      FAIL("expected an error");
    } catch (const IoError& e) {
      CHECK(std::string(e.what()).find("p.csv:3") != std::string::npos);
    }
    {
      std::ofstream f(path);
      f << "#relate-ts v1 channels=0 length=3 classes=2\n";
    }
    CHECK_THROWS_AS(read_partition(path), IoError);
    CHECK_THROWS_AS(read_partition(dir / "missing.csv"), IoError);
  }

  TEST_CASE("missing validation split is regenerated") {
    const auto dir = scratch_dir("noval");
    const auto& ds = test::default_dataset();
    write_dataset(ds, dir);
    fs::remove(dir / "val.csv");
    const auto back = read_dataset(dir, 3);
    CHECK(back.val.size() + back.train.size() == ds.train.size());
    CHECK(back.test == ds.test);
  }
}
