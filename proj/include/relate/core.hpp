#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace relate {

/// Violated precondition or invalid argument. CLI maps it to exit code 1.
class ContractError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// File-system or parse failure. CLI maps it to exit code 2.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Channel-major real matrix: all of channel 0, then channel 1, ...
struct Series {
  std::size_t channels = 0;
  std::size_t length = 0;
  std::vector<double> values;

  Series() = default;
  Series(std::size_t c, std::size_t l, double fill = 0.0) : channels(c), length(l), values(c * l, fill) {}

  double& at(std::size_t c, std::size_t t) { return values[c * length + t]; }
  double at(std::size_t c, std::size_t t) const { return values[c * length + t]; }
  std::span<const double> channel(std::size_t c) const { return {values.data() + c * length, length}; }
  std::span<double> channel(std::size_t c) { return {values.data() + c * length, length}; }
  std::size_t size() const { return values.size(); }

  bool operator==(const Series&) const = default;
};

struct Sample {
  Series x;
  std::size_t label = 0;

  bool operator==(const Sample&) const = default;
};

using Samples = std::vector<Sample>;

struct Dataset {
  std::string name;
  std::size_t num_classes = 0;
  std::size_t channels = 0;
  std::size_t length = 0;
  Samples train;
  Samples val;
  Samples test;

  bool operator==(const Dataset&) const = default;
};

/// Throws ContractError when shapes, labels or values break the Dataset invariants.
void validate(const Dataset& ds);

struct SplitResult {
  Samples train;
  Samples val;
};

/// 80/20 train/validation split, stratified per label when every class has at
/// least 5 samples. Both partitions come out in seeded shuffled order.
SplitResult split_dataset(const Samples& pool, std::uint64_t seed);

struct SyntheticSpec {
  std::size_t classes = 4;
  std::size_t channels = 3;
  std::size_t length = 64;
  std::size_t per_class = 40;
  std::uint64_t seed = 0;
  // Selects the class-frequency structure together with (classes, channels, length).
  // Datasets that agree on these four fields are siblings drawn from one distribution.
  std::uint64_t family = 0;
  double noise_sigma = 0.1;
  // Fraction of generated samples held out as the test split.
  double test_fraction = 0.25;
  std::string name;
};

/// Class k is a class-specific mixture of low-frequency sinusoids per channel
/// plus Gaussian noise. The class structure depends only on
/// (classes, channels, length, family); `seed` drives the per-sample draws.
Dataset generate_synthetic_dataset(const SyntheticSpec& spec);

/// Default name for a synthetic spec, e.g. "syn-k4-c3-l64-f0".
std::string synthetic_name(const SyntheticSpec& spec);

// Deterministic seed mixing (splitmix64 finalizer).
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c);

/// Reads one partition file (`#relate-ts v1 ...` header + CSV rows).
struct PartitionHeader {
  std::size_t channels = 0;
  std::size_t length = 0;
  std::size_t classes = 0;
};
Samples read_partition(const std::filesystem::path& path, PartitionHeader* header = nullptr);
void write_partition(const Samples& samples, const PartitionHeader& header, const std::filesystem::path& path);

/// A dataset on disk is a directory with train.csv, val.csv (optional) and test.csv.
/// A missing val.csv is regenerated from train.csv with split_dataset(seed).
Dataset read_dataset(const std::filesystem::path& dir, std::uint64_t split_seed = 0);
void write_dataset(const Dataset& ds, const std::filesystem::path& dir);

}  // namespace relate
