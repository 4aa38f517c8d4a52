#include "relate/core.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

namespace relate {

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2));
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c) { return mix_seed(mix_seed(a, b), c); }

void validate(const Dataset& ds) {
  if (ds.channels == 0 || ds.length == 0) throw ContractError("dataset '" + ds.name + "': channels and length must be >= 1");
  if (ds.num_classes < 2) throw ContractError("dataset '" + ds.name + "': need at least 2 classes");
  auto check = [&](const Samples& part, const char* which) {
    for (const auto& s : part) {
      if (s.x.channels != ds.channels || s.x.length != ds.length || s.x.values.size() != ds.channels * ds.length)
        throw ContractError("dataset '" + ds.name + "': " + which + " sample shape mismatch");
      if (s.label >= ds.num_classes) throw ContractError("dataset '" + ds.name + "': " + which + " label out of range");
      for (double v : s.x.values)
        if (!std::isfinite(v)) throw ContractError("dataset '" + ds.name + "': non-finite value in " + which);
    }
  };
  check(ds.train, "train");
  check(ds.val, "val");
  check(ds.test, "test");
}

SplitResult split_dataset(const Samples& pool, std::uint64_t seed) {
  if (pool.empty()) throw ContractError("empty dataset");
  const std::size_t n = pool.size();
  const std::size_t n_train = (4 * n + 4) / 5;  // ceil(0.8 n)
  const std::size_t n_val = n - n_train;
  std::mt19937_64 rng(mix_seed(seed, 0x5b1f));

  std::size_t max_label = 0;
  for (const auto& s : pool) max_label = std::max(max_label, s.label);
  std::vector<std::vector<std::size_t>> by_class(max_label + 1);
  for (std::size_t i = 0; i < n; ++i) by_class[pool[i].label].push_back(i);

  bool stratify = true;
  for (const auto& members : by_class)
    if (!members.empty() && members.size() < 5) stratify = false;

  std::vector<char> in_val(n, 0);
  if (stratify) {
    // Largest-remainder allocation of the validation quota across classes.
    std::vector<std::size_t> quota(by_class.size());
    std::vector<std::pair<double, std::size_t>> remainders;
    std::size_t assigned = 0;
    for (std::size_t k = 0; k < by_class.size(); ++k) {
      const double exact = static_cast<double>(by_class[k].size()) * static_cast<double>(n_val) / static_cast<double>(n);
      quota[k] = static_cast<std::size_t>(std::floor(exact));
      assigned += quota[k];
      remainders.emplace_back(exact - std::floor(exact), k);
    }
    std::stable_sort(remainders.begin(), remainders.end(), [](auto& a, auto& b) { return a.first > b.first; });
    for (std::size_t r = 0; assigned < n_val; ++r, ++assigned) ++quota[remainders[r % remainders.size()].second];
    for (std::size_t k = 0; k < by_class.size(); ++k) {
      auto members = by_class[k];
      std::shuffle(members.begin(), members.end(), rng);
      for (std::size_t j = 0; j < quota[k] && j < members.size(); ++j) in_val[members[j]] = 1;
    }
  } else {
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t j = 0; j < n_val; ++j) in_val[order[j]] = 1;
  }

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);
  SplitResult out;
  out.train.reserve(n_train);
  out.val.reserve(n_val);
  for (std::size_t i : order) (in_val[i] ? out.val : out.train).push_back(pool[i]);
  return out;
}

std::string synthetic_name(const SyntheticSpec& spec) {
  std::ostringstream os;
  os << "syn-k" << spec.classes << "-c" << spec.channels << "-l" << spec.length << "-f" << spec.family;
  return os.str();
}

namespace {

struct Component {
  double frequency;
  double amplitude;
  double phase;
};

}  // namespace

Dataset generate_synthetic_dataset(const SyntheticSpec& spec) {
  if (spec.classes < 2 || spec.channels < 1 || spec.length < 8 || spec.per_class < 10)
    throw ContractError("synthetic spec requires classes >= 2, channels >= 1, length >= 8, per_class >= 10");
  if (!(spec.noise_sigma >= 0.0) || !(spec.test_fraction > 0.0 && spec.test_fraction < 1.0))
    throw ContractError("synthetic spec requires noise_sigma >= 0 and test_fraction in (0,1)");

  const std::size_t K = spec.classes, C = spec.channels, L = spec.length;
  std::mt19937_64 structure_rng(mix_seed(mix_seed(K, C, L), spec.family, 0xc1a55));
  const std::size_t max_freq = std::max<std::size_t>(3, L / 64);  // few cycles per series
  std::uniform_int_distribution<std::size_t> freq_dist(1, max_freq);
  std::uniform_real_distribution<double> amp_dist(0.5, 1.0);
  std::uniform_real_distribution<double> phase_dist(0.0, 2.0 * std::numbers::pi);

  // components[k][c] = two sinusoids for class k, channel c
  std::vector<std::vector<std::vector<Component>>> components(K, std::vector<std::vector<Component>>(C));
  for (std::size_t k = 0; k < K; ++k)
    for (std::size_t c = 0; c < C; ++c) {
      const std::size_t f1 = freq_dist(structure_rng);
      std::size_t f2 = freq_dist(structure_rng);
      if (f2 == f1) f2 = f1 % max_freq + 1;
      for (std::size_t f : {f1, f2})
        components[k][c].push_back({static_cast<double>(f), amp_dist(structure_rng), phase_dist(structure_rng)});
    }

  std::mt19937_64 rng(mix_seed(spec.seed, 0x5a3b1e));
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double two_pi = 2.0 * std::numbers::pi;

  Samples pool, test;
  for (std::size_t k = 0; k < K; ++k) {
    Samples cls;
    for (std::size_t i = 0; i < spec.per_class; ++i) {
      Sample s{Series(C, L), k};
      const double scale = 1.0 + 0.1 * gauss(rng);
      const double shift = 0.2 * gauss(rng);
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t t = 0; t < L; ++t) {
          double v = 0.0;
          for (const auto& comp : components[k][c])
            v += comp.amplitude * scale * std::sin(two_pi * comp.frequency * static_cast<double>(t) / static_cast<double>(L) + comp.phase + shift);
          s.x.at(c, t) = v;
        }
      for (auto& v : s.x.values) v += spec.noise_sigma * gauss(rng);
      cls.push_back(std::move(s));
    }
    std::shuffle(cls.begin(), cls.end(), rng);
    const auto n_test = static_cast<std::size_t>(std::llround(static_cast<double>(spec.per_class) * spec.test_fraction));
    for (std::size_t i = 0; i < cls.size(); ++i) (i < n_test ? test : pool).push_back(std::move(cls[i]));
  }
  std::shuffle(test.begin(), test.end(), rng);

  auto split = split_dataset(pool, mix_seed(spec.seed, 0x5971));
  Dataset ds;
  ds.name = spec.name.empty() ? synthetic_name(spec) : spec.name;
  ds.num_classes = K;
  ds.channels = C;
  ds.length = L;
  ds.train = std::move(split.train);
  ds.val = std::move(split.val);
  ds.test = std::move(test);
  return ds;
}

namespace {

[[noreturn]] void parse_fail(const std::filesystem::path& path, std::size_t line, const std::string& what) {
  throw IoError(path.string() + ":" + std::to_string(line) + ": " + what);
}

std::size_t header_field(const std::string& header, const std::string& key, const std::filesystem::path& path) {
  const std::string needle = " " + key + "=";
  const auto pos = header.find(needle);
  if (pos == std::string::npos) parse_fail(path, 1, "header missing '" + key + "'");
  const char* first = header.data() + pos + needle.size();
  const char* last = header.data() + header.size();
  std::size_t value = 0;
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || (ptr != last && *ptr != ' ' && *ptr != '\r')) parse_fail(path, 1, "header field '" + key + "' is not an integer");
  return value;
}

}  // namespace

Samples read_partition(const std::filesystem::path& path, PartitionHeader* header_out) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) parse_fail(path, 1, "empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line.rfind("#relate-ts v1", 0) != 0) parse_fail(path, 1, "malformed header (expected '#relate-ts v1 ...')");
  PartitionHeader h;
  h.channels = header_field(line, "channels", path);
  h.length = header_field(line, "length", path);
  h.classes = header_field(line, "classes", path);
  if (h.channels == 0) parse_fail(path, 1, "header channels must be >= 1");
  if (h.length == 0) parse_fail(path, 1, "header length must be >= 1");
  if (h.classes == 0) parse_fail(path, 1, "header classes must be >= 1");
  if (header_out) *header_out = h;

  const std::size_t width = h.channels * h.length;
  Samples out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    Sample s{Series(h.channels, h.length), 0};
    const char* p = line.data();
    const char* end = line.data() + line.size();
    auto [lp, lec] = std::from_chars(p, end, s.label);
    if (lec != std::errc()) parse_fail(path, line_no, "bad label");
    if (s.label >= h.classes) parse_fail(path, line_no, "label out of range");
    p = lp;
    std::size_t count = 0;
    while (p < end) {
      if (*p != ',') parse_fail(path, line_no, "expected ','");
      ++p;
      double v = 0.0;
      auto [vp, vec] = std::from_chars(p, end, v);
      if (vec != std::errc()) parse_fail(path, line_no, "bad value");
      if (!std::isfinite(v)) parse_fail(path, line_no, "non-finite value");
      if (count >= width) parse_fail(path, line_no, "row has more than " + std::to_string(width) + " values");
      s.x.values[count++] = v;
      p = vp;
    }
    if (count != width)
      parse_fail(path, line_no, "row has " + std::to_string(count) + " values, expected " + std::to_string(width));
    out.push_back(std::move(s));
  }
  return out;
}

void write_partition(const Samples& samples, const PartitionHeader& header, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "#relate-ts v1 channels=" << header.channels << " length=" << header.length << " classes=" << header.classes << '\n';
  char buf[32];
  for (const auto& s : samples) {
    out << s.label;
    for (double v : s.x.values) {
      std::snprintf(buf, sizeof buf, "%.17g", v);
      out << ',' << buf;
    }
    out << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

Dataset read_dataset(const std::filesystem::path& dir, std::uint64_t split_seed) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw IoError("dataset directory not found: " + dir.string());
  PartitionHeader h_train, h_test;
  Dataset ds;
  ds.name = dir.filename().string();
  if (ds.name.empty()) ds.name = dir.parent_path().filename().string();
  ds.train = read_partition(dir / "train.csv", &h_train);
  ds.test = read_partition(dir / "test.csv", &h_test);
  if (h_train.channels != h_test.channels || h_train.length != h_test.length || h_train.classes != h_test.classes)
    throw IoError(dir.string() + ": train/test headers disagree");
  if (fs::exists(dir / "val.csv")) {
    PartitionHeader h_val;
    ds.val = read_partition(dir / "val.csv", &h_val);
    if (h_val.channels != h_train.channels || h_val.length != h_train.length || h_val.classes != h_train.classes)
      throw IoError(dir.string() + ": train/val headers disagree");
  } else {
    auto split = split_dataset(ds.train, split_seed);
    ds.train = std::move(split.train);
    ds.val = std::move(split.val);
  }
  ds.channels = h_train.channels;
  ds.length = h_train.length;
  ds.num_classes = h_train.classes;
  return ds;
}

void write_dataset(const Dataset& ds, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  const PartitionHeader h{ds.channels, ds.length, ds.num_classes};
  write_partition(ds.train, h, dir / "train.csv");
  write_partition(ds.val, h, dir / "val.csv");
  write_partition(ds.test, h, dir / "test.csv");
}

}  // namespace relate
