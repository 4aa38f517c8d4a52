#include "relate/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <exception>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <random>
#include <set>
#include <sstream>
#include <thread>

namespace relate {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::size_t zoo_index(const std::vector<Architecture>& zoo, Architecture a) {
  for (std::size_t i = 0; i < zoo.size(); ++i)
    if (zoo[i] == a) return i;
  throw ContractError("architecture not in zoo: " + to_string(a));
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

PartitionHeader header_of(const Dataset& ds) { return {ds.channels, ds.length, ds.num_classes}; }

Samples slice(const Samples& s, std::size_t begin, std::size_t end) {
  return Samples(s.begin() + static_cast<std::ptrdiff_t>(begin), s.begin() + static_cast<std::ptrdiff_t>(end));
}

}  // namespace

// ---- parallelism -----------------------------------------------------------

void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& f) {
  if (n == 0) return;
  if (jobs == 0) jobs = std::max(1u, std::thread::hardware_concurrency());
  jobs = std::min(jobs, n);
  if (jobs == 1) {
    for (std::size_t i = 0; i < n; ++i) f(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::mutex mu;
  std::size_t failed_index = n;
  std::exception_ptr failure;
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        f(i);
      } catch (...) {
        std::lock_guard lock(mu);
        if (i < failed_index) {
          failed_index = i;
          failure = std::current_exception();
        }
      }
    }
  };
  std::vector<std::thread> threads;
  for (std::size_t t = 0; t < jobs; ++t) threads.emplace_back(worker);
  for (auto& t : threads) t.join();
  if (failure) std::rethrow_exception(failure);
}

// ---- records -----------------------------------------------------------------

bool PerformanceRecord::same_values(const PerformanceRecord& o) const {
  return dataset == o.dataset && model == o.model && condition == o.condition && accuracy == o.accuracy &&
         f1 == o.f1 && asr == o.asr && failed == o.failed;
}

std::uint64_t encoder_init_seed(std::uint64_t pbd_seed) { return mix_seed(pbd_seed, 0xe4c0de); }

const PbdEntry& Pbd::entry(const std::string& name) const {
  for (const auto& e : entries)
    if (e.name() == name) return e;
  throw ContractError("benchmark database has no dataset named '" + name + "'");
}

const AttackSpec& Pbd::attack(AttackKind kind) const {
  for (const auto& a : attacks)
    if (a.kind == kind) return a;
  throw ContractError("benchmark database has no " + to_string(kind) + " attack");
}

std::vector<AttackSpec> default_attack_suite(double epsilon) {
  std::vector<AttackSpec> out;
  for (auto k : kAllAttacks) out.push_back(default_attack(k, epsilon));
  return out;
}

std::vector<SyntheticSpec> default_pbd_specs(std::uint64_t seed) {
  const std::size_t shapes[][2] = {{4, 3}, {3, 4}, {6, 2}, {5, 3}};
  std::vector<SyntheticSpec> out;
  for (std::size_t i = 0; i < 4; ++i) {
    SyntheticSpec s;
    s.classes = shapes[i][0];
    s.channels = shapes[i][1];
    s.length = 256;
    s.seed = mix_seed(seed, 0xdb, i);
    out.push_back(s);
  }
  return out;
}

std::vector<PerformanceRecord> records_for(const Pbd& pbd, const std::string& dataset) {
  std::vector<PerformanceRecord> out;
  for (const auto& r : pbd.records)
    if (r.dataset == dataset) out.push_back(r);
  return out;
}

std::string choose_reference(const std::vector<PerformanceRecord>& clean_rows, const std::vector<double>& costs) {
  if (clean_rows.size() != costs.size()) throw ContractError("choose_reference: cost list mismatch");
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < clean_rows.size(); ++i) {
    if (clean_rows[i].failed) continue;
    if (!best || clean_rows[i].accuracy > clean_rows[*best].accuracy ||
        (clean_rows[i].accuracy == clean_rows[*best].accuracy && costs[i] < costs[*best]))
      best = i;
  }
  if (!best) throw ContractError("no model trained successfully; cannot choose a reference model");
  return clean_rows[*best].model;
}

// ---- construction ------------------------------------------------------------

Pbd build_pbd(const std::vector<Dataset>& datasets, const std::vector<Architecture>& zoo,
              const std::vector<AttackSpec>& attacks, const PbdConfig& config, const ProgressFn& progress) {
  if (datasets.size() < 2) throw ContractError("build_pbd: need at least 2 datasets");
  if (zoo.size() < 2) throw ContractError("build_pbd: need at least 2 models");
  for (auto k : kAllAttacks)
    if (std::none_of(attacks.begin(), attacks.end(), [&](const AttackSpec& a) { return a.kind == k; }))
      throw ContractError("build_pbd: attack suite lacks " + to_string(k));
  std::set<std::string> names;
  for (const auto& d : datasets) {
    validate(d);
    if (!names.insert(d.name).second) throw ContractError("build_pbd: duplicate dataset name " + d.name);
  }
  auto say = [&](const std::string& msg) {
    if (progress) progress(msg);
  };

  Pbd pbd;
  pbd.config = config;
  pbd.zoo = zoo;
  pbd.attacks = attacks;
  const std::size_t D = datasets.size(), Z = zoo.size(), A = attacks.size();
  pbd.entries.resize(D);
  for (std::size_t i = 0; i < D; ++i) pbd.entries[i].data = datasets[i];

  // Step 1: tune and train every model on every dataset.
  std::vector<std::optional<TuneResult>> tuned(D * Z);
  std::vector<PerformanceRecord> clean(D * Z);
  std::vector<double> costs(D * Z, 0.0);
  say("training " + std::to_string(D * Z) + " models");
  parallel_for(D * Z, config.jobs, [&](std::size_t t) {
    const std::size_t i = t / Z, a = t % Z;
    const auto& ds = datasets[i];
    auto& rec = clean[t];
    rec.dataset = ds.name;
    rec.model = to_string(zoo[a]);
    rec.condition = "clean";
    const auto t0 = Clock::now();
    try {
      tuned[t] = tune_with_report(zoo[a], ds, default_grid(zoo[a]), mix_seed(config.seed, i, a));
      const auto& m = tuned[t]->model;
      const auto pred = predict_all(m, ds.test);
      const auto truth = labels_of(ds.test);
      rec.accuracy = accuracy_from_predictions(pred, truth);
      rec.f1 = f1_macro_from_predictions(pred, truth);
      costs[t] = training_cost(tuned[t]->best, ds);
    } catch (const ContractError&) {
      rec.failed = true;
      tuned[t].reset();
    }
    rec.seconds = seconds_since(t0);
  });

  // Step 2: attack every test split with every attack, per model.
  std::vector<PerformanceRecord> attacked(D * Z * A);
  say("attacking " + std::to_string(D * Z) + " models with " + std::to_string(A) + " attacks");
  parallel_for(D * Z * A, config.jobs, [&](std::size_t t) {
    const std::size_t i = t / (Z * A), a = (t / A) % Z, k = t % A;
    const auto& ds = datasets[i];
    auto& rec = attacked[t];
    rec.dataset = ds.name;
    rec.model = to_string(zoo[a]);
    rec.condition = attacks[k].condition();
    if (!tuned[i * Z + a]) {
      rec.failed = true;
      return;
    }
    const auto& m = tuned[i * Z + a]->model;
    const auto t0 = Clock::now();
    const auto adv = attack_dataset(m, ds.test, attacks[k], mix_seed(config.seed, 0xa77ac, t));
    const auto clean_pred = predict_all(m, ds.test);
    const auto adv_pred = predict_all(m, adv.samples);
    const auto truth = labels_of(ds.test);
    rec.accuracy = accuracy_from_predictions(adv_pred, truth);
    rec.f1 = f1_macro_from_predictions(adv_pred, truth);
    std::size_t changed = 0;
    for (std::size_t j = 0; j < truth.size(); ++j) changed += clean_pred[j] != adv_pred[j];
    rec.asr = static_cast<double>(changed) / static_cast<double>(truth.size());
    rec.seconds = seconds_since(t0);
  });

  for (std::size_t i = 0; i < D; ++i)
    for (std::size_t a = 0; a < Z; ++a) {
      pbd.records.push_back(clean[i * Z + a]);
      for (std::size_t k = 0; k < A; ++k) pbd.records.push_back(attacked[(i * Z + a) * A + k]);
    }

  // Step 3: per-dataset detectors, reference attacks, encoder and profiles.
  const auto init_seed = encoder_init_seed(config.seed);
  say("fitting detectors and encoders");
  for (std::size_t i = 0; i < D; ++i) {
    auto& e = pbd.entries[i];
    std::vector<PerformanceRecord> rows(clean.begin() + static_cast<std::ptrdiff_t>(i * Z),
                                        clean.begin() + static_cast<std::ptrdiff_t>((i + 1) * Z));
    std::vector<double> c(costs.begin() + static_cast<std::ptrdiff_t>(i * Z),
                          costs.begin() + static_cast<std::ptrdiff_t>((i + 1) * Z));
    e.reference = choose_reference(rows, c);
    for (std::size_t a = 0; a < Z; ++a)
      if (tuned[i * Z + a]) {
        e.tuned[to_string(zoo[a])] = tuned[i * Z + a]->best;
        e.models.emplace(to_string(zoo[a]), tuned[i * Z + a]->model);
      }
    e.detectors = fit_detectors(e.data.train, config.percentile);
    e.encoder = train_encoder(e.data, init_seed, init_seed, config.encoder);
    e.clean_profile = make_profile(e.encoder, e.data.val, e.name(), "clean");
  }
  std::vector<Samples> val_attacks(D * A);
  parallel_for(D * A, config.jobs, [&](std::size_t t) {
    const std::size_t i = t / A, k = t % A;
    const auto& e = pbd.entries[i];
    val_attacks[t] = attack_dataset(e.models.at(e.reference), e.data.val, attacks[k],
                                    mix_seed(config.seed, 0x7ef, t))
                         .samples;
  });
  for (std::size_t i = 0; i < D; ++i) {
    auto& e = pbd.entries[i];
    for (std::size_t k = 0; k < A; ++k) {
      const auto cond = attacks[k].condition();
      e.attack_profiles[cond] = make_profile(e.encoder, val_attacks[i * A + k], e.name(), cond);
      e.attacked_val[cond] = std::move(val_attacks[i * A + k]);
    }
  }

  // Step 4: group classifier on the cached reference attacks.
  say("training the attack-group classifier");
  std::vector<LabeledGroupVector> vectors;
  for (std::size_t i = 0; i < D; ++i)
    for (std::size_t k = 0; k < A; ++k) {
      const auto& e = pbd.entries[i];
      const auto cond = attacks[k].condition();
      auto v = group_vectors(e.attacked_val.at(cond), group_of(attacks[k].kind), e.name() + "/" + cond,
                             mix_seed(config.seed, 0x9c, i * A + k), config.group_bootstrap);
      vectors.insert(vectors.end(), v.begin(), v.end());
    }
  pbd.group_classifier = train_group_classifier(vectors, config.boost, config.seed);
  return pbd;
}

// ---- persistence -------------------------------------------------------------

json detectors_to_json(const DetectorPair& d) {
  auto one = [](const SpectralDetector& s) {
    return json{{"kind", to_string(s.kind)},    {"means", s.means},
                {"stds", s.stds},               {"threshold", s.threshold},
                {"percentile", s.percentile},   {"resolution", s.resolution}};
  };
  return {{"fourier", one(d.fourier)}, {"wavelet", one(d.wavelet)}};
}

DetectorPair detectors_from_json(const json& j) {
  auto one = [](const json& o, DetectorKind kind) {
    SpectralDetector s;
    s.kind = kind;
    s.means = o.at("means").get<std::vector<double>>();
    s.stds = o.at("stds").get<std::vector<double>>();
    s.threshold = o.at("threshold").get<double>();
    s.percentile = o.at("percentile").get<double>();
    s.resolution = o.at("resolution").get<std::size_t>();
    if (s.means.size() != s.stds.size()) throw IoError("detector means/stds size mismatch");
    return s;
  };
  return {one(j.at("fourier"), DetectorKind::Fourier), one(j.at("wavelet"), DetectorKind::Wavelet)};
}

namespace {

json spec_to_json(const ModelSpec& s) {
  return {{"architecture", to_string(s.architecture)},
          {"width", s.width},
          {"learning_rate", s.learning_rate},
          {"epochs", s.epochs},
          {"batch_size", s.batch_size}};
}

ModelSpec spec_from_json(const json& j) {
  ModelSpec s;
  s.architecture = architecture_from_string(j.at("architecture").get<std::string>());
  s.width = j.at("width").get<std::size_t>();
  s.learning_rate = j.at("learning_rate").get<double>();
  s.epochs = j.at("epochs").get<std::size_t>();
  s.batch_size = j.at("batch_size").get<std::size_t>();
  return s;
}

json attack_to_json(const AttackSpec& a) {
  return {{"kind", to_string(a.kind)}, {"epsilon", a.epsilon}, {"iterations", a.iterations},
          {"momentum", a.momentum},    {"beta", a.beta},       {"overshoot", a.overshoot}};
}

AttackSpec attack_from_json(const json& j) {
  AttackSpec a;
  a.kind = attack_from_string(j.at("kind").get<std::string>());
  a.epsilon = j.at("epsilon").get<double>();
  a.iterations = j.at("iterations").get<std::size_t>();
  a.momentum = j.at("momentum").get<double>();
  a.beta = j.at("beta").get<double>();
  a.overshoot = j.at("overshoot").get<double>();
  return a;
}

json record_to_json(const PerformanceRecord& r) {
  return {{"dataset", r.dataset}, {"model", r.model}, {"condition", r.condition}, {"accuracy", r.accuracy},
          {"f1", r.f1},           {"asr", r.asr},     {"seconds", r.seconds},     {"failed", r.failed}};
}

PerformanceRecord record_from_json(const json& j) {
  PerformanceRecord r;
  r.dataset = j.at("dataset").get<std::string>();
  r.model = j.at("model").get<std::string>();
  r.condition = j.at("condition").get<std::string>();
  r.accuracy = j.at("accuracy").get<double>();
  r.f1 = j.at("f1").get<double>();
  r.asr = j.at("asr").get<double>();
  r.seconds = j.at("seconds").get<double>();
  r.failed = j.at("failed").get<bool>();
  return r;
}

}  // namespace

void save_pbd(const Pbd& pbd, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  json j;
  j["schema_version"] = pbd.schema_version;
  j["config"] = {{"seed", pbd.config.seed},
                 {"epsilon", pbd.config.epsilon},
                 {"percentile", pbd.config.percentile},
                 {"group_bootstrap", pbd.config.group_bootstrap},
                 {"boost",
                  {{"rounds", pbd.config.boost.rounds},
                   {"learning_rate", pbd.config.boost.learning_rate},
                   {"lambda", pbd.config.boost.lambda},
                   {"subsample", pbd.config.boost.subsample}}},
                 {"encoder",
                  {{"learning_rate", pbd.config.encoder.learning_rate},
                   {"epochs", pbd.config.encoder.epochs},
                   {"batch_size", pbd.config.encoder.batch_size}}}};
  for (auto a : pbd.zoo) j["zoo"].push_back(to_string(a));
  for (const auto& a : pbd.attacks) j["attacks"].push_back(attack_to_json(a));
  j["records"] = json::array();
  for (const auto& r : pbd.records) j["records"].push_back(record_to_json(r));
  j["group_classifier"] = group_classifier_to_json(pbd.group_classifier);
  for (const auto& e : pbd.entries) {
    json ej;
    ej["name"] = e.name();
    ej["path"] = (fs::path("datasets") / e.name()).generic_string();
    ej["reference"] = e.reference;
    for (const auto& [id, spec] : e.tuned) ej["tuned"][id] = spec_to_json(spec);
    ej["detectors"] = detectors_to_json(e.detectors);
    ej["encoder"] = encoder_to_json(e.encoder);
    ej["clean_profile"] = profile_to_json(e.clean_profile);
    for (const auto& [cond, prof] : e.attack_profiles) ej["attack_profiles"][cond] = profile_to_json(prof);
    j["datasets"].push_back(ej);

    write_dataset(e.data, dir / "datasets" / e.name());
    const auto adir = dir / "attacked" / e.name();
    fs::create_directories(adir, ec);
    if (ec) throw IoError("cannot create " + adir.string() + ": " + ec.message());
    for (const auto& [cond, samples] : e.attacked_val) write_partition(samples, header_of(e.data), adir / (cond + ".csv"));
    const auto mdir = dir / "models" / e.name();
    fs::create_directories(mdir, ec);
    if (ec) throw IoError("cannot create " + mdir.string() + ": " + ec.message());
    for (const auto& [id, m] : e.models) write_text(mdir / (id + ".json"), model_to_json(m));
  }
  write_text(dir / "pbd.json", j.dump(1));
}

Pbd load_pbd(const fs::path& dir) {
  const auto path = dir / "pbd.json";
  json j;
  try {
    j = json::parse(read_text(path));
  } catch (const json::exception& e) {
    throw IoError(path.string() + ": " + e.what());
  }
  try {
    Pbd pbd;
    pbd.schema_version = j.at("schema_version").get<int>();
    if (pbd.schema_version != kPbdSchemaVersion)
      throw IoError(path.string() + ": unsupported schema version " + std::to_string(pbd.schema_version));
    const auto& c = j.at("config");
    pbd.config.seed = c.at("seed").get<std::uint64_t>();
    pbd.config.epsilon = c.at("epsilon").get<double>();
    pbd.config.percentile = c.at("percentile").get<double>();
    pbd.config.group_bootstrap = c.at("group_bootstrap").get<std::size_t>();
    pbd.config.boost.rounds = c.at("boost").at("rounds").get<std::size_t>();
    pbd.config.boost.learning_rate = c.at("boost").at("learning_rate").get<double>();
    pbd.config.boost.lambda = c.at("boost").at("lambda").get<double>();
    pbd.config.boost.subsample = c.at("boost").at("subsample").get<double>();
    pbd.config.encoder.learning_rate = c.at("encoder").at("learning_rate").get<double>();
    pbd.config.encoder.epochs = c.at("encoder").at("epochs").get<std::size_t>();
    pbd.config.encoder.batch_size = c.at("encoder").at("batch_size").get<std::size_t>();
    for (const auto& z : j.at("zoo")) pbd.zoo.push_back(architecture_from_string(z.get<std::string>()));
    for (const auto& a : j.at("attacks")) pbd.attacks.push_back(attack_from_json(a));
    for (const auto& r : j.at("records")) pbd.records.push_back(record_from_json(r));
    pbd.group_classifier = group_classifier_from_json(j.at("group_classifier"));
    for (const auto& ej : j.at("datasets")) {
      PbdEntry e;
      const auto name = ej.at("name").get<std::string>();
      const auto ddir = dir / ej.at("path").get<std::string>();
      if (!fs::exists(ddir)) throw IoError("benchmark dataset missing on disk: " + ddir.string());
      e.data = read_dataset(ddir);
      e.data.name = name;
      e.reference = ej.at("reference").get<std::string>();
      if (ej.contains("tuned"))
        for (const auto& [id, s] : ej.at("tuned").items()) e.tuned[id] = spec_from_json(s);
      e.detectors = detectors_from_json(ej.at("detectors"));
      e.encoder = encoder_from_json(ej.at("encoder"));
      e.clean_profile = profile_from_json(ej.at("clean_profile"));
      for (const auto& [cond, p] : ej.at("attack_profiles").items()) {
        e.attack_profiles[cond] = profile_from_json(p);
        e.attacked_val[cond] = read_partition(dir / "attacked" / name / (cond + ".csv"));
      }
      for (const auto& [id, s] : e.tuned) {
        const auto mpath = dir / "models" / name / (id + ".json");
        if (fs::exists(mpath)) e.models.emplace(id, model_from_json(read_text(mpath)));
      }
      pbd.entries.push_back(std::move(e));
    }
    return pbd;
  } catch (const json::exception& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

// ---- ranking and baselines -----------------------------------------------------

Top3 top3(const std::vector<PerformanceRecord>& rows, const std::string& dataset, RankKey key,
          const std::vector<std::string>& conditions) {
  if (key == RankKey::MeanAsr && conditions.empty()) throw ContractError("top3: ASR ranking needs conditions");
  std::vector<std::string> models;
  for (const auto& r : rows)
    if (r.dataset == dataset && std::find(models.begin(), models.end(), r.model) == models.end())
      models.push_back(r.model);
  std::vector<RankedModel> ranked;
  for (const auto& m : models) {
    if (key == RankKey::CleanAccuracy) {
      for (const auto& r : rows)
        if (r.dataset == dataset && r.model == m && r.condition == "clean" && !r.failed)
          ranked.push_back({m, r.accuracy, r.f1});
    } else {
      double asr = 0.0, f1 = 0.0;
      std::size_t found = 0;
      bool failed = false;
      for (const auto& cond : conditions)
        for (const auto& r : rows)
          if (r.dataset == dataset && r.model == m && r.condition == cond) {
            failed = failed || r.failed;
            asr += r.asr;
            f1 += r.f1;
            ++found;
          }
      if (!failed && found == conditions.size())
        ranked.push_back({m, asr / static_cast<double>(found), f1 / static_cast<double>(found)});
    }
  }
  const bool desc = key == RankKey::CleanAccuracy;
  std::sort(ranked.begin(), ranked.end(), [&](const RankedModel& a, const RankedModel& b) {
    if (a.score != b.score) return desc ? a.score > b.score : a.score < b.score;
    if (a.f1 != b.f1) return a.f1 > b.f1;
    return a.model < b.model;
  });
  Top3 out;
  out.warning = ranked.size() < 3;
  if (ranked.size() > 3) ranked.resize(3);
  out.models = std::move(ranked);
  return out;
}

Baselines baselines(const std::vector<double>& metrics, bool higher_is_better, std::uint64_t seed, std::size_t draws) {
  if (metrics.empty()) throw ContractError("baselines: no evaluated models");
  if (draws == 0) throw ContractError("baselines: draws must be >= 1");
  Baselines b;
  const auto [lo, hi] = std::minmax_element(metrics.begin(), metrics.end());
  b.oracle = higher_is_better ? *hi : *lo;
  b.worst = higher_is_better ? *lo : *hi;
  std::mt19937_64 rng(mix_seed(seed, 0x4a1d0));
  std::uniform_int_distribution<std::size_t> pick(0, metrics.size() - 1);
  double sum = 0.0;
  for (std::size_t i = 0; i < draws; ++i) sum += metrics[pick(rng)];
  b.random_mean = sum / static_cast<double>(draws);
  return b;
}

double overhead_reduction(double relate_seconds, double oracle_seconds) {
  if (!(oracle_seconds > 0.0)) throw ContractError("overhead_reduction: oracle time must be positive");
  return 100.0 * (1.0 - relate_seconds / oracle_seconds);
}

OverheadReport overhead_report(double framework_seconds, double top3_seconds, double oracle_seconds) {
  OverheadReport r;
  r.framework_seconds = framework_seconds;
  r.relate_seconds = framework_seconds + top3_seconds;
  r.oracle_seconds = oracle_seconds;
  r.reduction_percent = overhead_reduction(r.relate_seconds, oracle_seconds);
  return r;
}

// ---- scenarios -------------------------------------------------------------------

Scenario Scenario::parse(const std::string& text) {
  Scenario s;
  if (text == "clean") return s;
  if (text.find(',') == std::string::npos) {
    s.kind = Kind::Full;
    s.attack = attack_from_string(text);
    return s;
  }
  s.kind = Kind::Pattern;
  std::vector<std::string> parts;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');) parts.push_back(item);
  if (parts.size() != kSegments)
    throw ContractError("scenario pattern needs exactly 5 comma-separated entries, got '" + text + "'");
  for (std::size_t i = 0; i < kSegments; ++i)
    if (parts[i] != "clean") s.segments[i] = attack_from_string(parts[i]);
  return s;
}

std::string Scenario::id() const {
  switch (kind) {
    case Kind::Clean: return "clean";
    case Kind::Full: return to_string(attack);
    case Kind::Pattern: break;
  }
  std::string out;
  for (std::size_t i = 0; i < kSegments; ++i) out += (i ? "," : "") + (segments[i] ? to_string(*segments[i]) : "clean");
  return out;
}

std::size_t Scenario::attacked_segments() const {
  if (kind == Kind::Clean) return 0;
  if (kind == Kind::Full) return kSegments;
  return static_cast<std::size_t>(std::count_if(segments.begin(), segments.end(), [](auto& s) { return s.has_value(); }));
}

Samples apply_scenario(const TrainedModel& model, const Samples& clean, const Scenario& scenario, double epsilon,
                       std::uint64_t seed) {
  switch (scenario.kind) {
    case Scenario::Kind::Clean: return clean;
    case Scenario::Kind::Full:
      return attack_dataset(model, clean, default_attack(scenario.attack, epsilon), seed).samples;
    case Scenario::Kind::Pattern: break;
  }
  Samples out = clean;
  const auto bounds = segment_bounds(clean.size(), kSegments);
  for (std::size_t i = 0; i < kSegments; ++i) {
    if (!scenario.segments[i]) continue;
    const auto [b, e] = bounds[i];
    const auto adv = attack_dataset(model, slice(clean, b, e), default_attack(*scenario.segments[i], epsilon),
                                    mix_seed(seed, i));
    std::copy(adv.samples.begin(), adv.samples.end(), out.begin() + static_cast<std::ptrdiff_t>(b));
  }
  return out;
}

Samples patterned_replica(const PbdEntry& entry, const std::vector<SegmentVerdict>& verdicts,
                          const std::vector<std::string>& segment_conditions) {
  if (verdicts.size() != kSegments || segment_conditions.size() != kSegments)
    throw ContractError("patterned_replica: need five segment verdicts and conditions");
  const Samples& val = entry.data.val;
  Samples out = val;
  const auto bounds = segment_bounds(val.size(), kSegments);
  for (std::size_t i = 0; i < kSegments; ++i) {
    if (verdicts[i] != SegmentVerdict::Attacked) continue;
    const auto it = entry.attacked_val.find(segment_conditions[i]);
    if (it == entry.attacked_val.end())
      throw ContractError("benchmark dataset " + entry.name() + " lacks cached attack " + segment_conditions[i]);
    const auto [b, e] = bounds[i];
    std::copy(it->second.begin() + static_cast<std::ptrdiff_t>(b), it->second.begin() + static_cast<std::ptrdiff_t>(e),
              out.begin() + static_cast<std::ptrdiff_t>(b));
  }
  return out;
}

// ---- selection run -----------------------------------------------------------------

void validate(const RunConfig& cfg) {
  if (!(cfg.epsilon >= 0.0 && cfg.epsilon <= 1.0)) throw ContractError("epsilon must lie in [0, 1]");
  if (!(cfg.threshold > 0.0 && cfg.threshold < 0.5)) throw ContractError("threshold must lie in (0, 0.5)");
  if (!(cfg.percentile > 50.0 && cfg.percentile < 100.0)) throw ContractError("percentile must lie in (50, 100)");
}

SelectionResult run_pipeline(const Dataset& incoming, const Scenario& scenario, const Pbd& pbd, const RunConfig& cfg) {
  validate(cfg);
  validate(incoming);
  if (pbd.entries.empty()) throw ContractError("run_pipeline: empty benchmark database");
  if (!pbd.group_classifier.trained()) throw ContractError("run_pipeline: benchmark database has no group classifier");

  SelectionResult r;
  r.incoming = incoming.name;
  r.scenario = scenario.id();

  // The arrival: validation split under the scenario, attacked through a surrogate.
  Samples arrival = incoming.val;
  if (scenario.kind != Scenario::Kind::Clean) {
    const auto surrogate = train(ModelSpec{Architecture::Linear, 16, 0.01, 30, 16}, incoming, mix_seed(cfg.seed, 0x5a99));
    arrival = apply_scenario(surrogate, incoming.val, scenario, cfg.epsilon, mix_seed(cfg.seed, 0xa771));
  }

  const auto t_framework = Clock::now();
  // Module 1
  const auto detectors = fit_detectors(incoming.train, cfg.percentile);
  r.detection = detect(detectors, arrival, cfg.threshold);

  // Module 3 inputs for the incoming data
  const auto init_seed = encoder_init_seed(pbd.config.seed);
  const auto encoder = train_encoder(incoming, init_seed, init_seed, pbd.config.encoder);
  const auto profile = make_profile(encoder, arrival, incoming.name, "incoming");

  std::vector<std::string> rank_conditions;
  RankKey key = RankKey::CleanAccuracy;
  switch (r.detection.data_case) {
    case DataCase::Clean: {
      for (const auto& e : pbd.entries) r.candidates.push_back({e.name(), similarity(profile, e.clean_profile, cfg.metric)});
      const auto best = most_similar(r.candidates);
      r.chosen_dataset = best.name;
      r.similarity = best.score;
      break;
    }
    case DataCase::FullyAttacked: {
      r.group = predict_group(pbd.group_classifier, arrival);
      const auto group_attacks = attacks_in(r.group->group);
      std::vector<std::string> conds;
      for (auto k : group_attacks) conds.push_back(pbd.attack(k).condition());
      std::vector<std::vector<Match>> sweep(conds.size());
      parallel_for(conds.size(), cfg.jobs, [&](std::size_t c) {
        for (const auto& e : pbd.entries)
          sweep[c].push_back({e.name(), similarity(profile, e.attack_profiles.at(conds[c]), cfg.metric)});
      });
      for (const auto& s : sweep) r.per_attack_winners.push_back(most_similar(s));
      r.chosen_dataset = majority_vote(r.per_attack_winners);
      for (const auto& e : pbd.entries) {
        double mean = 0.0;
        for (const auto& s : sweep)
          for (const auto& m : s)
            if (m.name == e.name()) mean += m.score / static_cast<double>(sweep.size());
        r.candidates.push_back({e.name(), mean});
        if (e.name() == r.chosen_dataset) r.similarity = mean;
      }
      rank_conditions = conds;
      key = RankKey::MeanAsr;
      break;
    }
    case DataCase::PartiallyAttacked: {
      std::vector<SegmentVerdict> verdicts(kSegments, SegmentVerdict::Clean);
      std::set<AttackGroup> groups;
      r.segment_groups.assign(kSegments, std::nullopt);
      if (r.detection.segments) {
        verdicts = r.detection.segments->verdicts;
        for (std::size_t i = 0; i < kSegments; ++i) {
          if (verdicts[i] != SegmentVerdict::Attacked) continue;
          const auto [b, e] = r.detection.segments->bounds[i];
          if (e - b < 2) continue;
          r.segment_groups[i] = predict_group(pbd.group_classifier, slice(arrival, b, e));
          groups.insert(r.segment_groups[i]->group);
        }
      }
      // RandomSelect(G[i]) per (dataset, segment), seeded
      std::vector<std::vector<std::string>> picks(pbd.entries.size(), std::vector<std::string>(kSegments));
      for (std::size_t d = 0; d < pbd.entries.size(); ++d)
        for (std::size_t i = 0; i < kSegments; ++i) {
          if (!r.segment_groups[i]) continue;
          const auto options = attacks_in(r.segment_groups[i]->group);
          std::mt19937_64 rng(mix_seed(cfg.seed, d, i));
          std::uniform_int_distribution<std::size_t> pick(0, options.size() - 1);
          picks[d][i] = pbd.attack(options[pick(rng)]).condition();
        }
      std::vector<SegmentVerdict> replica_verdicts(kSegments, SegmentVerdict::Clean);
      for (std::size_t i = 0; i < kSegments; ++i)
        if (r.segment_groups[i]) replica_verdicts[i] = SegmentVerdict::Attacked;
      std::vector<double> scores(pbd.entries.size());
      parallel_for(pbd.entries.size(), cfg.jobs, [&](std::size_t d) {
        const auto& e = pbd.entries[d];
        const auto replica = patterned_replica(e, replica_verdicts, picks[d]);
        scores[d] = similarity(profile, make_profile(e.encoder, replica, e.name(), "pattern"), cfg.metric);
      });
      for (std::size_t d = 0; d < pbd.entries.size(); ++d) r.candidates.push_back({pbd.entries[d].name(), scores[d]});
      const auto best = most_similar(r.candidates);
      r.chosen_dataset = best.name;
      r.similarity = best.score;
      for (std::size_t d = 0; d < pbd.entries.size(); ++d)
        if (pbd.entries[d].name() == r.chosen_dataset) r.segment_attacks = picks[d];
      if (groups.empty())
        for (const auto& a : pbd.attacks) rank_conditions.push_back(a.condition());
      else
        for (const auto& a : pbd.attacks)
          if (groups.count(group_of(a.kind))) rank_conditions.push_back(a.condition());
      key = RankKey::MeanAsr;
      break;
    }
  }
  r.top3 = top3(pbd.records, r.chosen_dataset, key, rank_conditions);
  const double framework_seconds = seconds_since(t_framework);
  if (r.top3.models.empty()) throw ContractError("run_pipeline: no usable models for " + r.chosen_dataset);

  // Evaluation on the incoming data: retrain on its train split, score on its test split.
  r.higher_is_better = scenario.kind == Scenario::Kind::Clean;
  r.metric_name = r.higher_is_better ? "accuracy" : "asr";
  std::vector<std::string> order;
  for (const auto& m : r.top3.models) order.push_back(m.model);
  if (cfg.evaluate_zoo)
    for (auto a : pbd.zoo)
      if (std::find(order.begin(), order.end(), to_string(a)) == order.end()) order.push_back(to_string(a));
  r.evaluations.resize(order.size());
  parallel_for(order.size(), cfg.jobs, [&](std::size_t i) {
    auto& ev = r.evaluations[i];
    ev.model = order[i];
    const auto arch = architecture_from_string(order[i]);
    const auto t0 = Clock::now();
    try {
      const auto tuned = tune_with_report(arch, incoming, default_grid(arch), mix_seed(cfg.seed, 0xe7a1, zoo_index(pbd.zoo, arch)));
      if (scenario.kind == Scenario::Kind::Clean) {
        ev.metric = accuracy(tuned.model, incoming.test);
      } else {
        const auto adv = apply_scenario(tuned.model, incoming.test, scenario, cfg.epsilon, mix_seed(cfg.seed, 0x7e57));
        ev.metric = attack_success_rate(tuned.model, incoming.test, adv);
      }
    } catch (const ContractError&) {
      ev.failed = true;
    }
    ev.seconds = seconds_since(t0);
  });

  std::optional<std::size_t> win;
  double top3_seconds = 0.0;
  for (std::size_t i = 0; i < r.top3.models.size(); ++i) {
    const auto& ev = r.evaluations[i];
    top3_seconds += ev.seconds;
    if (ev.failed) continue;
    const bool better = !win || (r.higher_is_better ? ev.metric > r.evaluations[*win].metric
                                                    : ev.metric < r.evaluations[*win].metric);
    if (better) win = i;
  }
  if (!win) throw ContractError("run_pipeline: every top-3 model failed on the incoming data");
  r.winner = r.evaluations[*win].model;
  r.winner_metric = r.evaluations[*win].metric;

  if (cfg.evaluate_zoo) {
    std::vector<double> metrics;
    double oracle_seconds = 0.0;
    for (const auto& ev : r.evaluations) {
      oracle_seconds += ev.seconds;
      if (!ev.failed) metrics.push_back(ev.metric);
    }
    r.baselines = baselines(metrics, r.higher_is_better, cfg.seed);
    r.overhead = overhead_report(framework_seconds, top3_seconds, oracle_seconds);
  } else {
    r.overhead.framework_seconds = framework_seconds;
    r.overhead.relate_seconds = framework_seconds + top3_seconds;
  }
  return r;
}

// ---- reporting -------------------------------------------------------------------

namespace {
json group_json(const GroupPrediction& g) {
  return {{"group", to_string(g.group)}, {"probability_group1", g.probability_group1}, {"confidence", g.confidence}};
}
}  // namespace

json result_to_json(const SelectionResult& r) {
  json j;
  j["incoming"] = r.incoming;
  j["scenario"] = r.scenario;
  json det = {{"fourier_rate", r.detection.fourier_rate},
              {"wavelet_rate", r.detection.wavelet_rate},
              {"fused_rate", r.detection.fused_rate},
              {"case", to_string(r.detection.data_case)}};
  det["intensity"] = r.detection.intensity ? json(*r.detection.intensity) : json(nullptr);
  if (r.detection.segments) {
    for (std::size_t i = 0; i < r.detection.segments->verdicts.size(); ++i) {
      const bool attacked = r.detection.segments->verdicts[i] == SegmentVerdict::Attacked;
      det["segments"].push_back({{"fused_rate", r.detection.segments->fused_rates[i]},
                                 {"verdict", attacked ? "attacked" : "clean"}});
    }
  }
  j["detection"] = det;
  if (r.group) j["group"] = group_json(*r.group);
  for (const auto& g : r.segment_groups) j["segment_groups"].push_back(g ? group_json(*g) : json(nullptr));
  for (const auto& s : r.segment_attacks) j["segment_attacks"].push_back(s);
  for (const auto& m : r.per_attack_winners) j["per_attack_winners"].push_back({{"dataset", m.name}, {"score", m.score}});
  for (const auto& m : r.candidates) j["similarities"].push_back({{"dataset", m.name}, {"score", m.score}});
  j["chosen_dataset"] = r.chosen_dataset;
  j["similarity"] = r.similarity;
  for (const auto& m : r.top3.models) j["top3"].push_back({{"model", m.model}, {"pbd_score", m.score}, {"pbd_f1", m.f1}});
  j["top3_warning"] = r.top3.warning;
  j["metric"] = r.metric_name;
  for (const auto& ev : r.evaluations)
    j["evaluations"].push_back({{"model", ev.model}, {"metric", ev.metric}, {"failed", ev.failed}});
  j["winner"] = r.winner;
  j["winner_metric"] = r.winner_metric;
  if (r.baselines)
    j["baselines"] = {{"oracle", r.baselines->oracle}, {"random_mean", r.baselines->random_mean}, {"worst", r.baselines->worst}};
  return j;
}

json timings_to_json(const SelectionResult& r) {
  json j = {{"framework_seconds", r.overhead.framework_seconds},
            {"relate_seconds", r.overhead.relate_seconds},
            {"oracle_seconds", r.overhead.oracle_seconds},
            {"reduction_percent", r.overhead.reduction_percent}};
  for (const auto& ev : r.evaluations) j["model_seconds"][ev.model] = ev.seconds;
  return j;
}

std::string format_result_table(const SelectionResult& r) {
  std::ostringstream os;
  char buf[160];
  os << "incoming   " << r.incoming << "  scenario " << r.scenario << '\n';
  std::snprintf(buf, sizeof buf, "detection  fourier %.4f  wavelet %.4f  fused %.4f  %s", r.detection.fourier_rate,
                r.detection.wavelet_rate, r.detection.fused_rate, to_string(r.detection.data_case).c_str());
  os << buf;
  if (r.detection.intensity) os << "  intensity " << *r.detection.intensity;
  os << '\n';
  if (r.group) {
    std::snprintf(buf, sizeof buf, "group      %s (confidence %.3f)", to_string(r.group->group).c_str(), r.group->confidence);
    os << buf << '\n';
  }
  std::snprintf(buf, sizeof buf, "chosen     %s (similarity %.4f)", r.chosen_dataset.c_str(), r.similarity);
  os << buf << '\n';
  std::snprintf(buf, sizeof buf, "%-14s %-6s %10s %10s", "model", "top3", "pbd", r.metric_name.c_str());
  os << buf << '\n';
  for (const auto& ev : r.evaluations) {
    std::string pbd_score = "-";
    bool in_top = false;
    for (const auto& m : r.top3.models)
      if (m.model == ev.model) {
        in_top = true;
        std::snprintf(buf, sizeof buf, "%.4f", m.score);
        pbd_score = buf;
      }
    std::string metric = ev.failed ? "failed" : "";
    if (!ev.failed) {
      std::snprintf(buf, sizeof buf, "%.4f", ev.metric);
      metric = buf;
    }
    std::snprintf(buf, sizeof buf, "%-14s %-6s %10s %10s%s", ev.model.c_str(), in_top ? "yes" : "", pbd_score.c_str(),
                  metric.c_str(), ev.model == r.winner ? "  <- winner" : "");
    os << buf << '\n';
  }
  if (r.baselines) {
    std::snprintf(buf, sizeof buf, "baselines  oracle %.4f  random %.4f  worst %.4f  relate %.4f", r.baselines->oracle,
                  r.baselines->random_mean, r.baselines->worst, r.winner_metric);
    os << buf << '\n';
  }
  return os.str();
}

}  // namespace relate
