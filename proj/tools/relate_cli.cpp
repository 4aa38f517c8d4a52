#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "relate/pipeline.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace relate;

namespace {

struct Options {
  std::uint64_t seed = 7;
  double epsilon = 0.1;
  double threshold = kDefaultThreshold;
  double percentile = kDefaultPercentile;
  std::string metric = "cosine";
  std::string pbd;
  std::string out;
  std::size_t jobs = 0;
  std::string config;

  std::string data;
  std::string input;
  std::string split = "val";
  std::string scenario = "clean";
  std::string kind = "fgsm";
  std::string model;
  std::string result;
  std::vector<std::string> datasets;
  std::size_t classes = 4, channels = 3, length = 64, per_class = 40;
  std::uint64_t family = 0;
  std::string name;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot open " + p.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void emit(const std::string& text, const std::string& out) {
  if (out.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream f(out, std::ios::binary);
  if (!f) throw IoError("cannot write " + out);
  f << text;
}

RunConfig run_config(const Options& o) {
  RunConfig c;
  c.seed = o.seed;
  c.epsilon = o.epsilon;
  c.threshold = o.threshold;
  c.percentile = o.percentile;
  c.metric = metric_from_string(o.metric);
  c.jobs = o.jobs;
  validate(c);
  return c;
}

Samples samples_from(const Options& o) {
  if (!o.input.empty()) return read_partition(o.input);
  if (o.data.empty()) throw ContractError("need --input <csv> or --data <dir>");
  const auto ds = read_dataset(o.data, o.seed);
  if (o.split == "train") return ds.train;
  if (o.split == "val") return ds.val;
  if (o.split == "test") return ds.test;
  throw ContractError("--split must be train, val or test");
}

Pbd need_pbd(const Options& o) {
  if (o.pbd.empty()) throw ContractError("--pbd <dir> is required");
  return load_pbd(o.pbd);
}

Dataset need_data(const Options& o) {
  if (o.data.empty()) throw ContractError("--data <dir> is required");
  auto ds = read_dataset(o.data, o.seed);
  if (ds.name.empty()) ds.name = fs::path(o.data).filename().string();
  return ds;
}

// ---- commands ----

void cmd_synth(const Options& o) {
  if (o.out.empty()) throw ContractError("--out <dir> is required");
  SyntheticSpec s;
  s.classes = o.classes;
  s.channels = o.channels;
  s.length = o.length;
  s.per_class = o.per_class;
  s.seed = o.seed;
  s.family = o.family;
  s.name = o.name;
  const auto ds = generate_synthetic_dataset(s);
  write_dataset(ds, o.out);
  std::printf("%s: %zu train / %zu val / %zu test -> %s\n", ds.name.c_str(), ds.train.size(), ds.val.size(),
              ds.test.size(), o.out.c_str());
}

void cmd_attack(const Options& o) {
  if (o.out.empty()) throw ContractError("--out <dir> is required");
  auto ds = need_data(o);
  const auto spec = default_attack(attack_from_string(o.kind), o.epsilon);
  const auto model = o.model.empty() ? train(ModelSpec{Architecture::Linear, 16, 0.01, 30, 16}, ds, o.seed)
                                     : model_from_json(slurp(o.model));
  Samples& target = o.split == "train" ? ds.train : o.split == "test" ? ds.test : ds.val;
  const auto adv = attack_dataset(model, target, spec, o.seed);
  const double asr = attack_success_rate(model, target, adv.samples);
  target = adv.samples;
  write_dataset(ds, o.out);
  json record = {{"dataset", ds.name}, {"split", o.split},   {"attack", spec.condition()}, {"epsilon", o.epsilon},
                 {"seed", o.seed},     {"asr", asr},         {"model", o.model.empty() ? "linear" : o.model}};
  emit(record.dump(1) + "\n", (fs::path(o.out) / "attack.json").string());
  std::printf("%s on %s/%s: asr %.4f\n", spec.condition().c_str(), ds.name.c_str(), o.split.c_str(), asr);
}

void cmd_pbd_build(const Options& o) {
  if (o.out.empty()) throw ContractError("--out <dir> is required");
  PbdConfig cfg;
  cfg.seed = o.seed;
  cfg.epsilon = o.epsilon;
  cfg.percentile = o.percentile;
  cfg.jobs = o.jobs;
  std::vector<Dataset> datasets;
  if (o.datasets.empty()) {
    for (const auto& s : default_pbd_specs(o.seed)) datasets.push_back(generate_synthetic_dataset(s));
  } else {
    for (const auto& d : o.datasets) {
      auto ds = read_dataset(d, o.seed);
      if (ds.name.empty()) ds.name = fs::path(d).filename().string();
      datasets.push_back(std::move(ds));
    }
  }
  const auto pbd = build_pbd(datasets, std::vector<Architecture>(std::begin(kZoo), std::end(kZoo)),
                             default_attack_suite(o.epsilon), cfg,
                             [](const std::string& m) { std::fprintf(stderr, "pbd-build: %s\n", m.c_str()); });
  save_pbd(pbd, o.out);
  std::printf("%zu datasets, %zu records -> %s\n", pbd.entries.size(), pbd.records.size(), o.out.c_str());
}

void cmd_detect(const Options& o) {
  const auto cfg = run_config(o);
  DetectorPair det;
  if (!o.pbd.empty() && !o.name.empty()) {
    det = need_pbd(o).entry(o.name).detectors;
  } else {
    det = fit_detectors(need_data(o).train, cfg.percentile);
  }
  const auto report = detect(det, samples_from(o), cfg.threshold);
  emit(format_report(report), o.out);
}

void cmd_classify_attack(const Options& o) {
  const auto pbd = need_pbd(o);
  const auto g = predict_group(pbd.group_classifier, samples_from(o));
  json j = {{"group", to_string(g.group)}, {"probability_group1", g.probability_group1}, {"confidence", g.confidence}};
  emit(j.dump(1) + "\n", o.out);
}

void write_result(const SelectionResult& r, const Options& o) {
  if (o.out.empty()) {
    std::cout << format_result_table(r);
    return;
  }
  emit(result_to_json(r).dump(1) + "\n", o.out);
  emit(timings_to_json(r).dump(1) + "\n", o.out + ".timings.json");
  std::cout << format_result_table(r);
}

void cmd_select(const Options& o) {
  auto cfg = run_config(o);
  cfg.evaluate_zoo = false;
  write_result(run_pipeline(need_data(o), Scenario::parse(o.scenario), need_pbd(o), cfg), o);
}

void cmd_run(const Options& o) {
  write_result(run_pipeline(need_data(o), Scenario::parse(o.scenario), need_pbd(o), run_config(o)), o);
}

void cmd_eval_baselines(const Options& o) {
  const auto r = run_pipeline(need_data(o), Scenario::parse(o.scenario), need_pbd(o), run_config(o));
  json j = {{"metric", r.metric_name},
            {"oracle", r.baselines->oracle},
            {"random_mean", r.baselines->random_mean},
            {"worst", r.baselines->worst},
            {"relate", r.winner_metric}};
  for (const auto& ev : r.evaluations) j["models"][ev.model] = ev.failed ? json(nullptr) : json(ev.metric);
  emit(j.dump(1) + "\n", o.out);
}

void cmd_report(const Options& o) {
  std::ostringstream os;
  char buf[200];
  if (!o.result.empty()) {
    json r;
    try {
      r = json::parse(slurp(o.result));
    } catch (const json::exception& e) {
      throw IoError(o.result + ": " + e.what());
    }
    os << r.dump(1) << '\n';
    emit(os.str(), o.out);
    return;
  }
  const auto pbd = need_pbd(o);
  std::snprintf(buf, sizeof buf, "%-22s %-14s %-12s %9s %9s %9s", "dataset", "model", "condition", "accuracy", "f1", "asr");
  os << buf << '\n';
  for (const auto& r : pbd.records) {
    if (!o.name.empty() && r.dataset != o.name) continue;
    if (r.failed) {
      std::snprintf(buf, sizeof buf, "%-22s %-14s %-12s %9s", r.dataset.c_str(), r.model.c_str(), r.condition.c_str(), "failed");
    } else {
      std::snprintf(buf, sizeof buf, "%-22s %-14s %-12s %9.4f %9.4f %9.4f", r.dataset.c_str(), r.model.c_str(),
                    r.condition.c_str(), r.accuracy, r.f1, r.asr);
    }
    os << buf << '\n';
  }
  os << '\n';
  for (const auto& e : pbd.entries) os << e.name() << ": reference " << e.reference << '\n';
  emit(os.str(), o.out);
}

// Values from the --config manifest fill every option the command line left unset.
void apply_manifest(CLI::App& app, const std::string& path) {
  json m;
  try {
    m = json::parse(slurp(path));
  } catch (const json::exception& e) {
    throw IoError(path + ": " + e.what());
  }
  if (!m.is_object()) throw IoError(path + ": manifest must be a JSON object");
  std::vector<CLI::App*> scopes = app.get_subcommands();
  scopes.push_back(&app);
  for (const auto& [key, value] : m.items()) {
    CLI::Option* opt = nullptr;
    for (auto* s : scopes) {
      try {
        opt = s->get_option("--" + key);
        break;
      } catch (const CLI::OptionNotFound&) {
      }
    }
    if (!opt) throw ContractError(path + ": unknown manifest key '" + key + "'");
    if (opt->count() > 0) continue;
    std::vector<std::string> vals;
    auto one = [](const json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); };
    if (value.is_array())
      for (const auto& v : value) vals.push_back(one(v));
    else
      vals.push_back(one(value));
    for (const auto& v : vals) opt->add_result(v);
    opt->run_callback();
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Similarity-driven model selection for adversarially perturbed time series"};
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* s) {
    s->add_option("--seed", o.seed, "Seed for all randomness")->capture_default_str();
    s->add_option("--epsilon", o.epsilon, "Attack budget (l-inf)")->capture_default_str();
    s->add_option("--threshold", o.threshold, "Case threshold T")->capture_default_str();
    s->add_option("--percentile", o.percentile, "Detector percentile p")->capture_default_str();
    s->add_option("--metric", o.metric, "Similarity metric")
        ->check(CLI::IsMember({"cosine", "dtw", "wasserstein"}))
        ->capture_default_str();
    s->add_option("--pbd", o.pbd, "Benchmark database directory");
    s->add_option("--out", o.out, "Output path");
    s->add_option("--jobs", o.jobs, "Worker threads (0 = all cores)")->capture_default_str();
    s->add_option("--config", o.config, "JSON manifest; explicit flags override it");
  };
  auto data_opts = [&](CLI::App* s) {
    s->add_option("--data", o.data, "Dataset directory");
    s->add_option("--input", o.input, "Single partition CSV");
    s->add_option("--split", o.split, "Split of --data to use")->capture_default_str();
  };

  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
  common(synth);
  synth->add_option("--classes", o.classes)->capture_default_str();
  synth->add_option("--channels", o.channels)->capture_default_str();
  synth->add_option("--length", o.length)->capture_default_str();
  synth->add_option("--per-class", o.per_class)->capture_default_str();
  synth->add_option("--family", o.family, "Class-structure family; same family + shape = sibling datasets")
      ->capture_default_str();
  synth->add_option("--name", o.name);

  auto* attack = app.add_subcommand("attack", "Attack one split of a dataset");
  common(attack);
  data_opts(attack);
  attack->add_option("--kind", o.kind, "fgsm|bim|mim|autopgd|deepfool|elasticnet|boundary")->capture_default_str();
  attack->add_option("--model", o.model, "Model JSON (default: train a linear model)");

  auto* build = app.add_subcommand("pbd-build", "Build the performance benchmark database");
  common(build);
  build->add_option("--datasets", o.datasets, "Dataset directories (default: synthetic suite)");

  auto* det = app.add_subcommand("detect", "Spectral detection and case routing");
  common(det);
  data_opts(det);
  det->add_option("--name", o.name, "Use the detectors stored for this PBD dataset");

  auto* cls = app.add_subcommand("classify-attack", "Predict the attack group");
  common(cls);
  data_opts(cls);

  auto* sel = app.add_subcommand("select", "Pick the most similar PBD dataset and its top-3 models");
  common(sel);
  data_opts(sel);
  sel->add_option("--scenario", o.scenario, "clean | <attack> | five comma-separated entries")->capture_default_str();

  auto* run = app.add_subcommand("run", "Full pipeline with evaluation on the incoming data");
  common(run);
  data_opts(run);
  run->add_option("--scenario", o.scenario, "clean | <attack> | five comma-separated entries")->capture_default_str();

  auto* base = app.add_subcommand("eval-baselines", "Oracle, random and worst over the whole zoo");
  common(base);
  data_opts(base);
  base->add_option("--scenario", o.scenario)->capture_default_str();

  auto* rep = app.add_subcommand("report", "Tabulate PBD records or a stored result");
  common(rep);
  rep->add_option("--result", o.result, "Result JSON written by run");
  rep->add_option("--name", o.name, "Only this dataset");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (!o.config.empty()) apply_manifest(app, o.config);
    if (*synth) cmd_synth(o);
    else if (*attack) cmd_attack(o);
    else if (*build) cmd_pbd_build(o);
    else if (*det) cmd_detect(o);
    else if (*cls) cmd_classify_attack(o);
    else if (*sel) cmd_select(o);
    else if (*run) cmd_run(o);
    else if (*base) cmd_eval_baselines(o);
    else if (*rep) cmd_report(o);
  } catch (const IoError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const ContractError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
