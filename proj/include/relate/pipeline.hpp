#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "relate/attacks.hpp"
#include "relate/core.hpp"
#include "relate/detection.hpp"
#include "relate/group_classifier.hpp"
#include "relate/models.hpp"
#include "relate/similarity.hpp"

namespace relate {

/// Runs f(0..n-1) on up to `jobs` threads (0 = hardware concurrency). The
/// exception of the lowest failing index is rethrown after all workers stop.
void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& f);

struct PerformanceRecord {
  std::string dataset;
  std::string model;
  std::string condition;  // "clean" or AttackSpec::condition()
  double accuracy = 0.0;
  double f1 = 0.0;
  double asr = 0.0;
  double seconds = 0.0;  // train+eval wall clock; not part of record equality
  bool failed = false;

  bool same_values(const PerformanceRecord& o) const;
};

struct PbdConfig {
  std::uint64_t seed = 7;
  double epsilon = 0.1;
  double percentile = kDefaultPercentile;
  std::size_t jobs = 0;
  std::size_t group_bootstrap = 8;
  BoostOptions boost;
  EncoderOptions encoder;
};

/// Seed shared by every encoder (PBD datasets and incoming data alike).
std::uint64_t encoder_init_seed(std::uint64_t pbd_seed);

struct PbdEntry {
  Dataset data;
  std::map<std::string, ModelSpec> tuned;      // model id -> selected grid point (failed models absent)
  std::map<std::string, TrainedModel> models;  // model id -> trained model
  std::string reference;                       // best clean model; generates the cached attacks below
  DetectorPair detectors;
  EmbeddingEncoder encoder;
  SimilarityProfile clean_profile;
  std::map<std::string, Samples> attacked_val;  // condition -> attacked validation split
  std::map<std::string, SimilarityProfile> attack_profiles;

  const std::string& name() const { return data.name; }
};

inline constexpr int kPbdSchemaVersion = 1;

struct Pbd {
  int schema_version = kPbdSchemaVersion;
  PbdConfig config;
  std::vector<Architecture> zoo;
  std::vector<AttackSpec> attacks;
  std::vector<PerformanceRecord> records;
  std::vector<PbdEntry> entries;
  GroupClassifier group_classifier;

  const PbdEntry& entry(const std::string& name) const;
  const AttackSpec& attack(AttackKind kind) const;
};

/// The seven attacks with default settings at budget `epsilon`.
std::vector<AttackSpec> default_attack_suite(double epsilon);

/// Shapes (K, C, L) of the default benchmark datasets.
std::vector<SyntheticSpec> default_pbd_specs(std::uint64_t seed);

using ProgressFn = std::function<void(const std::string&)>;

/// Offline construction: tune/train the zoo per dataset, attack each test split
/// with every attack per model, fit detectors on clean training data, pick the
/// reference model, cache its attacks on the validation split, train the
/// encoder, store profiles, then train the group classifier.
Pbd build_pbd(const std::vector<Dataset>& datasets, const std::vector<Architecture>& zoo,
              const std::vector<AttackSpec>& attacks, const PbdConfig& config, const ProgressFn& progress = {});

/// Directory layout: pbd.json, datasets/<name>/, attacked/<name>/<condition>.csv, models/<name>/<model>.json.
void save_pbd(const Pbd& pbd, const std::filesystem::path& dir);
Pbd load_pbd(const std::filesystem::path& dir);

std::vector<PerformanceRecord> records_for(const Pbd& pbd, const std::string& dataset);

/// Best clean test accuracy; ties by lower training cost, then zoo order.
std::string choose_reference(const std::vector<PerformanceRecord>& clean_rows, const std::vector<double>& costs);

enum class RankKey { CleanAccuracy, MeanAsr };

struct RankedModel {
  std::string model;
  double score = 0.0;  // accuracy or mean ASR
  double f1 = 0.0;
};

struct Top3 {
  std::vector<RankedModel> models;
  bool warning = false;  // fewer than three usable rows
};

/// CleanAccuracy: accuracy desc. MeanAsr: mean ASR over `conditions` asc.
/// Ties by F1 desc, then model id. Failed rows are skipped.
Top3 top3(const std::vector<PerformanceRecord>& rows, const std::string& dataset, RankKey key,
          const std::vector<std::string>& conditions = {});

struct Baselines {
  double oracle = 0.0;
  double random_mean = 0.0;
  double worst = 0.0;
};

/// Oracle/worst over the zoo metrics; random_mean over `draws` seeded uniform picks.
Baselines baselines(const std::vector<double>& metrics, bool higher_is_better, std::uint64_t seed,
                    std::size_t draws = 1000);

struct OverheadReport {
  double framework_seconds = 0.0;  // detection + group classification + similarity
  double relate_seconds = 0.0;     // framework + top-3 evaluation
  double oracle_seconds = 0.0;     // full-zoo evaluation
  double reduction_percent = 0.0;
};

/// 100 * (1 - relate / oracle).
double overhead_reduction(double relate_seconds, double oracle_seconds);
OverheadReport overhead_report(double framework_seconds, double top3_seconds, double oracle_seconds);

/// Ground-truth condition of an arrival: clean, fully attacked, or a 5-segment pattern.
struct Scenario {
  enum class Kind { Clean, Full, Pattern };
  Kind kind = Kind::Clean;
  AttackKind attack = AttackKind::Fgsm;                               // Full
  std::array<std::optional<AttackKind>, kSegments> segments{};        // Pattern

  /// "clean", an attack name, or five comma-separated entries ("clean" or an attack name).
  static Scenario parse(const std::string& text);
  std::string id() const;
  std::size_t attacked_segments() const;
};

/// Attacks the samples the scenario marks; clean samples are copied unchanged.
Samples apply_scenario(const TrainedModel& model, const Samples& clean, const Scenario& scenario, double epsilon,
                       std::uint64_t seed);

/// Patterned replica of a validation split: attacked segments are taken from
/// the cached attacked split of the chosen attack, clean segments are copied.
Samples patterned_replica(const PbdEntry& entry, const std::vector<SegmentVerdict>& verdicts,
                          const std::vector<std::string>& segment_conditions);

struct RunConfig {
  std::uint64_t seed = 7;
  double epsilon = 0.1;
  double threshold = kDefaultThreshold;
  double percentile = kDefaultPercentile;
  SimilarityMetric metric = SimilarityMetric::Cosine;
  std::size_t jobs = 0;
  bool evaluate_zoo = true;  // evaluate every zoo model for the baselines
};

void validate(const RunConfig& cfg);

struct ModelEvaluation {
  std::string model;
  double metric = 0.0;
  double seconds = 0.0;
  bool failed = false;
};

struct SelectionResult {
  std::string incoming;
  std::string scenario;
  DetectionReport detection;
  std::optional<GroupPrediction> group;                          // Case 2
  std::vector<std::optional<GroupPrediction>> segment_groups;   // Case 3, per segment
  std::vector<std::string> segment_attacks;                      // Case 3 RandomSelect picks
  std::vector<Match> per_attack_winners;                         // Case 2 sweep
  std::vector<Match> candidates;                                 // similarity of the final comparison
  std::string chosen_dataset;
  double similarity = 0.0;
  Top3 top3;
  std::string metric_name;  // "accuracy" or "asr"
  bool higher_is_better = true;
  std::vector<ModelEvaluation> evaluations;  // top-3 first, then the rest of the zoo when evaluated
  std::string winner;
  double winner_metric = 0.0;
  std::optional<Baselines> baselines;
  OverheadReport overhead;  // timing; kept out of the structured result
};

/// Detect, route, match and select. The incoming dataset's train/val splits are clean; the arrival
/// is its validation split transformed by `scenario` with a surrogate model.
SelectionResult run_pipeline(const Dataset& incoming, const Scenario& scenario, const Pbd& pbd, const RunConfig& cfg);

/// Deterministic structured record (no timings).
nlohmann::json result_to_json(const SelectionResult& r);
nlohmann::json timings_to_json(const SelectionResult& r);
std::string format_result_table(const SelectionResult& r);

nlohmann::json detectors_to_json(const DetectorPair& d);
DetectorPair detectors_from_json(const nlohmann::json& j);

}  // namespace relate
