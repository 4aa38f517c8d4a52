#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "relate/core.hpp"
#include "relate/nn.hpp"

namespace relate {

enum class Architecture { Linear, Mlp, FcnS, FcnL, TcnLite, MeanPoolMlp };

inline constexpr Architecture kZoo[] = {Architecture::Linear, Architecture::Mlp,     Architecture::FcnS,
                                        Architecture::FcnL,   Architecture::TcnLite, Architecture::MeanPoolMlp};

std::string to_string(Architecture a);
Architecture architecture_from_string(const std::string& s);

struct ModelSpec {
  Architecture architecture = Architecture::Mlp;
  std::size_t width = 16;  // hidden units or conv filters
  double learning_rate = 0.01;
  std::size_t epochs = 30;
  std::size_t batch_size = 16;

  /// Architecture tag, used as the model id in the benchmark database.
  std::string id() const { return to_string(architecture); }
  bool operator==(const ModelSpec&) const = default;
};

/// Grid point for tune(); epochs/batch size come from the point itself.
using HyperGrid = std::vector<ModelSpec>;

/// learning rate in {0.1, 0.01} x a per-architecture width pair, 30 epochs.
HyperGrid default_grid(Architecture a);

nn::Network build_network(const ModelSpec& spec, std::size_t channels, std::size_t length, std::size_t classes);

/// Anything that answers label queries. Decision-based attacks only see this.
class LabelOracle {
 public:
  virtual ~LabelOracle() = default;
  virtual std::size_t predict(const Series& x) const = 0;
  virtual std::size_t num_classes() const = 0;
};

struct ForwardResult {
  std::vector<double> logits;
  std::vector<double> probs;
};

struct LossGradient {
  double loss = 0.0;
  Series grad;
};

struct AscentDirection {
  double loss = 0.0;
  double margin = 0.0;  // logsumexp of the other logits minus the label logit; loss = softplus(margin)
  Series direction;
};

class TrainedModel final : public LabelOracle {
 public:
  TrainedModel() = default;
  TrainedModel(ModelSpec spec, std::size_t channels, std::size_t length, std::size_t classes, std::vector<double> params);

  const ModelSpec& spec() const { return spec_; }
  std::size_t channels() const { return channels_; }
  std::size_t length() const { return length_; }
  std::size_t num_classes() const override { return classes_; }
  const std::vector<double>& parameters() const { return params_; }
  const nn::Network& network() const { return net_; }

  ForwardResult forward(const Series& x) const;
  std::size_t predict(const Series& x) const override;

  /// Cross-entropy loss and its gradient with respect to the input.
  LossGradient loss_and_input_gradient(const Series& x, std::size_t label) const;

  /// A positive multiple of the cross-entropy input gradient, scaled by
  /// 1 / (1 - p_label) so it stays representable when the model is confident
  /// (the raw gradient underflows to exactly zero once the logit gap passes ~745).
  AscentDirection ascent_direction(const Series& x, std::size_t label) const;

  /// Gradient of sum_k weights[k] * logit_k with respect to the input; also returns the logits.
  Series logit_gradient(const Series& x, std::span<const double> weights, std::vector<double>* logits = nullptr) const;

  /// Input gradient of every logit (one forward pass, K backward passes).
  std::vector<Series> logit_jacobian(const Series& x, std::vector<double>* logits = nullptr) const;

  /// Estimated multiply-accumulates of one forward pass.
  double forward_macs() const { return net_.forward_macs(); }

 private:
  void check_shape(const Series& x) const;

  ModelSpec spec_;
  std::size_t channels_ = 0, length_ = 0, classes_ = 0;
  nn::Network net_;
  std::vector<double> params_;
};

/// Training divergence (non-finite loss).
class DivergenceError : public ContractError {
 public:
  DivergenceError(std::size_t epoch, const std::string& what) : ContractError(what), epoch_(epoch) {}
  std::size_t epoch() const { return epoch_; }

 private:
  std::size_t epoch_;
};

struct TrainReport {
  TrainedModel model;
  double best_val_accuracy = 0.0;
  std::size_t best_epoch = 0;  // 0 = initialization
  double cost = 0.0;           // deterministic cost proxy (MACs)
};

struct SgdOptions {
  double learning_rate = 0.01;
  std::size_t epochs = 30;
  std::size_t batch_size = 16;
};

struct SgdResult {
  std::vector<double> params;  // best-validation epoch
  double best_val_accuracy = 0.0;
  std::size_t best_epoch = 0;
};

/// Mini-batch SGD with momentum 0.9 on softmax cross-entropy over `net`'s
/// outputs. `tag` names the model in divergence errors.
SgdResult sgd_fit(const nn::Network& net, std::vector<double> params, const Dataset& ds, const SgdOptions& opt,
                  std::uint64_t seed, const std::string& tag);

/// Mini-batch SGD (momentum 0.9) on cross-entropy; keeps the parameters of the
/// epoch with the best validation accuracy.
TrainReport train_with_report(const ModelSpec& spec, const Dataset& ds, std::uint64_t seed);
TrainedModel train(const ModelSpec& spec, const Dataset& ds, std::uint64_t seed);

/// Deterministic training cost proxy used for tie-breaking: forward MACs x 3 x epochs x |train|.
double training_cost(const ModelSpec& spec, const Dataset& ds);

struct TuneResult {
  ModelSpec best;
  TrainedModel model;  // trained at `best` (same seed as the search)
  double val_accuracy = 0.0;
  std::vector<std::optional<double>> grid_scores;  // nullopt for diverged points
};

/// Exhaustive grid search by validation accuracy; ties go to lower training cost, then grid order.
TuneResult tune_with_report(Architecture a, const Dataset& ds, const HyperGrid& grid, std::uint64_t seed);
ModelSpec tune(Architecture a, const Dataset& ds, const HyperGrid& grid, std::uint64_t seed);

std::vector<std::size_t> predict_all(const LabelOracle& model, const Samples& samples);
double accuracy(const LabelOracle& model, const Samples& samples);
double f1_macro(const LabelOracle& model, const Samples& samples);

/// Metrics from label vectors. Macro-F1 averages over classes present in
/// either vector; a class with P + R = 0 contributes 0.
double accuracy_from_predictions(std::span<const std::size_t> predicted, std::span<const std::size_t> truth);
double f1_macro_from_predictions(std::span<const std::size_t> predicted, std::span<const std::size_t> truth);

std::vector<std::size_t> labels_of(const Samples& samples);

/// Structured text record: architecture tag, shapes, hyperparameters, flat parameter list.
std::string model_to_json(const TrainedModel& m);
TrainedModel model_from_json(const std::string& text);

}  // namespace relate
