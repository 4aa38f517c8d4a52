#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "relate/core.hpp"
#include "relate/models.hpp"

namespace relate {

enum class AttackKind { Fgsm, Bim, Mim, AutoPgd, DeepFool, ElasticNet, Boundary };

inline constexpr AttackKind kAllAttacks[] = {AttackKind::Fgsm,     AttackKind::Bim,        AttackKind::Mim,
                                             AttackKind::AutoPgd,  AttackKind::DeepFool,   AttackKind::ElasticNet,
                                             AttackKind::Boundary};

enum class AttackGroup { IterationBased = 1, OptimizationDecisionBased = 2 };

constexpr AttackGroup group_of(AttackKind k) {
  switch (k) {
    case AttackKind::Fgsm:
    case AttackKind::Bim:
    case AttackKind::Mim:
    case AttackKind::AutoPgd: return AttackGroup::IterationBased;
    case AttackKind::DeepFool:
    case AttackKind::ElasticNet:
    case AttackKind::Boundary: return AttackGroup::OptimizationDecisionBased;
  }
  return AttackGroup::OptimizationDecisionBased;
}

std::vector<AttackKind> attacks_in(AttackGroup g);

std::string to_string(AttackKind k);
std::string to_string(AttackGroup g);
AttackKind attack_from_string(const std::string& s);
AttackGroup group_from_string(const std::string& s);

struct AttackSpec {
  AttackKind kind = AttackKind::Fgsm;
  double epsilon = 0.1;         // l-inf budget; unused by DeepFool/ElasticNet/Boundary
  std::size_t iterations = 10;  // unused by FGSM
  double momentum = 1.0;        // MIM decay
  double beta = 0.01;           // ElasticNet l1 threshold
  double overshoot = 0.02;      // DeepFool
  // Optional value range for datasets with declared bounds.
  std::optional<double> clip_min, clip_max;

  std::string condition() const;  // e.g. "fgsm@0.1"
};

/// Defaults: iterations 10 for BIM/MIM/AutoPGD, 50 for DeepFool, 100 for
/// ElasticNet, 500 for Boundary; mu = 1.0; beta = 0.01.
AttackSpec default_attack(AttackKind kind, double epsilon = 0.1);

struct AttackOutcome {
  Series x;
  bool adversarial = false;  // prediction differs from the label
  std::size_t steps = 0;
};

Series fgsm(const TrainedModel& model, const Series& x, std::size_t label, double epsilon);
Series bim(const TrainedModel& model, const Series& x, std::size_t label, double epsilon, std::size_t iterations);
Series mim(const TrainedModel& model, const Series& x, std::size_t label, double epsilon, std::size_t iterations,
           double momentum);

struct PgdResult {
  Series x;
  double loss = 0.0;                  // loss of the returned iterate
  std::vector<double> iterate_losses;  // including the starting point
};

/// PGD with step 2*eps/iters that halves whenever the loss fails to increase
/// for two consecutive iterations; returns the maximal-loss iterate.
PgdResult auto_pgd(const TrainedModel& model, const Series& x, std::size_t label, double epsilon, std::size_t iterations);

/// Minimal l2 steps onto the nearest linearized boundary; overshoot applied to
/// the accumulated perturbation. Already-misclassified inputs come back unchanged.
AttackOutcome deepfool(const TrainedModel& model, const Series& x, std::size_t label, std::size_t iterations = 50,
                       double overshoot = 0.02);

double soft_threshold(double v, double beta);

/// ISTA loop on a margin loss plus l2 penalty, soft-thresholded by beta each step.
AttackOutcome elastic_net(const TrainedModel& model, const Series& x, std::size_t label, std::size_t iterations = 100,
                          double beta = 0.01);

struct BoundaryResult {
  AttackOutcome outcome;
  std::vector<double> accepted_distances;  // l2 distance to x of each accepted iterate, init first
  std::vector<char> accepted_misclassified;
};

/// Decision-based attack: needs nothing but label queries.
BoundaryResult boundary_attack(const LabelOracle& model, const Series& x, std::size_t label, std::size_t iterations,
                               std::uint64_t seed);

struct AttackedSet {
  Samples samples;
  std::vector<char> adversarial;   // per-sample success flag
  std::vector<std::string> errors;  // per-sample error text, empty when fine
};

/// Element-wise application; labels and shapes preserved. Per-sample failures
/// are flagged and the clean sample is passed through.
AttackedSet attack_dataset(const TrainedModel& model, const Samples& samples, const AttackSpec& spec, std::uint64_t seed);

/// Fraction of aligned positions where the model's prediction changes.
double attack_success_rate(const LabelOracle& model, const Samples& clean, const Samples& attacked);

}  // namespace relate
