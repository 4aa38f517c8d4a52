#include "relate/models.hpp"

#include <algorithm>
#include <cstdio>
#include <cmath>
#include <limits>
#include <map>
#include <random>
#include <set>

#include <json.hpp>

namespace relate {

std::string to_string(Architecture a) {
  switch (a) {
    case Architecture::Linear: return "linear";
    case Architecture::Mlp: return "mlp";
    case Architecture::FcnS: return "fcn-s";
    case Architecture::FcnL: return "fcn-l";
    case Architecture::TcnLite: return "tcn-lite";
    case Architecture::MeanPoolMlp: return "meanpool-mlp";
  }
  return "unknown";
}

Architecture architecture_from_string(const std::string& s) {
  for (auto a : kZoo)
    if (to_string(a) == s) return a;
  throw ContractError("unknown architecture '" + s + "'");
}

HyperGrid default_grid(Architecture a) {
  // Conv widths are halved relative to the dense models to keep per-model cost comparable.
  std::vector<std::size_t> widths;
  switch (a) {
    case Architecture::Linear: widths = {1}; break;  // width unused
    case Architecture::Mlp: widths = {32, 64}; break;
    case Architecture::MeanPoolMlp: widths = {16, 32}; break;
    case Architecture::FcnS:
    case Architecture::FcnL:
    case Architecture::TcnLite: widths = {8, 16}; break;
  }
  HyperGrid grid;
  for (double lr : {0.1, 0.01})
    for (std::size_t w : widths) grid.push_back(ModelSpec{a, w, lr, 30, 16});
  return grid;
}

nn::Network build_network(const ModelSpec& spec, std::size_t C, std::size_t L, std::size_t K) {
  using namespace nn;
  const std::size_t w = spec.width;
  if (w == 0) throw ContractError("model width must be >= 1");
  Network net(C, L);
  switch (spec.architecture) {
    case Architecture::Linear:
      net.add<Dense>(C * L, K);
      break;
    case Architecture::Mlp:
      net.add<Dense>(C * L, w).add<Relu>().add<Dense>(w, K);
      break;
    case Architecture::FcnS:
      net.add<Conv1d>(C, w, 5).add<Relu>().add<Conv1d>(w, w, 3).add<Relu>().add<AdaptiveMaxPool>(1).add<Dense>(w, K);
      break;
    case Architecture::FcnL:
      net.add<Conv1d>(C, w, 7)
          .add<Relu>()
          .add<Conv1d>(w, w, 5)
          .add<Relu>()
          .add<Conv1d>(w, w, 3)
          .add<Relu>()
          .add<AdaptiveMaxPool>(1)
          .add<Dense>(w, K);
      break;
    case Architecture::TcnLite:
      net.add<Conv1d>(C, w, 3, 1, true)
          .add<Relu>()
          .add<Conv1d>(w, w, 3, 2, true)
          .add<Relu>()
          .add<TemporalMean>()
          .add<Dense>(w, K);
      break;
    case Architecture::MeanPoolMlp:
      net.add<TemporalMean>().add<Dense>(C, w).add<Relu>().add<Dense>(w, K);
      break;
  }
  return net;
}

// ---- TrainedModel --------------------------------------------------------

TrainedModel::TrainedModel(ModelSpec spec, std::size_t channels, std::size_t length, std::size_t classes,
                           std::vector<double> params)
    : spec_(spec), channels_(channels), length_(length), classes_(classes),
      net_(build_network(spec, channels, length, classes)), params_(std::move(params)) {
  if (params_.size() != net_.num_params()) throw ContractError("model parameter count mismatch for " + spec.id());
  for (double v : params_)
    if (!std::isfinite(v)) throw ContractError("model parameters must be finite");
}

void TrainedModel::check_shape(const Series& x) const {
  if (x.channels != channels_ || x.length != length_ || x.values.size() != channels_ * length_)
    throw ContractError("sample shape (" + std::to_string(x.channels) + "x" + std::to_string(x.length) +
                        ") does not match model input (" + std::to_string(channels_) + "x" + std::to_string(length_) + ")");
}

ForwardResult TrainedModel::forward(const Series& x) const {
  check_shape(x);
  ForwardResult r;
  r.logits = net_.forward(params_, x).values;
  r.probs = nn::softmax(r.logits);
  return r;
}

std::size_t TrainedModel::predict(const Series& x) const {
  check_shape(x);
  const auto logits = net_.forward(params_, x).values;
  return static_cast<std::size_t>(std::max_element(logits.begin(), logits.end()) - logits.begin());
}

namespace {

// logsumexp_{k != label} z_k - z_label
double other_margin(const std::vector<double>& z, std::size_t label) {
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < z.size(); ++k)
    if (k != label) m = std::max(m, z[k]);
  double sum = 0.0;
  for (std::size_t k = 0; k < z.size(); ++k)
    if (k != label) sum += std::exp(z[k] - m);
  return m + std::log(sum) - z[label];
}

double softplus(double a) { return a > 0.0 ? a + std::log1p(std::exp(-a)) : std::log1p(std::exp(a)); }

}  // namespace

LossGradient TrainedModel::loss_and_input_gradient(const Series& x, std::size_t label) const {
  check_shape(x);
  if (label >= classes_) throw ContractError("label out of range");
  nn::Trace trace;
  const auto out = net_.forward(params_, x, &trace);
  auto probs = nn::softmax(out.values);
  LossGradient r;
  r.loss = softplus(other_margin(out.values, label));
  nn::Tensor g(out.channels, out.length);
  for (std::size_t k = 0; k < classes_; ++k) g.values[k] = probs[k] - (k == label ? 1.0 : 0.0);
  r.grad = net_.backward(params_, g, trace, {});
  return r;
}

AscentDirection TrainedModel::ascent_direction(const Series& x, std::size_t label) const {
  check_shape(x);
  if (label >= classes_) throw ContractError("label out of range");
  if (classes_ < 2) throw ContractError("ascent direction needs at least 2 classes");
  nn::Trace trace;
  const auto out = net_.forward(params_, x, &trace);
  AscentDirection r;
  r.margin = other_margin(out.values, label);
  r.loss = softplus(r.margin);
  // grad CE = sum_{k != y} p_k (grad z_k - grad z_y); divide by sum_{k != y} p_k
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < classes_; ++k)
    if (k != label) m = std::max(m, out.values[k]);
  nn::Tensor g(out.channels, out.length);
  double sum = 0.0;
  for (std::size_t k = 0; k < classes_; ++k)
    if (k != label) sum += g.values[k] = std::exp(out.values[k] - m);
  for (std::size_t k = 0; k < classes_; ++k) g.values[k] = k == label ? -1.0 : g.values[k] / sum;
  r.direction = net_.backward(params_, g, trace, {});
  return r;
}

Series TrainedModel::logit_gradient(const Series& x, std::span<const double> weights, std::vector<double>* logits) const {
  check_shape(x);
  if (weights.size() != classes_) throw ContractError("logit weight vector has wrong length");
  nn::Trace trace;
  const auto out = net_.forward(params_, x, &trace);
  if (logits) *logits = out.values;
  nn::Tensor g(out.channels, out.length);
  std::copy(weights.begin(), weights.end(), g.values.begin());
  return net_.backward(params_, g, trace, {});
}

std::vector<Series> TrainedModel::logit_jacobian(const Series& x, std::vector<double>* logits) const {
  check_shape(x);
  nn::Trace trace;
  const auto out = net_.forward(params_, x, &trace);
  if (logits) *logits = out.values;
  std::vector<Series> rows;
  rows.reserve(classes_);
  for (std::size_t k = 0; k < classes_; ++k) {
    nn::Tensor g(out.channels, out.length);
    g.values[k] = 1.0;
    rows.push_back(net_.backward(params_, g, trace, {}));
  }
  return rows;
}

// ---- training ------------------------------------------------------------

double training_cost(const ModelSpec& spec, const Dataset& ds) {
  const auto net = build_network(spec, ds.channels, ds.length, ds.num_classes);
  return net.forward_macs() * 3.0 * static_cast<double>(spec.epochs) * static_cast<double>(ds.train.size());
}

namespace {

double accuracy_with_params(const nn::Network& net, std::span<const double> params, const Samples& samples) {
  if (samples.empty()) return 0.0;
  std::size_t correct = 0;
  for (const auto& s : samples) {
    const auto logits = net.forward(params, s.x).values;
    const auto pred = static_cast<std::size_t>(std::max_element(logits.begin(), logits.end()) - logits.begin());
    correct += pred == s.label;
  }
  return static_cast<double>(correct) / static_cast<double>(samples.size());
}

}  // namespace

namespace {
std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}
}  // namespace

SgdResult sgd_fit(const nn::Network& net, std::vector<double> params, const Dataset& ds, const SgdOptions& opt,
                  std::uint64_t seed, const std::string& tag) {
  validate(ds);
  if (ds.train.empty()) throw ContractError("cannot train on an empty training split");
  if (opt.batch_size == 0) throw ContractError("batch size must be >= 1");
  if (!(opt.learning_rate > 0.0)) throw ContractError("learning rate must be positive");
  std::vector<double> velocity(params.size(), 0.0), grad(params.size(), 0.0);
  std::mt19937_64 rng(mix_seed(seed, 0x7a11));
  std::vector<std::size_t> order(ds.train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  const Samples& val = ds.val.empty() ? ds.train : ds.val;
  SgdResult result;
  result.params = params;
  result.best_val_accuracy = accuracy_with_params(net, params, val);
  constexpr double momentum = 0.9;

  nn::Trace trace;
  for (std::size_t epoch = 1; epoch <= opt.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += opt.batch_size) {
      const std::size_t end = std::min(order.size(), start + opt.batch_size);
      std::fill(grad.begin(), grad.end(), 0.0);
      for (std::size_t b = start; b < end; ++b) {
        const auto& s = ds.train[order[b]];
        const auto out = net.forward(params, s.x, &trace, &rng);
        const auto probs = nn::softmax(out.values);
        epoch_loss += -std::log(std::max(probs[s.label], 1e-300));
        nn::Tensor g(out.channels, out.length);
        for (std::size_t k = 0; k < probs.size(); ++k) g.values[k] = probs[k] - (k == s.label ? 1.0 : 0.0);
        net.backward(params, g, trace, grad);
      }
      const double scale = 1.0 / static_cast<double>(end - start);
      for (std::size_t i = 0; i < params.size(); ++i) {
        velocity[i] = momentum * velocity[i] - opt.learning_rate * grad[i] * scale;
        params[i] += velocity[i];
      }
    }
    bool finite = std::isfinite(epoch_loss);
    for (double v : params) finite = finite && std::isfinite(v);
    if (!finite)
      throw DivergenceError(epoch, "training diverged at epoch " + std::to_string(epoch) + " (" + tag + ", lr=" +
                                       fmt_double(opt.learning_rate) + ")");
    const double acc = accuracy_with_params(net, params, val);
    if (acc > result.best_val_accuracy) {
      result.best_val_accuracy = acc;
      result.best_epoch = epoch;
      result.params = params;
    }
  }
  return result;
}

TrainReport train_with_report(const ModelSpec& spec, const Dataset& ds, std::uint64_t seed) {
  validate(ds);
  const auto net = build_network(spec, ds.channels, ds.length, ds.num_classes);
  auto params = net.init_params(mix_seed(seed, static_cast<std::uint64_t>(spec.architecture) + 1));
  auto fit = sgd_fit(net, std::move(params), ds, {spec.learning_rate, spec.epochs, spec.batch_size}, seed, spec.id());
  TrainReport report;
  report.best_val_accuracy = fit.best_val_accuracy;
  report.best_epoch = fit.best_epoch;
  report.model = TrainedModel(spec, ds.channels, ds.length, ds.num_classes, std::move(fit.params));
  report.cost = training_cost(spec, ds);
  return report;
}

TrainedModel train(const ModelSpec& spec, const Dataset& ds, std::uint64_t seed) {
  return train_with_report(spec, ds, seed).model;
}

TuneResult tune_with_report(Architecture a, const Dataset& ds, const HyperGrid& grid, std::uint64_t seed) {
  if (grid.empty()) throw ContractError("tune: empty hyperparameter grid");
  TuneResult result;
  std::optional<std::size_t> best;
  double best_cost = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    ModelSpec spec = grid[i];
    spec.architecture = a;
    try {
      const auto rep = train_with_report(spec, ds, seed);
      result.grid_scores.push_back(rep.best_val_accuracy);
      const bool better = !best || rep.best_val_accuracy > result.val_accuracy ||
                          (rep.best_val_accuracy == result.val_accuracy && rep.cost < best_cost);
      if (better) {
        best = i;
        result.val_accuracy = rep.best_val_accuracy;
        best_cost = rep.cost;
        result.best = spec;
        result.model = rep.model;
      }
    } catch (const DivergenceError&) {
      result.grid_scores.push_back(std::nullopt);
    }
  }
  if (!best) throw ContractError("tune: every grid point diverged for " + to_string(a));
  return result;
}

ModelSpec tune(Architecture a, const Dataset& ds, const HyperGrid& grid, std::uint64_t seed) {
  return tune_with_report(a, ds, grid, seed).best;
}

// ---- metrics -------------------------------------------------------------

std::vector<std::size_t> predict_all(const LabelOracle& model, const Samples& samples) {
  std::vector<std::size_t> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(model.predict(s.x));
  return out;
}

std::vector<std::size_t> labels_of(const Samples& samples) {
  std::vector<std::size_t> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(s.label);
  return out;
}

double accuracy_from_predictions(std::span<const std::size_t> predicted, std::span<const std::size_t> truth) {
  if (predicted.empty()) throw ContractError("accuracy of an empty sample list");
  if (predicted.size() != truth.size()) throw ContractError("prediction/label length mismatch");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) correct += predicted[i] == truth[i];
  return static_cast<double>(correct) / static_cast<double>(truth.size());
}

double f1_macro_from_predictions(std::span<const std::size_t> predicted, std::span<const std::size_t> truth) {
  if (predicted.empty()) throw ContractError("F1 of an empty sample list");
  if (predicted.size() != truth.size()) throw ContractError("prediction/label length mismatch");
  std::set<std::size_t> classes(truth.begin(), truth.end());
  classes.insert(predicted.begin(), predicted.end());
  double sum = 0.0;
  for (std::size_t k : classes) {
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      if (predicted[i] == k && truth[i] == k) ++tp;
      else if (predicted[i] == k) ++fp;
      else if (truth[i] == k) ++fn;
    }
    const double p = tp + fp ? double(tp) / double(tp + fp) : 0.0;
    const double r = tp + fn ? double(tp) / double(tp + fn) : 0.0;
    sum += p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
  }
  return sum / static_cast<double>(classes.size());
}

double accuracy(const LabelOracle& model, const Samples& samples) {
  if (samples.empty()) throw ContractError("accuracy of an empty sample list");
  const auto pred = predict_all(model, samples);
  const auto truth = labels_of(samples);
  return accuracy_from_predictions(pred, truth);
}

double f1_macro(const LabelOracle& model, const Samples& samples) {
  if (samples.empty()) throw ContractError("F1 of an empty sample list");
  const auto pred = predict_all(model, samples);
  const auto truth = labels_of(samples);
  return f1_macro_from_predictions(pred, truth);
}

// ---- persistence ---------------------------------------------------------

std::string model_to_json(const TrainedModel& m) {
  nlohmann::json j;
  j["architecture"] = to_string(m.spec().architecture);
  j["channels"] = m.channels();
  j["length"] = m.length();
  j["classes"] = m.num_classes();
  j["hyperparams"] = {{"width", m.spec().width},
                      {"learning_rate", m.spec().learning_rate},
                      {"epochs", m.spec().epochs},
                      {"batch_size", m.spec().batch_size}};
  j["params"] = m.parameters();
  return j.dump();
}

TrainedModel model_from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    ModelSpec spec;
    spec.architecture = architecture_from_string(j.at("architecture").get<std::string>());
    const auto& h = j.at("hyperparams");
    spec.width = h.at("width").get<std::size_t>();
    spec.learning_rate = h.at("learning_rate").get<double>();
    spec.epochs = h.at("epochs").get<std::size_t>();
    spec.batch_size = h.at("batch_size").get<std::size_t>();
    return TrainedModel(spec, j.at("channels").get<std::size_t>(), j.at("length").get<std::size_t>(),
                        j.at("classes").get<std::size_t>(), j.at("params").get<std::vector<double>>());
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed model record: ") + e.what());
  }
}

}  // namespace relate
