#pragma once

// Minimal layer stack with hand-written backpropagation. Activations are
// (channels x length) channel-major tensors; dense layers treat their input as
// a flat vector and emit an (out x 1) tensor.

#include <cstddef>
#include <cstdint>
#include <memory>
#include <random>
#include <span>
#include <vector>

#include "relate/core.hpp"

namespace relate::nn {

using Tensor = Series;

/// Per-layer state kept between forward and backward.
struct LayerTrace {
  Tensor input;
  std::vector<std::size_t> index;  // argmax positions for max pools
  std::vector<char> mask;          // dropout keep mask
};

class Layer {
 public:
  virtual ~Layer() = default;
  virtual std::size_t num_params() const { return 0; }
  virtual void init(std::span<double> params, std::mt19937_64& rng) const { (void)params; (void)rng; }
  // `dropout_rng` is non-null only in training mode.
  virtual Tensor forward(std::span<const double> params, const Tensor& in, LayerTrace& trace,
                         std::mt19937_64* dropout_rng) const = 0;
  // Accumulates into `param_grad` (may be empty when only the input gradient is wanted).
  virtual Tensor backward(std::span<const double> params, const Tensor& grad_out, const LayerTrace& trace,
                          std::span<double> param_grad) const = 0;
  // Multiply-accumulates of one forward pass, for cost accounting.
  virtual double macs(const Tensor& in_shape) const = 0;
  virtual Tensor output_shape(const Tensor& in_shape) const = 0;
};

class Conv1d final : public Layer {
 public:
  Conv1d(std::size_t in, std::size_t out, std::size_t kernel, std::size_t dilation = 1, bool causal = false)
      : in_(in), out_(out), kernel_(kernel), dilation_(dilation), causal_(causal) {}
  std::size_t num_params() const override { return out_ * in_ * kernel_ + out_; }
  void init(std::span<double> params, std::mt19937_64& rng) const override;
  Tensor forward(std::span<const double> params, const Tensor& in, LayerTrace& trace, std::mt19937_64*) const override;
  Tensor backward(std::span<const double> params, const Tensor& grad_out, const LayerTrace& trace,
                  std::span<double> param_grad) const override;
  double macs(const Tensor& in) const override { return double(in_ * out_ * kernel_ * in.length); }
  Tensor output_shape(const Tensor& in) const override { return Tensor(out_, in.length); }

 private:
  std::ptrdiff_t left_pad() const;
  std::size_t in_, out_, kernel_, dilation_;
  bool causal_;
};

class Dense final : public Layer {
 public:
  Dense(std::size_t in, std::size_t out) : in_(in), out_(out) {}
  std::size_t num_params() const override { return out_ * in_ + out_; }
  void init(std::span<double> params, std::mt19937_64& rng) const override;
  Tensor forward(std::span<const double> params, const Tensor& in, LayerTrace& trace, std::mt19937_64*) const override;
  Tensor backward(std::span<const double> params, const Tensor& grad_out, const LayerTrace& trace,
                  std::span<double> param_grad) const override;
  double macs(const Tensor&) const override { return double(in_ * out_); }
  Tensor output_shape(const Tensor&) const override { return Tensor(out_, 1); }

 private:
  std::size_t in_, out_;
};

class Relu final : public Layer {
 public:
  Tensor forward(std::span<const double>, const Tensor& in, LayerTrace& trace, std::mt19937_64*) const override;
  Tensor backward(std::span<const double>, const Tensor& grad_out, const LayerTrace& trace, std::span<double>) const override;
  double macs(const Tensor&) const override { return 0.0; }
  Tensor output_shape(const Tensor& in) const override { return Tensor(in.channels, in.length); }
};

/// Max over time into `bins` adaptive windows per channel (bins = 1 is global max pooling).
class AdaptiveMaxPool final : public Layer {
 public:
  explicit AdaptiveMaxPool(std::size_t bins) : bins_(bins) {}
  Tensor forward(std::span<const double>, const Tensor& in, LayerTrace& trace, std::mt19937_64*) const override;
  Tensor backward(std::span<const double>, const Tensor& grad_out, const LayerTrace& trace, std::span<double>) const override;
  double macs(const Tensor&) const override { return 0.0; }
  Tensor output_shape(const Tensor& in) const override { return Tensor(in.channels, bins_); }

 private:
  std::size_t bins_;
};

/// Temporal mean per channel: (C, L) -> (C, 1).
class TemporalMean final : public Layer {
 public:
  Tensor forward(std::span<const double>, const Tensor& in, LayerTrace& trace, std::mt19937_64*) const override;
  Tensor backward(std::span<const double>, const Tensor& grad_out, const LayerTrace& trace, std::span<double>) const override;
  double macs(const Tensor& in) const override { return double(in.size()); }
  Tensor output_shape(const Tensor& in) const override { return Tensor(in.channels, 1); }
};

/// Inverted dropout; identity outside training.
class Dropout final : public Layer {
 public:
  explicit Dropout(double rate) : rate_(rate) {}
  Tensor forward(std::span<const double>, const Tensor& in, LayerTrace& trace, std::mt19937_64* rng) const override;
  Tensor backward(std::span<const double>, const Tensor& grad_out, const LayerTrace& trace, std::span<double>) const override;
  double macs(const Tensor&) const override { return 0.0; }
  Tensor output_shape(const Tensor& in) const override { return Tensor(in.channels, in.length); }

 private:
  double rate_;
};

struct Trace {
  std::vector<LayerTrace> layers;
};

class Network {
 public:
  Network() = default;
  Network(std::size_t channels, std::size_t length) : channels_(channels), length_(length) {}

  template <class L, class... Args>
  Network& add(Args&&... args) {
    layers_.push_back(std::make_shared<const L>(std::forward<Args>(args)...));
    offsets_.push_back(total_params_);
    total_params_ += layers_.back()->num_params();
    return *this;
  }

  std::size_t num_params() const { return total_params_; }
  std::size_t num_layers() const { return layers_.size(); }
  std::size_t channels() const { return channels_; }
  std::size_t length() const { return length_; }

  std::vector<double> init_params(std::uint64_t seed) const;
  // Re-initializes only layer `layer` from `seed`, leaving the rest untouched.
  void init_layer(std::span<double> params, std::size_t layer, std::uint64_t seed) const;

  /// Runs layers [0, stop) (all when stop exceeds the depth).
  Tensor forward(std::span<const double> params, const Tensor& x, Trace* trace = nullptr,
                 std::mt19937_64* dropout_rng = nullptr, std::size_t stop = static_cast<std::size_t>(-1)) const;

  /// Backpropagates `grad_out` through the whole stack recorded in `trace`.
  /// Returns the gradient w.r.t. the network input; accumulates parameter
  /// gradients into `param_grad` when it is non-empty.
  Tensor backward(std::span<const double> params, const Tensor& grad_out, const Trace& trace,
                  std::span<double> param_grad) const;

  double forward_macs() const;

 private:
  std::size_t channels_ = 0, length_ = 0;
  std::vector<std::shared_ptr<const Layer>> layers_;
  std::vector<std::size_t> offsets_;
  std::size_t total_params_ = 0;
};

/// Numerically stable softmax.
std::vector<double> softmax(std::span<const double> logits);

}  // namespace relate::nn
