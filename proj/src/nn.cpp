#include "relate/nn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace relate::nn {

namespace {

void he_uniform(std::span<double> w, std::size_t fan_in, std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(std::max<std::size_t>(1, fan_in)));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (auto& v : w) v = dist(rng);
}

}  // namespace

// ---- Conv1d --------------------------------------------------------------

std::ptrdiff_t Conv1d::left_pad() const {
  const auto span = static_cast<std::ptrdiff_t>((kernel_ - 1) * dilation_);
  return causal_ ? span : span / 2;
}

void Conv1d::init(std::span<double> params, std::mt19937_64& rng) const {
  he_uniform(params.subspan(0, out_ * in_ * kernel_), in_ * kernel_, rng);
  std::fill(params.begin() + static_cast<std::ptrdiff_t>(out_ * in_ * kernel_), params.end(), 0.0);
}

Tensor Conv1d::forward(std::span<const double> params, const Tensor& in, LayerTrace& trace, std::mt19937_64*) const {
  if (in.channels != in_) throw ContractError("conv1d: input channel mismatch");
  trace.input = in;
  const std::size_t L = in.length;
  const auto pad = left_pad();
  const double* w = params.data();
  const double* b = params.data() + out_ * in_ * kernel_;
  Tensor out(out_, L);
  for (std::size_t o = 0; o < out_; ++o) {
    double* y = out.values.data() + o * L;
    std::fill(y, y + L, b[o]);
    for (std::size_t i = 0; i < in_; ++i) {
      const double* x = in.values.data() + i * L;
      const double* wk = w + (o * in_ + i) * kernel_;
      for (std::size_t k = 0; k < kernel_; ++k) {
        const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(k * dilation_) - pad;
        const double wv = wk[k];
        const std::ptrdiff_t t0 = std::max<std::ptrdiff_t>(0, -off);
        const std::ptrdiff_t t1 = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(L), static_cast<std::ptrdiff_t>(L) - off);
        for (std::ptrdiff_t t = t0; t < t1; ++t) y[t] += wv * x[t + off];
      }
    }
  }
  return out;
}

Tensor Conv1d::backward(std::span<const double> params, const Tensor& grad_out, const LayerTrace& trace,
                        std::span<double> param_grad) const {
  const Tensor& in = trace.input;
  const std::size_t L = in.length;
  const auto pad = left_pad();
  const double* w = params.data();
  Tensor grad_in(in_, L);
  const bool want_params = !param_grad.empty();
  for (std::size_t o = 0; o < out_; ++o) {
    const double* g = grad_out.values.data() + o * L;
    if (want_params) {
      double gb = 0.0;
      for (std::size_t t = 0; t < L; ++t) gb += g[t];
      param_grad[out_ * in_ * kernel_ + o] += gb;
    }
    for (std::size_t i = 0; i < in_; ++i) {
      const double* x = in.values.data() + i * L;
      double* gx = grad_in.values.data() + i * L;
      const double* wk = w + (o * in_ + i) * kernel_;
      for (std::size_t k = 0; k < kernel_; ++k) {
        const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(k * dilation_) - pad;
        const std::ptrdiff_t t0 = std::max<std::ptrdiff_t>(0, -off);
        const std::ptrdiff_t t1 = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(L), static_cast<std::ptrdiff_t>(L) - off);
        const double wv = wk[k];
        double gw = 0.0;
        for (std::ptrdiff_t t = t0; t < t1; ++t) {
          gx[t + off] += wv * g[t];
          gw += g[t] * x[t + off];
        }
        if (want_params) param_grad[(o * in_ + i) * kernel_ + k] += gw;
      }
    }
  }
  return grad_in;
}

// ---- Dense ---------------------------------------------------------------

void Dense::init(std::span<double> params, std::mt19937_64& rng) const {
  he_uniform(params.subspan(0, out_ * in_), in_, rng);
  std::fill(params.begin() + static_cast<std::ptrdiff_t>(out_ * in_), params.end(), 0.0);
}

Tensor Dense::forward(std::span<const double> params, const Tensor& in, LayerTrace& trace, std::mt19937_64*) const {
  if (in.values.size() != in_) throw ContractError("dense: input size mismatch");
  trace.input = in;
  Tensor out(out_, 1);
  const double* w = params.data();
  const double* b = params.data() + out_ * in_;
  for (std::size_t o = 0; o < out_; ++o) {
    double acc = b[o];
    const double* row = w + o * in_;
    for (std::size_t i = 0; i < in_; ++i) acc += row[i] * in.values[i];
    out.values[o] = acc;
  }
  return out;
}

Tensor Dense::backward(std::span<const double> params, const Tensor& grad_out, const LayerTrace& trace,
                       std::span<double> param_grad) const {
  const Tensor& in = trace.input;
  Tensor grad_in(in.channels, in.length);
  const double* w = params.data();
  for (std::size_t o = 0; o < out_; ++o) {
    const double g = grad_out.values[o];
    if (g == 0.0) continue;
    const double* row = w + o * in_;
    for (std::size_t i = 0; i < in_; ++i) grad_in.values[i] += g * row[i];
    if (!param_grad.empty()) {
      double* gw = param_grad.data() + o * in_;
      for (std::size_t i = 0; i < in_; ++i) gw[i] += g * in.values[i];
      param_grad[out_ * in_ + o] += g;
    }
  }
  return grad_in;
}

// ---- elementwise / pooling ----------------------------------------------

Tensor Relu::forward(std::span<const double>, const Tensor& in, LayerTrace& trace, std::mt19937_64*) const {
  trace.input = in;
  Tensor out = in;
  for (auto& v : out.values) v = v > 0.0 ? v : 0.0;
  return out;
}

Tensor Relu::backward(std::span<const double>, const Tensor& grad_out, const LayerTrace& trace, std::span<double>) const {
  Tensor g = grad_out;
  for (std::size_t i = 0; i < g.values.size(); ++i)
    if (!(trace.input.values[i] > 0.0)) g.values[i] = 0.0;
  return g;
}

Tensor AdaptiveMaxPool::forward(std::span<const double>, const Tensor& in, LayerTrace& trace, std::mt19937_64*) const {
  trace.input = Tensor(in.channels, in.length);  // shape only
  trace.index.assign(in.channels * bins_, 0);
  Tensor out(in.channels, bins_);
  const std::size_t L = in.length;
  for (std::size_t c = 0; c < in.channels; ++c)
    for (std::size_t b = 0; b < bins_; ++b) {
      const std::size_t start = b * L / bins_;
      const std::size_t end = std::max(start + 1, ((b + 1) * L + bins_ - 1) / bins_);
      std::size_t best = start;
      for (std::size_t t = start + 1; t < end && t < L; ++t)
        if (in.at(c, t) > in.at(c, best)) best = t;
      out.at(c, b) = in.at(c, best);
      trace.index[c * bins_ + b] = c * L + best;
    }
  return out;
}

Tensor AdaptiveMaxPool::backward(std::span<const double>, const Tensor& grad_out, const LayerTrace& trace,
                                 std::span<double>) const {
  Tensor g(trace.input.channels, trace.input.length);
  for (std::size_t j = 0; j < trace.index.size(); ++j) g.values[trace.index[j]] += grad_out.values[j];
  return g;
}

Tensor TemporalMean::forward(std::span<const double>, const Tensor& in, LayerTrace& trace, std::mt19937_64*) const {
  trace.input = Tensor(in.channels, in.length);
  Tensor out(in.channels, 1);
  for (std::size_t c = 0; c < in.channels; ++c) {
    double s = 0.0;
    for (double v : in.channel(c)) s += v;
    out.values[c] = s / static_cast<double>(in.length);
  }
  return out;
}

Tensor TemporalMean::backward(std::span<const double>, const Tensor& grad_out, const LayerTrace& trace,
                              std::span<double>) const {
  Tensor g(trace.input.channels, trace.input.length);
  const double inv = 1.0 / static_cast<double>(g.length);
  for (std::size_t c = 0; c < g.channels; ++c)
    for (auto& v : g.channel(c)) v = grad_out.values[c] * inv;
  return g;
}

Tensor Dropout::forward(std::span<const double>, const Tensor& in, LayerTrace& trace, std::mt19937_64* rng) const {
  trace.mask.clear();
  if (!rng || rate_ <= 0.0) return in;
  std::bernoulli_distribution keep(1.0 - rate_);
  const double scale = 1.0 / (1.0 - rate_);
  trace.mask.resize(in.values.size());
  Tensor out = in;
  for (std::size_t i = 0; i < out.values.size(); ++i) {
    trace.mask[i] = keep(*rng) ? 1 : 0;
    out.values[i] = trace.mask[i] ? out.values[i] * scale : 0.0;
  }
  return out;
}

Tensor Dropout::backward(std::span<const double>, const Tensor& grad_out, const LayerTrace& trace, std::span<double>) const {
  if (trace.mask.empty()) return grad_out;
  const double scale = 1.0 / (1.0 - rate_);
  Tensor g = grad_out;
  for (std::size_t i = 0; i < g.values.size(); ++i) g.values[i] = trace.mask[i] ? g.values[i] * scale : 0.0;
  return g;
}

// ---- Network -------------------------------------------------------------

std::vector<double> Network::init_params(std::uint64_t seed) const {
  std::vector<double> params(total_params_, 0.0);
  for (std::size_t l = 0; l < layers_.size(); ++l) init_layer(params, l, seed);
  return params;
}

void Network::init_layer(std::span<double> params, std::size_t layer, std::uint64_t seed) const {
  std::mt19937_64 rng(mix_seed(seed, 0x1a7e5, layer));
  layers_[layer]->init(params.subspan(offsets_[layer], layers_[layer]->num_params()), rng);
}

Tensor Network::forward(std::span<const double> params, const Tensor& x, Trace* trace, std::mt19937_64* dropout_rng,
                        std::size_t stop) const {
  if (x.channels != channels_ || x.length != length_) throw ContractError("network: input shape mismatch");
  const std::size_t n = std::min(stop, layers_.size());
  LayerTrace scratch;
  if (trace) trace->layers.resize(n);
  Tensor cur = x;
  for (std::size_t l = 0; l < n; ++l) {
    auto p = params.subspan(offsets_[l], layers_[l]->num_params());
    cur = layers_[l]->forward(p, cur, trace ? trace->layers[l] : scratch, dropout_rng);
  }
  return cur;
}

Tensor Network::backward(std::span<const double> params, const Tensor& grad_out, const Trace& trace,
                         std::span<double> param_grad) const {
  Tensor g = grad_out;
  for (std::size_t l = trace.layers.size(); l-- > 0;) {
    auto p = params.subspan(offsets_[l], layers_[l]->num_params());
    std::span<double> pg = param_grad.empty() ? std::span<double>{} : param_grad.subspan(offsets_[l], layers_[l]->num_params());
    g = layers_[l]->backward(p, g, trace.layers[l], pg);
  }
  return g;
}

double Network::forward_macs() const {
  Tensor shape(channels_, length_);
  double total = 0.0;
  for (const auto& layer : layers_) {
    total += layer->macs(shape);
    shape = layer->output_shape(shape);
  }
  return total;
}

std::vector<double> softmax(std::span<const double> logits) {
  double m = -std::numeric_limits<double>::infinity();
  for (double v : logits) m = std::max(m, v);
  std::vector<double> p(logits.size());
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) z += (p[i] = std::exp(logits[i] - m));
  for (auto& v : p) v /= z;
  return p;
}

}  // namespace relate::nn
