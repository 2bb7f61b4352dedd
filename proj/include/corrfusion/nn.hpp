#pragma once

// Fully connected, batch-norm and softmax cross-entropy layers with paired
// forward/backward passes, plus the two-layer feature backbone.
//
// Everything is templated on the scalar type. Training runs in double; the
// gradient checker re-evaluates the same code in long double.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "corrfusion/matrix.hpp"

namespace corrfusion {

using Labels = std::vector<int>;
using Rng = std::mt19937_64;

enum class Activation { ReLU, Identity };
enum class Mode { Train, Infer };

/// Entries uniform in ±sqrt(6 / (in_dim + out_dim)).
template <typename T = double>
BasicMatrix<T> xavier_init(std::size_t in_dim, std::size_t out_dim, Rng& rng) {
  if (in_dim == 0 || out_dim == 0) throw DomainError("xavier_init: dimensions must be >= 1");
  const double bound = std::sqrt(6.0 / static_cast<double>(in_dim + out_dim));
  std::uniform_real_distribution<double> dist(-bound, bound);
  BasicMatrix<T> w(in_dim, out_dim);
  for (T& v : w.values()) v = static_cast<T>(dist(rng));
  return w;
}

// ---------------------------------------------------------------------------
// Dense

template <typename T>
struct BasicDenseLayer {
  BasicMatrix<T> W;  // in_dim x out_dim
  std::vector<T> b;  // out_dim
  Activation activation = Activation::ReLU;

  BasicDenseLayer() = default;
  BasicDenseLayer(std::size_t in_dim, std::size_t out_dim, Activation act, Rng& rng)
      : W(xavier_init<T>(in_dim, out_dim, rng)), b(out_dim, T{0}), activation(act) {}
  BasicDenseLayer(BasicMatrix<T> w, std::vector<T> bias, Activation act)
      : W(std::move(w)), b(std::move(bias)), activation(act) {
    if (b.size() != W.cols())
      throw ShapeError("DenseLayer: bias length " + std::to_string(b.size()) +
                       " vs weight " + W.shape());
  }

  std::size_t in_dim() const noexcept { return W.rows(); }
  std::size_t out_dim() const noexcept { return W.cols(); }
};

template <typename T>
struct DenseCache {
  BasicMatrix<T> input;
  BasicMatrix<T> pre;  // X W + b, before the activation
  Activation activation = Activation::Identity;
};

template <typename T>
struct DenseForward {
  BasicMatrix<T> out;
  DenseCache<T> cache;
};

template <typename T>
struct DenseGrads {
  BasicMatrix<T> d_X;
  BasicMatrix<T> d_W;
  std::vector<T> d_b;
};

template <typename T>
BasicMatrix<T> apply_activation(BasicMatrix<T> pre, Activation act) {
  if (act == Activation::ReLU)
    for (T& v : pre.values()) v = v > T{0} ? v : T{0};
  return pre;
}

// Multiplies `grad` in place by s'(pre). ReLU'(0) is taken as 0.
template <typename T>
void apply_activation_grad(BasicMatrix<T>& grad, const BasicMatrix<T>& pre, Activation act) {
  if (act == Activation::Identity) return;
  auto g = grad.values();
  auto p = pre.values();
  for (std::size_t i = 0; i < g.size(); ++i)
    if (!(p[i] > T{0})) g[i] = T{0};
}

template <typename T>
DenseForward<T> dense_forward(const BasicDenseLayer<T>& layer, const BasicMatrix<T>& X) {
  if (X.cols() != layer.in_dim())
    throw ShapeError("dense_forward: input " + X.shape() + " vs weight " + layer.W.shape());
  DenseForward<T> f;
  f.cache.input = X;
  f.cache.pre = matmul(X, layer.W);
  add_to_rows<T>(f.cache.pre, layer.b);
  f.cache.activation = layer.activation;
  f.out = apply_activation(f.cache.pre, layer.activation);
  return f;
}

// Inference-only variant that keeps no cache.
template <typename T>
BasicMatrix<T> dense_apply(const BasicDenseLayer<T>& layer, const BasicMatrix<T>& X) {
  if (X.cols() != layer.in_dim())
    throw ShapeError("dense_apply: input " + X.shape() + " vs weight " + layer.W.shape());
  BasicMatrix<T> pre = matmul(X, layer.W);
  add_to_rows<T>(pre, layer.b);
  return apply_activation(std::move(pre), layer.activation);
}

template <typename T>
DenseGrads<T> dense_backward(const BasicDenseLayer<T>& layer, const DenseCache<T>& cache,
                             const BasicMatrix<T>& d_out) {
  if (d_out.rows() != cache.pre.rows() || d_out.cols() != cache.pre.cols())
    throw ShapeError("dense_backward: upstream " + d_out.shape() + " vs forward output " +
                     cache.pre.shape());
  if (cache.input.cols() != layer.in_dim() || cache.pre.cols() != layer.out_dim())
    throw CacheError("dense_backward: cache does not belong to this layer");
  BasicMatrix<T> d_pre = d_out;
  apply_activation_grad(d_pre, cache.pre, cache.activation);
  DenseGrads<T> g;
  g.d_W = matmul_tn(cache.input, d_pre);
  g.d_b = column_sums(d_pre);
  g.d_X = matmul_nt(d_pre, layer.W);
  return g;
}

// ---------------------------------------------------------------------------
// Batch normalization

template <typename T>
struct BasicBatchNormLayer {
  std::vector<T> gamma;
  std::vector<T> beta;
  std::vector<T> running_mean;
  std::vector<T> running_var;
  double bn_momentum = 0.9;
  double epsilon = 1e-5;

  BasicBatchNormLayer() = default;
  explicit BasicBatchNormLayer(std::size_t dim, double momentum = 0.9, double eps = 1e-5)
      : gamma(dim, T{1}),
        beta(dim, T{0}),
        running_mean(dim, T{0}),
        running_var(dim, T{1}),
        bn_momentum(momentum),
        epsilon(eps) {}

  std::size_t dim() const noexcept { return gamma.size(); }
};

template <typename T>
struct BatchNormCache {
  Mode mode = Mode::Infer;
  BasicMatrix<T> x_hat;
  std::vector<T> inv_std;
  std::vector<T> gamma;
};

template <typename T>
struct BatchNormForward {
  BasicMatrix<T> out;
  BatchNormCache<T> cache;
};

template <typename T>
struct BatchNormGrads {
  BasicMatrix<T> d_X;
  std::vector<T> d_gamma;
  std::vector<T> d_beta;
};

// Train mode standardizes with batch mean and population variance and
// updates the running statistics; Infer mode reads the running statistics.
template <typename T>
BatchNormForward<T> bn_forward(BasicBatchNormLayer<T>& layer, const BasicMatrix<T>& X,
                               Mode mode) {
  const std::size_t n = X.rows(), d = X.cols();
  if (d != layer.dim())
    throw ShapeError("bn_forward: input " + X.shape() + " vs dim " + std::to_string(layer.dim()));
  if (mode == Mode::Train && n < 2)
    throw DegenerateBatchError("bn_forward: Train mode needs at least 2 rows, got " +
                               std::to_string(n));

  std::vector<T> mean(d, T{0}), var(d, T{0});
  if (mode == Mode::Train) {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) mean[j] += X(i, j);
    for (T& m : mean) m /= static_cast<T>(n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) {
        const T c = X(i, j) - mean[j];
        var[j] += c * c;
      }
    for (T& v : var) v /= static_cast<T>(n);
    const T mom = static_cast<T>(layer.bn_momentum);
    for (std::size_t j = 0; j < d; ++j) {
      layer.running_mean[j] = mom * layer.running_mean[j] + (T{1} - mom) * mean[j];
      layer.running_var[j] = mom * layer.running_var[j] + (T{1} - mom) * var[j];
    }
  } else {
    mean = layer.running_mean;
    var = layer.running_var;
  }

  BatchNormForward<T> f;
  f.cache.mode = mode;
  f.cache.gamma = layer.gamma;
  f.cache.inv_std.resize(d);
  using std::sqrt;
  for (std::size_t j = 0; j < d; ++j)
    f.cache.inv_std[j] = T{1} / sqrt(var[j] + static_cast<T>(layer.epsilon));
  f.cache.x_hat = BasicMatrix<T>(n, d);
  f.out = BasicMatrix<T>(n, d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      const T xh = (X(i, j) - mean[j]) * f.cache.inv_std[j];
      f.cache.x_hat(i, j) = xh;
      f.out(i, j) = layer.gamma[j] * xh + layer.beta[j];
    }
  return f;
}

// Infer-mode normalization through a const layer.
template <typename T>
BasicMatrix<T> bn_infer(const BasicBatchNormLayer<T>& l, const BasicMatrix<T>& X) {
  using std::sqrt;
  if (X.cols() != l.dim())
    throw ShapeError("bn_infer: input " + X.shape() + " vs dim " + std::to_string(l.dim()));
  BasicMatrix<T> out(X.rows(), X.cols());
  for (std::size_t j = 0; j < X.cols(); ++j) {
    const T inv = T{1} / sqrt(l.running_var[j] + static_cast<T>(l.epsilon));
    for (std::size_t i = 0; i < X.rows(); ++i)
      out(i, j) = l.gamma[j] * (X(i, j) - l.running_mean[j]) * inv + l.beta[j];
  }
  return out;
}

// Train-mode normalization that leaves the running statistics untouched.
template <typename T>
BasicMatrix<T> bn_batch_normalize(const BasicBatchNormLayer<T>& layer, const BasicMatrix<T>& X) {
  BasicBatchNormLayer<T> scratch = layer;
  return bn_forward(scratch, X, Mode::Train).out;
}

template <typename T>
BatchNormGrads<T> bn_backward(const BatchNormCache<T>& cache, const BasicMatrix<T>& d_out) {
  if (cache.mode != Mode::Train)
    throw ModeError("bn_backward: cache comes from an Infer-mode forward");
  const std::size_t n = cache.x_hat.rows(), d = cache.x_hat.cols();
  if (d_out.rows() != n || d_out.cols() != d)
    throw ShapeError("bn_backward: upstream " + d_out.shape() + " vs forward output " +
                     cache.x_hat.shape());

  BatchNormGrads<T> g;
  g.d_gamma.assign(d, T{0});
  g.d_beta.assign(d, T{0});
  std::vector<T> sum_dxh(d, T{0}), sum_dxh_xh(d, T{0});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      const T go = d_out(i, j);
      const T xh = cache.x_hat(i, j);
      g.d_beta[j] += go;
      g.d_gamma[j] += go * xh;
      const T dxh = go * cache.gamma[j];
      sum_dxh[j] += dxh;
      sum_dxh_xh[j] += dxh * xh;
    }
  const T nn = static_cast<T>(n);
  g.d_X = BasicMatrix<T>(n, d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      const T dxh = d_out(i, j) * cache.gamma[j];
      g.d_X(i, j) =
          cache.inv_std[j] / nn * (nn * dxh - sum_dxh[j] - cache.x_hat(i, j) * sum_dxh_xh[j]);
    }
  return g;
}

// ---------------------------------------------------------------------------
// Softmax cross-entropy (batch mean)

template <typename T>
struct SoftmaxCE {
  T loss{0};
  BasicMatrix<T> d_logits;
  BasicMatrix<T> probs;
};

template <typename T>
BasicMatrix<T> softmax(const BasicMatrix<T>& logits) {
  using std::exp;
  BasicMatrix<T> p(logits.rows(), logits.cols());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    auto z = logits.row(i);
    const T mx = *std::max_element(z.begin(), z.end());
    T s{0};
    auto pr = p.row(i);
    for (std::size_t j = 0; j < z.size(); ++j) {
      pr[j] = exp(z[j] - mx);
      s += pr[j];
    }
    for (T& v : pr) v /= s;
  }
  return p;
}

template <typename T>
SoftmaxCE<T> softmax_ce(const BasicMatrix<T>& logits, const Labels& labels) {
  using std::exp;
  using std::log;
  const std::size_t n = logits.rows(), C = logits.cols();
  if (labels.size() != n)
    throw ShapeError("softmax_ce: " + std::to_string(labels.size()) + " labels for logits " +
                     logits.shape());
  for (int l : labels)
    if (l < 0 || static_cast<std::size_t>(l) >= C)
      throw DomainError("softmax_ce: label " + std::to_string(l) + " outside [0," +
                        std::to_string(C) + ")");
  SoftmaxCE<T> r;
  r.probs = softmax(logits);
  r.d_logits = r.probs;
  const T inv_n = T{1} / static_cast<T>(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto z = logits.row(i);
    const T mx = *std::max_element(z.begin(), z.end());
    T s{0};
    for (T v : z) s += exp(v - mx);
    // log-sum-exp form stays accurate when the true class saturates
    r.loss += (mx + log(s) - z[static_cast<std::size_t>(labels[i])]) * inv_n;
    r.d_logits(i, static_cast<std::size_t>(labels[i])) -= T{1};
  }
  for (T& v : r.d_logits.values()) v *= inv_n;
  return r;
}

template <typename T>
Labels argmax_rows(const BasicMatrix<T>& m) {
  Labels out(m.rows(), 0);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    auto r = m.row(i);
    out[i] = static_cast<int>(std::max_element(r.begin(), r.end()) - r.begin());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Backbone: a chain of dense layers standing in for the convolutional
// feature extractor. Output width is the fusion input width d.

template <typename T>
struct BasicBackbone {
  std::vector<BasicDenseLayer<T>> layers;

  BasicBackbone() = default;
  // Two Dense+ReLU layers: input_dim -> width -> width.
  BasicBackbone(std::size_t input_dim, std::size_t width, Rng& rng) {
    layers.emplace_back(input_dim, width, Activation::ReLU, rng);
    layers.emplace_back(width, width, Activation::ReLU, rng);
  }

  std::size_t input_dim() const { return layers.empty() ? 0 : layers.front().in_dim(); }
  std::size_t output_dim() const { return layers.empty() ? 0 : layers.back().out_dim(); }

  void validate() const {
    for (std::size_t i = 1; i < layers.size(); ++i)
      if (layers[i].in_dim() != layers[i - 1].out_dim())
        throw ShapeError("Backbone: layer " + std::to_string(i) + " expects " +
                         std::to_string(layers[i].in_dim()) + " inputs, previous emits " +
                         std::to_string(layers[i - 1].out_dim()));
  }
};

template <typename T>
struct BackboneForward {
  BasicMatrix<T> out;
  std::vector<DenseCache<T>> caches;
};

template <typename T>
BackboneForward<T> backbone_forward(const BasicBackbone<T>& net, const BasicMatrix<T>& X) {
  BackboneForward<T> f;
  f.out = X;
  for (const auto& layer : net.layers) {
    auto step = dense_forward(layer, f.out);
    f.out = std::move(step.out);
    f.caches.push_back(std::move(step.cache));
  }
  return f;
}

template <typename T>
BasicMatrix<T> backbone_apply(const BasicBackbone<T>& net, const BasicMatrix<T>& X) {
  BasicMatrix<T> h = X;
  for (const auto& layer : net.layers) h = dense_apply(layer, h);
  return h;
}

template <typename T>
struct BackboneGrads {
  BasicMatrix<T> d_X;
  std::vector<BasicMatrix<T>> d_W;
  std::vector<std::vector<T>> d_b;
};

template <typename T>
BackboneGrads<T> backbone_backward(const BasicBackbone<T>& net, const BackboneForward<T>& fwd,
                                   const BasicMatrix<T>& d_out) {
  if (fwd.caches.size() != net.layers.size())
    throw CacheError("backbone_backward: cache depth does not match the network");
  BackboneGrads<T> g;
  g.d_W.resize(net.layers.size());
  g.d_b.resize(net.layers.size());
  BasicMatrix<T> grad = d_out;
  for (std::size_t i = net.layers.size(); i-- > 0;) {
    auto lg = dense_backward(net.layers[i], fwd.caches[i], grad);
    g.d_W[i] = std::move(lg.d_W);
    g.d_b[i] = std::move(lg.d_b);
    grad = std::move(lg.d_X);
  }
  g.d_X = std::move(grad);
  return g;
}

using DenseLayer = BasicDenseLayer<double>;
using BatchNormLayer = BasicBatchNormLayer<double>;
using Backbone = BasicBackbone<double>;

}  // namespace corrfusion
