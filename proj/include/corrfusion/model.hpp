#pragma once

// Two-branch bi-temporal classifier:
//
//   x1 -> backbone_x -> X --\                       /-> X_phi -> classifier_x -> softmax
//                            >-- head (fusion) ----<
//   x2 -> backbone_y -> Y --/                       \-> Y_phi -> classifier_y -> softmax
//
// Heads: CorrFusion (fused features feed the classifiers), SoftDCCA and DCCA
// (embedding losses only; classifiers read X and Y), NoFusion (plain
// two-branch classifier).

#include <algorithm>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "corrfusion/corrfusion.hpp"
#include "corrfusion/dataset.hpp"
#include "corrfusion/matrix.hpp"
#include "corrfusion/nn.hpp"
#include "corrfusion/objective.hpp"

namespace corrfusion {

enum class Head { CorrFusion, SoftDCCA, DCCA, NoFusion };

inline std::string to_string(Head h) {
  switch (h) {
    case Head::CorrFusion: return "corrfusion";
    case Head::SoftDCCA: return "softdcca";
    case Head::DCCA: return "dcca";
    case Head::NoFusion: return "nofusion";
  }
  return "?";
}

inline std::ostream& operator<<(std::ostream& os, Head h) { return os << to_string(h); }

inline Head parse_head(const std::string& s) {
  for (Head h : {Head::CorrFusion, Head::SoftDCCA, Head::DCCA, Head::NoFusion})
    if (s == to_string(h)) return h;
  throw ConfigError("unknown head '" + s + "' (expected corrfusion|softdcca|dcca|nofusion)");
}

struct ModelConfig {
  Head head = Head::CorrFusion;
  std::size_t input_dim = 32;
  std::size_t dim = 128;  // backbone width, the fusion input width d
  int classes = 8;
  std::size_t r = 2;
  double rho = 0.9;
  double bn_momentum = 0.9;
  double bn_epsilon = 1e-5;
  bool detach_weights = false;

  void validate() const {
    if (input_dim < 1 || dim < 1) throw ConfigError("input_dim and dim must be >= 1");
    if (classes < 2) throw ConfigError("classes must be >= 2");
    if (!(bn_momentum >= 0.0 && bn_momentum < 1.0))
      throw ConfigError("bn_momentum must lie in [0,1)");
    if (!(bn_epsilon > 0.0)) throw ConfigError("bn_epsilon must be > 0");
    if (head != Head::NoFusion) validate_fusion_hyperparameters(dim, r, rho);
  }
};

template <typename T>
struct BasicNetwork {
  ModelConfig config;
  BasicBackbone<T> backbone_x, backbone_y;
  std::optional<BasicCorrFusionState<T>> fusion;
  BasicDenseLayer<T> classifier_x, classifier_y;
};

using Network = BasicNetwork<double>;

template <typename T = double>
BasicNetwork<T> make_network(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  BasicNetwork<T> net;
  net.config = cfg;
  net.backbone_x = BasicBackbone<T>(cfg.input_dim, cfg.dim, rng);
  net.backbone_y = BasicBackbone<T>(cfg.input_dim, cfg.dim, rng);
  if (cfg.head != Head::NoFusion) {
    net.fusion.emplace(cfg.dim, cfg.r, cfg.rho, rng, cfg.bn_momentum, cfg.bn_epsilon);
    net.fusion->detach_weights = cfg.detach_weights;
  }
  const auto C = static_cast<std::size_t>(cfg.classes);
  net.classifier_x = BasicDenseLayer<T>(cfg.dim, C, Activation::Identity, rng);
  net.classifier_y = BasicDenseLayer<T>(cfg.dim, C, Activation::Identity, rng);
  return net;
}

// ---------------------------------------------------------------------------
// Parameter and buffer visitation. The order is fixed, so two networks with
// the same config visit aligned tensors; gradients are stored in a Network
// of the same shape.

template <typename T>
struct BasicTensorRef {
  std::string name;
  std::span<T> values;
  std::vector<std::size_t> shape;
  bool decay = false;  // weight matrix subject to L2
};

using TensorRef = BasicTensorRef<double>;

namespace detail {

template <typename T, typename F>
void visit_dense(const std::string& prefix, BasicDenseLayer<T>& l, F& f) {
  f(BasicTensorRef<T>{prefix + ".W", l.W.values(), {l.W.rows(), l.W.cols()}, true});
  f(BasicTensorRef<T>{prefix + ".b", l.b, {l.b.size()}, false});
}

template <typename T, typename F>
void visit_bn(const std::string& prefix, BasicBatchNormLayer<T>& l, F& f) {
  f(BasicTensorRef<T>{prefix + ".gamma", l.gamma, {l.gamma.size()}, false});
  f(BasicTensorRef<T>{prefix + ".beta", l.beta, {l.beta.size()}, false});
}

}  // namespace detail

template <typename T, typename F>
void visit_parameters(BasicNetwork<T>& net, F&& f) {
  for (std::size_t i = 0; i < net.backbone_x.layers.size(); ++i)
    detail::visit_dense("backbone_x." + std::to_string(i), net.backbone_x.layers[i], f);
  for (std::size_t i = 0; i < net.backbone_y.layers.size(); ++i)
    detail::visit_dense("backbone_y." + std::to_string(i), net.backbone_y.layers[i], f);
  if (net.fusion) {
    auto& s = *net.fusion;
    detail::visit_dense("fusion.reduce_x", s.reduce_x, f);
    detail::visit_dense("fusion.reduce_y", s.reduce_y, f);
    detail::visit_bn("fusion.bn_x", s.bn_x, f);
    detail::visit_bn("fusion.bn_y", s.bn_y, f);
    if (net.config.head == Head::CorrFusion) {
      detail::visit_dense("fusion.restore_x", s.restore_x, f);
      detail::visit_dense("fusion.restore_y", s.restore_y, f);
    }
  }
  detail::visit_dense("classifier_x", net.classifier_x, f);
  detail::visit_dense("classifier_y", net.classifier_y, f);
}

// Non-trainable state that still has to be persisted.
template <typename T, typename F>
void visit_buffers(BasicNetwork<T>& net, F&& f) {
  if (!net.fusion) return;
  auto& s = *net.fusion;
  using R = BasicTensorRef<T>;
  f(R{"fusion.bn_x.running_mean", s.bn_x.running_mean, {s.bn_x.dim()}, false});
  f(R{"fusion.bn_x.running_var", s.bn_x.running_var, {s.bn_x.dim()}, false});
  f(R{"fusion.bn_y.running_mean", s.bn_y.running_mean, {s.bn_y.dim()}, false});
  f(R{"fusion.bn_y.running_var", s.bn_y.running_var, {s.bn_y.dim()}, false});
  f(R{"fusion.cov_xx", s.cov_xx.values(), {s.cov_xx.rows(), s.cov_xx.cols()}, false});
  f(R{"fusion.cov_yy", s.cov_yy.values(), {s.cov_yy.rows(), s.cov_yy.cols()}, false});
}

template <typename T>
std::vector<BasicTensorRef<T>> parameter_list(BasicNetwork<T>& net) {
  std::vector<BasicTensorRef<T>> out;
  visit_parameters(net, [&](BasicTensorRef<T> t) { out.push_back(std::move(t)); });
  return out;
}

template <typename T>
std::vector<BasicTensorRef<T>> buffer_list(BasicNetwork<T>& net) {
  std::vector<BasicTensorRef<T>> out;
  visit_buffers(net, [&](BasicTensorRef<T> t) { out.push_back(std::move(t)); });
  return out;
}

template <typename T>
std::size_t parameter_total(BasicNetwork<T>& net) {
  std::size_t n = 0;
  visit_parameters(net, [&](const BasicTensorRef<T>& t) { n += t.values.size(); });
  return n;
}

template <typename T>
BasicNetwork<T> zeros_like(const BasicNetwork<T>& net) {
  BasicNetwork<T> g = net;
  visit_parameters(g, [](BasicTensorRef<T> t) { std::fill(t.values.begin(), t.values.end(), T{0}); });
  return g;
}

// Same network, every parameter and buffer converted to scalar type U.
template <typename U, typename T>
BasicNetwork<U> cast_network(const BasicNetwork<T>& src) {
  BasicNetwork<T> copy = src;
  BasicNetwork<U> dst = make_network<U>(src.config, 0);
  auto copy_all = [](auto from, auto to) {
    if (from.size() != to.size()) throw ShapeError("cast_network: tensor layout mismatch");
    for (std::size_t i = 0; i < from.size(); ++i)
      std::transform(from[i].values.begin(), from[i].values.end(), to[i].values.begin(),
                     [](T v) { return static_cast<U>(v); });
  };
  copy_all(parameter_list(copy), parameter_list(dst));
  copy_all(buffer_list(copy), buffer_list(dst));
  if (src.fusion) {
    dst.fusion->initialized = src.fusion->initialized;
    dst.fusion->detach_weights = src.fusion->detach_weights;
    dst.fusion->generation = src.fusion->generation;
  }
  return dst;
}

template <typename T>
std::vector<const BasicMatrix<T>*> weight_matrices(const BasicNetwork<T>& net) {
  std::vector<const BasicMatrix<T>*> out;
  for (const auto& l : net.backbone_x.layers) out.push_back(&l.W);
  for (const auto& l : net.backbone_y.layers) out.push_back(&l.W);
  if (net.fusion) {
    out.push_back(&net.fusion->reduce_x.W);
    out.push_back(&net.fusion->reduce_y.W);
    if (net.config.head == Head::CorrFusion) {
      out.push_back(&net.fusion->restore_x.W);
      out.push_back(&net.fusion->restore_y.W);
    }
  }
  out.push_back(&net.classifier_x.W);
  out.push_back(&net.classifier_y.W);
  return out;
}

// ---------------------------------------------------------------------------
// Training step

template <typename T>
struct BasicStepResult {
  BasicLossBreakdown<T> losses;
  BasicNetwork<T> grads;       // gradients of the data terms (L2 decay is left to the optimizer)
  BasicMatrix<T> d_x1, d_x2;  // gradients with respect to the raw inputs
};

using StepResult = BasicStepResult<double>;

namespace detail {

template <typename T>
void store(BasicDenseLayer<T>& dst, DenseGrads<T>& g) {
  dst.W = std::move(g.d_W);
  dst.b = std::move(g.d_b);
}

template <typename T>
void store(BasicBatchNormLayer<T>& dst, BatchNormGrads<T>& g) {
  dst.gamma = std::move(g.d_gamma);
  dst.beta = std::move(g.d_beta);
}

template <typename T>
void store(BasicBackbone<T>& dst, BackboneGrads<T>& g) {
  for (std::size_t i = 0; i < dst.layers.size(); ++i) {
    dst.layers[i].W = std::move(g.d_W[i]);
    dst.layers[i].b = std::move(g.d_b[i]);
  }
}

}  // namespace detail

// One Train-mode forward and full backward on a batch. Mutates BN running
// statistics and the accumulative covariances of `net`.
template <typename T>
BasicStepResult<T> forward_backward(BasicNetwork<T>& net, const BasicBatch<T>& batch,
                                    LossWeights weights) {
  if (batch.x1.rows() < 2)
    throw DegenerateBatchError("forward_backward: batch needs at least 2 rows");
  require_finite(batch.x1, "forward_backward x1");
  require_finite(batch.x2, "forward_backward x2");
  const Head head = net.config.head;
  if (head == Head::DCCA) weights.sdl = 0.0;  // monitored, not optimized
  if (head == Head::NoFusion) weights.corr = weights.sdl = 0.0;
  auto c = [](double v) { return static_cast<T>(v); };

  BasicStepResult<T> res;
  res.grads = zeros_like(net);
  auto fx = backbone_forward(net.backbone_x, batch.x1);
  auto fy = backbone_forward(net.backbone_y, batch.x2);

  BasicLossBreakdown<T> parts;
  parts.loss_weights = weights;
  parts.l2_reg = l2_penalty(weight_matrices(net), weights.l2);

  BasicMatrix<T> d_X, d_Y;
  auto classify = [&](const BasicMatrix<T>& feats_x, const BasicMatrix<T>& feats_y,
                      BasicMatrix<T>& d_fx, BasicMatrix<T>& d_fy) {
    auto lx = dense_forward(net.classifier_x, feats_x);
    auto ly = dense_forward(net.classifier_y, feats_y);
    auto cx = softmax_ce(lx.out, batch.l1);
    auto cy = softmax_ce(ly.out, batch.l2);
    parts.ce_x = cx.loss;
    parts.ce_y = cy.loss;
    auto gx = dense_backward(net.classifier_x, lx.cache, c(weights.ce_x) * cx.d_logits);
    auto gy = dense_backward(net.classifier_y, ly.cache, c(weights.ce_y) * cy.d_logits);
    d_fx = std::move(gx.d_X);
    d_fy = std::move(gy.d_X);
    detail::store(res.grads.classifier_x, gx);
    detail::store(res.grads.classifier_y, gy);
  };

  switch (head) {
    case Head::NoFusion: {
      classify(fx.out, fy.out, d_X, d_Y);
      break;
    }
    case Head::CorrFusion: {
      auto& state = *net.fusion;
      auto fo = corrfusion_forward(state, fx.out, fy.out, Mode::Train);
      parts.sdl_x = fo.sdl_x;
      parts.sdl_y = fo.sdl_y;
      auto corr = corr_loss(fo.x_bn, fo.y_bn, change_mask(batch.l1, batch.l2));
      parts.corr = corr.value;
      BasicMatrix<T> d_phi_x, d_phi_y;
      classify(fo.x_phi, fo.y_phi, d_phi_x, d_phi_y);
      auto fg = corrfusion_backward(state, fo, d_phi_x, d_phi_y, c(weights.sdl),
                                    c(weights.corr) * corr.d_x_bn, c(weights.corr) * corr.d_y_bn);
      d_X = std::move(fg.d_X);
      d_Y = std::move(fg.d_Y);
      auto& gs = *res.grads.fusion;
      detail::store(gs.reduce_x, fg.reduce_x);
      detail::store(gs.reduce_y, fg.reduce_y);
      detail::store(gs.bn_x, fg.bn_x);
      detail::store(gs.bn_y, fg.bn_y);
      detail::store(gs.restore_x, fg.restore_x);
      detail::store(gs.restore_y, fg.restore_y);
      break;
    }
    case Head::SoftDCCA:
    case Head::DCCA: {
      auto& state = *net.fusion;
      auto emb = embed_forward(state, fx.out, fy.out, Mode::Train);
      parts.sdl_x = emb.sdl_x;
      parts.sdl_y = emb.sdl_y;
      const BasicMatrix<T> diff = emb.x_bn - emb.y_bn;
      const T dist = frobenius_norm(diff);
      // SoftDCCA: ||X_bn - Y_bn||_F;  DCCA: ½||X_bn - Y_bn||_F
      const T scale = head == Head::DCCA ? T{0.5} : T{1};
      parts.corr = scale * dist;
      BasicMatrix<T> d_xb(diff.rows(), diff.cols()), d_yb(diff.rows(), diff.cols());
      if (dist >= static_cast<T>(kCorrFloor)) {
        d_xb = (c(weights.corr) * scale / dist) * diff;
        d_yb = T{-1} * d_xb;
      }
      classify(fx.out, fy.out, d_X, d_Y);
      auto eg = embed_backward(state, emb.cache, std::move(d_xb), std::move(d_yb), emb.x_bn,
                               emb.y_bn, c(weights.sdl));
      d_X = d_X + eg.d_X;
      d_Y = d_Y + eg.d_Y;
      auto& gs = *res.grads.fusion;
      detail::store(gs.reduce_x, eg.reduce_x);
      detail::store(gs.reduce_y, eg.reduce_y);
      detail::store(gs.bn_x, eg.bn_x);
      detail::store(gs.bn_y, eg.bn_y);
      break;
    }
  }

  auto bgx = backbone_backward(net.backbone_x, fx, d_X);
  auto bgy = backbone_backward(net.backbone_y, fy, d_Y);
  res.d_x1 = std::move(bgx.d_X);
  res.d_x2 = std::move(bgy.d_X);
  detail::store(res.grads.backbone_x, bgx);
  detail::store(res.grads.backbone_y, bgy);
  res.losses = total_loss(parts);
  return res;
}

// ---------------------------------------------------------------------------
// Inference (pure; no state changes)

struct Predictions {
  Labels p1, p2;
};

template <typename T>
Predictions predict(const BasicNetwork<T>& net, const BasicMatrix<T>& x1,
                    const BasicMatrix<T>& x2) {
  BasicMatrix<T> X = backbone_apply(net.backbone_x, x1);
  BasicMatrix<T> Y = backbone_apply(net.backbone_y, x2);
  if (net.config.head == Head::CorrFusion) {
    auto f = corrfusion_infer(*net.fusion, X, Y);
    X = std::move(f.x_phi);
    Y = std::move(f.y_phi);
  }
  return {argmax_rows(dense_apply(net.classifier_x, X)),
          argmax_rows(dense_apply(net.classifier_y, Y))};
}

// Normalized embeddings of a whole set, standardized with that set's own
// batch statistics (the network's running statistics are not touched).
template <typename T>
std::pair<BasicMatrix<T>, BasicMatrix<T>> normalized_embeddings(const BasicNetwork<T>& net,
                                                                const BasicMatrix<T>& x1,
                                                                const BasicMatrix<T>& x2) {
  if (!net.fusion) throw ModeError("normalized_embeddings: network has no fusion module");
  const auto& s = *net.fusion;
  const BasicMatrix<T> X = backbone_apply(net.backbone_x, x1);
  const BasicMatrix<T> Y = backbone_apply(net.backbone_y, x2);
  return {bn_batch_normalize(s.bn_x, dense_apply(s.reduce_x, X)),
          bn_batch_normalize(s.bn_y, dense_apply(s.reduce_y, Y))};
}

}  // namespace corrfusion
