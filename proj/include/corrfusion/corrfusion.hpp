#pragma once

// Correlation-based cross-temporal fusion.
//
// Forward, per branch:  X --reduce(d -> d/r)--> X_fc --BN--> X_bn --restore(d/r -> d)--> X_re
// Across branches:      ell(k) = ||X_bn(k,:) - Y_bn(k,:)||,  w = 1 - tanh(ell)
//                       X_phi(k,:) = X(k,:) + w(k) Y_re(k,:)
//                       Y_phi(k,:) = Y(k,:) + w(k) X_re(k,:)
// Train mode also folds X_bnᵀX_bn/(n-1) into the accumulative covariances and
// reports the decorrelation (sum of absolute off-diagonal) losses.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "corrfusion/matrix.hpp"
#include "corrfusion/nn.hpp"

namespace corrfusion {

// Below this distance the direction of d ell / d X_bn is undefined; the
// weight-path gradient is taken as zero.
inline constexpr double kEllFloor = 1e-8;

inline void validate_fusion_hyperparameters(std::size_t d, std::size_t ratio, double rho) {
  if (ratio == 0 || d % ratio != 0)
    throw ConfigError("r must divide d (r=" + std::to_string(ratio) + ", d=" + std::to_string(d) +
                      ")");
  if (!(rho >= 0.0 && rho < 1.0))
    throw ConfigError("rho must lie in [0,1), got " + std::to_string(rho));
}

template <typename T>
struct BasicCorrFusionState {
  BasicDenseLayer<T> reduce_x, reduce_y;    // d -> d/r, ReLU
  BasicBatchNormLayer<T> bn_x, bn_y;        // d/r
  BasicDenseLayer<T> restore_x, restore_y;  // d/r -> d, ReLU
  BasicMatrix<T> cov_xx, cov_yy;            // d/r x d/r accumulative covariances
  double rho = 0.9;
  std::size_t r = 2;
  bool initialized = false;
  bool detach_weights = false;  // treat w as a constant in backward
  std::uint64_t generation = 0;

  BasicCorrFusionState() = default;
  BasicCorrFusionState(std::size_t d, std::size_t ratio, double momentum, Rng& rng,
                       double bn_momentum = 0.9, double bn_epsilon = 1e-5)
      : rho(momentum), r(ratio) {
    validate_fusion_hyperparameters(d, ratio, momentum);
    const std::size_t k = d / ratio;
    reduce_x = BasicDenseLayer<T>(d, k, Activation::ReLU, rng);
    reduce_y = BasicDenseLayer<T>(d, k, Activation::ReLU, rng);
    bn_x = BasicBatchNormLayer<T>(k, bn_momentum, bn_epsilon);
    bn_y = BasicBatchNormLayer<T>(k, bn_momentum, bn_epsilon);
    restore_x = BasicDenseLayer<T>(k, d, Activation::ReLU, rng);
    restore_y = BasicDenseLayer<T>(k, d, Activation::ReLU, rng);
    cov_xx = BasicMatrix<T>(k, k);
    cov_yy = BasicMatrix<T>(k, k);
  }

  std::size_t dim() const noexcept { return reduce_x.in_dim(); }
  std::size_t reduced_dim() const noexcept { return reduce_x.out_dim(); }
};

using CorrFusionState = BasicCorrFusionState<double>;

// ---------------------------------------------------------------------------
// Elementary pieces

template <typename T>
std::vector<T> instance_correlation(const BasicMatrix<T>& x_bn, const BasicMatrix<T>& y_bn) {
  detail::require_same_shape(x_bn, y_bn, "instance_correlation");
  return row_l2_norms(x_bn - y_bn);
}

template <typename T>
std::vector<T> fusion_weights(const std::vector<T>& ell) {
  using std::tanh;
  std::vector<T> w(ell.size());
  for (std::size_t k = 0; k < ell.size(); ++k) {
    if (!(ell[k] >= T{0}))
      throw DomainError("fusion_weights: negative distance " +
                        std::to_string(static_cast<double>(ell[k])) + " at row " +
                        std::to_string(k));
    w[k] = T{1} - tanh(ell[k]);
  }
  return w;
}

template <typename T>
T sdl_loss(const BasicMatrix<T>& cov) {
  using std::abs;
  if (cov.rows() != cov.cols()) throw ShapeError("sdl_loss: non-square " + cov.shape());
  T s{0};
  for (std::size_t k = 0; k < cov.rows(); ++k)
    for (std::size_t l = 0; l < cov.cols(); ++l)
      if (k != l) s += abs(cov(k, l));
  return s;
}

// sign(cov) with the diagonal zeroed: the subgradient of sdl_loss.
template <typename T>
BasicMatrix<T> sdl_sign(const BasicMatrix<T>& cov) {
  BasicMatrix<T> s(cov.rows(), cov.cols());
  for (std::size_t k = 0; k < cov.rows(); ++k)
    for (std::size_t l = 0; l < cov.cols(); ++l)
      if (k != l) s(k, l) = cov(k, l) > T{0} ? T{1} : (cov(k, l) < T{0} ? T{-1} : T{0});
  return s;
}

// Σ ← rho·Σ + (1-rho)·XᵀX/(n-1), or Σ ← XᵀX/(n-1) on the first batch.
// Returns the coefficient that multiplied XᵀX/(n-1).
template <typename T>
T accumulate_covariance(BasicMatrix<T>& cov, bool initialized, double rho,
                        const BasicMatrix<T>& x) {
  const std::size_t n = x.rows();
  if (n < 2)
    throw DegenerateBatchError("covariance update needs at least 2 rows, got " +
                               std::to_string(n));
  if (cov.rows() != x.cols() || cov.cols() != x.cols())
    throw ShapeError("covariance " + cov.shape() + " vs batch " + x.shape());
  BasicMatrix<T> batch = matmul_tn(x, x);
  // mirror the upper triangle: the accumulated matrix must stay exactly symmetric
  for (std::size_t i = 0; i < batch.rows(); ++i)
    for (std::size_t j = i + 1; j < batch.cols(); ++j) batch(j, i) = batch(i, j);
  const T inv = T{1} / static_cast<T>(n - 1);
  const T coeff = initialized ? T{1} - static_cast<T>(rho) : T{1};
  const T keep = initialized ? static_cast<T>(rho) : T{0};
  auto c = cov.values();
  auto b = batch.values();
  for (std::size_t i = 0; i < c.size(); ++i) c[i] = keep * c[i] + coeff * inv * b[i];
  return coeff;
}

template <typename T>
T update_covariance(BasicCorrFusionState<T>& state, const BasicMatrix<T>& x_bn,
                    const BasicMatrix<T>& y_bn) {
  detail::require_same_shape(x_bn, y_bn, "update_covariance");
  accumulate_covariance(state.cov_xx, state.initialized, state.rho, x_bn);
  const T coeff = accumulate_covariance(state.cov_yy, state.initialized, state.rho, y_bn);
  state.initialized = true;
  return coeff;
}

// ---------------------------------------------------------------------------
// Reduce + BN (+ covariance tracking). Shared by every correlation head.

template <typename T>
struct EmbedCache {
  std::uint64_t generation = 0;
  Mode mode = Mode::Infer;
  DenseCache<T> reduce_x, reduce_y;
  BatchNormCache<T> bn_x, bn_y;
  T cov_coeff{0};              // weight of the batch term in the covariance update
  BasicMatrix<T> sign_x, sign_y;  // sdl subgradients at the updated covariances
};

template <typename T>
struct EmbedOutput {
  BasicMatrix<T> x_bn, y_bn;
  T sdl_x{0}, sdl_y{0};
  EmbedCache<T> cache;
};

template <typename T>
EmbedOutput<T> embed_forward(BasicCorrFusionState<T>& state, const BasicMatrix<T>& X,
                             const BasicMatrix<T>& Y, Mode mode) {
  detail::require_same_shape(X, Y, "embed_forward");
  if (X.cols() != state.dim())
    throw ShapeError("embed_forward: input " + X.shape() + " vs fusion width " +
                     std::to_string(state.dim()));
  if (mode == Mode::Train && X.rows() < 2)
    throw DegenerateBatchError("embed_forward: Train mode needs at least 2 rows");

  EmbedOutput<T> out;
  out.cache.mode = mode;
  auto fx = dense_forward(state.reduce_x, X);
  auto fy = dense_forward(state.reduce_y, Y);
  auto bx = bn_forward(state.bn_x, fx.out, mode);
  auto by = bn_forward(state.bn_y, fy.out, mode);
  out.x_bn = std::move(bx.out);
  out.y_bn = std::move(by.out);
  out.cache.reduce_x = std::move(fx.cache);
  out.cache.reduce_y = std::move(fy.cache);
  out.cache.bn_x = std::move(bx.cache);
  out.cache.bn_y = std::move(by.cache);

  if (mode == Mode::Train) {
    out.cache.cov_coeff = update_covariance(state, out.x_bn, out.y_bn);
    out.cache.sign_x = sdl_sign(state.cov_xx);
    out.cache.sign_y = sdl_sign(state.cov_yy);
    ++state.generation;
  }
  out.sdl_x = sdl_loss(state.cov_xx);
  out.sdl_y = sdl_loss(state.cov_yy);
  out.cache.generation = state.generation;
  return out;
}

template <typename T>
struct EmbedGrads {
  BasicMatrix<T> d_X, d_Y;
  DenseGrads<T> reduce_x, reduce_y;  // d_X members duplicate d_X / d_Y above
  BatchNormGrads<T> bn_x, bn_y;
};

template <typename T>
void check_cache(const BasicCorrFusionState<T>& state, const EmbedCache<T>& cache,
                 const char* who) {
  if (cache.mode != Mode::Train)
    throw ModeError(std::string(who) + ": cache comes from an Infer-mode forward");
  if (cache.generation != state.generation)
    throw CacheError(std::string(who) + ": stale cache (state advanced since this forward)");
}

// Backward from upstream gradients at X_bn / Y_bn. The SDL term enters with
// `sdl_weight`; the previous covariance is a constant buffer, so only the
// current batch term carries gradient.
template <typename T>
EmbedGrads<T> embed_backward(const BasicCorrFusionState<T>& state, const EmbedCache<T>& cache,
                             BasicMatrix<T> d_x_bn, BasicMatrix<T> d_y_bn,
                             const BasicMatrix<T>& x_bn, const BasicMatrix<T>& y_bn,
                             T sdl_weight) {
  check_cache(state, cache, "embed_backward");
  if (sdl_weight != T{0}) {
    const T c = sdl_weight * T{2} * cache.cov_coeff / static_cast<T>(x_bn.rows() - 1);
    axpy(c, matmul(x_bn, cache.sign_x), d_x_bn);
    axpy(c, matmul(y_bn, cache.sign_y), d_y_bn);
  }
  EmbedGrads<T> g;
  g.bn_x = bn_backward(cache.bn_x, d_x_bn);
  g.bn_y = bn_backward(cache.bn_y, d_y_bn);
  g.reduce_x = dense_backward(state.reduce_x, cache.reduce_x, g.bn_x.d_X);
  g.reduce_y = dense_backward(state.reduce_y, cache.reduce_y, g.bn_y.d_X);
  g.d_X = g.reduce_x.d_X;
  g.d_Y = g.reduce_y.d_X;
  return g;
}

// ---------------------------------------------------------------------------
// Full fusion module

template <typename T>
struct FusionCache {
  EmbedCache<T> embed;
  DenseCache<T> restore_x, restore_y;
};

template <typename T>
struct BasicFusionOutput {
  BasicMatrix<T> x_phi, y_phi;
  std::vector<T> ell, w;
  BasicMatrix<T> x_bn, y_bn, x_re, y_re;
  T sdl_x{0}, sdl_y{0};
  FusionCache<T> cache;
};

using FusionOutput = BasicFusionOutput<double>;

template <typename T>
BasicFusionOutput<T> corrfusion_forward(BasicCorrFusionState<T>& state, const BasicMatrix<T>& X,
                                        const BasicMatrix<T>& Y, Mode mode) {
  auto emb = embed_forward(state, X, Y, mode);
  BasicFusionOutput<T> out;
  out.ell = instance_correlation(emb.x_bn, emb.y_bn);
  out.w = fusion_weights(out.ell);
  auto rx = dense_forward(state.restore_x, emb.x_bn);
  auto ry = dense_forward(state.restore_y, emb.y_bn);
  out.x_re = std::move(rx.out);
  out.y_re = std::move(ry.out);
  out.x_phi = X + scale_rows<T>(out.y_re, out.w);
  out.y_phi = Y + scale_rows<T>(out.x_re, out.w);
  out.x_bn = std::move(emb.x_bn);
  out.y_bn = std::move(emb.y_bn);
  out.sdl_x = emb.sdl_x;
  out.sdl_y = emb.sdl_y;
  out.cache.embed = std::move(emb.cache);
  out.cache.restore_x = std::move(rx.cache);
  out.cache.restore_y = std::move(ry.cache);
  return out;
}

template <typename T>
struct FusionGrads {
  BasicMatrix<T> d_X, d_Y;
  DenseGrads<T> reduce_x, reduce_y;
  BatchNormGrads<T> bn_x, bn_y;
  DenseGrads<T> restore_x, restore_y;
};

// `d_x_bn_extra` / `d_y_bn_extra` carry gradients of losses defined directly
// on the normalized embeddings (the masked correlation loss); pass empty
// matrices when there are none.
template <typename T>
FusionGrads<T> corrfusion_backward(const BasicCorrFusionState<T>& state,
                                   const BasicFusionOutput<T>& fwd, const BasicMatrix<T>& d_x_phi,
                                   const BasicMatrix<T>& d_y_phi, T sdl_weight = T{1},
                                   const BasicMatrix<T>& d_x_bn_extra = {},
                                   const BasicMatrix<T>& d_y_bn_extra = {}) {
  check_cache(state, fwd.cache.embed, "corrfusion_backward");
  detail::require_same_shape(d_x_phi, fwd.x_phi, "corrfusion_backward");
  detail::require_same_shape(d_y_phi, fwd.y_phi, "corrfusion_backward");
  const std::size_t n = fwd.x_phi.rows();

  FusionGrads<T> g;
  // Through the restored embeddings: X_phi gets w·Y_re, Y_phi gets w·X_re.
  g.restore_x = dense_backward(state.restore_x, fwd.cache.restore_x, scale_rows<T>(d_y_phi, fwd.w));
  g.restore_y = dense_backward(state.restore_y, fwd.cache.restore_y, scale_rows<T>(d_x_phi, fwd.w));

  BasicMatrix<T> d_x_bn = g.restore_x.d_X;
  BasicMatrix<T> d_y_bn = g.restore_y.d_X;
  if (!d_x_bn_extra.empty()) d_x_bn = d_x_bn + d_x_bn_extra;
  if (!d_y_bn_extra.empty()) d_y_bn = d_y_bn + d_y_bn_extra;

  // Through the weights: dw(k)/dX_bn = (tanh²ell(k) - 1)/ell(k) · (X_bn - Y_bn)(k,:),
  // and the negative of that for Y_bn.
  if (!state.detach_weights) {
    const std::vector<T> dw_x = row_dots(d_x_phi, fwd.y_re);
    const std::vector<T> dw_y = row_dots(d_y_phi, fwd.x_re);
    for (std::size_t k = 0; k < n; ++k) {
      const T ell = fwd.ell[k];
      if (ell < static_cast<T>(kEllFloor)) continue;
      using std::tanh;
      const T t = tanh(ell);
      const T scale = (dw_x[k] + dw_y[k]) * (t * t - T{1}) / ell;
      auto xr = fwd.x_bn.row(k);
      auto yr = fwd.y_bn.row(k);
      auto gx = d_x_bn.row(k);
      auto gy = d_y_bn.row(k);
      for (std::size_t j = 0; j < xr.size(); ++j) {
        const T diff = xr[j] - yr[j];
        gx[j] += scale * diff;
        gy[j] -= scale * diff;
      }
    }
  }

  auto eg = embed_backward(state, fwd.cache.embed, std::move(d_x_bn), std::move(d_y_bn),
                           fwd.x_bn, fwd.y_bn, sdl_weight);
  // identity path of the residual addition
  g.d_X = d_x_phi + eg.d_X;
  g.d_Y = d_y_phi + eg.d_Y;
  g.reduce_x = std::move(eg.reduce_x);
  g.reduce_y = std::move(eg.reduce_y);
  g.bn_x = std::move(eg.bn_x);
  g.bn_y = std::move(eg.bn_y);
  return g;
}

// Pure Infer-mode fusion through a const state.
template <typename T>
struct FusedFeatures {
  BasicMatrix<T> x_phi, y_phi;
  std::vector<T> ell, w;
};

template <typename T>
FusedFeatures<T> corrfusion_infer(const BasicCorrFusionState<T>& s, const BasicMatrix<T>& X,
                                  const BasicMatrix<T>& Y) {
  const BasicMatrix<T> x_bn = bn_infer(s.bn_x, dense_apply(s.reduce_x, X));
  const BasicMatrix<T> y_bn = bn_infer(s.bn_y, dense_apply(s.reduce_y, Y));
  FusedFeatures<T> f;
  f.ell = instance_correlation(x_bn, y_bn);
  f.w = fusion_weights(f.ell);
  f.x_phi = X + scale_rows<T>(dense_apply(s.restore_y, y_bn), f.w);
  f.y_phi = Y + scale_rows<T>(dense_apply(s.restore_x, x_bn), f.w);
  return f;
}

// ---------------------------------------------------------------------------
// Baseline objectives

struct DccaObjective {
  double frobenius_value = 0.0;  // ½ ||X_bn - Y_bn||_F
  double trace_corr = 0.0;       // tr(X_bn Y_bnᵀ)
};

// Diagnostic only: no whitening constraint is enforced.
inline DccaObjective dcca_objective(const Matrix& x_bn, const Matrix& y_bn) {
  detail::require_same_shape(x_bn, y_bn, "dcca_objective");
  DccaObjective o;
  o.frobenius_value = 0.5 * frobenius_norm(x_bn - y_bn);
  auto xv = x_bn.values();
  auto yv = y_bn.values();
  for (std::size_t i = 0; i < xv.size(); ++i) o.trace_corr += xv[i] * yv[i];
  return o;
}

struct SoftDccaLoss {
  double distance = 0.0;  // ||X_bn - Y_bn||_F
  double sdl_x = 0.0;
  double sdl_y = 0.0;
  double total() const { return distance + sdl_x + sdl_y; }
};

// Distance plus decorrelation losses at the state's current covariances.
inline SoftDccaLoss soft_dcca_loss(const Matrix& x_bn, const Matrix& y_bn,
                                   const CorrFusionState& state) {
  detail::require_same_shape(x_bn, y_bn, "soft_dcca_loss");
  if (!state.initialized)
    throw ModeError("soft_dcca_loss: covariances have not seen a Train-mode batch");
  return {frobenius_norm(x_bn - y_bn), sdl_loss(state.cov_xx), sdl_loss(state.cov_yy)};
}

}  // namespace corrfusion
