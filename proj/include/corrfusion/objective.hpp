#pragma once

// Training objective: two cross-entropies, the change-masked correlation
// loss on the normalized embeddings, decorrelation losses, and L2 decay.

#include <cmath>
#include <string>
#include <vector>

#include "corrfusion/matrix.hpp"
#include "corrfusion/nn.hpp"

namespace corrfusion {

// Below this value the masked correlation loss is treated as flat.
inline constexpr double kCorrFloor = 1e-8;

// xi(k) == 1 iff the pair keeps its label across the two dates.
using ChangeMask = std::vector<int>;

inline ChangeMask change_mask(const Labels& l1, const Labels& l2) {
  if (l1.size() != l2.size())
    throw ShapeError("change_mask: label lengths " + std::to_string(l1.size()) + " vs " +
                     std::to_string(l2.size()));
  ChangeMask xi(l1.size());
  for (std::size_t k = 0; k < l1.size(); ++k) xi[k] = l1[k] == l2[k] ? 1 : 0;
  return xi;
}

template <typename T>
struct BasicCorrLoss {
  T value{0};
  BasicMatrix<T> d_x_bn, d_y_bn;
};

using CorrLoss = BasicCorrLoss<double>;

// (Σ_k xi(k)·||x_bn(k,:) - y_bn(k,:)||²)^{1/2}
template <typename T>
BasicCorrLoss<T> corr_loss(const BasicMatrix<T>& x_bn, const BasicMatrix<T>& y_bn,
                           const ChangeMask& xi) {
  detail::require_same_shape(x_bn, y_bn, "corr_loss");
  if (xi.size() != x_bn.rows())
    throw ShapeError("corr_loss: mask length " + std::to_string(xi.size()) + " vs " +
                     std::to_string(x_bn.rows()) + " rows");
  BasicCorrLoss<T> out;
  out.d_x_bn = BasicMatrix<T>(x_bn.rows(), x_bn.cols());
  out.d_y_bn = BasicMatrix<T>(x_bn.rows(), x_bn.cols());
  T acc{0};
  for (std::size_t k = 0; k < x_bn.rows(); ++k) {
    if (!xi[k]) continue;
    auto xr = x_bn.row(k);
    auto yr = y_bn.row(k);
    for (std::size_t j = 0; j < xr.size(); ++j) acc += (xr[j] - yr[j]) * (xr[j] - yr[j]);
  }
  using std::sqrt;
  out.value = sqrt(acc);
  if (out.value < static_cast<T>(kCorrFloor)) return out;
  const T inv = T{1} / out.value;
  for (std::size_t k = 0; k < x_bn.rows(); ++k) {
    if (!xi[k]) continue;
    auto xr = x_bn.row(k);
    auto yr = y_bn.row(k);
    auto gx = out.d_x_bn.row(k);
    auto gy = out.d_y_bn.row(k);
    for (std::size_t j = 0; j < xr.size(); ++j) {
      gx[j] = (xr[j] - yr[j]) * inv;
      gy[j] = -gx[j];
    }
  }
  return out;
}

struct LossWeights {
  double ce_x = 1.0;
  double ce_y = 1.0;
  double corr = 1.0;
  double sdl = 1.0;
  double l2 = 1e-4;  // decay coefficient, applied inside l2_reg
};

template <typename T>
struct BasicLossBreakdown {
  T ce_x{0};
  T ce_y{0};
  T corr{0};
  T sdl_x{0};
  T sdl_y{0};
  T l2_reg{0};  // already scaled by LossWeights::l2
  T total{0};
  LossWeights loss_weights;
};

using LossBreakdown = BasicLossBreakdown<double>;

template <typename T>
BasicLossBreakdown<T> total_loss(BasicLossBreakdown<T> parts) {
  const auto& w = parts.loss_weights;
  auto c = [](double v) { return static_cast<T>(v); };
  parts.total = c(w.ce_x) * parts.ce_x + c(w.ce_y) * parts.ce_y + c(w.corr) * parts.corr +
                c(w.sdl) * (parts.sdl_x + parts.sdl_y) + parts.l2_reg;
  return parts;
}

// ½·l2·Σ||W||² over weight matrices; its gradient is l2·W.
template <typename T>
T l2_penalty(const std::vector<const BasicMatrix<T>*>& weights, double l2) {
  T s{0};
  for (const BasicMatrix<T>* m : weights)
    for (T v : m->values()) s += v * v;
  return T{0.5} * static_cast<T>(l2) * s;
}

}  // namespace corrfusion
