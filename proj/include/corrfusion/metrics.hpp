#pragma once

// Post-classification change-detection metrics.

#include <cstdint>
#include <string>
#include <vector>

#include "corrfusion/errors.hpp"
#include "corrfusion/nn.hpp"

namespace corrfusion {

using CountMatrix = std::vector<std::vector<std::int64_t>>;

struct OverallAccuracy {
  double oa_t1 = 0.0;  // time-1 classification
  double oa_t2 = 0.0;  // time-2 classification
  double oa_bi = 0.0;  // change / no-change agreement
  double oa_tr = 0.0;  // both dates right (from-to transition)
};

struct ChangeCounts {
  std::int64_t tp = 0, fn = 0, fp = 0, tn = 0;  // positive = changed
};

namespace detail {

inline void require_lengths(std::size_t a, std::size_t b, const char* who) {
  if (a != b)
    throw ShapeError(std::string(who) + ": length mismatch " + std::to_string(a) + " vs " +
                     std::to_string(b));
}

inline void require_labels(const Labels& v, int C, const char* who) {
  for (int l : v)
    if (l < 0 || l >= C)
      throw DomainError(std::string(who) + ": label " + std::to_string(l) + " outside [0," +
                        std::to_string(C) + ")");
}

}  // namespace detail

inline OverallAccuracy oa_metrics(const Labels& p_t1, const Labels& p_t2, const Labels& l_t1,
                                  const Labels& l_t2) {
  detail::require_lengths(p_t1.size(), l_t1.size(), "oa_metrics");
  detail::require_lengths(p_t2.size(), l_t2.size(), "oa_metrics");
  detail::require_lengths(p_t1.size(), p_t2.size(), "oa_metrics");
  const std::size_t n = p_t1.size();
  if (n == 0) throw ShapeError("oa_metrics: empty input");
  std::size_t c1 = 0, c2 = 0, cbi = 0, ctr = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const bool ok1 = p_t1[i] == l_t1[i];
    const bool ok2 = p_t2[i] == l_t2[i];
    c1 += ok1;
    c2 += ok2;
    cbi += (p_t1[i] == p_t2[i]) == (l_t1[i] == l_t2[i]);
    ctr += ok1 && ok2;
  }
  const auto frac = [n](std::size_t c) { return static_cast<double>(c) / static_cast<double>(n); };
  return {frac(c1), frac(c2), frac(cbi), frac(ctr)};
}

// [i][j] counts samples of true class i predicted as j.
inline CountMatrix confusion_matrix(const Labels& pred, const Labels& truth, int C) {
  detail::require_lengths(pred.size(), truth.size(), "confusion_matrix");
  detail::require_labels(pred, C, "confusion_matrix");
  detail::require_labels(truth, C, "confusion_matrix");
  CountMatrix m(static_cast<std::size_t>(C), std::vector<std::int64_t>(static_cast<std::size_t>(C)));
  for (std::size_t i = 0; i < pred.size(); ++i)
    ++m[static_cast<std::size_t>(truth[i])][static_cast<std::size_t>(pred[i])];
  return m;
}

// [i][j] counts pairs with time-1 class i and time-2 class j.
inline CountMatrix transition_matrix(const Labels& a, const Labels& b, int C) {
  detail::require_lengths(a.size(), b.size(), "transition_matrix");
  detail::require_labels(a, C, "transition_matrix");
  detail::require_labels(b, C, "transition_matrix");
  CountMatrix m(static_cast<std::size_t>(C), std::vector<std::int64_t>(static_cast<std::size_t>(C)));
  for (std::size_t i = 0; i < a.size(); ++i)
    ++m[static_cast<std::size_t>(a[i])][static_cast<std::size_t>(b[i])];
  return m;
}

inline ChangeCounts change_confusion(const Labels& p_t1, const Labels& p_t2, const Labels& l_t1,
                                     const Labels& l_t2) {
  detail::require_lengths(p_t1.size(), p_t2.size(), "change_confusion");
  detail::require_lengths(p_t1.size(), l_t1.size(), "change_confusion");
  detail::require_lengths(p_t1.size(), l_t2.size(), "change_confusion");
  ChangeCounts c;
  for (std::size_t i = 0; i < p_t1.size(); ++i) {
    const bool pred_changed = p_t1[i] != p_t2[i];
    const bool true_changed = l_t1[i] != l_t2[i];
    if (true_changed)
      ++(pred_changed ? c.tp : c.fn);
    else
      ++(pred_changed ? c.fp : c.tn);
  }
  return c;
}

// Parameters of one fusion module (both branches): reduce FC, BN scale and
// shift, restore FC.
inline std::int64_t param_count(std::int64_t d, std::int64_t r) {
  if (d <= 0 || r <= 0 || d % r != 0)
    throw ConfigError("r must divide d (r=" + std::to_string(r) + ", d=" + std::to_string(d) + ")");
  const std::int64_t k = d / r;
  return 2 * ((d * k + k) + 2 * k + (k * d + d));
}

}  // namespace corrfusion
