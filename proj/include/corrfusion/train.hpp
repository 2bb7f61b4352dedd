#pragma once

// Training loop, evaluation and finite-difference gradient checking.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "corrfusion/dataset.hpp"
#include "corrfusion/metrics.hpp"
#include "corrfusion/model.hpp"
#include "corrfusion/optim.hpp"
#if defined(CORRFUSION_HAVE_QUADMATH)
#include "corrfusion/quad.hpp"
#endif

namespace corrfusion {

// Flat, JSON-mirrored training configuration.
struct TrainConfig {
  Head head = Head::CorrFusion;
  double lr = 0.001;
  double momentum = 0.9;
  std::size_t epochs = 30;
  std::size_t batch_size = 32;
  double l2_weight = 1e-4;
  double weight_ce_x = 1.0;
  double weight_ce_y = 1.0;
  double weight_corr = 1.0;
  double weight_sdl = 1.0;
  std::size_t r = 2;
  double rho = 0.9;
  std::uint64_t seed = 1;
  std::size_t dim = 128;
  double bn_momentum = 0.9;
  double bn_epsilon = 1e-5;
  bool detach_weights = false;

  void validate() const {
    if (!(lr > 0.0)) throw ConfigError("lr must be > 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0,1)");
    if (batch_size < 2) throw ConfigError("batch_size must be >= 2");
    if (!(l2_weight >= 0.0)) throw ConfigError("l2_weight must be >= 0");
    for (double w : {weight_ce_x, weight_ce_y, weight_corr, weight_sdl})
      if (!(w >= 0.0) || !std::isfinite(w)) throw ConfigError("loss weights must be >= 0");
  }

  LossWeights loss_weights() const {
    return {weight_ce_x, weight_ce_y, weight_corr, weight_sdl, l2_weight};
  }

  ModelConfig model_config(std::size_t input_dim, int classes) const {
    ModelConfig m;
    m.head = head;
    m.input_dim = input_dim;
    m.dim = dim;
    m.classes = classes;
    m.r = r;
    m.rho = rho;
    m.bn_momentum = bn_momentum;
    m.bn_epsilon = bn_epsilon;
    m.detach_weights = detach_weights;
    return m;
  }
};

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"head", to_string(c.head)},
                     {"lr", c.lr},
                     {"momentum", c.momentum},
                     {"epochs", c.epochs},
                     {"batch_size", c.batch_size},
                     {"l2_weight", c.l2_weight},
                     {"weight_ce_x", c.weight_ce_x},
                     {"weight_ce_y", c.weight_ce_y},
                     {"weight_corr", c.weight_corr},
                     {"weight_sdl", c.weight_sdl},
                     {"r", c.r},
                     {"rho", c.rho},
                     {"seed", c.seed},
                     {"dim", c.dim},
                     {"bn_momentum", c.bn_momentum},
                     {"bn_epsilon", c.bn_epsilon},
                     {"detach_weights", c.detach_weights}};
}

// Overlays the keys present in `j` onto `c`. Unknown keys are rejected.
inline void merge_json(TrainConfig& c, const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  const nlohmann::json known = c;
  for (const auto& [key, value] : j.items())
    if (!known.contains(key)) throw ConfigError("unknown config key '" + key + "'");
  try {
    if (j.contains("head")) c.head = parse_head(j.at("head").get<std::string>());
    auto take = [&](const char* key, auto& field) {
      if (j.contains(key)) field = j.at(key).get<std::remove_reference_t<decltype(field)>>();
    };
    take("lr", c.lr);
    take("momentum", c.momentum);
    take("epochs", c.epochs);
    take("batch_size", c.batch_size);
    take("l2_weight", c.l2_weight);
    take("weight_ce_x", c.weight_ce_x);
    take("weight_ce_y", c.weight_ce_y);
    take("weight_corr", c.weight_corr);
    take("weight_sdl", c.weight_sdl);
    take("r", c.r);
    take("rho", c.rho);
    take("seed", c.seed);
    take("dim", c.dim);
    take("bn_momentum", c.bn_momentum);
    take("bn_epsilon", c.bn_epsilon);
    take("detach_weights", c.detach_weights);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Evaluation

struct EvalReport {
  std::size_t n = 0;
  OverallAccuracy oa;
  CountMatrix confusion_t1, confusion_t2;
  CountMatrix transition_pred, transition_true;
  ChangeCounts change;
};

inline void to_json(nlohmann::json& j, const EvalReport& r) {
  j = nlohmann::json{{"n", r.n},
                     {"oa_t1", r.oa.oa_t1},
                     {"oa_t2", r.oa.oa_t2},
                     {"oa_bi", r.oa.oa_bi},
                     {"oa_tr", r.oa.oa_tr},
                     {"confusion_t1", r.confusion_t1},
                     {"confusion_t2", r.confusion_t2},
                     {"transition_pred", r.transition_pred},
                     {"transition_true", r.transition_true},
                     {"tp", r.change.tp},
                     {"fn", r.change.fn},
                     {"fp", r.change.fp},
                     {"tn", r.change.tn}};
}

inline EvalReport make_report(const Labels& p1, const Labels& p2, const Labels& l1,
                              const Labels& l2, int C) {
  EvalReport r;
  r.n = l1.size();
  r.oa = oa_metrics(p1, p2, l1, l2);
  r.confusion_t1 = confusion_matrix(p1, l1, C);
  r.confusion_t2 = confusion_matrix(p2, l2, C);
  r.transition_pred = transition_matrix(p1, p2, C);
  r.transition_true = transition_matrix(l1, l2, C);
  r.change = change_confusion(p1, p2, l1, l2);
  return r;
}

// Predicts every index in `indices` (chunked, optionally across threads;
// each row's prediction is independent of chunking) and scores them.
inline EvalReport evaluate(const Network& net, const PairedDataset& ds,
                           const std::vector<std::size_t>& indices, unsigned threads = 1,
                           std::size_t chunk = 512) {
  const std::size_t n = indices.size();
  Labels p1(n), p2(n), l1(n), l2(n);
  for (std::size_t i = 0; i < n; ++i) {
    l1[i] = ds.l1[indices[i]];
    l2[i] = ds.l2[indices[i]];
  }
  const std::size_t chunks = (n + chunk - 1) / chunk;
  auto run = [&](std::size_t c) {
    const std::size_t lo = c * chunk, hi = std::min(n, lo + chunk);
    std::span<const std::size_t> idx(indices.data() + lo, hi - lo);
    auto pred = predict(net, gather_rows(ds.x1, idx), gather_rows(ds.x2, idx));
    std::copy(pred.p1.begin(), pred.p1.end(), p1.begin() + static_cast<std::ptrdiff_t>(lo));
    std::copy(pred.p2.begin(), pred.p2.end(), p2.begin() + static_cast<std::ptrdiff_t>(lo));
  };
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(chunks)));
  if (threads <= 1) {
    for (std::size_t c = 0; c < chunks; ++c) run(c);
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t)
      pool.emplace_back([&, t] {
        for (std::size_t c = t; c < chunks; c += threads) run(c);
      });
    for (auto& th : pool) th.join();
  }
  return make_report(p1, p2, l1, l2, ds.num_classes);
}

// ---------------------------------------------------------------------------
// Training

struct EpochRecord {
  std::size_t epoch = 0;
  double ce_x = 0, ce_y = 0, corr = 0, sdl = 0, total = 0;
  OverallAccuracy val;
};

inline void to_json(nlohmann::json& j, const EpochRecord& e) {
  j = nlohmann::json{{"epoch", e.epoch},         {"ce_x", e.ce_x},
                     {"ce_y", e.ce_y},           {"corr", e.corr},
                     {"sdl", e.sdl},             {"total", e.total},
                     {"val_oa_t1", e.val.oa_t1}, {"val_oa_t2", e.val.oa_t2},
                     {"val_oa_bi", e.val.oa_bi}, {"val_oa_tr", e.val.oa_tr}};
}

inline std::string history_jsonl(const std::vector<EpochRecord>& history) {
  std::string out;
  for (const auto& e : history) out += nlohmann::json(e).dump() + "\n";
  return out;
}

struct TrainResult {
  Network best;   // highest validation OA_tr
  Network last;
  std::size_t best_epoch = 0;  // 0 = initialization
  std::vector<EpochRecord> history;
};

inline TrainResult train(const TrainConfig& cfg, const PairedDataset& ds,
                         const SplitIndices& splits, unsigned eval_threads = 1) {
  cfg.validate();
  ds.validate();
  if (splits.train.size() < 2) throw ConfigError("train split needs at least 2 samples");
  Network net = make_network(cfg.model_config(ds.dim(), ds.num_classes), cfg.seed);
  MomentumSgd opt(net, {cfg.lr, cfg.momentum, cfg.l2_weight});
  const LossWeights weights = cfg.loss_weights();

  TrainResult res;
  res.best = net;
  double best_score = -1.0;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    EpochRecord rec;
    rec.epoch = epoch;
    const auto batches = batch_iter(splits.train, cfg.batch_size, cfg.seed, epoch);
    for (std::size_t bi = 0; bi < batches.size(); ++bi) {
      const Batch batch = gather_batch(ds, batches[bi]);
      auto step = forward_backward(net, batch, weights);
      const auto& L = step.losses;
      const std::pair<const char*, double> terms[] = {{"ce_x", L.ce_x}, {"ce_y", L.ce_y},
                                                      {"corr", L.corr}, {"sdl_x", L.sdl_x},
                                                      {"sdl_y", L.sdl_y}, {"l2", L.l2_reg}};
      for (const auto& [name, value] : terms)
        if (!std::isfinite(value))
          throw NumericError("non-finite loss term '" + std::string(name) + "' at epoch " +
                             std::to_string(epoch) + ", batch " + std::to_string(bi));
      rec.ce_x += L.ce_x;
      rec.ce_y += L.ce_y;
      rec.corr += L.corr;
      rec.sdl += L.sdl_x + L.sdl_y;
      rec.total += L.total;
      opt.step(net, step.grads);
    }
    if (!batches.empty()) {
      const double inv = 1.0 / static_cast<double>(batches.size());
      rec.ce_x *= inv;
      rec.ce_y *= inv;
      rec.corr *= inv;
      rec.sdl *= inv;
      rec.total *= inv;
    }
    if (!splits.val.empty()) rec.val = evaluate(net, ds, splits.val, eval_threads).oa;
    if (splits.val.empty() || rec.val.oa_tr > best_score) {
      best_score = rec.val.oa_tr;
      res.best = net;
      res.best_epoch = epoch;
    }
    res.history.push_back(rec);
  }
  res.last = std::move(net);
  return res;
}

// ---------------------------------------------------------------------------
// Gradient check

struct GradcheckSpec {
  Head head = Head::CorrFusion;
  std::size_t n = 4;
  std::size_t input_dim = 8;
  std::size_t dim = 16;
  std::size_t r = 2;
  int classes = 3;
  double rho = 0.9;
  LossWeights weights{};
  double fd_step = 1e-5;
  double tol = 1e-5;
  // Run one Train-mode batch first so the covariances take the rho-weighted
  // accumulation branch.
  bool warm_start = true;
};

struct GradcheckReport {
  double max_rel_err = 0.0;
  std::string worst_coordinate;
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;
  std::size_t coordinates = 0;
  bool passed = true;
};

inline double relative_error(double a, double f) {
  return std::abs(a - f) / std::max({std::abs(a), std::abs(f), 1e-8});
}

inline GradcheckReport gradcheck(const GradcheckSpec& spec, std::uint64_t seed) {
  ModelConfig mc;
  mc.head = spec.head;
  mc.input_dim = spec.input_dim;
  mc.dim = spec.dim;
  mc.classes = spec.classes;
  mc.r = spec.r;
  mc.rho = spec.rho;
  Network base = make_network(mc, seed);

  Rng rng(seed ^ 0x9E3779B97F4A7C15ull);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_int_distribution<int> label(0, spec.classes - 1);
  auto random_batch = [&] {
    Batch b;
    b.x1 = Matrix(spec.n, spec.input_dim);
    b.x2 = Matrix(spec.n, spec.input_dim);
    for (double& v : b.x1.values()) v = normal(rng);
    for (double& v : b.x2.values()) v = normal(rng);
    for (std::size_t k = 0; k < spec.n; ++k) {
      b.l1.push_back(label(rng));
      // first half unchanged so the masked correlation term is active
      b.l2.push_back(k < (spec.n + 1) / 2 ? b.l1.back() : label(rng));
    }
    return b;
  };
  if (spec.warm_start) {
    const Batch warm = random_batch();
    forward_backward(base, warm, spec.weights);
  }
  Batch batch = random_batch();

  Network work = base;
  auto analytic = forward_backward(work, batch, spec.weights);
  auto grads = parameter_list(analytic.grads);

  // The finite-difference oracle runs in extended precision so that its
  // round-off stays far below the tolerance.
#if defined(CORRFUSION_HAVE_QUADMATH)
  using Wide = Quad;
#else
  using Wide = long double;
#endif
  const BasicNetwork<Wide> wide_base = cast_network<Wide>(base);
  BasicBatch<Wide> wide_batch{cast_matrix<Wide>(batch.x1), cast_matrix<Wide>(batch.x2), batch.l1,
                              batch.l2};
  auto loss_at = [&](const BasicNetwork<Wide>& net, const BasicBatch<Wide>& b) {
    BasicNetwork<Wide> copy = net;
    return forward_backward(copy, b, spec.weights).losses.total;
  };

  GradcheckReport rep;
  auto record = [&](const std::string& name, double a, double f) {
    ++rep.coordinates;
    const double e = relative_error(a, f);
    if (e > rep.max_rel_err || rep.worst_coordinate.empty()) {
      rep.max_rel_err = std::max(rep.max_rel_err, e);
      rep.worst_coordinate = name;
      rep.analytic_at_worst = a;
      rep.numeric_at_worst = f;
    }
  };

  const Wide h = spec.fd_step;
  BasicNetwork<Wide> probe = wide_base;
  auto params = parameter_list(probe);
  for (std::size_t p = 0; p < params.size(); ++p) {
    auto vals = params[p].values;
    for (std::size_t i = 0; i < vals.size(); ++i) {
      const Wide orig = vals[i];
      vals[i] = orig + h;
      const Wide up = loss_at(probe, wide_batch);
      vals[i] = orig - h;
      const Wide down = loss_at(probe, wide_batch);
      vals[i] = orig;
      const double numeric = static_cast<double>((up - down) / (2 * h));
      const double theta = static_cast<double>(orig);
      const double a = grads[p].values[i] + (params[p].decay ? spec.weights.l2 * theta : 0.0);
      record(params[p].name + "[" + std::to_string(i) + "]", a, numeric);
    }
  }
  for (int which = 0; which < 2; ++which) {
    BasicMatrix<Wide>& x = which == 0 ? wide_batch.x1 : wide_batch.x2;
    const Matrix& g = which == 0 ? analytic.d_x1 : analytic.d_x2;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const Wide orig = x.values()[i];
      x.values()[i] = orig + h;
      const Wide up = loss_at(wide_base, wide_batch);
      x.values()[i] = orig - h;
      const Wide down = loss_at(wide_base, wide_batch);
      x.values()[i] = orig;
      record(std::string(which == 0 ? "input.x1" : "input.x2") + "[" + std::to_string(i) + "]",
             g.values()[i], static_cast<double>((up - down) / (2 * h)));
    }
  }
  rep.passed = rep.max_rel_err <= spec.tol;
  return rep;
}

}  // namespace corrfusion
