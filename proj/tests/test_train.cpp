#include <gtest/gtest.h>

#include <cmath>

#include "corrfusion/serialize.hpp"
#include "corrfusion/train.hpp"
#include "support.hpp"

using namespace corrfusion;
using cftest::TempDir;

namespace {

PairedDataset small_dataset(std::uint64_t seed) {
  GeneratorConfig g;
  g.classes = 4;
  g.dim = 8;
  g.pairs = 240;
  g.seed = seed;
  return gen_synthetic(g);
}

TrainConfig small_train(Head head) {
  TrainConfig c;
  c.head = head;
  c.epochs = 3;
  c.dim = 16;
  c.batch_size = 16;
  return c;
}

}  // namespace

class GradcheckHeads : public ::testing::TestWithParam<Head> {};

TEST_P(GradcheckHeads, FullLossWithinTolerance) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    GradcheckSpec spec;
    spec.head = GetParam();
    const auto rep = gradcheck(spec, seed);
    EXPECT_TRUE(rep.passed) << to_string(spec.head) << " seed " << seed << ": "
                            << rep.max_rel_err << " at " << rep.worst_coordinate;
    EXPECT_LE(rep.max_rel_err, 1e-5);
    EXPECT_GT(rep.coordinates, 2u * 4u * 8u);
  }
}

INSTANTIATE_TEST_SUITE_P(Heads, GradcheckHeads,
                         ::testing::Values(Head::CorrFusion, Head::SoftDCCA, Head::NoFusion),
                         [](const auto& info) { return to_string(info.param); });

TEST(Gradcheck, CrossEntropyOnly) {
  GradcheckSpec spec;
  spec.weights = {1.0, 1.0, 0.0, 0.0, 0.0};
  const auto rep = gradcheck(spec, 4);
  EXPECT_LE(rep.max_rel_err, 1e-6) << rep.worst_coordinate;
}

TEST(Gradcheck, AllWeightsZero) {
  GradcheckSpec spec;
  spec.weights = {0.0, 0.0, 0.0, 0.0, 0.0};
  const auto rep = gradcheck(spec, 5);
  EXPECT_TRUE(rep.passed);
  EXPECT_LE(std::abs(rep.analytic_at_worst), 1e-12);
}

TEST(Gradcheck, DccaHeadGradientsAreExact) {
  GradcheckSpec spec;
  spec.weights = {1.0, 1.0, 1.0, 1.0, 1e-4};
  spec.head = Head::DCCA;
  const auto rep = gradcheck(spec, 6);
  EXPECT_LE(rep.max_rel_err, 1e-5) << rep.worst_coordinate;
}

TEST(Train, ZeroEpochsReturnsInitialModel) {
  const auto ds = small_dataset(1);
  const auto splits = split_dataset(ds.size(), {}, 1);
  auto cfg = small_train(Head::CorrFusion);
  cfg.epochs = 0;
  auto res = train(cfg, ds, splits);
  EXPECT_TRUE(res.history.empty());
  Network init = make_network(cfg.model_config(ds.dim(), ds.num_classes), cfg.seed);
  auto a = parameter_list(res.last);
  auto b = parameter_list(init);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    EXPECT_TRUE(std::equal(a[i].values.begin(), a[i].values.end(), b[i].values.begin())) << a[i].name;
}

TEST(Train, SameSeedSameHistory) {
  const auto ds = small_dataset(2);
  const auto splits = split_dataset(ds.size(), {}, 2);
  for (Head h : {Head::CorrFusion, Head::SoftDCCA, Head::DCCA, Head::NoFusion}) {
    const auto a = train(small_train(h), ds, splits);
    const auto b = train(small_train(h), ds, splits);
    EXPECT_EQ(history_jsonl(a.history), history_jsonl(b.history)) << to_string(h);
    EXPECT_EQ(a.history.size(), 3u);
  }
}

TEST(Train, NonFiniteInputAborts) {
  auto ds = small_dataset(3);
  ds.x1(0, 0) = std::nan("");
  std::vector<std::size_t> all(ds.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  SplitIndices s{all, {}, {}};
  EXPECT_THROW(train(small_train(Head::CorrFusion), ds, s), NumericError);
}

TEST(Train, InvalidConfigRejected) {
  const auto ds = small_dataset(4);
  const auto splits = split_dataset(ds.size(), {}, 4);
  auto cfg = small_train(Head::CorrFusion);
  cfg.r = 3;
  EXPECT_THROW(train(cfg, ds, splits), ConfigError);
  cfg = small_train(Head::CorrFusion);
  cfg.lr = 0.0;
  EXPECT_THROW(train(cfg, ds, splits), ConfigError);
  cfg = small_train(Head::CorrFusion);
  cfg.batch_size = 1;
  EXPECT_THROW(train(cfg, ds, splits), ConfigError);
}

class ReferenceRun : public ::testing::TestWithParam<Head> {};

TEST_P(ReferenceRun, LearnsAndLossDecreases) {
  GeneratorConfig g;  // C=8, d_in=32, n=4000, p_change=0.1, temporal_corr=0.6, imbalance on
  const auto ds = gen_synthetic(g);
  const auto splits = split_dataset(ds.size(), {}, 1);
  TrainConfig cfg;
  cfg.head = GetParam();
  const auto res = train(cfg, ds, splits);
  EXPECT_GT(evaluate(res.best, ds, splits.train).oa.oa_t1, 0.9);
  std::size_t down = 0;
  for (std::size_t e = 1; e < res.history.size(); ++e)
    down += res.history[e].total <= res.history[e - 1].total;
  EXPECT_GE(static_cast<double>(down), 0.9 * static_cast<double>(res.history.size() - 1))
      << "epoch totals:\n" << history_jsonl(res.history);
}

INSTANTIATE_TEST_SUITE_P(Heads, ReferenceRun, ::testing::Values(Head::NoFusion, Head::CorrFusion),
                         [](const auto& info) { return to_string(info.param); });

TEST(Evaluate, ReportInvariantsAndThreadIndependence) {
  const auto ds = small_dataset(5);
  const auto splits = split_dataset(ds.size(), {}, 5);
  const auto res = train(small_train(Head::CorrFusion), ds, splits);
  const auto one = evaluate(res.best, ds, splits.test, 1, 7);
  const auto many = evaluate(res.best, ds, splits.test, 4, 7);
  EXPECT_EQ(nlohmann::json(one).dump(), nlohmann::json(many).dump());
  const auto n = static_cast<std::int64_t>(splits.test.size());
  EXPECT_EQ(one.change.tp + one.change.fn + one.change.fp + one.change.tn, n);
  EXPECT_DOUBLE_EQ(one.oa.oa_bi, static_cast<double>(one.change.tp + one.change.tn) /
                                     static_cast<double>(n));
  for (const auto* m : {&one.confusion_t1, &one.confusion_t2}) {
    std::int64_t s = 0;
    for (const auto& row : *m)
      for (auto v : row) s += v;
    EXPECT_EQ(s, n);
  }
}

TEST(Config, JsonRoundTripAndUnknownKeys) {
  TrainConfig c;
  c.head = Head::SoftDCCA;
  c.r = 4;
  c.rho = 0.5;
  c.seed = 9;
  TrainConfig d;
  merge_json(d, nlohmann::json(c));
  EXPECT_EQ(nlohmann::json(d), nlohmann::json(c));
  EXPECT_THROW(merge_json(d, nlohmann::json{{"learning_rate", 1}}), ConfigError);
  EXPECT_THROW(merge_json(d, nlohmann::json{{"head", "fancy"}}), ConfigError);
  EXPECT_THROW(merge_json(d, nlohmann::json{{"epochs", "many"}}), ConfigError);
}

TEST(Serialize, RoundTripPreservesPredictionsAndBuffers) {
  const auto ds = small_dataset(6);
  const auto splits = split_dataset(ds.size(), {}, 6);
  auto res = train(small_train(Head::CorrFusion), ds, splits);
  TempDir dir("model");
  save_network(res.best, dir.path());
  Network back = load_network(dir.path());
  auto a = parameter_list(res.best), b = parameter_list(back);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    EXPECT_TRUE(std::equal(a[i].values.begin(), a[i].values.end(), b[i].values.begin()));
  EXPECT_EQ(back.fusion->cov_xx, res.best.fusion->cov_xx);
  EXPECT_EQ(back.fusion->bn_y.running_var, res.best.fusion->bn_y.running_var);
  EXPECT_EQ(back.fusion->initialized, res.best.fusion->initialized);
  EXPECT_EQ(nlohmann::json(evaluate(back, ds, splits.test)).dump(),
            nlohmann::json(evaluate(res.best, ds, splits.test)).dump());
}

TEST(Serialize, TruncatedPayloadRejected) {
  ModelConfig mc;
  mc.input_dim = 4;
  mc.dim = 8;
  mc.classes = 3;
  Network net = make_network(mc, 1);
  TempDir dir("trunc");
  save_network(net, dir.path());
  std::filesystem::resize_file(dir.path() / "params.f64", 64);
  EXPECT_THROW(load_network(dir.path()), IoError);
}
