#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "corrfusion/dataset.hpp"
#include "corrfusion/objective.hpp"
#include "support.hpp"

using namespace corrfusion;
using cftest::TempDir;

namespace {

GeneratorConfig small_config(std::uint64_t seed) {
  GeneratorConfig g;
  g.classes = 5;
  g.dim = 6;
  g.pairs = 300;
  g.seed = seed;
  return g;
}

}  // namespace

TEST(Generator, NoChangeKeepsLabels) {
  auto g = small_config(1);
  g.p_change = 0.0;
  const auto ds = gen_synthetic(g);
  EXPECT_EQ(ds.l1, ds.l2);
  for (int v : change_mask(ds.l1, ds.l2)) EXPECT_EQ(v, 1);
}

TEST(Generator, FullChangeAltersEveryLabel) {
  auto g = small_config(2);
  g.p_change = 1.0;
  const auto ds = gen_synthetic(g);
  for (std::size_t k = 0; k < ds.size(); ++k) EXPECT_NE(ds.l1[k], ds.l2[k]);
}

TEST(Generator, SameSeedIsBitIdentical) {
  EXPECT_EQ(gen_synthetic(small_config(3)), gen_synthetic(small_config(3)));
  EXPECT_NE(gen_synthetic(small_config(3)).x1, gen_synthetic(small_config(4)).x1);
}

TEST(Generator, ShapesAndLabelRanges) {
  const auto ds = gen_synthetic(small_config(5));
  EXPECT_EQ(ds.size(), 300u);
  EXPECT_EQ(ds.dim(), 6u);
  EXPECT_EQ(ds.num_classes, 5);
  ds.validate();
}

TEST(Generator, InvalidRangesRejected) {
  auto g = small_config(6);
  g.p_change = 1.5;
  EXPECT_THROW(gen_synthetic(g), ConfigError);
  g = small_config(6);
  g.classes = 1;
  EXPECT_THROW(gen_synthetic(g), ConfigError);
  g = small_config(6);
  g.temporal_corr = -0.1;
  EXPECT_THROW(gen_synthetic(g), ConfigError);
}

TEST(Generator, ChangeRateWithinBinomialBound) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    GeneratorConfig g;
    g.pairs = 2000;
    g.p_change = 0.1;
    g.seed = seed;
    const auto ds = gen_synthetic(g);
    std::size_t changed = 0;
    for (int v : change_mask(ds.l1, ds.l2)) changed += v == 0;
    const double n = static_cast<double>(g.pairs);
    const double sigma = std::sqrt(n * g.p_change * (1.0 - g.p_change));
    EXPECT_LE(std::abs(static_cast<double>(changed) - n * g.p_change), 3.0 * sigma) << seed;
  }
}

TEST(Generator, UnchangedPairsAreCloserThanChangedPairs) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    GeneratorConfig g;
    g.pairs = 1000;
    g.p_change = 0.5;
    g.seed = seed;
    const auto ds = gen_synthetic(g);
    double du = 0.0, dc = 0.0;
    std::size_t nu = 0, nc = 0;
    for (std::size_t k = 0; k < ds.size(); ++k) {
      double s = 0.0;
      for (std::size_t j = 0; j < ds.dim(); ++j)
        s += (ds.x1(k, j) - ds.x2(k, j)) * (ds.x1(k, j) - ds.x2(k, j));
      (ds.l1[k] == ds.l2[k] ? du : dc) += std::sqrt(s);
      ++(ds.l1[k] == ds.l2[k] ? nu : nc);
    }
    ASSERT_GT(nu, 0u);
    ASSERT_GT(nc, 0u);
    EXPECT_LT(du / static_cast<double>(nu), dc / static_cast<double>(nc)) << seed;
  }
}

TEST(Generator, ImbalanceSkewsClassFrequencies) {
  GeneratorConfig g;
  g.pairs = 4000;
  g.imbalance = 1.0;
  const auto ds = gen_synthetic(g);
  std::vector<int> counts(static_cast<std::size_t>(g.classes));
  for (int l : ds.l1) ++counts[static_cast<std::size_t>(l)];
  EXPECT_GT(counts.front(), 3 * counts.back());
}

TEST(Split, TenSamples) {
  const auto s = split_dataset(10, {}, 1);
  EXPECT_EQ(s.train.size(), 7u);
  EXPECT_EQ(s.val.size(), 1u);
  EXPECT_EQ(s.test.size(), 2u);
}

TEST(Split, CorpusSizedSplit) {
  const auto s = split_dataset(23555, {}, 1);
  EXPECT_EQ(s.train.size(), 16489u);
  EXPECT_EQ(s.val.size(), 2355u);
  EXPECT_EQ(s.test.size(), 4711u);
}

TEST(Split, IsAPartitionAndDependsOnSeed) {
  const auto a = split_dataset(100, {}, 1);
  const auto b = split_dataset(100, {}, 2);
  std::vector<std::size_t> all;
  for (const auto* part : {&a.train, &a.val, &a.test}) all.insert(all.end(), part->begin(), part->end());
  std::sort(all.begin(), all.end());
  for (std::size_t i = 0; i < 100; ++i) EXPECT_EQ(all[i], i);
  EXPECT_EQ(a.train.size(), b.train.size());
  EXPECT_NE(a.train, b.train);
  EXPECT_EQ(a.train, split_dataset(100, {}, 1).train);
}

TEST(Split, ProportionsWithinOneSample) {
  for (std::size_t n : {11u, 57u, 999u, 4000u}) {
    const auto s = split_dataset(n, {}, 3);
    const double dn = static_cast<double>(n);
    EXPECT_LE(std::abs(static_cast<double>(s.train.size()) - 0.7 * dn), 1.0 + 1e-9);
    EXPECT_LE(std::abs(static_cast<double>(s.val.size()) - 0.1 * dn), 1.0);
    EXPECT_LE(std::abs(static_cast<double>(s.test.size()) - 0.2 * dn), 1.0);
  }
}

TEST(Split, RatiosMustSumToOne) {
  EXPECT_THROW(split_dataset(10, {0.7, 0.1, 0.1}, 1), ConfigError);
}

TEST(Batches, TenByFour) {
  std::vector<std::size_t> idx(10);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  const auto b = batch_iter(idx, 4, 1, 1);
  ASSERT_EQ(b.size(), 3u);
  EXPECT_EQ(b[0].size(), 4u);
  EXPECT_EQ(b[1].size(), 4u);
  EXPECT_EQ(b[2].size(), 2u);
}

TEST(Batches, DeterministicGivenSeedAndEpoch) {
  std::vector<std::size_t> idx(50);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  EXPECT_EQ(batch_iter(idx, 8, 3, 2), batch_iter(idx, 8, 3, 2));
  EXPECT_NE(batch_iter(idx, 8, 3, 2), batch_iter(idx, 8, 3, 3));
}

TEST(Batches, CoverEveryIndexOnce) {
  std::vector<std::size_t> idx{4, 9, 1, 7, 3, 8, 2, 6, 0, 5, 11, 10};
  const auto b = batch_iter(idx, 5, 1, 1);
  std::vector<std::size_t> seen;
  for (const auto& batch : b) seen.insert(seen.end(), batch.begin(), batch.end());
  std::sort(seen.begin(), seen.end());
  std::sort(idx.begin(), idx.end());
  EXPECT_EQ(seen, idx);
}

TEST(Batches, SingletonTailDropped) {
  std::vector<std::size_t> idx(9);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  const auto b = batch_iter(idx, 4, 1, 1);
  ASSERT_EQ(b.size(), 2u);
  EXPECT_THROW(batch_iter(idx, 1, 1, 1), ConfigError);
}

TEST(Batches, GatherPicksRowsAndLabels) {
  const auto ds = gen_synthetic(small_config(7));
  const std::vector<std::size_t> idx{5, 0, 17};
  const Batch b = gather_batch(ds, idx);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    EXPECT_EQ(b.l1[i], ds.l1[idx[i]]);
    EXPECT_EQ(b.l2[i], ds.l2[idx[i]]);
    for (std::size_t j = 0; j < ds.dim(); ++j) EXPECT_EQ(b.x2(i, j), ds.x2(idx[i], j));
  }
}

TEST(Persistence, RoundTripIsExact) {
  TempDir dir("ds");
  const auto ds = gen_synthetic(small_config(8));
  save_dataset(ds, dir.path());
  for (const char* f : {"meta.json", "x1.f64", "x2.f64", "labels.csv"})
    EXPECT_TRUE(std::filesystem::exists(dir.path() / f)) << f;
  EXPECT_EQ(std::filesystem::file_size(dir.path() / "x1.f64"), 300u * 6u * 8u);
  EXPECT_EQ(load_dataset(dir.path()), ds);
}

TEST(Persistence, LabelsCsvHasHeader) {
  TempDir dir("csv");
  save_dataset(gen_synthetic(small_config(9)), dir.path());
  std::ifstream in(dir.path() / "labels.csv");
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "l1,l2");
}

TEST(Persistence, TamperedRowCountIsManifestMismatch) {
  TempDir dir("tamper");
  save_dataset(gen_synthetic(small_config(10)), dir.path());
  auto meta = io::read_json(dir.path() / "meta.json");
  meta["n"] = 301;
  io::write_json(dir.path() / "meta.json", meta);
  try {
    load_dataset(dir.path());
    FAIL() << "expected IoError";
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("manifest mismatch"), std::string::npos) << e.what();
  }
}

TEST(Persistence, EmptyDirectoryNamesMissingFile) {
  TempDir dir("empty");
  try {
    load_dataset(dir.path());
    FAIL() << "expected IoError";
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("meta.json"), std::string::npos) << e.what();
  }
}

TEST(Persistence, TruncatedFeatureFile) {
  TempDir dir("trunc");
  save_dataset(gen_synthetic(small_config(11)), dir.path());
  std::filesystem::resize_file(dir.path() / "x2.f64", 100);
  EXPECT_THROW(load_dataset(dir.path()), IoError);
}
