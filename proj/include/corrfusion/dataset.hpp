#pragma once

// Bi-temporal paired feature datasets: synthetic generation, deterministic
// splits and minibatch order, and the on-disk directory format
//
//   meta.json   {"n", "d_in", "C", "seed", "generator": {...}}
//   x1.f64      time-1 features, little-endian f64, row-major n x d_in
//   x2.f64      time-2 features, same layout
//   labels.csv  "l1,l2" header, then one line per pair (ASCII, LF)

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "corrfusion/io.hpp"
#include "corrfusion/matrix.hpp"
#include "corrfusion/nn.hpp"

namespace corrfusion {

struct GeneratorConfig {
  int classes = 8;
  std::size_t dim = 32;
  std::size_t pairs = 4000;
  double p_change = 0.1;
  double noise = 1.5;          // per-coordinate noise sigma
  double temporal_corr = 0.6;  // noise correlation of unchanged pairs
  double imbalance = 1.0;      // class frequency ∝ (c+1)^-imbalance; 0 = balanced
  std::uint64_t seed = 1;

  void validate() const {
    if (classes < 2) throw ConfigError("classes must be >= 2");
    if (dim < 1) throw ConfigError("dim must be >= 1");
    if (pairs < 1) throw ConfigError("pairs must be >= 1");
    if (!(p_change >= 0.0 && p_change <= 1.0)) throw ConfigError("p_change must lie in [0,1]");
    if (!(noise >= 0.0) || !std::isfinite(noise)) throw ConfigError("noise must be >= 0");
    if (!(temporal_corr >= 0.0 && temporal_corr <= 1.0))
      throw ConfigError("temporal_corr must lie in [0,1]");
    if (!(imbalance >= 0.0) || !std::isfinite(imbalance))
      throw ConfigError("imbalance must be >= 0");
  }
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(GeneratorConfig, classes, dim, pairs, p_change, noise,
                                   temporal_corr, imbalance, seed)

struct PairedDataset {
  Matrix x1, x2;
  Labels l1, l2;
  int num_classes = 0;
  nlohmann::json meta = nlohmann::json::object();  // generator config + seed, when synthetic

  std::size_t size() const noexcept { return l1.size(); }
  std::size_t dim() const noexcept { return x1.cols(); }

  void validate() const {
    const std::size_t n = l1.size();
    if (x1.rows() != n || x2.rows() != n || l2.size() != n)
      throw ShapeError("PairedDataset: row counts disagree (x1 " + x1.shape() + ", x2 " +
                       x2.shape() + ", l1 " + std::to_string(n) + ", l2 " +
                       std::to_string(l2.size()) + ")");
    if (x1.cols() != x2.cols()) throw ShapeError("PairedDataset: x1/x2 widths disagree");
    for (const Labels* ls : {&l1, &l2})
      for (int l : *ls)
        if (l < 0 || l >= num_classes)
          throw DomainError("PairedDataset: label " + std::to_string(l) + " outside [0," +
                            std::to_string(num_classes) + ")");
  }

  bool operator==(const PairedDataset&) const = default;
};

inline PairedDataset gen_synthetic(const GeneratorConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  const auto C = static_cast<std::size_t>(cfg.classes);
  const std::size_t d = cfg.dim;

  std::normal_distribution<double> unit(0.0, 1.0);
  Matrix protos(C, d);
  for (double& v : protos.values()) v = unit(rng);

  std::vector<double> freq(C);
  for (std::size_t c = 0; c < C; ++c) freq[c] = std::pow(static_cast<double>(c + 1), -cfg.imbalance);
  std::discrete_distribution<int> pick_class(freq.begin(), freq.end());
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::uniform_int_distribution<int> pick_other(0, cfg.classes - 2);

  PairedDataset ds;
  ds.num_classes = cfg.classes;
  ds.x1 = Matrix(cfg.pairs, d);
  ds.x2 = Matrix(cfg.pairs, d);
  ds.l1.resize(cfg.pairs);
  ds.l2.resize(cfg.pairs);
  std::vector<double> e1(d), e2(d);

  for (std::size_t k = 0; k < cfg.pairs; ++k) {
    const int c1 = pick_class(rng);
    for (double& v : e1) v = cfg.noise * unit(rng);
    for (double& v : e2) v = cfg.noise * unit(rng);
    const bool changed = coin(rng) < cfg.p_change;
    const int other = pick_other(rng);
    const int c2 = changed ? (other >= c1 ? other + 1 : other) : c1;

    auto p1 = protos.row(static_cast<std::size_t>(c1));
    auto p2 = protos.row(static_cast<std::size_t>(c2));
    auto r1 = ds.x1.row(k);
    auto r2 = ds.x2.row(k);
    for (std::size_t j = 0; j < d; ++j) {
      r1[j] = p1[j] + e1[j];
      // unchanged pairs keep a share of the time-1 deviation
      r2[j] = changed ? p2[j] + e2[j] : p2[j] + cfg.temporal_corr * e1[j] + e2[j];
    }
    ds.l1[k] = c1;
    ds.l2[k] = c2;
  }
  ds.meta = {{"generator", cfg}, {"seed", cfg.seed}};
  return ds;
}

// ---------------------------------------------------------------------------
// Splits and batches

struct SplitIndices {
  std::vector<std::size_t> train, val, test;
};

struct SplitRatios {
  double train = 0.7, val = 0.1, test = 0.2;
};

// Shuffle, then cut: val gets floor(n·val), val+test floor(n·(val+test)),
// train the remainder.
inline SplitIndices split_dataset(std::size_t n, SplitRatios ratios, std::uint64_t seed) {
  if (ratios.train < 0 || ratios.val < 0 || ratios.test < 0 ||
      std::abs(ratios.train + ratios.val + ratios.test - 1.0) > 1e-9)
    throw ConfigError("split ratios must be nonnegative and sum to 1");
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);

  // cumulative floors keep every part within one sample of its ratio
  auto cut = [n](double r) {
    return static_cast<std::size_t>(std::floor(static_cast<double>(n) * r + 1e-9));
  };
  const std::size_t n_val = cut(ratios.val);
  const std::size_t n_test = std::min(n, cut(ratios.val + ratios.test)) - n_val;
  const std::size_t n_train = n - n_val - n_test;
  SplitIndices s;
  s.train.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.val.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_train),
               perm.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  s.test.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), perm.end());
  return s;
}

// One epoch of minibatches over `indices`. A trailing batch with fewer than
// two rows is dropped (batch norm needs two).
inline std::vector<std::vector<std::size_t>> batch_iter(std::vector<std::size_t> indices,
                                                        std::size_t batch_size,
                                                        std::uint64_t shuffle_seed,
                                                        std::uint64_t epoch) {
  if (batch_size < 2) throw ConfigError("batch_size must be >= 2");
  std::seed_seq seq{static_cast<std::uint32_t>(shuffle_seed),
                    static_cast<std::uint32_t>(shuffle_seed >> 32),
                    static_cast<std::uint32_t>(epoch), static_cast<std::uint32_t>(epoch >> 32)};
  Rng rng(seq);
  std::shuffle(indices.begin(), indices.end(), rng);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < indices.size(); start += batch_size) {
    const std::size_t stop = std::min(indices.size(), start + batch_size);
    if (stop - start < 2) break;
    batches.emplace_back(indices.begin() + static_cast<std::ptrdiff_t>(start),
                         indices.begin() + static_cast<std::ptrdiff_t>(stop));
  }
  return batches;
}

template <typename T>
struct BasicBatch {
  BasicMatrix<T> x1, x2;
  Labels l1, l2;
};

using Batch = BasicBatch<double>;

inline Batch gather_batch(const PairedDataset& ds, std::span<const std::size_t> idx) {
  Batch b;
  b.x1 = gather_rows(ds.x1, idx);
  b.x2 = gather_rows(ds.x2, idx);
  b.l1.reserve(idx.size());
  b.l2.reserve(idx.size());
  for (std::size_t i : idx) {
    b.l1.push_back(ds.l1[i]);
    b.l2.push_back(ds.l2[i]);
  }
  return b;
}

// ---------------------------------------------------------------------------
// Persistence

inline void save_dataset(const PairedDataset& ds, const std::filesystem::path& dir) {
  ds.validate();
  std::filesystem::create_directories(dir);
  nlohmann::json meta = ds.meta;
  meta["n"] = ds.size();
  meta["d_in"] = ds.dim();
  meta["C"] = ds.num_classes;
  io::write_json(dir / "meta.json", meta);
  io::write_f64(dir / "x1.f64", ds.x1.values());
  io::write_f64(dir / "x2.f64", ds.x2.values());
  std::string csv = "l1,l2\n";
  for (std::size_t k = 0; k < ds.size(); ++k)
    csv += std::to_string(ds.l1[k]) + "," + std::to_string(ds.l2[k]) + "\n";
  io::write_bytes(dir / "labels.csv", csv);
}

inline PairedDataset load_dataset(const std::filesystem::path& dir) {
  for (const char* f : {"meta.json", "x1.f64", "x2.f64", "labels.csv"})
    io::require_file(dir / f);
  nlohmann::json meta = io::read_json(dir / "meta.json");
  std::size_t n = 0, d = 0;
  PairedDataset ds;
  try {
    n = meta.at("n").get<std::size_t>();
    d = meta.at("d_in").get<std::size_t>();
    ds.num_classes = meta.at("C").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError("meta.json: " + std::string(e.what()));
  }
  try {
    ds.x1 = Matrix(n, d, io::read_f64(dir / "x1.f64", n * d));
    ds.x2 = Matrix(n, d, io::read_f64(dir / "x2.f64", n * d));
  } catch (const IoError& e) {
    throw IoError(std::string("manifest mismatch: ") + e.what());
  }

  std::istringstream csv(io::read_bytes(dir / "labels.csv"));
  std::string line;
  if (!std::getline(csv, line) || line != "l1,l2")
    throw IoError("labels.csv: expected header 'l1,l2'");
  while (std::getline(csv, line)) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw IoError("labels.csv: malformed line '" + line + "'");
    try {
      ds.l1.push_back(std::stoi(line.substr(0, comma)));
      ds.l2.push_back(std::stoi(line.substr(comma + 1)));
    } catch (const std::exception&) {
      throw IoError("labels.csv: malformed line '" + line + "'");
    }
  }
  if (ds.l1.size() != n)
    throw IoError("manifest mismatch: meta.json says n=" + std::to_string(n) +
                  ", labels.csv has " + std::to_string(ds.l1.size()) + " rows");
  meta.erase("n");
  meta.erase("d_in");
  meta.erase("C");
  ds.meta = std::move(meta);
  ds.validate();
  return ds;
}

}  // namespace corrfusion
