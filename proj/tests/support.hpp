#pragma once

// Test-only oracles and helpers. Nothing here is used by the library.

#include <sys/wait.h>

#include <algorithm>
#include <cstdio>
#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "corrfusion/matrix.hpp"
#include "corrfusion/nn.hpp"

namespace cftest {

using corrfusion::Matrix;

inline Matrix random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng,
                            double scale = 1.0) {
  std::normal_distribution<double> dist(0.0, scale);
  Matrix m(rows, cols);
  for (double& v : m.values()) v = dist(rng);
  return m;
}

inline Matrix naive_matmul(const Matrix& a, const Matrix& b) {
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
      c(i, j) = s;
    }
  return c;
}

inline double rel_err(double a, double f) {
  return std::abs(a - f) / std::max({std::abs(a), std::abs(f), 1e-8});
}

// Largest relative error between `analytic` and central differences of
// `loss` taken over each entry of `x` (restored after every probe).
inline double fd_check(std::span<double> x, std::span<const double> analytic,
                       const std::function<double()>& loss, double h = 1e-5) {
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + h;
    const double up = loss();
    x[i] = orig - h;
    const double down = loss();
    x[i] = orig;
    worst = std::max(worst, rel_err(analytic[i], (up - down) / (2.0 * h)));
  }
  return worst;
}

// Elementwise sum of m ⊙ weights: a linear probe turning a matrix output
// into a scalar loss whose upstream gradient is `weights`.
inline double probe(const Matrix& m, const Matrix& weights) {
  double s = 0.0;
  for (std::size_t i = 0; i < m.size(); ++i) s += m.values()[i] * weights.values()[i];
  return s;
}

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("cf_" + tag + "_" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

struct RunResult {
  int code = -1;
  std::string output;  // stdout and stderr, interleaved
};

inline std::string shell_quote(const std::string& s) {
  std::string q = "'";
  for (char c : s) q += c == '\'' ? std::string("'\\''") : std::string(1, c);
  return q + "'";
}

// Runs `program args...` through the shell and captures its output.
inline RunResult run(const std::string& program, const std::vector<std::string>& args,
                     const std::string& env = "") {
  std::string cmd = env.empty() ? "" : env + " ";
  cmd += shell_quote(program);
  for (const auto& a : args) cmd += " " + shell_quote(a);
  cmd += " 2>&1";
  RunResult r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  char buf[4096];
  std::size_t got = 0;
  while ((got = std::fread(buf, 1, sizeof buf, pipe)) > 0) r.output.append(buf, got);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

}  // namespace cftest
