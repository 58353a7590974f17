#pragma once

#include "pgfa/core.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace pgfa::testing {

using Rng = std::mt19937_64;

inline Matrix gaussian(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  std::normal_distribution<double> n01;
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = n01(rng);
  return m;
}

inline Vector gaussian_vector(Eigen::Index n, Rng& rng) { return gaussian(n, 1, rng).col(0); }

inline int uniform_int(int lo, int hi, Rng& rng) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

inline double uniform_real(double lo, double hi, Rng& rng) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

/// Probability vector, sometimes with exact zeros.
inline Vector random_probs(int k, Rng& rng, bool allow_zeros = true) {
  Vector p(k);
  for (int i = 0; i < k; ++i) {
    p(i) = std::exp(uniform_real(-3.0, 3.0, rng));
    if (allow_zeros && k > 1 && uniform_int(0, 3, rng) == 0) p(i) = 0.0;
  }
  if (p.sum() == 0.0) p(0) = 1.0;
  return p / p.sum();
}

/// Labels in [0, k); every class present when n >= k.
inline std::vector<int> random_labels(int n, int k, Rng& rng) {
  std::vector<int> labels(n);
  for (int i = 0; i < n; ++i) labels[i] = i < k ? i : uniform_int(0, k - 1, rng);
  std::shuffle(labels.begin(), labels.end(), rng);
  return labels;
}

inline Matrix random_rotation(int d, Rng& rng) {
  Eigen::HouseholderQR<Matrix> qr(gaussian(d, d, rng));
  return qr.householderQ();
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("pgfa_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void spit(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

template <class F>
ErrorCode error_code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  throw std::logic_error("expected pgfa::Error");
}

}  // namespace pgfa::testing
