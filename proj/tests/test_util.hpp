#pragma once

#include <cmath>
#include <random>
#include <span>
#include <vector>

#include "boostnet/matrix.hpp"

namespace boostnet::test {

inline Matrix random_matrix(int rows, int cols, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> dist(0.0, scale);
  Matrix m(rows, cols);
  for (double& v : m.data) v = dist(rng);
  return m;
}

inline std::vector<int> random_labels(int count, int num_classes, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> dist(0, num_classes - 1);
  std::vector<int> labels(count);
  for (int& l : labels) l = dist(rng);
  return labels;
}

// Standalone cross-entropy, kept independent of the library implementation.
inline double reference_cross_entropy(std::span<const double> logits, int label) {
  double mx = logits[0];
  for (double v : logits) mx = std::max(mx, v);
  double sum = 0.0;
  for (double v : logits) sum += std::exp(v - mx);
  return std::log(sum) + mx - logits[label];
}

inline double max_abs_diff(const Matrix& a, const Matrix& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) m = std::max(m, std::abs(a.data[i] - b.data[i]));
  return m;
}

}  // namespace boostnet::test
