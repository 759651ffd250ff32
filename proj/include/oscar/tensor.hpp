#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace oscar {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;
using Rng = std::mt19937_64;

// Non-owning named view of one parameter tensor (column-major storage).
struct TensorRef {
  std::string name;
  double* data = nullptr;
  Index rows = 0;
  Index cols = 0;

  Index size() const { return rows * cols; }
  Eigen::Map<Matrix> map() const { return {data, rows, cols}; }
};

inline TensorRef tensor_ref(std::string name, Matrix& m) { return {std::move(name), m.data(), m.rows(), m.cols()}; }
inline TensorRef tensor_ref(std::string name, Vector& v) { return {std::move(name), v.data(), v.size(), 1}; }

// Uniform in +-sqrt(6 / (fan_in + fan_out)); fan_in = cols, fan_out = rows.
inline void glorot_uniform(Matrix& m, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
  std::uniform_real_distribution<double> dist(-limit, limit);
  for (Index j = 0; j < m.cols(); ++j)
    for (Index i = 0; i < m.rows(); ++i) m(i, j) = dist(rng);
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Sum of sizes across a tensor list.
inline std::size_t count_parameters(const std::vector<TensorRef>& tensors) {
  std::size_t n = 0;
  for (const auto& t : tensors) n += static_cast<std::size_t>(t.size());
  return n;
}

}  // namespace oscar
