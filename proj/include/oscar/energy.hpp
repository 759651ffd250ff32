#pragma once

#include <stdexcept>
#include <string_view>
#include <vector>

#include "oscar/tensor.hpp"

namespace oscar {

class EnergyError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

enum class EnergyType { Euclidean, Absolute, Angular };

std::string_view to_string(EnergyType t);
EnergyType parse_energy_type(std::string_view s);

struct EnergyKind {
  EnergyType type = EnergyType::Euclidean;
  double epsilon = 1e-12;  // Angular cosine clamp margin
  bool squared = false;    // Euclidean only: ||a-b||^2 instead of ||a-b||

  EnergyKind() = default;
  EnergyKind(EnergyType t, double eps = 1e-12, bool sq = false) : type(t), epsilon(eps), squared(sq) {
    if (!(eps > 0.0)) throw EnergyError("energy epsilon must be positive");
  }
};

// Euclidean: ||a-b||_2. Absolute: ||a-b||_1.
// Angular: arccos(clamp(cos(a, b), -1+eps, 1-eps)); throws on a zero vector.
double energy(const EnergyKind& kind, const Eigen::Ref<const Vector>& a, const Eigen::Ref<const Vector>& b);

// d energy / d a. Subgradient 0 at kinks (a == b for Euclidean, a_k == b_k
// for Absolute) and 0 inside the Angular clamp region.
Vector energy_gradient(const EnergyKind& kind, const Eigen::Ref<const Vector>& a, const Eigen::Ref<const Vector>& b);

struct ProjectionParams {
  Matrix weight;  // d_e x d_c
  Vector bias;    // d_e

  static ProjectionParams zeros(Index out_dim, Index in_dim);
  static ProjectionParams random(Index out_dim, Index in_dim, Rng& rng);
  Index out_dim() const { return weight.rows(); }
  Index in_dim() const { return weight.cols(); }
  std::vector<TensorRef> tensors();
};

struct RegularizerResult {
  double value = 0.0;
  std::vector<double> energies;  // per entity
  ProjectionParams grad;         // dR/dW_p, dR/db_p
  Matrix d_composed;             // d_c x M, dR/dc_i per column
};

// Mean over entities of energy(W_p c_i + b_p, e_i). composed is d_c x M,
// targets is d_e x M. M = 0 gives value 0 and zero gradients.
RegularizerResult regularizer(const ProjectionParams& proj, const Eigen::Ref<const Matrix>& composed,
                              const Eigen::Ref<const Matrix>& targets, const EnergyKind& kind);

}  // namespace oscar
