#include "oscar/energy.hpp"

#include <cmath>
#include <string>

namespace oscar {

namespace {

struct Cosine {
  double value;    // clamped
  bool clamped;
  double norm_a, norm_b;
};

Cosine cosine(const EnergyKind& kind, const Eigen::Ref<const Vector>& a, const Eigen::Ref<const Vector>& b) {
  const double na = a.norm(), nb = b.norm();
  if (na == 0.0 || nb == 0.0) throw EnergyError("angular energy is undefined for a zero vector");
  const double raw = a.dot(b) / (na * nb);
  const double lo = -1.0 + kind.epsilon, hi = 1.0 - kind.epsilon;
  if (raw <= lo) return {lo, true, na, nb};
  if (raw >= hi) return {hi, true, na, nb};
  return {raw, false, na, nb};
}

void check_dims(const Eigen::Ref<const Vector>& a, const Eigen::Ref<const Vector>& b) {
  if (a.size() != b.size())
    throw EnergyError("energy operands differ in dimension: " + std::to_string(a.size()) + " vs " +
                      std::to_string(b.size()));
}

}  // namespace

std::string_view to_string(EnergyType t) {
  switch (t) {
    case EnergyType::Euclidean: return "euclidean";
    case EnergyType::Absolute: return "absolute";
    case EnergyType::Angular: return "angular";
  }
  return "?";
}

EnergyType parse_energy_type(std::string_view s) {
  if (s == "euclidean") return EnergyType::Euclidean;
  if (s == "absolute") return EnergyType::Absolute;
  if (s == "angular") return EnergyType::Angular;
  throw EnergyError("unknown energy kind '" + std::string(s) + "'");
}

double energy(const EnergyKind& kind, const Eigen::Ref<const Vector>& a, const Eigen::Ref<const Vector>& b) {
  check_dims(a, b);
  switch (kind.type) {
    case EnergyType::Euclidean: {
      const double sq = (a - b).squaredNorm();
      return kind.squared ? sq : std::sqrt(sq);
    }
    case EnergyType::Absolute: return (a - b).lpNorm<1>();
    case EnergyType::Angular: return std::acos(cosine(kind, a, b).value);
  }
  return 0.0;
}

Vector energy_gradient(const EnergyKind& kind, const Eigen::Ref<const Vector>& a, const Eigen::Ref<const Vector>& b) {
  check_dims(a, b);
  switch (kind.type) {
    case EnergyType::Euclidean: {
      const Vector diff = a - b;
      if (kind.squared) return 2.0 * diff;
      const double n = diff.norm();
      if (n == 0.0) return Vector::Zero(a.size());
      return diff / n;
    }
    case EnergyType::Absolute:
      return (a - b).unaryExpr([](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
    case EnergyType::Angular: {
      const Cosine c = cosine(kind, a, b);
      if (c.clamped) return Vector::Zero(a.size());
      // d cos / d a = b / (|a||b|) - cos * a / |a|^2
      const Vector dcos = b / (c.norm_a * c.norm_b) - c.value * a / (c.norm_a * c.norm_a);
      return -dcos / std::sqrt(1.0 - c.value * c.value);
    }
  }
  return Vector::Zero(a.size());
}

ProjectionParams ProjectionParams::zeros(Index out_dim, Index in_dim) {
  return {Matrix::Zero(out_dim, in_dim), Vector::Zero(out_dim)};
}

ProjectionParams ProjectionParams::random(Index out_dim, Index in_dim, Rng& rng) {
  ProjectionParams p = zeros(out_dim, in_dim);
  glorot_uniform(p.weight, rng);
  return p;
}

std::vector<TensorRef> ProjectionParams::tensors() {
  return {tensor_ref("projection.weight", weight), tensor_ref("projection.bias", bias)};
}

RegularizerResult regularizer(const ProjectionParams& proj, const Eigen::Ref<const Matrix>& composed,
                              const Eigen::Ref<const Matrix>& targets, const EnergyKind& kind) {
  if (composed.cols() != targets.cols())
    throw EnergyError("composed entities (" + std::to_string(composed.cols()) + ") and targets (" +
                      std::to_string(targets.cols()) + ") differ in count");
  if (composed.cols() > 0 && composed.rows() != proj.in_dim())
    throw EnergyError("composed dimension does not match projection input");
  if (composed.cols() > 0 && targets.rows() != proj.out_dim())
    throw EnergyError("target dimension does not match projection output");

  RegularizerResult r;
  const Index m = composed.cols();
  r.grad = ProjectionParams::zeros(proj.out_dim(), proj.in_dim());
  r.d_composed = Matrix::Zero(proj.in_dim(), m);
  if (m == 0) return r;

  if (kind.type == EnergyType::Angular)
    for (Index i = 0; i < m; ++i)
      if (targets.col(i).norm() == 0.0) throw EnergyError("angular energy target has zero norm");

  const double scale = 1.0 / static_cast<double>(m);
  double sum = 0.0;
  r.energies.reserve(static_cast<std::size_t>(m));
  for (Index i = 0; i < m; ++i) {
    const Vector projected = proj.weight * composed.col(i) + proj.bias;
    const double e = energy(kind, projected, targets.col(i));
    r.energies.push_back(e);
    sum += e;
    const Vector d_proj = scale * energy_gradient(kind, projected, targets.col(i));
    r.grad.weight.noalias() += d_proj * composed.col(i).transpose();
    r.grad.bias += d_proj;
    r.d_composed.col(i).noalias() = proj.weight.transpose() * d_proj;
  }
  r.value = sum / static_cast<double>(m);
  return r;
}

}  // namespace oscar
