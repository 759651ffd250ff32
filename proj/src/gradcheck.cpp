#include "oscar/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace oscar {

namespace {

struct Problem {
  Composition comp;
  ProjectionParams proj;
  std::vector<Matrix> spans;
  Matrix targets;
};

double loss(const Problem& p, const EnergyKind& kind) {
  Matrix composed(p.comp.out_dim(), static_cast<Index>(p.spans.size()));
  for (std::size_t i = 0; i < p.spans.size(); ++i) composed.col(static_cast<Index>(i)) = p.comp.forward(p.spans[i]);
  return regularizer(p.proj, composed, p.targets, kind).value;
}

bool near_kink(const Problem& p, const EnergyKind& kind, double margin) {
  if (kind.type != EnergyType::Absolute) return false;
  for (std::size_t i = 0; i < p.spans.size(); ++i) {
    const Vector projected = p.proj.weight * p.comp.forward(p.spans[i]) + p.proj.bias;
    if ((projected - p.targets.col(static_cast<Index>(i))).cwiseAbs().minCoeff() < margin) return true;
  }
  return false;
}

Problem sample(CompositionMethod method, Index dim, Index len, int entities, OutputNonlinearity g, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  auto randn = [&](Index r, Index c) {
    Matrix m(r, c);
    for (Index j = 0; j < c; ++j)
      for (Index i = 0; i < r; ++i) m(i, j) = normal(rng);
    return m;
  };
  Problem p;
  p.comp = Composition::random(method, dim, dim, rng, g);
  // Non-zero biases so their gradients are exercised.
  for (auto& t : p.comp.tensors())
    if (t.cols == 1) t.map() = 0.1 * randn(t.rows, 1);
  p.proj = ProjectionParams::random(dim, dim, rng);
  p.proj.bias = 0.1 * randn(dim, 1);
  for (int i = 0; i < entities; ++i) p.spans.push_back(randn(dim, len));
  p.targets = randn(dim, entities);
  return p;
}

}  // namespace

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

GradcheckCell gradcheck_cell(CompositionMethod method, EnergyType energy_type, const GradcheckOptions& opts) {
  GradcheckCell cell{method, energy_type};
  const EnergyKind kind(energy_type);
  Rng rng(opts.seed ^ (static_cast<std::uint64_t>(method) * 131 + static_cast<std::uint64_t>(energy_type) * 7919));
  const bool inject = opts.inject_sign_error && opts.inject_sign_error->first == method &&
                      opts.inject_sign_error->second == energy_type;

  auto compare = [&](double analytic, double numeric) {
    const double err = relative_error(analytic, numeric, opts.floor);
    cell.max_rel_error = std::max(cell.max_rel_error, err);
    ++cell.components;
    if (!(err <= opts.tolerance)) ++cell.failures;
  };

  for (Index dim : opts.dims) {
    for (Index len : opts.span_lengths) {
      for (int rep = 0; rep < opts.repeats; ++rep) {
        Problem p = sample(method, dim, len, opts.entities, opts.g, rng);
        while (near_kink(p, kind, opts.kink_margin)) p = sample(method, dim, len, opts.entities, opts.g, rng);

        // Analytic.
        const auto m = static_cast<Index>(p.spans.size());
        Matrix composed(dim, m);
        std::vector<CompositionCache> caches(p.spans.size());
        for (Index i = 0; i < m; ++i) composed.col(i) = p.comp.forward(p.spans[i], &caches[i]);
        RegularizerResult reg = regularizer(p.proj, composed, p.targets, kind);
        Composition comp_grad = p.comp.zeros_like();
        std::vector<Matrix> input_grads;
        for (Index i = 0; i < m; ++i)
          input_grads.push_back(p.comp.backward(caches[i], reg.d_composed.col(i), comp_grad));
        if (inject) reg.grad.weight = -reg.grad.weight;

        // Numeric, perturbing each scalar in place.
        auto numeric = [&](double& x) {
          const double saved = x;
          x = saved + opts.step;
          const double up = loss(p, kind);
          x = saved - opts.step;
          const double down = loss(p, kind);
          x = saved;
          return (up - down) / (2.0 * opts.step);
        };

        auto params = p.comp.tensors();
        auto grads = comp_grad.tensors();
        for (std::size_t t = 0; t < params.size(); ++t)
          for (Index k = 0; k < params[t].size(); ++k) compare(grads[t].data[k], numeric(params[t].data[k]));

        auto proj_params = p.proj.tensors();
        auto proj_grads = reg.grad.tensors();
        for (std::size_t t = 0; t < proj_params.size(); ++t)
          for (Index k = 0; k < proj_params[t].size(); ++k)
            compare(proj_grads[t].data[k], numeric(proj_params[t].data[k]));

        for (Index i = 0; i < m; ++i)
          for (Index k = 0; k < p.spans[static_cast<std::size_t>(i)].size(); ++k)
            compare(input_grads[static_cast<std::size_t>(i)].data()[k],
                    numeric(p.spans[static_cast<std::size_t>(i)].data()[k]));
        ++cell.configs;
      }
    }
  }
  return cell;
}

std::vector<GradcheckCell> gradcheck_all(const GradcheckOptions& opts) {
  std::vector<GradcheckCell> cells;
  for (auto method : {CompositionMethod::Ran, CompositionMethod::LinearRan, CompositionMethod::Linear})
    for (auto energy : {EnergyType::Euclidean, EnergyType::Absolute, EnergyType::Angular})
      cells.push_back(gradcheck_cell(method, energy, opts));
  return cells;
}

}  // namespace oscar
