#include <cmath>

#include "doctest.h"
#include "test_util.hpp"

#include "oscar/composition.hpp"

using namespace oscar;
using namespace oscar::testing;

namespace {

double sig(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// Element-by-element recurrence, written without Eigen products.
std::vector<double> scalar_ran(const RanParams& p, const Matrix& x) {
  const auto dc = static_cast<std::size_t>(p.content.rows());
  const auto dx = static_cast<std::size_t>(p.content.cols());
  std::vector<double> h(dc, 0.0), m(dc, 0.0);
  for (Index t = 0; t < x.cols(); ++t) {
    std::vector<double> next_m(dc), next_h(dc);
    for (std::size_t r = 0; r < dc; ++r) {
      const auto ri = static_cast<Index>(r);
      double content = 0.0, zi = p.input_bias(ri), zf = p.forget_bias(ri);
      for (std::size_t k = 0; k < dx; ++k) content += p.content(ri, static_cast<Index>(k)) * x(static_cast<Index>(k), t);
      for (std::size_t k = 0; k < dc; ++k) {
        zi += p.input_gate(ri, static_cast<Index>(k)) * h[k];
        zf += p.forget_gate(ri, static_cast<Index>(k)) * h[k];
      }
      for (std::size_t k = 0; k < dx; ++k) {
        zi += p.input_gate(ri, static_cast<Index>(dc + k)) * x(static_cast<Index>(k), t);
        zf += p.forget_gate(ri, static_cast<Index>(dc + k)) * x(static_cast<Index>(k), t);
      }
      next_m[r] = sig(zi) * content + sig(zf) * m[r];
      next_h[r] = p.g == OutputNonlinearity::Tanh ? std::tanh(next_m[r]) : next_m[r];
    }
    m = next_m;
    h = next_h;
  }
  return h;
}

std::vector<double> scalar_linear_ran(const LinearRanParams& p, const Matrix& x) {
  const auto d = static_cast<std::size_t>(p.input_gate.rows());
  std::vector<double> m(d, 0.0);
  for (Index t = 0; t < x.cols(); ++t) {
    std::vector<double> next(d);
    for (std::size_t r = 0; r < d; ++r) {
      const auto ri = static_cast<Index>(r);
      double zi = p.input_bias(ri), zf = p.forget_bias(ri);
      for (std::size_t k = 0; k < d; ++k) {
        zi += p.input_gate(ri, static_cast<Index>(k)) * m[k] +
              p.input_gate(ri, static_cast<Index>(d + k)) * x(static_cast<Index>(k), t);
        zf += p.forget_gate(ri, static_cast<Index>(k)) * m[k] +
              p.forget_gate(ri, static_cast<Index>(d + k)) * x(static_cast<Index>(k), t);
      }
      next[r] = sig(zi) * x(ri, t) + sig(zf) * m[r];
    }
    m = next;
  }
  return m;
}

Composition random_composition(CompositionMethod method, Index d, Rng& rng, OutputNonlinearity g) {
  Composition c = Composition::random(method, d, d, rng, g);
  for (auto& t : c.tensors()) t.map() = random_matrix(t.rows, t.cols, rng, 0.5);
  return c;
}

}  // namespace

TEST_CASE("RAN with zero parameters stays at zero") {
  const RanParams p = RanParams::zeros(3, 3, OutputNonlinearity::Tanh);
  Rng rng(1);
  for (Index len : {1, 2, 7}) {
    const Vector c = compose_ran(p, random_matrix(3, len, rng));
    CHECK(c.isZero(0.0));
  }
}

TEST_CASE("RAN matches an element-wise recomputation") {
  Rng rng(5);
  for (auto g : {OutputNonlinearity::Tanh, OutputNonlinearity::Identity}) {
    for (Index len : {1, 3}) {
      RanParams p = RanParams::random(3, 3, rng, g);
      p.input_bias = random_matrix(3, 1, rng, 0.3);
      p.forget_bias = random_matrix(3, 1, rng, 0.3);
      const Matrix x = random_matrix(3, len, rng);
      const Vector c = compose_ran(p, x);
      const auto oracle = scalar_ran(p, x);
      for (Index r = 0; r < 3; ++r) CHECK(c(r) == doctest::Approx(oracle[static_cast<std::size_t>(r)]).epsilon(1e-14));
    }
  }
  // Rectangular: d_c != d_x.
  RanParams p = RanParams::random(2, 5, rng);
  const Matrix x = random_matrix(5, 4, rng);
  const Vector c = compose_ran(p, x);
  const auto oracle = scalar_ran(p, x);
  for (Index r = 0; r < 2; ++r) CHECK(c(r) == doctest::Approx(oracle[static_cast<std::size_t>(r)]).epsilon(1e-14));
}

TEST_CASE("Linear RAN with constant gates") {
  const LinearRanParams p = LinearRanParams::zeros(2);
  Matrix x(2, 2);
  x << 1, 0, 0, 1;
  LinearRanCache cache;
  const Vector c = compose_linear_ran(p, x, &cache);
  CHECK(cache.memory(0, 0) == 0.5);
  CHECK(cache.memory(1, 0) == 0.0);
  CHECK(c(0) == 0.25);
  CHECK(c(1) == 0.5);

  Matrix single(2, 1);
  single << 3.0, -7.0;
  CHECK(compose_linear_ran(p, single) == 0.5 * single.col(0));
}

TEST_CASE("Linear RAN matches an element-wise recomputation") {
  Rng rng(8);
  for (Index len : {1, 2, 5}) {
    LinearRanParams p = LinearRanParams::random(4, rng);
    p.input_bias = random_matrix(4, 1, rng, 0.3);
    const Matrix x = random_matrix(4, len, rng);
    const Vector c = compose_linear_ran(p, x);
    const auto oracle = scalar_linear_ran(p, x);
    for (Index r = 0; r < 4; ++r) CHECK(c(r) == doctest::Approx(oracle[static_cast<std::size_t>(r)]).epsilon(1e-14));
  }
}

TEST_CASE("Linear composition") {
  LinearParams p = LinearParams::zeros(2, 2);
  p.weight.setIdentity();
  p.bias << 0.5, 0.5;
  Matrix x(2, 2);
  x << 1, 0, 0, 1;
  const Vector c = compose_linear(p, x);
  CHECK(c(0) == 2.0);
  CHECK(c(1) == 2.0);

  p.bias.setZero();
  Matrix single(2, 1);
  single << 0.3, -1.25;
  CHECK(compose_linear(p, single) == single.col(0));
}

TEST_CASE("Linear backward closed forms") {
  Rng rng(4);
  LinearParams p = LinearParams::random(3, 4, rng);
  const Matrix x = random_matrix(4, 3, rng);
  const Vector up = random_matrix(3, 1, rng);
  LinearCache cache;
  compose_linear(p, x, &cache);
  LinearParams grads = LinearParams::zeros(3, 4);
  const Matrix dx = backward_linear(p, cache, up, grads);
  const Vector sum = x.rowwise().sum();
  CHECK((grads.weight - up * sum.transpose()).norm() < 1e-14);
  CHECK((grads.bias - 3.0 * up).norm() < 1e-14);
  for (Index t = 0; t < 3; ++t) CHECK((dx.col(t) - p.weight.transpose() * up).norm() < 1e-14);
}

TEST_CASE("parameter counts") {
  Rng rng(0);
  for (Index d : {1, 4, 16, 64}) {
    const auto dd = static_cast<std::size_t>(d);
    CHECK(parameter_count(CompositionMethod::Ran, d) == 5 * dd * dd + 2 * dd);
    CHECK(parameter_count(CompositionMethod::LinearRan, d) == 4 * dd * dd + 2 * dd);
    CHECK(parameter_count(CompositionMethod::Linear, d) == dd * dd + dd);
    for (auto m : {CompositionMethod::Ran, CompositionMethod::LinearRan, CompositionMethod::Linear}) {
      auto comp = Composition::random(m, d, d, rng);
      CHECK(comp.parameter_count() == parameter_count(m, d));
      CHECK(count_parameters(comp.tensors()) == parameter_count(m, d));
    }
    CHECK(parameter_count(CompositionMethod::Linear, d) < parameter_count(CompositionMethod::LinearRan, d));
    CHECK(parameter_count(CompositionMethod::LinearRan, d) < parameter_count(CompositionMethod::Ran, d));
  }
}

TEST_CASE("initialization is bounded and seeded") {
  Rng a(17), b(17);
  auto ca = Composition::random(CompositionMethod::Ran, 8, 6, a);
  auto cb = Composition::random(CompositionMethod::Ran, 8, 6, b);
  auto ta = ca.tensors();
  auto tb = cb.tensors();
  for (std::size_t t = 0; t < ta.size(); ++t) {
    CHECK(ta[t].map() == tb[t].map());
    if (ta[t].cols == 1) {
      CHECK(ta[t].map().isZero(0.0));
    } else {
      const double limit = std::sqrt(6.0 / static_cast<double>(ta[t].rows + ta[t].cols));
      CHECK(ta[t].map().cwiseAbs().maxCoeff() <= limit);
    }
  }
}

TEST_CASE("Linear is permutation invariant; RAN variants are order sensitive") {
  Rng rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    auto lin = random_composition(CompositionMethod::Linear, 4, rng, OutputNonlinearity::Tanh);
    // Integer-valued inputs so the span sum is exact in any order.
    Matrix x = (8.0 * random_matrix(4, 5, rng)).array().round().matrix();
    const std::vector<Index> perm{4, 2, 0, 3, 1};
    Matrix xp(4, 5);
    for (Index t = 0; t < 5; ++t) xp.col(t) = x.col(perm[static_cast<std::size_t>(t)]);
    CHECK(lin.forward(x) == lin.forward(xp));
  }

  for (auto method : {CompositionMethod::Ran, CompositionMethod::LinearRan}) {
    bool differs = false;
    for (int trial = 0; trial < 10 && !differs; ++trial) {
      auto comp = Composition::random(method, 4, 4, rng);
      const Matrix x = random_matrix(4, 2, rng);
      Matrix swapped(4, 2);
      swapped.col(0) = x.col(1);
      swapped.col(1) = x.col(0);
      differs = (comp.forward(x) - comp.forward(swapped)).cwiseAbs().maxCoeff() > 1e-6;
    }
    CHECK_MESSAGE(differs, to_string(method));
  }
}

TEST_CASE("forward is a pure function") {
  Rng rng(2);
  for (auto method : {CompositionMethod::Ran, CompositionMethod::LinearRan, CompositionMethod::Linear}) {
    const auto comp = Composition::random(method, 3, 3, rng);
    const Matrix x = random_matrix(3, 4, rng);
    CHECK(comp.forward(x) == comp.forward(x));
  }
}

TEST_CASE("analytic gradients agree with central differences") {
  Rng rng(31337);
  std::size_t configs = 0;
  double worst = 0.0;
  for (auto method : {CompositionMethod::Ran, CompositionMethod::LinearRan, CompositionMethod::Linear}) {
    for (auto g : {OutputNonlinearity::Tanh, OutputNonlinearity::Identity}) {
      if (method != CompositionMethod::Ran && g == OutputNonlinearity::Identity) continue;
      for (Index d : {2, 4, 8}) {
        for (Index len : {1, 2, 5}) {
          auto comp = random_composition(method, d, rng, g);
          Matrix x = random_matrix(d, len, rng);
          const Vector up = random_matrix(d, 1, rng);

          CompositionCache cache;
          comp.forward(x, &cache);
          Composition grads = comp.zeros_like();
          const Matrix dx = comp.backward(cache, up, grads);

          auto loss = [&] { return up.dot(comp.forward(x)); };
          auto params = comp.tensors();
          auto gt = grads.tensors();
          for (std::size_t t = 0; t < params.size(); ++t) {
            for (Index k = 0; k < params[t].size(); ++k) {
              const double err = rel_err(gt[t].data[k], central_difference(loss, &params[t].data[k]));
              worst = std::max(worst, err);
              CHECK_MESSAGE(err <= 1e-4, to_string(method) << " " << params[t].name << "[" << k << "]");
            }
          }
          for (Index k = 0; k < x.size(); ++k) {
            const double err = rel_err(dx.data()[k], central_difference(loss, &x.data()[k]));
            worst = std::max(worst, err);
            CHECK_MESSAGE(err <= 1e-4, to_string(method) << " input[" << k << "]");
          }
          ++configs;
        }
      }
    }
  }
  CHECK(configs >= 27);
  MESSAGE("worst relative error " << worst);
}

TEST_CASE("backward accumulates into existing gradients") {
  Rng rng(6);
  auto comp = Composition::random(CompositionMethod::Ran, 3, 3, rng);
  const Matrix x = random_matrix(3, 2, rng);
  const Vector up = random_matrix(3, 1, rng);
  CompositionCache cache;
  comp.forward(x, &cache);
  Composition once = comp.zeros_like(), twice = comp.zeros_like();
  comp.backward(cache, up, once);
  comp.backward(cache, up, twice);
  comp.backward(cache, up, twice);
  auto a = once.tensors();
  auto b = twice.tensors();
  for (std::size_t t = 0; t < a.size(); ++t) CHECK((b[t].map() - 2.0 * a[t].map()).norm() < 1e-14);
}

TEST_CASE("invalid inputs") {
  Rng rng(1);
  auto comp = Composition::random(CompositionMethod::Ran, 3, 3, rng);
  CHECK_THROWS_AS(comp.forward(Matrix(3, 0)), CompositionError);
  CHECK_THROWS_AS(comp.forward(Matrix::Zero(2, 2)), CompositionError);
  CHECK_THROWS_AS(Composition::random(CompositionMethod::LinearRan, 3, 4, rng), CompositionError);

  CompositionCache linear_cache = LinearCache{Matrix::Zero(3, 1)};
  Composition grads = comp.zeros_like();
  CHECK_THROWS_AS(comp.backward(linear_cache, Vector::Zero(3), grads), CompositionError);

  CHECK(parse_composition_method("linear_ran") == CompositionMethod::LinearRan);
  CHECK_THROWS_AS(parse_composition_method("gru"), CompositionError);
  CHECK(parse_nonlinearity("identity") == OutputNonlinearity::Identity);
}
