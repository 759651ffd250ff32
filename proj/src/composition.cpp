#include "oscar/composition.hpp"

namespace oscar {

namespace {

Vector sigmoid(const Vector& x) {
  return x.unaryExpr([](double v) { return oscar::sigmoid(v); });
}

void check_span(const Eigen::Ref<const Matrix>& span, Index in_dim) {
  if (span.cols() == 0) throw CompositionError("cannot compose an empty span");
  if (span.rows() != in_dim)
    throw CompositionError("span input dimension " + std::to_string(span.rows()) + " != " +
                           std::to_string(in_dim));
}

}  // namespace

std::string_view to_string(CompositionMethod m) {
  switch (m) {
    case CompositionMethod::Ran: return "ran";
    case CompositionMethod::LinearRan: return "linear_ran";
    case CompositionMethod::Linear: return "linear";
  }
  return "?";
}

CompositionMethod parse_composition_method(std::string_view s) {
  if (s == "ran") return CompositionMethod::Ran;
  if (s == "linear_ran") return CompositionMethod::LinearRan;
  if (s == "linear") return CompositionMethod::Linear;
  throw CompositionError("unknown composition method '" + std::string(s) + "'");
}

std::string_view to_string(OutputNonlinearity g) {
  return g == OutputNonlinearity::Tanh ? "tanh" : "identity";
}

OutputNonlinearity parse_nonlinearity(std::string_view s) {
  if (s == "tanh") return OutputNonlinearity::Tanh;
  if (s == "identity") return OutputNonlinearity::Identity;
  throw CompositionError("unknown output nonlinearity '" + std::string(s) + "'");
}

// RAN

RanParams RanParams::zeros(Index out_dim, Index in_dim, OutputNonlinearity g) {
  RanParams p;
  p.content = Matrix::Zero(out_dim, in_dim);
  p.input_gate = Matrix::Zero(out_dim, out_dim + in_dim);
  p.forget_gate = Matrix::Zero(out_dim, out_dim + in_dim);
  p.input_bias = Vector::Zero(out_dim);
  p.forget_bias = Vector::Zero(out_dim);
  p.g = g;
  return p;
}

RanParams RanParams::random(Index out_dim, Index in_dim, Rng& rng, OutputNonlinearity g) {
  RanParams p = zeros(out_dim, in_dim, g);
  glorot_uniform(p.content, rng);
  glorot_uniform(p.input_gate, rng);
  glorot_uniform(p.forget_gate, rng);
  return p;
}

std::vector<TensorRef> RanParams::tensors() {
  return {tensor_ref("content.weight", content), tensor_ref("input_gate.weight", input_gate),
          tensor_ref("forget_gate.weight", forget_gate), tensor_ref("input_gate.bias", input_bias),
          tensor_ref("forget_gate.bias", forget_bias)};
}

Vector compose_ran(const RanParams& p, const Eigen::Ref<const Matrix>& span_inputs, RanCache* cache) {
  check_span(span_inputs, p.in_dim());
  const Index dc = p.out_dim(), dx = p.in_dim(), len = span_inputs.cols();
  Vector h = Vector::Zero(dc), m = Vector::Zero(dc), z(dc + dx);
  if (cache) {
    cache->inputs = span_inputs;
    cache->concat.resize(dc + dx, len);
    cache->input_gate.resize(dc, len);
    cache->forget_gate.resize(dc, len);
    cache->content.resize(dc, len);
    cache->memory.resize(dc, len);
    cache->hidden.resize(dc, len);
  }
  for (Index t = 0; t < len; ++t) {
    z << h, span_inputs.col(t);
    const Vector content = p.content * span_inputs.col(t);
    const Vector in = sigmoid(p.input_gate * z + p.input_bias);
    const Vector fgt = sigmoid(p.forget_gate * z + p.forget_bias);
    m = in.cwiseProduct(content) + fgt.cwiseProduct(m);
    h = (p.g == OutputNonlinearity::Tanh) ? Vector(m.array().tanh()) : m;
    if (cache) {
      cache->concat.col(t) = z;
      cache->input_gate.col(t) = in;
      cache->forget_gate.col(t) = fgt;
      cache->content.col(t) = content;
      cache->memory.col(t) = m;
      cache->hidden.col(t) = h;
    }
  }
  return h;
}

Matrix backward_ran(const RanParams& p, const RanCache& c, const Vector& d_out, RanParams& grads) {
  const Index dc = p.out_dim(), len = c.inputs.cols();
  Matrix d_inputs = Matrix::Zero(p.in_dim(), len);
  Vector dh = d_out;
  Vector dm_carry = Vector::Zero(dc);
  for (Index t = len - 1; t >= 0; --t) {
    Vector dm = dm_carry;
    if (p.g == OutputNonlinearity::Tanh)
      dm.array() += dh.array() * (1.0 - c.hidden.col(t).array().square());
    else
      dm += dh;
    const Vector m_prev = t > 0 ? Vector(c.memory.col(t - 1)) : Vector::Zero(dc);
    const auto in = c.input_gate.col(t);
    const auto fgt = c.forget_gate.col(t);

    const Vector d_content = dm.cwiseProduct(in);
    const Vector d_in_pre = dm.cwiseProduct(c.content.col(t)).cwiseProduct(in.cwiseProduct((1.0 - in.array()).matrix()));
    const Vector d_fgt_pre = dm.cwiseProduct(m_prev).cwiseProduct(fgt.cwiseProduct((1.0 - fgt.array()).matrix()));
    dm_carry = dm.cwiseProduct(fgt);

    grads.content.noalias() += d_content * c.inputs.col(t).transpose();
    grads.input_gate.noalias() += d_in_pre * c.concat.col(t).transpose();
    grads.forget_gate.noalias() += d_fgt_pre * c.concat.col(t).transpose();
    grads.input_bias += d_in_pre;
    grads.forget_bias += d_fgt_pre;

    const Vector dz = p.input_gate.transpose() * d_in_pre + p.forget_gate.transpose() * d_fgt_pre;
    d_inputs.col(t) = p.content.transpose() * d_content + dz.tail(p.in_dim());
    dh = dz.head(dc);
  }
  return d_inputs;
}

// Linear RAN

LinearRanParams LinearRanParams::zeros(Index dim) {
  LinearRanParams p;
  p.input_gate = Matrix::Zero(dim, 2 * dim);
  p.forget_gate = Matrix::Zero(dim, 2 * dim);
  p.input_bias = Vector::Zero(dim);
  p.forget_bias = Vector::Zero(dim);
  return p;
}

LinearRanParams LinearRanParams::random(Index dim, Rng& rng) {
  LinearRanParams p = zeros(dim);
  glorot_uniform(p.input_gate, rng);
  glorot_uniform(p.forget_gate, rng);
  return p;
}

std::vector<TensorRef> LinearRanParams::tensors() {
  return {tensor_ref("input_gate.weight", input_gate), tensor_ref("forget_gate.weight", forget_gate),
          tensor_ref("input_gate.bias", input_bias), tensor_ref("forget_gate.bias", forget_bias)};
}

Vector compose_linear_ran(const LinearRanParams& p, const Eigen::Ref<const Matrix>& span_inputs,
                          LinearRanCache* cache) {
  check_span(span_inputs, p.in_dim());
  const Index d = p.out_dim(), len = span_inputs.cols();
  Vector m = Vector::Zero(d), z(2 * d);
  if (cache) {
    cache->inputs = span_inputs;
    cache->concat.resize(2 * d, len);
    cache->input_gate.resize(d, len);
    cache->forget_gate.resize(d, len);
    cache->memory.resize(d, len);
  }
  for (Index t = 0; t < len; ++t) {
    z << m, span_inputs.col(t);
    const Vector in = sigmoid(p.input_gate * z + p.input_bias);
    const Vector fgt = sigmoid(p.forget_gate * z + p.forget_bias);
    m = in.cwiseProduct(span_inputs.col(t)) + fgt.cwiseProduct(m);
    if (cache) {
      cache->concat.col(t) = z;
      cache->input_gate.col(t) = in;
      cache->forget_gate.col(t) = fgt;
      cache->memory.col(t) = m;
    }
  }
  return m;
}

Matrix backward_linear_ran(const LinearRanParams& p, const LinearRanCache& c, const Vector& d_out,
                           LinearRanParams& grads) {
  const Index d = p.out_dim(), len = c.inputs.cols();
  Matrix d_inputs = Matrix::Zero(d, len);
  Vector dm = d_out;
  for (Index t = len - 1; t >= 0; --t) {
    const Vector m_prev = t > 0 ? Vector(c.memory.col(t - 1)) : Vector::Zero(d);
    const auto in = c.input_gate.col(t);
    const auto fgt = c.forget_gate.col(t);
    const auto x = c.inputs.col(t);

    const Vector d_in_pre = dm.cwiseProduct(x).cwiseProduct(in.cwiseProduct((1.0 - in.array()).matrix()));
    const Vector d_fgt_pre = dm.cwiseProduct(m_prev).cwiseProduct(fgt.cwiseProduct((1.0 - fgt.array()).matrix()));

    grads.input_gate.noalias() += d_in_pre * c.concat.col(t).transpose();
    grads.forget_gate.noalias() += d_fgt_pre * c.concat.col(t).transpose();
    grads.input_bias += d_in_pre;
    grads.forget_bias += d_fgt_pre;

    const Vector dz = p.input_gate.transpose() * d_in_pre + p.forget_gate.transpose() * d_fgt_pre;
    d_inputs.col(t) = dm.cwiseProduct(in) + dz.tail(d);
    dm = dm.cwiseProduct(fgt) + dz.head(d);
  }
  return d_inputs;
}

// Linear

LinearParams LinearParams::zeros(Index out_dim, Index in_dim) {
  return {Matrix::Zero(out_dim, in_dim), Vector::Zero(out_dim)};
}

LinearParams LinearParams::random(Index out_dim, Index in_dim, Rng& rng) {
  LinearParams p = zeros(out_dim, in_dim);
  glorot_uniform(p.weight, rng);
  return p;
}

std::vector<TensorRef> LinearParams::tensors() {
  return {tensor_ref("weight", weight), tensor_ref("bias", bias)};
}

Vector compose_linear(const LinearParams& p, const Eigen::Ref<const Matrix>& span_inputs, LinearCache* cache) {
  check_span(span_inputs, p.in_dim());
  if (cache) cache->inputs = span_inputs;
  const Vector sum = span_inputs.rowwise().sum();
  return p.weight * sum + static_cast<double>(span_inputs.cols()) * p.bias;
}

Matrix backward_linear(const LinearParams& p, const LinearCache& c, const Vector& d_out, LinearParams& grads) {
  const Index len = c.inputs.cols();
  grads.weight.noalias() += d_out * c.inputs.rowwise().sum().transpose();
  grads.bias += static_cast<double>(len) * d_out;
  const Vector dx = p.weight.transpose() * d_out;
  return dx.replicate(1, len);
}

// Composition

Composition Composition::random(CompositionMethod method, Index out_dim, Index in_dim, Rng& rng,
                                OutputNonlinearity g) {
  switch (method) {
    case CompositionMethod::Ran: return Composition(RanParams::random(out_dim, in_dim, rng, g));
    case CompositionMethod::LinearRan:
      if (out_dim != in_dim) throw CompositionError("linear_ran requires composition.dim equal to the input dim");
      return Composition(LinearRanParams::random(out_dim, rng));
    case CompositionMethod::Linear: return Composition(LinearParams::random(out_dim, in_dim, rng));
  }
  throw CompositionError("unknown composition method");
}

Composition Composition::zeros_like() const {
  return std::visit(
      [](const auto& p) -> Composition {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, RanParams>)
          return Composition(RanParams::zeros(p.out_dim(), p.in_dim(), p.g));
        else if constexpr (std::is_same_v<T, LinearRanParams>)
          return Composition(LinearRanParams::zeros(p.out_dim()));
        else
          return Composition(LinearParams::zeros(p.out_dim(), p.in_dim()));
      },
      params_);
}

CompositionMethod Composition::method() const {
  return static_cast<CompositionMethod>(params_.index());
}

Index Composition::out_dim() const {
  return std::visit([](const auto& p) { return p.out_dim(); }, params_);
}

Index Composition::in_dim() const {
  return std::visit([](const auto& p) { return p.in_dim(); }, params_);
}

std::vector<TensorRef> Composition::tensors() {
  return std::visit([](auto& p) { return p.tensors(); }, params_);
}

std::size_t Composition::parameter_count() const {
  auto copy = *this;
  return count_parameters(copy.tensors());
}

Vector Composition::forward(const Eigen::Ref<const Matrix>& span_inputs, CompositionCache* cache) const {
  return std::visit(
      [&](const auto& p) -> Vector {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, RanParams>) {
          if (!cache) return compose_ran(p, span_inputs);
          return compose_ran(p, span_inputs, &cache->emplace<RanCache>());
        } else if constexpr (std::is_same_v<T, LinearRanParams>) {
          if (!cache) return compose_linear_ran(p, span_inputs);
          return compose_linear_ran(p, span_inputs, &cache->emplace<LinearRanCache>());
        } else {
          if (!cache) return compose_linear(p, span_inputs);
          return compose_linear(p, span_inputs, &cache->emplace<LinearCache>());
        }
      },
      params_);
}

Matrix Composition::backward(const CompositionCache& cache, const Vector& d_out, Composition& grads) const {
  if (cache.index() != params_.index() || grads.params_.index() != params_.index())
    throw CompositionError("composition cache/method mismatch");
  if (d_out.size() != out_dim()) throw CompositionError("upstream gradient has wrong dimension");
  switch (method()) {
    case CompositionMethod::Ran:
      return backward_ran(std::get<RanParams>(params_), std::get<RanCache>(cache), d_out,
                          std::get<RanParams>(grads.params_));
    case CompositionMethod::LinearRan:
      return backward_linear_ran(std::get<LinearRanParams>(params_), std::get<LinearRanCache>(cache), d_out,
                                 std::get<LinearRanParams>(grads.params_));
    case CompositionMethod::Linear:
      return backward_linear(std::get<LinearParams>(params_), std::get<LinearCache>(cache), d_out,
                             std::get<LinearParams>(grads.params_));
  }
  throw CompositionError("unknown composition method");
}

std::size_t parameter_count(CompositionMethod method, Index dim) {
  const auto d = static_cast<std::size_t>(dim);
  switch (method) {
    case CompositionMethod::Ran: return 5 * d * d + 2 * d;
    case CompositionMethod::LinearRan: return 4 * d * d + 2 * d;
    case CompositionMethod::Linear: return d * d + d;
  }
  return 0;
}

}  // namespace oscar
