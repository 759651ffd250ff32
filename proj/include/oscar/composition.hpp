#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "oscar/tensor.hpp"

namespace oscar {

class CompositionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class CompositionMethod { Ran, LinearRan, Linear };
enum class OutputNonlinearity { Tanh, Identity };

std::string_view to_string(CompositionMethod m);
CompositionMethod parse_composition_method(std::string_view s);
std::string_view to_string(OutputNonlinearity g);
OutputNonlinearity parse_nonlinearity(std::string_view s);

// Recurrent additive network:
//   content  = W_m x_t
//   in_gate  = sigmoid(W_i [h_{t-1}; x_t] + b_i)
//   fgt_gate = sigmoid(W_f [h_{t-1}; x_t] + b_f)
//   m_t      = in_gate * content + fgt_gate * m_{t-1}
//   h_t      = g(m_t)
struct RanParams {
  Matrix content;      // d_c x d_x
  Matrix input_gate;   // d_c x (d_c + d_x)
  Matrix forget_gate;  // d_c x (d_c + d_x)
  Vector input_bias;
  Vector forget_bias;
  OutputNonlinearity g = OutputNonlinearity::Tanh;

  static RanParams zeros(Index out_dim, Index in_dim, OutputNonlinearity g = OutputNonlinearity::Tanh);
  static RanParams random(Index out_dim, Index in_dim, Rng& rng, OutputNonlinearity g = OutputNonlinearity::Tanh);
  Index out_dim() const { return content.rows(); }
  Index in_dim() const { return content.cols(); }
  std::vector<TensorRef> tensors();
};

// Linear RAN: m_t = in_gate * x_t + fgt_gate * m_{t-1}, gates over [m_{t-1}; x_t].
struct LinearRanParams {
  Matrix input_gate;   // d x 2d
  Matrix forget_gate;  // d x 2d
  Vector input_bias;
  Vector forget_bias;

  static LinearRanParams zeros(Index dim);
  static LinearRanParams random(Index dim, Rng& rng);
  Index out_dim() const { return input_gate.rows(); }
  Index in_dim() const { return input_gate.rows(); }
  std::vector<TensorRef> tensors();
};

// c = W_e (x_1 + ... + x_L) + L b_e
struct LinearParams {
  Matrix weight;  // d_c x d_x
  Vector bias;

  static LinearParams zeros(Index out_dim, Index in_dim);
  static LinearParams random(Index out_dim, Index in_dim, Rng& rng);
  Index out_dim() const { return weight.rows(); }
  Index in_dim() const { return weight.cols(); }
  std::vector<TensorRef> tensors();
};

// Forward intermediates, one column per span position.
struct RanCache {
  Matrix inputs, concat, input_gate, forget_gate, content, memory, hidden;
};
struct LinearRanCache {
  Matrix inputs, concat, input_gate, forget_gate, memory;
};
struct LinearCache {
  Matrix inputs;
};

// span_inputs is d_x x L, one column per subword. c is the state after the
// last subword of the span.
Vector compose_ran(const RanParams& p, const Eigen::Ref<const Matrix>& span_inputs, RanCache* cache = nullptr);
Vector compose_linear_ran(const LinearRanParams& p, const Eigen::Ref<const Matrix>& span_inputs,
                          LinearRanCache* cache = nullptr);
Vector compose_linear(const LinearParams& p, const Eigen::Ref<const Matrix>& span_inputs,
                      LinearCache* cache = nullptr);

// Accumulate (+=) dL/dparams into grads and return dL/dinputs (d_x x L).
Matrix backward_ran(const RanParams& p, const RanCache& cache, const Vector& d_out, RanParams& grads);
Matrix backward_linear_ran(const LinearRanParams& p, const LinearRanCache& cache, const Vector& d_out,
                           LinearRanParams& grads);
Matrix backward_linear(const LinearParams& p, const LinearCache& cache, const Vector& d_out, LinearParams& grads);

using CompositionCache = std::variant<RanCache, LinearRanCache, LinearCache>;

// Method-erased composition parameters.
class Composition {
 public:
  using Params = std::variant<RanParams, LinearRanParams, LinearParams>;

  Composition() : params_(LinearParams{}) {}
  explicit Composition(Params p) : params_(std::move(p)) {}

  // Glorot matrices, zero biases.
  static Composition random(CompositionMethod method, Index out_dim, Index in_dim, Rng& rng,
                            OutputNonlinearity g = OutputNonlinearity::Tanh);
  Composition zeros_like() const;

  CompositionMethod method() const;
  Index out_dim() const;
  Index in_dim() const;
  const Params& params() const { return params_; }
  Params& params() { return params_; }
  std::vector<TensorRef> tensors();
  std::size_t parameter_count() const;

  Vector forward(const Eigen::Ref<const Matrix>& span_inputs, CompositionCache* cache = nullptr) const;
  // grads must come from zeros_like() on the same method.
  Matrix backward(const CompositionCache& cache, const Vector& d_out, Composition& grads) const;

 private:
  Params params_;
};

// Closed-form counts for d_c = d_x = d.
std::size_t parameter_count(CompositionMethod method, Index dim);

}  // namespace oscar
