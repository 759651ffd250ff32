#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

#include "oscar/tensor.hpp"
#include "oscar/vocab.hpp"

namespace oscar {

class EncoderError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct EncoderConfig {
  std::size_t layers = 4;
  Index hidden = 64;
  Index heads = 2;
  Index feed_forward = 256;
  std::size_t max_len = 384;
  std::size_t vocab_size = 0;

  void validate() const;
};

struct LayerNormParams {
  Vector gamma, beta;
};

struct EncoderLayerParams {
  Matrix wq, wk, wv, wo;  // d_h x d_h
  Vector bq, bk, bv, bo;
  LayerNormParams ln_attn;
  Matrix w1;  // ff x d_h
  Vector b1;
  Matrix w2;  // d_h x ff
  Vector b2;
  LayerNormParams ln_ffn;
};

// Post-LN transformer encoder with an untied MLM output layer. Hidden states
// are d_h x N, one column per position.
struct EncoderParams {
  Matrix token_embedding;     // d_h x V
  Matrix position_embedding;  // d_h x max_len
  LayerNormParams ln_embed;
  std::vector<EncoderLayerParams> layers;
  Matrix out_weight;  // V x d_h
  Vector out_bias;    // V

  static EncoderParams zeros(const EncoderConfig& cfg);
  // N(0, 0.02) weights, zero biases, unit LayerNorm gains.
  static EncoderParams random(const EncoderConfig& cfg, Rng& rng);
  std::vector<TensorRef> tensors();
};

struct LayerNormCache {
  Matrix normalized;  // x-hat
  Vector inv_std;     // per column
};

struct EncoderLayerCache {
  Matrix input;
  Matrix q, k, v;
  std::vector<Matrix> probs;  // per head, N x N; probs(j, i) = attention of query i on key j
  Matrix context;             // d_h x N, concatenated head outputs
  LayerNormCache ln_attn;
  Matrix attn_out;  // after ln_attn
  Matrix ff_pre;    // ff x N, before GELU
  Matrix ff_act;
  LayerNormCache ln_ffn;
};

struct EncoderCache {
  std::vector<TokenId> ids;
  LayerNormCache ln_embed;
  std::vector<EncoderLayerCache> layers;
  // hidden[0] = embedding output, hidden[l] = output of layer l.
  std::vector<Matrix> hidden;
};

class Encoder {
 public:
  Encoder() = default;
  Encoder(EncoderConfig cfg, EncoderParams params);

  const EncoderConfig& config() const { return cfg_; }
  EncoderParams& params() { return params_; }
  const EncoderParams& params() const { return params_; }

  // Runs all layers; cache.hidden has layers + 1 entries.
  void forward(const std::vector<TokenId>& ids, EncoderCache& cache) const;

  // Logits (V x |positions|) for 0-based positions of the final layer.
  Matrix logits(const EncoderCache& cache, const std::vector<std::size_t>& positions) const;

  // Backpropagates d_logits (V x |positions|) through the output layer and
  // the stack. hidden_grads, when non-empty, holds layers + 1 matrices of
  // extra gradient injected at each hidden state (zero-size = none).
  void backward(const EncoderCache& cache, const std::vector<std::size_t>& positions, const Matrix& d_logits,
                const std::vector<Matrix>& hidden_grads, EncoderParams& grads) const;

 private:
  EncoderConfig cfg_;
  EncoderParams params_;
};

// Summed cross-entropy over columns of logits against target IDs, with
// d loss / d logits written to d_logits.
double cross_entropy(const Matrix& logits, const std::vector<TokenId>& targets, Matrix& d_logits);

}  // namespace oscar
