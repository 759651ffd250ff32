#pragma once

#include <cstddef>
#include <vector>

#include "oscar/tensor.hpp"

namespace oscar {

struct AdamWConfig {
  double learning_rate = 2e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-6;
  double weight_decay = 0.01;  // matrices only; biases and LayerNorm vectors are not decayed
  std::size_t warmup_steps = 320;
};

// Linear warm-up to the base rate, then constant.
double learning_rate_at(const AdamWConfig& cfg, std::size_t step);

// Adam with decoupled weight decay. State is keyed by tensor position, so
// the tensor list must have the same layout on every call.
class AdamW {
 public:
  explicit AdamW(AdamWConfig cfg = {}) : cfg_(cfg) {}

  void step(const std::vector<TensorRef>& params, const std::vector<TensorRef>& grads);
  std::size_t steps_taken() const { return step_; }
  const AdamWConfig& config() const { return cfg_; }

 private:
  AdamWConfig cfg_;
  std::size_t step_ = 0;
  std::vector<Vector> m_, v_;
};

}  // namespace oscar
