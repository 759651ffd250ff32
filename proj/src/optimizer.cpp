#include "oscar/optimizer.hpp"

#include <cmath>
#include <stdexcept>

namespace oscar {

double learning_rate_at(const AdamWConfig& cfg, std::size_t step) {
  if (cfg.warmup_steps == 0 || step >= cfg.warmup_steps) return cfg.learning_rate;
  return cfg.learning_rate * static_cast<double>(step) / static_cast<double>(cfg.warmup_steps);
}

void AdamW::step(const std::vector<TensorRef>& params, const std::vector<TensorRef>& grads) {
  if (params.size() != grads.size()) throw std::invalid_argument("AdamW: parameter/gradient lists differ");
  if (m_.empty()) {
    for (const auto& p : params) {
      m_.push_back(Vector::Zero(p.size()));
      v_.push_back(Vector::Zero(p.size()));
    }
  }
  if (m_.size() != params.size()) throw std::invalid_argument("AdamW: tensor layout changed between steps");

  ++step_;
  const double lr = learning_rate_at(cfg_, step_);
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
  for (std::size_t t = 0; t < params.size(); ++t) {
    const auto& p = params[t];
    const auto& g = grads[t];
    if (p.size() != g.size() || p.size() != m_[t].size())
      throw std::invalid_argument("AdamW: tensor '" + p.name + "' changed shape");
    const bool decay = p.cols > 1 && cfg_.weight_decay != 0.0;
    auto& m = m_[t];
    auto& v = v_[t];
    for (Index k = 0; k < p.size(); ++k) {
      const double gk = g.data[k];
      m[k] = cfg_.beta1 * m[k] + (1.0 - cfg_.beta1) * gk;
      v[k] = cfg_.beta2 * v[k] + (1.0 - cfg_.beta2) * gk * gk;
      const double update = (m[k] / bc1) / (std::sqrt(v[k] / bc2) + cfg_.epsilon);
      if (decay) p.data[k] -= lr * cfg_.weight_decay * p.data[k];
      p.data[k] -= lr * update;
    }
  }
}

}  // namespace oscar
