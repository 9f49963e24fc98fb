#include "pagedep/optimizer.hpp"

#include <cmath>
#include <stdexcept>

namespace pagedep::ad {

AdamW::AdamW(AdamWConfig config, const std::vector<TensorPtr>& params) : config_(config) {
  m_.reserve(params.size());
  v_.reserve(params.size());
  for (const TensorPtr& p : params) {
    m_.emplace_back(p->value.size(), 0.0);
    v_.emplace_back(p->value.size(), 0.0);
  }
}

void AdamW::step(const std::vector<TensorPtr>& params) {
  if (params.size() != m_.size())
    throw std::invalid_argument("AdamW::step: parameter list changed size");
  ++step_;
  double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_));
  double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_));
  for (size_t pi = 0; pi < params.size(); ++pi) {
    Tensor& p = *params[pi];
    if (!p.requires_grad)
      throw std::invalid_argument("AdamW::step: parameter without gradient buffer");
    std::vector<double>& m = m_[pi];
    std::vector<double>& v = v_[pi];
    for (size_t i = 0; i < p.value.size(); ++i) {
      double g = p.grad[i];
      m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g;
      v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g * g;
      double m_hat = m[i] / bc1;
      double v_hat = v[i] / bc2;
      p.value[i] -= config_.learning_rate * m_hat / (std::sqrt(v_hat) + config_.epsilon);
      p.value[i] -= config_.learning_rate * config_.weight_decay * p.value[i];
    }
  }
}

double global_grad_norm(const std::vector<TensorPtr>& params) {
  double sq = 0.0;
  for (const TensorPtr& p : params)
    for (double g : p->grad) sq += g * g;
  return std::sqrt(sq);
}

void clip_global_grad_norm(const std::vector<TensorPtr>& params, double max_norm) {
  double norm = global_grad_norm(params);
  if (norm <= max_norm || norm == 0.0) return;
  double s = max_norm / norm;
  for (const TensorPtr& p : params)
    for (double& g : p->grad) g *= s;
}

void zero_grads(const std::vector<TensorPtr>& params) {
  for (const TensorPtr& p : params) p->zero_grad();
}

}  // namespace pagedep::ad
