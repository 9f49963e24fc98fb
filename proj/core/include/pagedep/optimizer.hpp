#pragma once

#include <cstdint>
#include <vector>

#include "pagedep/tensor.hpp"

namespace pagedep::ad {

struct AdamWConfig {
  double learning_rate = 0.001;
  double weight_decay = 1e-6;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam with decoupled weight decay. The adaptive update uses bias-corrected
/// moment estimates; the decay term theta -= lr * wd * theta is applied
/// separately and never touches the moments. Gradients are left untouched;
/// callers zero them between steps.
class AdamW {
 public:
  AdamW(AdamWConfig config, const std::vector<TensorPtr>& params);

  void step(const std::vector<TensorPtr>& params);

  int64_t step_count() const { return step_; }
  const AdamWConfig& config() const { return config_; }

  // Moment access for checkpointing/testing.
  const std::vector<std::vector<double>>& first_moments() const { return m_; }
  const std::vector<std::vector<double>>& second_moments() const { return v_; }

 private:
  AdamWConfig config_;
  int64_t step_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

double global_grad_norm(const std::vector<TensorPtr>& params);

/// Scales all gradients so the global norm does not exceed max_norm.
void clip_global_grad_norm(const std::vector<TensorPtr>& params, double max_norm);

void zero_grads(const std::vector<TensorPtr>& params);

}  // namespace pagedep::ad
