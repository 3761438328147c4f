#pragma once

#include <cstdint>

#include "dsg/tensor.hpp"

namespace dsg {

// Scales every gradient by max_norm / norm when the global L2 norm strictly
// exceeds max_norm (a norm exactly at the limit is left untouched).
// Returns the pre-clip norm. Throws NumericsError on non-finite gradients.
double clip_grad_norm(TensorMap& grads, double max_norm);

struct AdamWConfig {
  double lr = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

// AdamW with decoupled weight decay: parameters first shrink by
// (1 - lr * weight_decay), then take the bias-corrected adaptive step. With
// an all-zero gradient and fresh state a parameter therefore shrinks by
// exactly (1 - lr * weight_decay). Moments are allocated lazily per name.
class AdamW {
 public:
  explicit AdamW(AdamWConfig config = {}) : config_(config) {}

  // Every parameter must have a same-shaped gradient entry. Throws
  // NumericsError (naming the parameter) on non-finite gradients.
  void step(TensorMap& params, const TensorMap& grads);

  const AdamWConfig& config() const { return config_; }
  std::int64_t step_count() const { return step_count_; }
  const TensorMap& first_moments() const { return m_; }
  const TensorMap& second_moments() const { return v_; }

  // Restores optimizer state from a checkpoint.
  void restore(std::int64_t step_count, TensorMap m, TensorMap v);

 private:
  AdamWConfig config_;
  std::int64_t step_count_ = 0;
  TensorMap m_;
  TensorMap v_;
};

}  // namespace dsg
