#include "dsg/optim.hpp"

#include <cmath>

#include "dsg/errors.hpp"

namespace dsg {

double clip_grad_norm(TensorMap& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& [name, g] : grads) {
    for (double v : g.data) {
      if (!std::isfinite(v)) {
        throw NumericsError("non-finite gradient for parameter '" + name + "'");
      }
      sq += v * v;
    }
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double scale = max_norm / norm;
    for (auto& [name, g] : grads) {
      (void)name;
      for (double& v : g.data) v *= scale;
    }
  }
  return norm;
}

void AdamW::step(TensorMap& params, const TensorMap& grads) {
  ++step_count_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_count_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_count_));
  for (auto& [name, p] : params) {
    const auto it = grads.find(name);
    if (it == grads.end()) {
      throw ContractError("missing gradient for parameter '" + name + "'");
    }
    const Tensor& g = it->second;
    if (!g.same_shape(p)) {
      throw ShapeError("gradient shape " + g.shape_str() + " does not match parameter '" + name +
                       "' " + p.shape_str());
    }
    if (!g.all_finite()) {
      throw NumericsError("non-finite gradient for parameter '" + name + "'");
    }
    Tensor& m = m_[name];
    Tensor& v = v_[name];
    if (m.empty()) m = Tensor(p.shape, 0.0);
    if (v.empty()) v = Tensor(p.shape, 0.0);
    for (std::size_t i = 0; i < p.data.size(); ++i) {
      p.data[i] *= 1.0 - config_.lr * config_.weight_decay;
      m.data[i] = config_.beta1 * m.data[i] + (1.0 - config_.beta1) * g.data[i];
      v.data[i] = config_.beta2 * v.data[i] + (1.0 - config_.beta2) * g.data[i] * g.data[i];
      const double mhat = m.data[i] / bc1;
      const double vhat = v.data[i] / bc2;
      p.data[i] -= config_.lr * mhat / (std::sqrt(vhat) + config_.eps);
    }
  }
}

void AdamW::restore(std::int64_t step_count, TensorMap m, TensorMap v) {
  step_count_ = step_count;
  m_ = std::move(m);
  v_ = std::move(v);
}

}  // namespace dsg
