#pragma once

#include <cmath>
#include <vector>

#include "hetgpt/tape.hpp"

namespace hetgpt {

/// First/second moment accumulators, one pair per parameter.
struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  long step = 0;

  void init(const std::vector<Param*>& params) {
    m.clear();
    v.clear();
    for (const Param* p : params) {
      m.push_back(Tensor::Zero(p->value.rows(), p->value.cols()));
      v.push_back(Tensor::Zero(p->value.rows(), p->value.cols()));
    }
    step = 0;
  }
};

/// One bias-corrected Adam update from the grads currently held by params.
/// Aborts without touching any parameter if a gradient is non-finite.
inline void adam_step(const std::vector<Param*>& params, AdamState& state, double lr,
                      double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8) {
  if (state.m.size() != params.size())
    throw DimensionError("adam_step: state not initialized for this parameter set");
  for (const Param* p : params) {
    if (!p->grad.allFinite())
      throw NumericError("adam_step: non-finite gradient in " + p->name);
  }
  state.step += 1;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Param& p = *params[i];
    state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * p.grad;
    state.v[i] = (beta2 * state.v[i].array() + (1.0 - beta2) * p.grad.array().square()).matrix();
    Tensor m_hat = state.m[i] / bc1;
    Tensor v_hat = state.v[i] / bc2;
    p.value.array() -= lr * m_hat.array() / (v_hat.array().sqrt() + eps);
  }
}

}  // namespace hetgpt
