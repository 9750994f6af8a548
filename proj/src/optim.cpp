//
// Project canondiff - Copyright 2026 The canondiff Authors.
// SPDX-License-Identifier: Apache-2.0
//

#include "canondiff/optim.h"

#include <cmath>

#include "canondiff/errors.h"

namespace canondiff {

AdamState make_adam(const AdamConfig &config,
                    std::span<const ad::Tensor *const> params) {
  AdamState s;
  s.config = config;
  for (const ad::Tensor *p: params) {
    s.m.emplace_back(p->rows(), p->cols(), 0.0);
    s.v.emplace_back(p->rows(), p->cols(), 0.0);
  }
  return s;
}

void adam_step(AdamState &state, std::span<ad::Tensor *const> params,
               std::span<const ad::Tensor> grads) {
  if (params.size() != grads.size() || params.size() != state.m.size()
      || params.size() != state.v.size())
    throw ContractViolation("adam_step: parameter/gradient/state count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i]->same_shape(grads[i]) || !params[i]->same_shape(state.m[i])
        || !params[i]->same_shape(state.v[i]))
      throw ContractViolation("adam_step: shape mismatch for parameter "
                              + std::to_string(i));
  }

  const AdamConfig &c = state.config;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    double *p = params[i]->data();
    const double *g = grads[i].data();
    double *m = state.m[i].data();
    double *v = state.v[i].data();
    for (std::size_t j = 0; j < grads[i].size(); ++j) {
      m[j] = c.beta1 * m[j] + (1.0 - c.beta1) * g[j];
      v[j] = c.beta2 * v[j] + (1.0 - c.beta2) * g[j] * g[j];
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      p[j] -= c.lr * mhat / (std::sqrt(vhat) + c.eps);
    }
  }
}

EmaState make_ema(double decay, std::span<const ad::Tensor *const> params) {
  if (!(decay > 0.0 && decay < 1.0))
    throw ContractViolation("EMA decay must lie in (0, 1)");
  EmaState s;
  s.decay = decay;
  for (const ad::Tensor *p: params)
    s.shadow.push_back(*p);
  return s;
}

void ema_update(EmaState &state, std::span<const ad::Tensor *const> params) {
  if (!(state.decay > 0.0 && state.decay < 1.0))
    throw ContractViolation("EMA decay must lie in (0, 1)");
  if (params.size() != state.shadow.size())
    throw ContractViolation("ema_update: parameter count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i]->same_shape(state.shadow[i]))
      throw ContractViolation("ema_update: shape mismatch");
    double *s = state.shadow[i].data();
    const double *p = params[i]->data();
    // Written as s + (1 - decay)(p - s) so shadow == params is an exact
    // fixed point.
    const double w = 1.0 - state.decay;
    for (std::size_t j = 0; j < state.shadow[i].size(); ++j)
      s[j] += w * (p[j] - s[j]);
  }
}

}  // namespace canondiff
