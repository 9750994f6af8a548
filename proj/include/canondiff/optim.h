//
// Project canondiff - Copyright 2026 The canondiff Authors.
// SPDX-License-Identifier: Apache-2.0
//

#ifndef CANONDIFF_OPTIM_H_
#define CANONDIFF_OPTIM_H_

#include <cstdint>
#include <span>
#include <vector>

#include "canondiff/autodiff.h"

namespace canondiff {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamConfig config;
  std::int64_t step = 0;
  std::vector<ad::Tensor> m;
  std::vector<ad::Tensor> v;
};

// Zero moments shaped like `params`.
AdamState make_adam(const AdamConfig &config,
                    std::span<const ad::Tensor *const> params);

// Bias-corrected Adam update, in place. Throws ContractViolation when the
// parameter, gradient and moment shapes disagree.
void adam_step(AdamState &state, std::span<ad::Tensor *const> params,
               std::span<const ad::Tensor> grads);

struct EmaState {
  double decay = 0.9999;
  std::vector<ad::Tensor> shadow;
};

// Shadow initialised to a copy of `params`. Rejects decay outside (0, 1).
EmaState make_ema(double decay, std::span<const ad::Tensor *const> params);

// shadow <- decay * shadow + (1 - decay) * params
void ema_update(EmaState &state, std::span<const ad::Tensor *const> params);

}  // namespace canondiff

#endif  // CANONDIFF_OPTIM_H_
