//
// Project canondiff - Copyright 2026 The canondiff Authors.
// SPDX-License-Identifier: Apache-2.0
//

#ifndef CANONDIFF_DIFFUSION_H_
#define CANONDIFF_DIFFUSION_H_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "canondiff/autodiff.h"
#include "canondiff/canonical.h"
#include "canondiff/groups.h"
#include "canondiff/nets.h"
#include "canondiff/optim.h"
#include "canondiff/rng.h"

namespace canondiff {

/**
 * @brief Variance-preserving schedule over steps 0..T.
 *
 * alpha[t]^2 + sigma[t]^2 == 1, alpha strictly decreasing,
 * alpha[0]^2 == 1 - s and alpha[T]^2 == s.
 */
struct NoiseSchedule {
  int T = 0;
  double precision_s = 0.0;
  double power = 0.0;
  std::vector<double> alpha2;
  std::vector<double> alpha;
  std::vector<double> sigma;

  double snr(int t) const { return alpha2[t] / (sigma[t] * sigma[t]); }
};

// raw_t = (1 - (t/T)^power)^2 with interior step ratios clamped to
// [0.001, 1]; alpha_t^2 = s + (1 - 2s) raw_t.
NoiseSchedule polynomial_schedule(int T, double s, double power);

struct DiffusionConfig {
  int T = 256;
  double precision_s = 1e-5;
  double power = 2.0;
  int batch_size = 64;
  int steps = 1000;
  AdamConfig adam;
  double ema_decay = 0.9999;
  std::uint64_t seed = 0;
  bool com_project_noise = true;
  // Weight of the frame residual penalty; 0 disables it.
  double frame_penalty = 0.0;
};

// Throws ContractViolation on out-of-range fields.
void validate(const DiffusionConfig &config);

// n x dim standard normal draws, mean-removed per column when com_project.
Coords sample_noise(Rng &rng, std::size_t n, int dim, bool com_project);

// z_t = alpha_t x + sigma_t eps; features and labels pass through.
PointCloud forward_noise(const NoiseSchedule &schedule, const PointCloud &x,
                         int t, const Coords &eps);

// Per-graph step and noise (in the canonical frame) for one loss evaluation.
struct LossDraws {
  std::vector<int> steps;
  std::vector<Coords> noise;
};

/**
 * @brief Denoising loss of a batch with explicit draws.
 *
 * Each cloud is canonicalized on the tape, noised with its draw and passed
 * to the predictor; the loss is the batch mean of the per-cloud mean squared
 * noise error. With com_project the prediction is made CoM-free first. A
 * positive frame_penalty adds that multiple of the canonicalizer's frame
 * residual penalty (network kinds only).
 */
ad::Var denoising_loss(ad::Tape &tape, const NoiseSchedule &schedule,
                       const Canonicalizer &can, const NoisePredictor &net,
                       std::span<const PointCloud *const> clouds,
                       const LossDraws &draws, bool com_project, bool track,
                       std::vector<std::size_t> *degenerate = nullptr,
                       double frame_penalty = 0.0);

// Draws for one training step: batch membership, steps uniform on 0..T,
// CoM-projected noise.
struct BatchDraw {
  std::vector<std::size_t> indices;
  LossDraws draws;
};
BatchDraw draw_batch(Rng &rng, const NoiseSchedule &schedule,
                     std::span<const PointCloud> data, int batch_size,
                     bool com_project);

/**
 * @brief Joint training of the denoiser and (when learned) the
 * canonicalizer.
 *
 * Each step draws from a generator keyed by (seed, "train", step), so a run
 * restored at step k continues exactly like an uninterrupted one.
 */
class Trainer {
public:
  Trainer(const DiffusionConfig &config, Canonicalizer &can,
          NoisePredictor &net, std::span<const PointCloud> data);

  // One update; returns the batch loss. Throws NumericFailure on NaN.
  double step();

  std::int64_t steps_done() const noexcept { return step_; }
  std::size_t skipped() const noexcept { return skipped_; }
  const NoiseSchedule &schedule() const noexcept { return schedule_; }
  const DiffusionConfig &config() const noexcept { return config_; }

  AdamState &adam() noexcept { return adam_; }
  EmaState &ema() noexcept { return ema_; }
  const AdamState &adam() const noexcept { return adam_; }
  const EmaState &ema() const noexcept { return ema_; }

  void restore(std::int64_t step, std::size_t skipped, AdamState adam,
               EmaState ema);

  // Denoiser parameters followed by canonicalizer parameters when learned.
  std::vector<ad::Tensor *> trainable();

private:
  DiffusionConfig config_;
  NoiseSchedule schedule_;
  Canonicalizer &can_;
  NoisePredictor &net_;
  std::span<const PointCloud> data_;
  AdamState adam_;
  EmaState ema_;
  std::int64_t step_ = 0;
  std::size_t skipped_ = 0;
};

struct TrainResult {
  std::vector<double> losses;
  std::size_t skipped = 0;
};

// Runs config.steps updates from scratch.
TrainResult train(const DiffusionConfig &config, Canonicalizer &can,
                  NoisePredictor &net, std::span<const PointCloud> data);

// Copies EMA shadows into the live parameters they track.
void load_ema(const EmaState &ema, std::span<ad::Tensor *const> params);

struct SamplerOptions {
  bool com_project = true;
  // Suppresses all reverse-step noise.
  bool deterministic = false;
};

// Ancestral sampling of one cloud; returns z_0.
PointCloud sample(const NoiseSchedule &schedule, const NoisePredictor &net,
                  std::size_t n_atoms, const Coords &features, Rng &rng,
                  const SamplerOptions &options = {});

struct SampleSpec {
  Coords features;
  std::vector<std::string> labels;
};

// Samples one cloud per spec in a single batched chain. Chain k uses the
// generator make_stream(seed, "sample", first_index + k), so results do not
// depend on how chains are grouped.
std::vector<PointCloud> sample_chains(const NoiseSchedule &schedule,
                                      const NoisePredictor &net,
                                      std::span<const SampleSpec> specs,
                                      std::uint64_t seed,
                                      const SamplerOptions &options = {},
                                      std::size_t first_index = 0);

struct NllTerms {
  double prior = 0.0;
  double diffusion = 0.0;
  double reconstruction = 0.0;
  double total = 0.0;
  int dof = 0;
  double per_dim() const { return total / dof; }
};

// Discrete-time variational bound on -log p(c(x)) in nats, one noise draw
// per step. Exact sum over steps when T <= 256, otherwise a single uniform
// step scaled by T.
NllTerms nll_terms(const NoiseSchedule &schedule, const NoisePredictor &net,
                   const Canonicalizer &can, const PointCloud &x, Rng &rng,
                   bool com_project = true);

// nll_terms(...).per_dim()
double estimate_nll(const NoiseSchedule &schedule, const NoisePredictor &net,
                    const Canonicalizer &can, const PointCloud &x, Rng &rng,
                    bool com_project = true);

// Bayes-optimal noise prediction sigma_t z_t for N(0, I) data. Has no
// parameters.
class GaussianOracleDenoiser final: public NoisePredictor {
public:
  GaussianOracleDenoiser(NoiseSchedule schedule, int dim)
      : schedule_(std::move(schedule)), dim_(dim) { }

  ad::Var predict(ad::Tape &tape, const GraphBatch &batch, ad::Var z,
                  const ad::Tensor &features, std::span<const int> steps,
                  bool track) const override;

  ParameterSet &params() override { return params_; }
  const ParameterSet &params() const override { return params_; }
  int dim() const override { return dim_; }
  int num_steps() const override { return schedule_.T; }
  bool equivariant() const override { return true; }

private:
  NoiseSchedule schedule_;
  int dim_;
  ParameterSet params_;
};

}  // namespace canondiff

#endif  // CANONDIFF_DIFFUSION_H_
