//
// Project canondiff - Copyright 2026 The canondiff Authors.
// SPDX-License-Identifier: Apache-2.0
//

#include "canondiff/diffusion.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "canondiff/errors.h"
#include "canondiff/graph.h"

namespace canondiff {

namespace {

constexpr double kMinRatio = 0.001;

void check_step(const NoiseSchedule &schedule, int t) {
  if (t < 0 || t > schedule.T)
    throw ContractViolation("diffusion step " + std::to_string(t)
                            + " outside 0.." + std::to_string(schedule.T));
}

void check_net(const NoiseSchedule &schedule, const NoisePredictor &net) {
  if (net.num_steps() != schedule.T)
    throw ContractViolation("network was built for "
                            + std::to_string(net.num_steps())
                            + " steps, schedule has "
                            + std::to_string(schedule.T));
}

std::vector<std::size_t> sizes_of(std::span<const PointCloud *const> clouds) {
  std::vector<std::size_t> sizes;
  sizes.reserve(clouds.size());
  for (const PointCloud *c: clouds)
    sizes.push_back(c->size());
  return sizes;
}

// Stacks per-graph matrices into one num_nodes x cols tensor.
template <class Get>
ad::Tensor pack(std::size_t graphs, std::size_t num_nodes, std::size_t cols,
                Get get) {
  ad::Tensor out(num_nodes, cols);
  std::size_t row = 0;
  for (std::size_t g = 0; g < graphs; ++g) {
    const Coords &m = get(g);
    if (static_cast<std::size_t>(m.cols()) != cols)
      throw ContractViolation("inconsistent column count across graphs");
    for (Eigen::Index i = 0; i < m.rows(); ++i, ++row)
      for (std::size_t k = 0; k < cols; ++k)
        out(row, k) = m(i, static_cast<Eigen::Index>(k));
  }
  return out;
}

// Per-node column of a per-graph scalar.
ad::Tensor node_column(const GraphBatch &batch, std::span<const double> v) {
  ad::Tensor out(batch.num_nodes, 1);
  for (std::size_t i = 0; i < batch.num_nodes; ++i)
    out(i, 0) = v[(*batch.node_graph)[i]];
  return out;
}

double sum_sq(const Coords &m) { return m.squaredNorm(); }

}  // namespace

NoiseSchedule polynomial_schedule(int T, double s, double power) {
  if (T < 1)
    throw ContractViolation("schedule needs T >= 1");
  if (!(s > 0.0 && s < 0.5))
    throw ContractViolation("precision s must lie in (0, 0.5)");
  if (!(power > 0.0))
    throw ContractViolation("schedule power must be positive");

  std::vector<double> raw(T + 1);
  for (int t = 0; t <= T; ++t) {
    const double u = 1.0 - std::pow(static_cast<double>(t) / T, power);
    raw[t] = u * u;
  }
  // Re-accumulate with clamped interior ratios; the endpoint stays at 0.
  std::vector<double> acc(T + 1);
  acc[0] = raw[0];
  for (int t = 1; t < T; ++t) {
    const double ratio = std::clamp(raw[t] / raw[t - 1], kMinRatio, 1.0);
    acc[t] = acc[t - 1] * ratio;
  }
  acc[T] = 0.0;

  NoiseSchedule out;
  out.T = T;
  out.precision_s = s;
  out.power = power;
  out.alpha2.resize(T + 1);
  out.alpha.resize(T + 1);
  out.sigma.resize(T + 1);
  for (int t = 0; t <= T; ++t) {
    // acc[0] == 1; the closed form keeps alpha_0^2 == 1 - s to the last bit.
    const double a2 = t == 0 ? 1.0 - s : s + (1.0 - 2.0 * s) * acc[t];
    out.alpha2[t] = a2;
    out.alpha[t] = std::sqrt(a2);
    out.sigma[t] = std::sqrt(1.0 - a2);
  }
  return out;
}

void validate(const DiffusionConfig &c) {
  if (c.T < 1)
    throw ContractViolation("diffusion.T must be >= 1");
  if (!(c.precision_s > 0.0 && c.precision_s < 0.5))
    throw ContractViolation("diffusion.precision_s must lie in (0, 0.5)");
  if (!(c.power > 0.0))
    throw ContractViolation("diffusion.power must be positive");
  if (c.batch_size < 1)
    throw ContractViolation("diffusion.batch_size must be >= 1");
  if (c.steps < 0)
    throw ContractViolation("diffusion.steps must be >= 0");
  if (!(c.adam.lr > 0.0))
    throw ContractViolation("diffusion.lr must be positive");
  if (!(c.adam.beta1 >= 0.0 && c.adam.beta1 < 1.0)
      || !(c.adam.beta2 >= 0.0 && c.adam.beta2 < 1.0))
    throw ContractViolation("Adam betas must lie in [0, 1)");
  if (!(c.adam.eps > 0.0))
    throw ContractViolation("Adam eps must be positive");
  if (!(c.ema_decay > 0.0 && c.ema_decay < 1.0))
    throw ContractViolation("diffusion.ema_decay must lie in (0, 1)");
  if (!(c.frame_penalty >= 0.0))
    throw ContractViolation("diffusion.frame_penalty must be >= 0");
}

Coords sample_noise(Rng &rng, std::size_t n, int dim, bool com_project) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Coords eps(static_cast<Eigen::Index>(n), dim);
  for (Eigen::Index i = 0; i < eps.rows(); ++i)
    for (int k = 0; k < dim; ++k)
      eps(i, k) = normal(rng);
  if (com_project && n > 0)
    eps.rowwise() -= eps.colwise().mean();
  return eps;
}

PointCloud forward_noise(const NoiseSchedule &schedule, const PointCloud &x,
                         int t, const Coords &eps) {
  check_step(schedule, t);
  if (eps.rows() != x.coords.rows() || eps.cols() != x.coords.cols())
    throw ContractViolation("noise shape differs from the cloud");
  PointCloud z = x;
  z.coords = schedule.alpha[t] * x.coords + schedule.sigma[t] * eps;
  return z;
}

ad::Var denoising_loss(ad::Tape &tape, const NoiseSchedule &schedule,
                       const Canonicalizer &can, const NoisePredictor &net,
                       std::span<const PointCloud *const> clouds,
                       const LossDraws &draws, bool com_project, bool track,
                       std::vector<std::size_t> *degenerate,
                       double frame_penalty) {
  using namespace ad;
  check_net(schedule, net);
  const std::size_t G = clouds.size();
  if (G == 0)
    throw ContractViolation("empty batch");
  if (draws.steps.size() != G || draws.noise.size() != G)
    throw ContractViolation("one step and one noise draw per cloud required");
  const auto dim = static_cast<std::size_t>(net.dim());
  for (std::size_t g = 0; g < G; ++g) {
    check_step(schedule, draws.steps[g]);
    if (draws.noise[g].rows() != clouds[g]->coords.rows()
        || static_cast<std::size_t>(clouds[g]->dim()) != dim)
      throw ContractViolation("noise or cloud shape mismatch in batch");
  }

  const std::vector<std::size_t> sizes = sizes_of(clouds);
  const GraphBatch batch = GraphBatch::fully_connected(sizes);
  const std::size_t N = batch.num_nodes;
  const std::size_t F = static_cast<std::size_t>(clouds[0]->features.cols());

  Var x = tape.constant(
      pack(G, N, dim, [&](std::size_t g) -> const Coords & {
        return clouds[g]->coords;
      }));
  const Tensor feats = pack(G, N, F, [&](std::size_t g) -> const Coords & {
    return clouds[g]->features;
  });
  Var eps = tape.constant(
      pack(G, N, dim, [&](std::size_t g) -> const Coords & {
        return draws.noise[g];
      }));

  std::vector<double> a(G), s(G), w(G);
  for (std::size_t g = 0; g < G; ++g) {
    a[g] = schedule.alpha[draws.steps[g]];
    s[g] = schedule.sigma[draws.steps[g]];
    w[g] = 1.0 / (static_cast<double>(sizes[g] * dim) * G);
  }

  Var penalty;
  Var xc = canonicalize_batch(can, tape, batch, x, feats, track, degenerate,
                              frame_penalty > 0.0 ? &penalty : nullptr);
  Var z = xc * tape.constant(node_column(batch, a))
          + eps * tape.constant(node_column(batch, s));
  Var pred = net.predict(tape, batch, z, feats, draws.steps, track);
  if (com_project)
    pred = center_per_graph(pred, batch);

  Var per_node = sum_axis1(square(eps - pred));
  Var per_graph = scatter_add_rows(per_node, batch.node_graph, G);
  Var loss = sum(per_graph * tape.constant(Tensor(G, 1, w)));
  if (penalty.valid())
    loss = loss + penalty * frame_penalty;
  return loss;
}

BatchDraw draw_batch(Rng &rng, const NoiseSchedule &schedule,
                     std::span<const PointCloud> data, int batch_size,
                     bool com_project) {
  if (data.empty())
    throw ContractViolation("training set is empty");
  if (batch_size < 1)
    throw ContractViolation("batch size must be >= 1");
  BatchDraw out;
  std::uniform_int_distribution<std::size_t> pick(0, data.size() - 1);
  std::uniform_int_distribution<int> step(0, schedule.T);
  for (int b = 0; b < batch_size; ++b)
    out.indices.push_back(pick(rng));
  for (std::size_t idx: out.indices) {
    out.draws.steps.push_back(step(rng));
    out.draws.noise.push_back(
        sample_noise(rng, data[idx].size(), data[idx].dim(), com_project));
  }
  return out;
}

/* Trainer */

Trainer::Trainer(const DiffusionConfig &config, Canonicalizer &can,
                 NoisePredictor &net, std::span<const PointCloud> data)
    : config_(config),
      schedule_(polynomial_schedule(config.T, config.precision_s,
                                    config.power)),
      can_(can), net_(net), data_(data) {
  validate(config_);
  check_net(schedule_, net_);
  if (data_.empty())
    throw ContractViolation("training set is empty");
  if (can_.dim() != net_.dim())
    throw ContractViolation("canonicalizer and denoiser dimensions differ");
  for (const PointCloud &x: data_) {
    validate(x);
    if (x.dim() != net_.dim())
      throw ContractViolation("training cloud dimension differs from the net");
  }
  std::vector<ad::Tensor *> p = trainable();
  std::vector<const ad::Tensor *> cp(p.begin(), p.end());
  adam_ = make_adam(config_.adam, cp);
  ema_ = make_ema(config_.ema_decay, cp);
}

std::vector<ad::Tensor *> Trainer::trainable() {
  std::vector<ad::Tensor *> p = net_.params().pointers();
  if (can_.trainable()) {
    std::vector<ad::Tensor *> h = can_.net().params().pointers();
    p.insert(p.end(), h.begin(), h.end());
  }
  return p;
}

double Trainer::step() {
  Rng rng = make_stream(config_.seed, "train",
                        static_cast<std::uint64_t>(step_));
  BatchDraw bd = draw_batch(rng, schedule_, data_, config_.batch_size,
                            config_.com_project_noise);
  std::vector<const PointCloud *> clouds;
  for (std::size_t idx: bd.indices)
    clouds.push_back(&data_[idx]);

  std::vector<ad::Tensor *> params = trainable();
  for (;;) {
    if (clouds.empty()) {
      ++step_;
      return std::numeric_limits<double>::quiet_NaN();
    }
    ad::Tape tape(true);
    std::vector<std::size_t> degenerate;
    ad::Var loss = denoising_loss(tape, schedule_, can_, net_, clouds,
                                  bd.draws, config_.com_project_noise, true,
                                  &degenerate, config_.frame_penalty);
    if (!degenerate.empty()) {
      // Drop the offending samples and rebuild the batch.
      skipped_ += degenerate.size();
      std::vector<bool> drop(clouds.size(), false);
      for (std::size_t g: degenerate)
        drop[g] = true;
      std::vector<const PointCloud *> kept;
      LossDraws kd;
      for (std::size_t g = 0; g < clouds.size(); ++g) {
        if (drop[g])
          continue;
        kept.push_back(clouds[g]);
        kd.steps.push_back(bd.draws.steps[g]);
        kd.noise.push_back(std::move(bd.draws.noise[g]));
      }
      clouds = std::move(kept);
      bd.draws = std::move(kd);
      continue;
    }

    const double value = loss.value().item();
    if (!std::isfinite(value))
      throw NumericFailure("non-finite training loss at step "
                               + std::to_string(step_),
                           loss.id(), "loss");
    ad::GradMap grads = tape.backward(loss);
    std::vector<ad::Tensor> g;
    g.reserve(params.size());
    for (ad::Tensor *p: params)
      g.push_back(grads.get(*p));
    adam_step(adam_, params, g);
    std::vector<const ad::Tensor *> cp(params.begin(), params.end());
    ema_update(ema_, cp);
    ++step_;
    return value;
  }
}

void Trainer::restore(std::int64_t step, std::size_t skipped, AdamState adam,
                      EmaState ema) {
  const std::size_t n = trainable().size();
  if (adam.m.size() != n || adam.v.size() != n || ema.shadow.size() != n)
    throw ContractViolation("restored optimizer state does not match the "
                            "trainable parameters");
  if (step < 0)
    throw ContractViolation("negative step count");
  step_ = step;
  skipped_ = skipped;
  adam_ = std::move(adam);
  ema_ = std::move(ema);
}

TrainResult train(const DiffusionConfig &config, Canonicalizer &can,
                  NoisePredictor &net, std::span<const PointCloud> data) {
  Trainer trainer(config, can, net, data);
  TrainResult out;
  out.losses.reserve(config.steps);
  for (int i = 0; i < config.steps; ++i)
    out.losses.push_back(trainer.step());
  out.skipped = trainer.skipped();
  return out;
}

void load_ema(const EmaState &ema, std::span<ad::Tensor *const> params) {
  if (ema.shadow.size() != params.size())
    throw ContractViolation("EMA shadow count differs from parameter count");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!ema.shadow[i].same_shape(*params[i]))
      throw ContractViolation("EMA shadow shape differs from its parameter");
    *params[i] = ema.shadow[i];
  }
}

/* Sampling */

namespace {

std::vector<PointCloud> run_chains(const NoiseSchedule &schedule,
                                   const NoisePredictor &net,
                                   std::span<const SampleSpec> specs,
                                   std::span<Rng *const> rngs,
                                   const SamplerOptions &options) {
  check_net(schedule, net);
  const std::size_t G = specs.size();
  if (G == 0)
    return {};
  const int dim = net.dim();
  std::vector<std::size_t> sizes;
  for (const SampleSpec &s: specs) {
    if (s.features.rows() < 1)
      throw ContractViolation("sampling needs n_atoms >= 1");
    sizes.push_back(static_cast<std::size_t>(s.features.rows()));
  }
  const GraphBatch batch = GraphBatch::fully_connected(sizes);
  const std::size_t N = batch.num_nodes;
  const auto F = static_cast<std::size_t>(specs[0].features.cols());
  const ad::Tensor feats = pack(G, N, F, [&](std::size_t g) -> const Coords & {
    return specs[g].features;
  });

  std::vector<Coords> z(G);
  for (std::size_t g = 0; g < G; ++g)
    z[g] = sample_noise(*rngs[g], sizes[g], dim, options.com_project);

  std::vector<int> steps(G);
  for (int t = schedule.T; t >= 1; --t) {
    std::fill(steps.begin(), steps.end(), t);
    ad::Tape tape(false);
    ad::Var zt = tape.constant(
        pack(G, N, dim, [&](std::size_t g) -> const Coords & { return z[g]; }));
    ad::Var pred = net.predict(tape, batch, zt, feats, steps, false);
    if (options.com_project)
      pred = center_per_graph(pred, batch);
    const ad::Tensor &eh = pred.value();
    if (!eh.all_finite())
      throw NumericFailure("denoiser produced non-finite output at step "
                               + std::to_string(t),
                           pred.id(), "predict");

    const double a_ts = schedule.alpha[t] / schedule.alpha[t - 1];
    const double s2_ts = schedule.sigma[t] * schedule.sigma[t]
                         - a_ts * a_ts * schedule.sigma[t - 1]
                               * schedule.sigma[t - 1];
    const double coef = s2_ts / (a_ts * schedule.sigma[t]);
    const double noise_std =
        std::sqrt(std::max(s2_ts, 0.0)) * schedule.sigma[t - 1]
        / schedule.sigma[t];
    const bool add_noise = t > 1 && !options.deterministic;

    for (std::size_t g = 0; g < G; ++g) {
      const std::size_t off = batch.offsets[g];
      for (Eigen::Index i = 0; i < z[g].rows(); ++i)
        for (int k = 0; k < dim; ++k)
          z[g](i, k) = z[g](i, k) / a_ts - coef * eh(off + i, k);
      if (add_noise)
        z[g] += noise_std
                * sample_noise(*rngs[g], sizes[g], dim, options.com_project);
    }
  }

  std::vector<PointCloud> out(G);
  for (std::size_t g = 0; g < G; ++g) {
    out[g].coords = std::move(z[g]);
    out[g].features = specs[g].features;
    out[g].labels = specs[g].labels;
  }
  return out;
}

}  // namespace

PointCloud sample(const NoiseSchedule &schedule, const NoisePredictor &net,
                  std::size_t n_atoms, const Coords &features, Rng &rng,
                  const SamplerOptions &options) {
  if (n_atoms < 1 || static_cast<std::size_t>(features.rows()) != n_atoms)
    throw ContractViolation("sampling needs n_atoms >= 1 feature rows");
  const SampleSpec spec{ features, {} };
  Rng *r[] = { &rng };
  return run_chains(schedule, net, std::span(&spec, 1), r, options)[0];
}

std::vector<PointCloud> sample_chains(const NoiseSchedule &schedule,
                                      const NoisePredictor &net,
                                      std::span<const SampleSpec> specs,
                                      std::uint64_t seed,
                                      const SamplerOptions &options,
                                      std::size_t first_index) {
  std::vector<Rng> rngs;
  rngs.reserve(specs.size());
  for (std::size_t k = 0; k < specs.size(); ++k)
    rngs.push_back(make_stream(seed, "sample", first_index + k));
  std::vector<Rng *> ptrs;
  for (Rng &r: rngs)
    ptrs.push_back(&r);
  return run_chains(schedule, net, specs, ptrs, options);
}

/* Likelihood */

NllTerms nll_terms(const NoiseSchedule &schedule, const NoisePredictor &net,
                   const Canonicalizer &can, const PointCloud &x, Rng &rng,
                   bool com_project) {
  check_net(schedule, net);
  const PointCloud canon = canonicalize(can, x).x_canon;
  const std::size_t n = canon.size();
  const int dim = canon.dim();
  if (com_project && n < 2)
    throw ContractViolation("CoM-projected likelihood needs n >= 2");
  const int d = static_cast<int>(com_project ? (n - 1) * dim : n * dim);
  const int T = schedule.T;

  // Step 0 feeds the reconstruction term, the rest the KL terms.
  std::vector<int> steps{ 0 };
  double kl_scale = 1.0;
  if (T <= 256) {
    for (int t = 1; t <= T; ++t)
      steps.push_back(t);
  } else {
    std::uniform_int_distribution<int> u(1, T);
    steps.push_back(u(rng));
    kl_scale = static_cast<double>(T);
  }

  const std::size_t G = steps.size();
  std::vector<Coords> eps(G), z(G);
  for (std::size_t g = 0; g < G; ++g) {
    eps[g] = sample_noise(rng, n, dim, com_project);
    z[g] = schedule.alpha[steps[g]] * canon.coords
           + schedule.sigma[steps[g]] * eps[g];
  }
  const std::vector<std::size_t> sizes(G, n);
  const GraphBatch batch = GraphBatch::fully_connected(sizes);
  const std::size_t N = batch.num_nodes;
  const auto F = static_cast<std::size_t>(canon.features.cols());
  ad::Tape tape(false);
  ad::Var zt = tape.constant(
      pack(G, N, dim, [&](std::size_t g) -> const Coords & { return z[g]; }));
  const ad::Tensor feats = pack(G, N, F, [&](std::size_t) -> const Coords & {
    return canon.features;
  });
  ad::Var pred = net.predict(tape, batch, zt, feats, steps, false);
  if (com_project)
    pred = center_per_graph(pred, batch);
  const ad::Tensor &eh = pred.value();
  if (!eh.all_finite())
    throw NumericFailure("denoiser produced non-finite output", pred.id(),
                         "predict");

  std::vector<double> err(G, 0.0);
  for (std::size_t g = 0; g < G; ++g) {
    const std::size_t off = batch.offsets[g];
    for (std::size_t i = 0; i < n; ++i)
      for (int k = 0; k < dim; ++k) {
        const double e = eps[g](static_cast<Eigen::Index>(i), k)
                         - eh(off + i, k);
        err[g] += e * e;
      }
  }

  NllTerms out;
  out.dof = d;
  const double sT2 = schedule.sigma[T] * schedule.sigma[T];
  out.prior = 0.5 * (schedule.alpha2[T] * sum_sq(canon.coords)
                     + d * (sT2 - 1.0 - std::log(sT2)));
  for (std::size_t g = 1; g < G; ++g) {
    const int t = steps[g];
    out.diffusion +=
        0.5 * (schedule.snr(t - 1) / schedule.snr(t) - 1.0) * err[g];
  }
  out.diffusion *= kl_scale;
  out.reconstruction =
      0.5 * err[0]
      + d * (std::log(schedule.sigma[0] / schedule.alpha[0])
             + 0.5 * std::log(2.0 * std::numbers::pi));
  out.total = out.prior + out.diffusion + out.reconstruction;
  return out;
}

double estimate_nll(const NoiseSchedule &schedule, const NoisePredictor &net,
                    const Canonicalizer &can, const PointCloud &x, Rng &rng,
                    bool com_project) {
  return nll_terms(schedule, net, can, x, rng, com_project).per_dim();
}

ad::Var GaussianOracleDenoiser::predict(ad::Tape &tape,
                                        const GraphBatch &batch, ad::Var z,
                                        const ad::Tensor &,
                                        std::span<const int> steps,
                                        bool) const {
  if (steps.size() != batch.num_graphs)
    throw ContractViolation("one step per graph required");
  std::vector<double> s(batch.num_graphs);
  for (std::size_t g = 0; g < s.size(); ++g) {
    check_step(schedule_, steps[g]);
    s[g] = schedule_.sigma[steps[g]];
  }
  return z * tape.constant(node_column(batch, s));
}

}  // namespace canondiff
