//
// Project canondiff - Copyright 2026 The canondiff Authors.
// SPDX-License-Identifier: Apache-2.0
//

#include <cmath>
#include <numbers>
#include <numeric>
#include <vector>

#include <gtest/gtest.h>

#include "test_util.h"
#include "canondiff/data.h"
#include "canondiff/diffusion.h"
#include "canondiff/errors.h"

namespace canondiff {
namespace {
using testing_util::random_coords;

constexpr int kT = 20;

DenoiserNet small_denoiser(Rng &rng, int T = kT) {
  DenoiserConfig c;
  c.layers = 2;
  c.hidden = 16;
  c.num_steps = T;
  return DenoiserNet(c, rng);
}

CanonicalizerNet small_canonicalizer(Rng &rng) {
  CanonicalizerConfig c;
  c.layers = 2;
  c.hidden = 8;
  return CanonicalizerNet(c, rng);
}

double max_abs(const ad::Tensor &t) {
  double m = 0.0;
  for (double v: t.values())
    m = std::max(m, std::abs(v));
  return m;
}

std::vector<PointCloud> synthetic(std::size_t count, std::uint64_t seed) {
  const std::vector<TemplateSpec> t = default_templates();
  return gen_synthetic(t, count, seed).records;
}

// Predicts the exact noise by inverting z = alpha x + sigma eps for known
// canonical clouds. Graph g uses clean[g % clean.size()].
class ExactNoise final: public NoisePredictor {
public:
  ExactNoise(NoiseSchedule s, std::vector<Coords> clean)
      : s_(std::move(s)), clean_(std::move(clean)) { }

  ad::Var predict(ad::Tape &tape, const GraphBatch &batch, ad::Var z,
                  const ad::Tensor &, std::span<const int> steps,
                  bool) const override {
    ad::Tensor shift(batch.num_nodes, 3), inv(batch.num_nodes, 1);
    for (std::size_t g = 0; g < batch.num_graphs; ++g) {
      const Coords &x = clean_[g % clean_.size()];
      for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const std::size_t row = batch.offsets[g] + i;
        for (int k = 0; k < 3; ++k)
          shift(row, k) = s_.alpha[steps[g]] * x(i, k);
        inv(row, 0) = 1.0 / s_.sigma[steps[g]];
      }
    }
    return (z - tape.constant(shift)) * tape.constant(inv);
  }

  ParameterSet &params() override { return p_; }
  const ParameterSet &params() const override { return p_; }
  int dim() const override { return 3; }
  int num_steps() const override { return s_.T; }
  bool equivariant() const override { return true; }

private:
  NoiseSchedule s_;
  std::vector<Coords> clean_;
  ParameterSet p_;
};

class ZeroNoise final: public NoisePredictor {
public:
  explicit ZeroNoise(int T): T_(T) { }
  ad::Var predict(ad::Tape &tape, const GraphBatch &, ad::Var z,
                  const ad::Tensor &, std::span<const int>,
                  bool) const override {
    return tape.constant(ad::Tensor(z.rows(), z.cols(), 0.0));
  }
  ParameterSet &params() override { return p_; }
  const ParameterSet &params() const override { return p_; }
  int dim() const override { return 3; }
  int num_steps() const override { return T_; }
  bool equivariant() const override { return true; }

private:
  int T_;
  ParameterSet p_;
};

TEST(Schedule, EndpointsAndMonotone) {
  for (int T: { 1, 20, 1000 }) {
    const NoiseSchedule s = polynomial_schedule(T, 1e-5, 2.0);
    ASSERT_EQ(s.alpha2.size(), static_cast<std::size_t>(T + 1));
    EXPECT_EQ(s.alpha2[0], 1.0 - 1e-5);
    EXPECT_EQ(s.alpha2[T], 1e-5);
    for (int t = 0; t <= T; ++t) {
      EXPECT_NEAR(s.alpha[t] * s.alpha[t] + s.sigma[t] * s.sigma[t], 1.0,
                  1e-12);
      if (t > 0) {
        EXPECT_LT(s.alpha[t], s.alpha[t - 1]);
        EXPECT_LT(s.snr(t), s.snr(t - 1));
      }
    }
  }
  EXPECT_THROW(polynomial_schedule(0, 1e-5, 2.0), ContractViolation);
  EXPECT_THROW(polynomial_schedule(10, 0.0, 2.0), ContractViolation);
}

TEST(ForwardNoise, Example) {
  const NoiseSchedule s = polynomial_schedule(10, 1e-5, 2.0);
  PointCloud x;
  x.coords = Coords(2, 3);
  x.coords << 1, 0, 0, -1, 0, 0;
  x.features = Coords(2, 0);
  Coords eps(2, 3);
  eps << 0, 1, 0, 0, -1, 0;
  const PointCloud z = forward_noise(s, x, 5, eps);
  EXPECT_NEAR(z.coords(0, 0), s.alpha[5], 1e-15);
  EXPECT_NEAR(z.coords(0, 1), s.sigma[5], 1e-15);
  EXPECT_NEAR(z.coords(1, 1), -s.sigma[5], 1e-15);
  EXPECT_THROW(forward_noise(s, x, 11, eps), ContractViolation);
}

// Projected noise has per-coordinate variance 1 - 1/n and zero CoM.
TEST(ForwardNoise, MonteCarloVariance) {
  const NoiseSchedule s = polynomial_schedule(10, 1e-5, 2.0);
  Rng rng = make_stream(1, "mc");
  const std::size_t n = 4;
  PointCloud zero;
  zero.coords = Coords::Zero(n, 3);
  zero.features = Coords(n, 0);
  const int draws = 100000;
  double acc = 0.0, com = 0.0;
  for (int i = 0; i < draws; ++i) {
    const Coords eps = sample_noise(rng, n, 3, true);
    com = std::max(com, eps.colwise().mean().cwiseAbs().maxCoeff());
    acc += forward_noise(s, zero, 4, eps).coords.squaredNorm();
  }
  const double var = acc / (draws * n * 3.0);
  const double want = s.sigma[4] * s.sigma[4] * (1.0 - 1.0 / n);
  EXPECT_NEAR(var / want, 1.0, 0.02);
  EXPECT_LT(com, 1e-12);
}

LossDraws draws_for(Rng &rng, std::span<const PointCloud> clouds, int T) {
  LossDraws d;
  std::uniform_int_distribution<int> u(0, T);
  for (const PointCloud &c: clouds) {
    d.steps.push_back(u(rng));
    d.noise.push_back(sample_noise(rng, c.size(), 3, true));
  }
  return d;
}

std::vector<const PointCloud *> ptrs(std::span<const PointCloud> clouds) {
  std::vector<const PointCloud *> out;
  for (const PointCloud &c: clouds)
    out.push_back(&c);
  return out;
}

// At the optimum the loss vanishes and so does every gradient.
TEST(Loss, ExactPredictorHasZeroLossAndGradient) {
  Rng rng = make_stream(2, "stub");
  const NoiseSchedule s = polynomial_schedule(kT, 1e-5, 2.0);
  const Canonicalizer can = Canonicalizer::learned(small_canonicalizer(rng));
  const std::vector<PointCloud> clouds = synthetic(6, 3);
  std::vector<Coords> clean;
  for (const PointCloud &c: clouds)
    clean.push_back(canonicalize(can, c).x_canon.coords);
  const ExactNoise stub(s, clean);
  const LossDraws d = draws_for(rng, clouds, kT);
  const auto p = ptrs(clouds);
  ad::Tape tape(true);
  ad::Var loss = denoising_loss(tape, s, can, stub, p, d, true, true);
  EXPECT_LT(loss.value().item(), 1e-16);
  const ad::GradMap g = tape.backward(loss);
  double worst = 0.0;
  for (std::size_t i = 0; i < can.net().params().size(); ++i)
    worst = std::max(worst, max_abs(g.get(can.net().params()[i])));
  EXPECT_LT(worst, 1e-6);
}

// Per-sample loss is rotation invariant for every non-identity kind.
TEST(Loss, PipelineInvariantUnderRotation) {
  Rng rng = make_stream(3, "inv");
  const NoiseSchedule s = polynomial_schedule(kT, 1e-5, 2.0);
  const DenoiserNet net = small_denoiser(rng);
  const std::vector<PointCloud> clouds = synthetic(8, 4);
  const std::vector<Canonicalizer> kinds = {
    Canonicalizer::learned(small_canonicalizer(rng)),
    Canonicalizer::frozen(small_canonicalizer(rng)), Canonicalizer::pca(3)
  };
  for (const Canonicalizer &can: kinds) {
    double worst = 0.0;
    for (int trial = 0; trial < 10; ++trial) {
      std::vector<PointCloud> moved;
      for (const PointCloud &c: clouds) {
        PointCloud m = apply(random_rotation(rng, 3), c);
        m.coords.rowwise() += Eigen::RowVector3d(0.5, -2.0, 1.0);
        moved.push_back(m);
      }
      const LossDraws d = draws_for(rng, clouds, kT);
      ad::Tape t1(false), t2(false);
      const double a =
          denoising_loss(t1, s, can, net, ptrs(clouds), d, true, false)
              .value()
              .item();
      const double b =
          denoising_loss(t2, s, can, net, ptrs(moved), d, true, false)
              .value()
              .item();
      worst = std::max(worst, std::abs(a - b));
    }
    EXPECT_LT(worst, 1e-8) << to_string(can.kind());
  }
}

TEST(Loss, GradientsMatchFiniteDifferences) {
  Rng rng = make_stream(4, "fd");
  const NoiseSchedule s = polynomial_schedule(kT, 1e-5, 2.0);
  DenoiserNet net = small_denoiser(rng);
  Canonicalizer can = Canonicalizer::learned(small_canonicalizer(rng));
  const std::vector<PointCloud> clouds = synthetic(3, 5);
  const LossDraws d = draws_for(rng, clouds, kT);
  const auto p = ptrs(clouds);
  std::vector<ad::Tensor *> params = net.params().pointers();
  for (ad::Tensor *h: can.net().params().pointers())
    params.push_back(h);
  const auto r = testing_util::check_gradients(
      params,
      [&](ad::Tape &tape) -> ad::Var {
        return denoising_loss(tape, s, can, net, p, d, true,
                              tape.grad_enabled(), nullptr, 0.5);
      },
      rng, 3);
  EXPECT_LT(r.rel_err, 1e-6);
  EXPECT_GT(r.max_abs_grad, 0.0);
}

// The canonicalizer receives gradient through the frame in almost every
// batch.
TEST(Loss, CanonicalizerGradientFlows) {
  Rng rng = make_stream(5, "flow");
  const NoiseSchedule s = polynomial_schedule(kT, 1e-5, 2.0);
  const DenoiserNet net = small_denoiser(rng);
  const Canonicalizer can = Canonicalizer::learned(small_canonicalizer(rng));
  const std::vector<PointCloud> data = synthetic(200, 6);
  int nonzero = 0;
  for (int b = 0; b < 100; ++b) {
    const BatchDraw bd = draw_batch(rng, s, data, 4, true);
    std::vector<const PointCloud *> p;
    for (std::size_t i: bd.indices)
      p.push_back(&data[i]);
    ad::Tape tape(true);
    const ad::GradMap g = tape.backward(
        denoising_loss(tape, s, can, net, p, bd.draws, true, true));
    double norm = 0.0;
    for (std::size_t i = 0; i < can.net().params().size(); ++i)
      norm += max_abs(g.get(can.net().params()[i]));
    nonzero += norm > 0.0;
  }
  EXPECT_GE(nonzero, 99);
}

DiffusionConfig smoke_config() {
  DiffusionConfig c;
  c.T = kT;
  c.batch_size = 8;
  c.steps = 200;
  c.seed = 11;
  c.adam.lr = 2e-3;
  return c;
}

double mean_of(std::span<const double> v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / v.size();
}

TEST(Training, SmokeRunReducesLoss) {
  Rng rng = make_stream(6, "smoke");
  DenoiserNet net = small_denoiser(rng);
  Canonicalizer can = Canonicalizer::learned(small_canonicalizer(rng));
  const std::vector<PointCloud> data = synthetic(64, 7);
  const TrainResult r = train(smoke_config(), can, net, data);
  ASSERT_EQ(r.losses.size(), 200u);
  const std::span<const double> l(r.losses);
  EXPECT_LT(mean_of(l.last(50)), mean_of(l.first(50)));
  for (double v: r.losses)
    EXPECT_TRUE(std::isfinite(v));
}

TEST(Training, DeterministicAndResumable) {
  const std::vector<PointCloud> data = synthetic(32, 8);
  DiffusionConfig c = smoke_config();
  c.steps = 30;
  auto fresh = [](std::uint64_t s) {
    Rng rng = make_stream(s, "init");
    return std::pair{ small_denoiser(rng),
                      Canonicalizer::learned(small_canonicalizer(rng)) };
  };
  auto [n1, c1] = fresh(1);
  auto [n2, c2] = fresh(1);
  const TrainResult a = train(c, c1, n1, data);
  const TrainResult b = train(c, c2, n2, data);
  EXPECT_EQ(a.losses, b.losses);

  // Stop after 12 steps, carry the state over and finish.
  auto [n3, c3] = fresh(1);
  std::vector<double> losses;
  std::vector<ad::Tensor> saved_params;
  AdamState adam;
  EmaState ema;
  {
    Trainer t(c, c3, n3, data);
    for (int i = 0; i < 12; ++i)
      losses.push_back(t.step());
    adam = t.adam();
    ema = t.ema();
  }
  auto [n4, c4] = fresh(99);
  {
    Trainer t(c, c4, n4, data);
    std::vector<ad::Tensor *> dst = t.trainable();
    Trainer src(c, c3, n3, data);
    std::vector<ad::Tensor *> from = src.trainable();
    for (std::size_t i = 0; i < dst.size(); ++i)
      *dst[i] = *from[i];
    t.restore(12, 0, adam, ema);
    for (int i = 12; i < 30; ++i)
      losses.push_back(t.step());
    EXPECT_EQ(t.ema().shadow.size(), ema.shadow.size());
  }
  EXPECT_EQ(losses, a.losses);
}

TEST(Training, DegenerateCloudsAreSkipped) {
  PointCloud line;
  line.coords = Coords(3, 3);
  line.coords << 0, 0, 0, 1, 1, 1, 2, 2, 2;
  line.labels = { "C", "C", "C" };
  line.features = one_hot_features(line.labels);
  const std::vector<PointCloud> data = { line };
  Rng rng = make_stream(7, "deg");
  DenoiserNet net = small_denoiser(rng);
  Canonicalizer can = Canonicalizer::pca(3);
  DiffusionConfig c = smoke_config();
  c.steps = 2;
  c.batch_size = 3;
  const TrainResult r = train(c, can, net, data);
  EXPECT_EQ(r.skipped, 6u);
  EXPECT_TRUE(std::isnan(r.losses[0]));
}

TEST(Training, ConfigValidated) {
  Rng rng = make_stream(8, "cfg");
  DenoiserNet net = small_denoiser(rng);
  Canonicalizer can = Canonicalizer::identity(3);
  const std::vector<PointCloud> data = synthetic(4, 1);
  DiffusionConfig c = smoke_config();
  c.batch_size = 0;
  EXPECT_THROW(Trainer(c, can, net, data), ContractViolation);
  c = smoke_config();
  c.T = 50;
  EXPECT_THROW(Trainer(c, can, net, data), ContractViolation);
  c = smoke_config();
  EXPECT_THROW(Trainer(c, can, net, {}), ContractViolation);
}

// With zero predicted noise each reverse mean is z / a_ts, so the chain
// telescopes to z_T alpha_0 / alpha_T.
TEST(Sampler, ZeroPredictorMatchesClosedForm) {
  const NoiseSchedule s = polynomial_schedule(kT, 1e-5, 2.0);
  const ZeroNoise zero(kT);
  const Coords feats = Coords::Zero(5, 6);
  Rng a = make_stream(9, "zero"), b = make_stream(9, "zero");
  const PointCloud out = sample(s, zero, 5, feats, a, { true, true });
  const Coords zT = sample_noise(b, 5, 3, true);
  const Coords want = zT * (s.alpha[0] / s.alpha[kT]);
  EXPECT_LT(((out.coords - want).array() / want.array().abs().max(1.0))
                .abs()
                .maxCoeff(),
            1e-10);
}

TEST(Sampler, CentredAndChainIndependent) {
  Rng rng = make_stream(10, "samp");
  const NoiseSchedule s = polynomial_schedule(256, 1e-5, 2.0);
  const DenoiserNet net = small_denoiser(rng, 256);
  const std::vector<PointCloud> data = synthetic(6, 2);
  std::vector<SampleSpec> specs;
  for (const PointCloud &c: data)
    specs.push_back({ c.features, c.labels });
  const std::vector<PointCloud> all = sample_chains(s, net, specs, 5);
  for (const PointCloud &x: all)
    EXPECT_LT(x.coords.colwise().mean().cwiseAbs().maxCoeff(), 1e-8);
  // Regrouping chains leaves every sample unchanged.
  const std::vector<PointCloud> tail =
      sample_chains(s, net, std::span(specs).subspan(3), 5, {}, 3);
  for (std::size_t k = 0; k < 3; ++k)
    EXPECT_LT((tail[k].coords - all[3 + k].coords).cwiseAbs().maxCoeff(),
              1e-12);
  EXPECT_EQ(all[0].labels, data[0].labels);
}

// Exact variance of the sampler output for N(0, I) data under the
// Bayes-optimal denoiser: every reverse step is linear in z.
double oracle_sample_variance(const NoiseSchedule &s) {
  double v = 1.0;
  for (int t = s.T; t >= 1; --t) {
    const double a = s.alpha[t] / s.alpha[t - 1];
    const double s2 = s.sigma[t] * s.sigma[t]
                      - a * a * s.sigma[t - 1] * s.sigma[t - 1];
    const double k = 1.0 / a - s2 / a;
    v = k * k * v
        + (t > 1 ? s2 * s.sigma[t - 1] * s.sigma[t - 1]
                       / (s.sigma[t] * s.sigma[t])
                 : 0.0);
  }
  return v;
}

TEST(Sampler, GaussianOracleVariance) {
  const int T = 256;
  const NoiseSchedule s = polynomial_schedule(T, 1e-5, 2.0);
  const GaussianOracleDenoiser oracle(s, 3);
  const std::size_t n = 4;
  std::vector<SampleSpec> specs(10000, SampleSpec{ Coords::Zero(n, 1), {} });
  const std::vector<PointCloud> out = sample_chains(s, oracle, specs, 3);
  double acc = 0.0;
  for (const PointCloud &x: out)
    acc += x.coords.squaredNorm();
  const double var = acc / (specs.size() * n * 3.0) / (1.0 - 1.0 / n);
  EXPECT_NEAR(var, 1.0, 0.03);
  EXPECT_NEAR(var / oracle_sample_variance(s), 1.0, 0.02);
}

// Expected discrete bound for N(0, I) data under the Bayes-optimal
// denoiser, per effective dimension: E|eps - sigma_t z_t|^2 = alpha_t^2.
double oracle_bound_per_dim(const NoiseSchedule &s) {
  const int T = s.T;
  const double sT2 = s.sigma[T] * s.sigma[T];
  double b = 0.5 * (s.alpha2[T] + sT2 - 1.0 - std::log(sT2));
  for (int t = 1; t <= T; ++t)
    b += 0.5 * (s.snr(t - 1) / s.snr(t) - 1.0) * s.alpha2[t];
  return b + 0.5 * s.alpha2[0] + std::log(s.sigma[0] / s.alpha[0])
         + 0.5 * std::log(2.0 * std::numbers::pi);
}

TEST(Nll, GaussianOracleMatchesAnalyticBound) {
  const NoiseSchedule s = polynomial_schedule(256, 1e-5, 2.0);
  const GaussianOracleDenoiser oracle(s, 3);
  const Canonicalizer can = Canonicalizer::identity(3);
  Rng rng = make_stream(11, "nll");
  double acc = 0.0;
  const int m = 400;
  for (int i = 0; i < m; ++i) {
    PointCloud x;
    x.coords = sample_noise(rng, 5, 3, true);
    x.features = Coords::Zero(5, 1);
    acc += estimate_nll(s, oracle, can, x, rng);
  }
  EXPECT_NEAR(acc / m, oracle_bound_per_dim(s), 0.05);
  // The bound sits above the entropy 0.5 log(2 pi e) and closes on it as T
  // grows.
  const double entropy =
      0.5 * std::log(2.0 * std::numbers::pi * std::numbers::e);
  double prev = oracle_bound_per_dim(s);
  EXPECT_GT(prev, entropy);
  for (int T: { 1024, 4096 }) {
    const double b = oracle_bound_per_dim(polynomial_schedule(T, 1e-5, 2.0));
    EXPECT_LT(b, prev);
    EXPECT_GT(b, entropy);
    prev = b;
  }
}

TEST(Nll, ExactPredictorLeavesPriorAndDecoder) {
  const NoiseSchedule s = polynomial_schedule(kT, 1e-5, 2.0);
  const std::vector<PointCloud> data = synthetic(1, 12);
  const Canonicalizer can = Canonicalizer::pca(3);
  const PointCloud c = canonicalize(can, data[0]).x_canon;
  const ExactNoise stub(s, { c.coords });
  Rng rng = make_stream(12, "nll");
  const NllTerms t = nll_terms(s, stub, can, data[0], rng);
  const int d = static_cast<int>((c.size() - 1) * 3);
  EXPECT_EQ(t.dof, d);
  EXPECT_LT(std::abs(t.diffusion), 1e-8);
  const double sT2 = s.sigma[kT] * s.sigma[kT];
  EXPECT_NEAR(t.prior,
              0.5 * (s.alpha2[kT] * c.coords.squaredNorm()
                     + d * (sT2 - 1.0 - std::log(sT2))),
              1e-12);
  EXPECT_NEAR(t.reconstruction,
              d * (std::log(s.sigma[0] / s.alpha[0])
                   + 0.5 * std::log(2.0 * std::numbers::pi)),
              1e-6);
  EXPECT_NEAR(t.total, t.prior + t.diffusion + t.reconstruction, 1e-12);
}

TEST(Nll, RotationInvariantWithSharedDraws) {
  Rng rng = make_stream(13, "nllrot");
  const NoiseSchedule s = polynomial_schedule(kT, 1e-5, 2.0);
  const DenoiserNet net = small_denoiser(rng);
  const Canonicalizer can = Canonicalizer::learned(small_canonicalizer(rng));
  const std::vector<PointCloud> data = synthetic(10, 13);
  for (const PointCloud &x: data) {
    const PointCloud g = apply(random_rotation(rng, 3), x);
    Rng r1 = make_stream(1, "draws"), r2 = make_stream(1, "draws");
    const double a = estimate_nll(s, net, can, x, r1);
    const double b = estimate_nll(s, net, can, g, r2);
    EXPECT_LT(std::abs(a - b), 1e-4);
  }
}

TEST(Nll, RejectsMismatchedNetwork) {
  Rng rng = make_stream(14, "bad");
  const NoiseSchedule s = polynomial_schedule(kT + 1, 1e-5, 2.0);
  const DenoiserNet net = small_denoiser(rng);
  const std::vector<PointCloud> data = synthetic(1, 1);
  EXPECT_THROW(estimate_nll(s, net, Canonicalizer::pca(3), data[0], rng),
               ContractViolation);
}

}  // namespace
}  // namespace canondiff
