//
// Project canondiff - Copyright 2026 The canondiff Authors.
// SPDX-License-Identifier: Apache-2.0
//

#include "canondiff/nets.h"

#include <cmath>
#include <cstdlib>
#include <limits>

#include "canondiff/errors.h"

namespace canondiff {

/* Parameters */

std::size_t ParameterSet::add(std::string name, ad::Tensor value) {
  names_.push_back(std::move(name));
  tensors_.push_back(std::move(value));
  return tensors_.size() - 1;
}

std::size_t ParameterSet::count() const {
  std::size_t n = 0;
  for (const auto &t: tensors_)
    n += t.size();
  return n;
}

std::vector<ad::Tensor *> ParameterSet::pointers() {
  std::vector<ad::Tensor *> out;
  out.reserve(tensors_.size());
  for (auto &t: tensors_)
    out.push_back(&t);
  return out;
}

std::vector<const ad::Tensor *> ParameterSet::const_pointers() const {
  std::vector<const ad::Tensor *> out;
  out.reserve(tensors_.size());
  for (const auto &t: tensors_)
    out.push_back(&t);
  return out;
}

ParamBinder::ParamBinder(ad::Tape &tape, const ParameterSet &params,
                         bool track)
    : tape_(tape), params_(params), track_(track && tape.grad_enabled()),
      cache_(params.size()) { }

ad::Var ParamBinder::operator()(std::size_t index) {
  ad::Var &v = cache_.at(index);
  if (!v.valid())
    v = track_ ? tape_.param(params_[index]) : tape_.frozen(params_[index]);
  return v;
}

Linear make_linear(ParameterSet &params, const std::string &name,
                   std::size_t in, std::size_t out, Rng &rng, bool bias,
                   double gain) {
  const double bound = gain / std::sqrt(static_cast<double>(in));
  std::uniform_real_distribution<double> u(-bound, bound);
  Linear l;
  l.in = in;
  l.out = out;
  l.has_bias = bias;
  ad::Tensor w(in, out);
  for (double &x: w.values())
    x = u(rng);
  l.weight = params.add(name + ".weight", std::move(w));
  if (bias) {
    ad::Tensor b(1, out);
    for (double &x: b.values())
      x = u(rng);
    l.bias = params.add(name + ".bias", std::move(b));
  }
  return l;
}

ad::Var apply_linear(ParamBinder &bind, const Linear &layer, ad::Var x) {
  ad::Var y = ad::matmul(x, bind(layer.weight));
  return layer.has_bias ? y + bind(layer.bias) : y;
}

/* Conversions */

Eigen::VectorXd time_embedding(int t, int T, int dim) {
  if (dim <= 0 || dim % 2 != 0)
    throw ContractViolation("time embedding dimension must be even");
  if (T < 1 || t < 0 || t > T)
    throw ContractViolation("time step outside [0, T]");
  const int half = dim / 2;
  const double s = static_cast<double>(t) / static_cast<double>(T);
  Eigen::VectorXd out(dim);
  for (int k = 0; k < half; ++k) {
    const double freq = std::pow(1000.0, static_cast<double>(k) / half);
    out(k) = std::sin(freq * s);
    out(half + k) = std::cos(freq * s);
  }
  return out;
}

ad::Tensor to_tensor(const Coords &m) {
  ad::Tensor t(static_cast<std::size_t>(m.rows()),
               static_cast<std::size_t>(m.cols()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      t(r, c) = m(r, c);
  return t;
}

Coords to_coords(const ad::Tensor &t) {
  Coords m(t.rows(), t.cols());
  for (std::size_t r = 0; r < t.rows(); ++r)
    for (std::size_t c = 0; c < t.cols(); ++c)
      m(r, c) = t(r, c);
  return m;
}

namespace {

// d^2 / (1 + d^2) per edge. Raw d^2 lets an untrained net's noise estimate
// grow quadratically in |z|, which overflows within a few reverse steps.
ad::Var squashed_dist2(ad::Var diff) {
  ad::Var d2 = ad::sum_axis1(ad::square(diff));
  return d2 / ad::add_scalar(d2, 1.0);
}

ad::Tensor node_time_embedding(const GraphBatch &batch,
                               std::span<const int> steps, int T, int dim) {
  if (steps.size() != batch.num_graphs)
    throw ContractViolation("one diffusion step per graph required");
  ad::Tensor out(batch.num_nodes, dim);
  for (std::size_t g = 0; g < batch.num_graphs; ++g) {
    const Eigen::VectorXd e = time_embedding(steps[g], T, dim);
    for (std::size_t i = batch.offsets[g]; i < batch.offsets[g + 1]; ++i)
      for (int k = 0; k < dim; ++k)
        out(i, k) = e(k);
  }
  return out;
}

void check_inputs(const GraphBatch &batch, ad::Var z,
                  const ad::Tensor &features, int dim, int feature_dim) {
  if (z.rows() != batch.num_nodes || z.cols() != static_cast<std::size_t>(dim))
    throw ContractViolation("coordinate tensor does not match the batch");
  if (features.rows() != batch.num_nodes
      || features.cols() != static_cast<std::size_t>(feature_dim))
    throw ContractViolation("feature tensor does not match the network");
}

}  // namespace

/* DenoiserNet */

DenoiserNet::DenoiserNet(const DenoiserConfig &config, Rng &rng)
    : config_(config) {
  if (config.dim != 2 && config.dim != 3)
    throw ContractViolation("denoiser dimension must be 2 or 3");
  if (config.layers < 1 || config.hidden < 1 || config.num_steps < 1)
    throw ContractViolation("denoiser sizes must be positive");
  const auto h = static_cast<std::size_t>(config.hidden);
  const auto d = static_cast<std::size_t>(config.dim);
  embed_ = make_linear(params_, "embed",
                       config.feature_dim + d + config.time_embed_dim, h, rng);
  for (int l = 0; l < config.layers; ++l) {
    const std::string p = "layer" + std::to_string(l);
    Layer layer;
    layer.edge_dst = make_linear(params_, p + ".edge_dst", h, h, rng, false);
    layer.edge_src = make_linear(params_, p + ".edge_src", h, h, rng, false);
    layer.edge_diff = make_linear(params_, p + ".edge_diff", d, h, rng, true);
    {
      std::uniform_real_distribution<double> u(-1.0, 1.0);
      ad::Tensor w(1, h);
      for (double &x: w.values())
        x = u(rng);
      layer.edge_dist2 = params_.add(p + ".edge_dist2.weight", std::move(w));
    }
    layer.edge_out = make_linear(params_, p + ".edge_out", h, h, rng);
    layer.node_h = make_linear(params_, p + ".node_h", h, h, rng);
    layer.node_agg = make_linear(params_, p + ".node_agg", h, h, rng, false);
    layer.node_out = make_linear(params_, p + ".node_out", h, h, rng);
    layers_.push_back(layer);
  }
  head_ = make_linear(params_, "head", h, d, rng);
  if (config.zero_init_head) {
    params_[head_.weight].fill(0.0);
    params_[head_.bias].fill(0.0);
  }
}

ad::Var DenoiserNet::predict(ad::Tape &tape, const GraphBatch &batch,
                             ad::Var z, const ad::Tensor &features,
                             std::span<const int> steps, bool track) const {
  using namespace ad;
  check_inputs(batch, z, features, config_.dim, config_.feature_dim);
  ParamBinder bind(tape, params_, track);

  Var temb = tape.constant(node_time_embedding(batch, steps, config_.num_steps,
                                               config_.time_embed_dim));
  Var h = apply_linear(bind, embed_,
                       concat_cols({ tape.constant(features), z, temb }));

  Var diff = gather_rows(z, batch.edge_dst) - gather_rows(z, batch.edge_src);
  Var dist2 = squashed_dist2(diff);

  for (const Layer &layer: layers_) {
    Var pre = gather_rows(apply_linear(bind, layer.edge_dst, h), batch.edge_dst)
              + gather_rows(apply_linear(bind, layer.edge_src, h),
                            batch.edge_src)
              + apply_linear(bind, layer.edge_diff, diff)
              + dist2 * bind(layer.edge_dist2);
    Var m = silu(apply_linear(bind, layer.edge_out, silu(pre)));
    Var agg = scatter_add_rows(m, batch.edge_dst, batch.num_nodes);
    Var upd = apply_linear(bind, layer.node_h, h)
              + apply_linear(bind, layer.node_agg, agg);
    h = h + apply_linear(bind, layer.node_out, silu(upd));
  }
  return apply_linear(bind, head_, h);
}

ad::Tensor denoiser_forward(const NoisePredictor &net, const PointCloud &z,
                            int t) {
  validate(z);
  if (z.dim() != net.dim())
    throw ContractViolation("cloud dimension differs from the network's");
  if (t < 0 || t > net.num_steps())
    throw ContractViolation("diffusion step outside the schedule");
  const std::size_t sizes[] = { z.size() };
  GraphBatch batch = GraphBatch::fully_connected(sizes);
  ad::Tape tape(false);
  const int steps[] = { t };
  ad::Var out = net.predict(tape, batch, tape.constant(to_tensor(z.coords)),
                            to_tensor(z.features), steps, false);
  if (!out.value().all_finite())
    throw NumericFailure("denoiser produced non-finite output");
  return out.value();
}

/* EGNN stack */

EgnnStack make_egnn(ParameterSet &params, const std::string &prefix,
                    std::size_t in_features, std::size_t hidden,
                    std::size_t layers, std::size_t channels, Rng &rng) {
  EgnnStack s;
  s.channels = channels;
  s.embed = make_linear(params, prefix + ".embed", in_features, hidden, rng);
  for (std::size_t l = 0; l < layers; ++l) {
    const std::string p = prefix + ".layer" + std::to_string(l);
    EgnnLayer layer;
    layer.edge_dst = make_linear(params, p + ".edge_dst", hidden, hidden, rng,
                                 false);
    layer.edge_src = make_linear(params, p + ".edge_src", hidden, hidden, rng,
                                 false);
    layer.edge_dist = make_linear(params, p + ".edge_dist", channels, hidden,
                                  rng, true);
    layer.edge_out = make_linear(params, p + ".edge_out", hidden, hidden, rng);
    for (std::size_t c = 0; c < channels; ++c) {
      const std::string q = p + ".coord" + std::to_string(c);
      layer.coord_hidden.push_back(
          make_linear(params, q + ".hidden", hidden, hidden, rng));
      layer.coord_out.push_back(
          make_linear(params, q + ".out", hidden, 1, rng, false));
    }
    layer.node_h = make_linear(params, p + ".node_h", hidden, hidden, rng);
    layer.node_agg = make_linear(params, p + ".node_agg", hidden, hidden, rng,
                                 false);
    layer.node_out = make_linear(params, p + ".node_out", hidden, hidden, rng);
    s.layers.push_back(std::move(layer));
  }
  return s;
}

std::vector<ad::Var> egnn_forward(ParamBinder &bind, const EgnnStack &stack,
                                  const GraphBatch &batch, ad::Var x,
                                  ad::Var h_in) {
  using namespace ad;
  Var h = apply_linear(bind, stack.embed, h_in);
  std::vector<Var> xs(stack.channels, x);

  for (const EgnnLayer &layer: stack.layers) {
    std::vector<Var> diffs, dist2;
    for (const Var &xc: xs) {
      diffs.push_back(gather_rows(xc, batch.edge_dst)
                      - gather_rows(xc, batch.edge_src));
      dist2.push_back(squashed_dist2(diffs.back()));
    }
    Var pre = gather_rows(apply_linear(bind, layer.edge_dst, h), batch.edge_dst)
              + gather_rows(apply_linear(bind, layer.edge_src, h),
                            batch.edge_src)
              + apply_linear(bind, layer.edge_dist, concat_cols(dist2));
    Var m = silu(apply_linear(bind, layer.edge_out, silu(pre)));

    for (std::size_t c = 0; c < xs.size(); ++c) {
      Var coef = apply_linear(
          bind, layer.coord_out[c],
          silu(apply_linear(bind, layer.coord_hidden[c], m)));
      Var weight = coef / add_scalar(row_norm(diffs[c], 1e-12), 1.0);
      xs[c] = xs[c]
              + scatter_add_rows(diffs[c] * weight, batch.edge_dst,
                                 batch.num_nodes);
    }

    Var agg = scatter_add_rows(m, batch.edge_dst, batch.num_nodes);
    Var upd = apply_linear(bind, layer.node_h, h)
              + apply_linear(bind, layer.node_agg, agg);
    h = h + apply_linear(bind, layer.node_out, silu(upd));
  }
  return xs;
}

/* Canonicalizer */

CanonicalizerNet::CanonicalizerNet(const CanonicalizerConfig &config, Rng &rng)
    : config_(config) {
  if (config.dim != 2 && config.dim != 3)
    throw ContractViolation("canonicalizer dimension must be 2 or 3");
  if (config.channels < config.dim - 1)
    throw ContractViolation("canonicalizer needs at least dim-1 channels");
  if (config.layers < 1 || config.hidden < 1)
    throw ContractViolation("canonicalizer sizes must be positive");
  stack_ = make_egnn(params_, "canon", config.feature_dim, config.hidden,
                     config.layers, config.channels, rng);
}

std::vector<ad::Var> CanonicalizerNet::forward(ad::Tape &tape,
                                               const GraphBatch &batch,
                                               ad::Var x,
                                               const ad::Tensor &features,
                                               bool track) const {
  check_inputs(batch, x, features, config_.dim, config_.feature_dim);
  for (std::size_t g = 0; g < batch.num_graphs; ++g)
    if (batch.graph_size(g) < 2)
      throw ContractViolation("canonicalizer needs at least two atoms");
  ParamBinder bind(tape, params_, track);
  std::vector<ad::Var> xs =
      egnn_forward(bind, stack_, batch, x, tape.constant(features));
  ad::Var centroid = segment_mean(x, batch);
  std::vector<ad::Var> out;
  for (const ad::Var &xc: xs)
    out.push_back(segment_mean(xc, batch) - centroid);
  return out;
}

std::vector<Eigen::VectorXd> canonicalizer_forward(const CanonicalizerNet &net,
                                                   const PointCloud &x) {
  validate(x);
  if (x.size() < 2)
    throw ContractViolation("canonicalizer needs at least two atoms");
  const std::size_t sizes[] = { x.size() };
  GraphBatch batch = GraphBatch::fully_connected(sizes);
  ad::Tape tape(false);
  auto vs = net.forward(tape, batch, tape.constant(to_tensor(x.coords)),
                        to_tensor(x.features), false);
  std::vector<Eigen::VectorXd> out;
  for (const ad::Var &v: vs) {
    Eigen::VectorXd e(v.cols());
    for (std::size_t k = 0; k < v.cols(); ++k)
      e(k) = v.value()(0, k);
    out.push_back(std::move(e));
  }
  return out;
}

/* Equivariant denoiser */

EquivariantDenoiser::EquivariantDenoiser(
    const EquivariantDenoiserConfig &config, Rng &rng)
    : config_(config) {
  if (config.dim != 2 && config.dim != 3)
    throw ContractViolation("denoiser dimension must be 2 or 3");
  if (config.layers < 1 || config.hidden < 1 || config.num_steps < 1)
    throw ContractViolation("denoiser sizes must be positive");
  stack_ = make_egnn(params_, "edm", config.feature_dim + config.time_embed_dim,
                     config.hidden, config.layers, 1, rng);
}

ad::Var EquivariantDenoiser::predict(ad::Tape &tape, const GraphBatch &batch,
                                     ad::Var z, const ad::Tensor &features,
                                     std::span<const int> steps,
                                     bool track) const {
  check_inputs(batch, z, features, config_.dim, config_.feature_dim);
  ParamBinder bind(tape, params_, track);
  ad::Var temb = tape.constant(node_time_embedding(
      batch, steps, config_.num_steps, config_.time_embed_dim));
  ad::Var h_in = ad::concat_cols({ tape.constant(features), temb });
  std::vector<ad::Var> xs = egnn_forward(bind, stack_, batch, z, h_in);
  return center_per_graph(xs.front() - z, batch);
}

std::size_t equivariant_param_count(const EquivariantDenoiserConfig &config) {
  Rng rng(0);
  return EquivariantDenoiser(config, rng).params().count();
}

int matched_hidden_width(EquivariantDenoiserConfig config, std::size_t target) {
  int best = 1;
  std::size_t best_gap = std::numeric_limits<std::size_t>::max();
  for (int h = 1; h <= 512; ++h) {
    config.hidden = h;
    const std::size_t n = equivariant_param_count(config);
    const std::size_t gap = n > target ? n - target : target - n;
    if (gap < best_gap) {
      best_gap = gap;
      best = h;
    }
    if (n > target)
      break;
  }
  return best;
}

}  // namespace canondiff
