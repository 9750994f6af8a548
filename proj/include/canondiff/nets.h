//
// Project canondiff - Copyright 2026 The canondiff Authors.
// SPDX-License-Identifier: Apache-2.0
//

#ifndef CANONDIFF_NETS_H_
#define CANONDIFF_NETS_H_

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "canondiff/autodiff.h"
#include "canondiff/graph.h"
#include "canondiff/groups.h"
#include "canondiff/rng.h"

namespace canondiff {

// Named parameter tensors of one network. Layers refer to entries by index,
// so copies of a network own independent parameters.
class ParameterSet {
public:
  std::size_t add(std::string name, ad::Tensor value);

  std::size_t size() const noexcept { return tensors_.size(); }
  const std::string &name(std::size_t i) const { return names_[i]; }
  ad::Tensor &operator[](std::size_t i) { return tensors_[i]; }
  const ad::Tensor &operator[](std::size_t i) const { return tensors_[i]; }

  // Total number of scalars.
  std::size_t count() const;

  std::vector<ad::Tensor *> pointers();
  std::vector<const ad::Tensor *> const_pointers() const;

private:
  std::vector<std::string> names_;
  std::vector<ad::Tensor> tensors_;
};

// Leaves for a network's parameters on one tape, created on first use.
// Untracked binding yields frozen leaves that never receive gradients.
class ParamBinder {
public:
  ParamBinder(ad::Tape &tape, const ParameterSet &params, bool track);
  ad::Var operator()(std::size_t index);

private:
  ad::Tape &tape_;
  const ParameterSet &params_;
  bool track_;
  std::vector<ad::Var> cache_;
};

struct Linear {
  std::size_t weight = 0;
  std::size_t bias = 0;
  std::size_t in = 0;
  std::size_t out = 0;
  bool has_bias = true;
};

Linear make_linear(ParameterSet &params, const std::string &name,
                   std::size_t in, std::size_t out, Rng &rng,
                   bool bias = true, double gain = 1.0);
ad::Var apply_linear(ParamBinder &bind, const Linear &layer, ad::Var x);

// Sinusoidal embedding of t/T: sin of dim/2 geometric frequencies followed by
// the matching cosines. Throws ContractViolation for odd dim or t outside
// [0, T].
Eigen::VectorXd time_embedding(int t, int T, int dim);

ad::Tensor to_tensor(const Coords &m);
Coords to_coords(const ad::Tensor &t);

/**
 * @brief Anything that predicts the noise of a batch of noised clouds.
 *
 * z is num_nodes x dim; steps holds one diffusion step per graph. The result
 * has z's shape.
 */
class NoisePredictor {
public:
  virtual ~NoisePredictor() = default;

  virtual ad::Var predict(ad::Tape &tape, const GraphBatch &batch, ad::Var z,
                          const ad::Tensor &features,
                          std::span<const int> steps, bool track) const = 0;

  virtual ParameterSet &params() = 0;
  virtual const ParameterSet &params() const = 0;
  virtual int dim() const = 0;
  virtual int num_steps() const = 0;
  virtual bool equivariant() const = 0;
};

struct DenoiserConfig {
  int dim = 3;
  int feature_dim = 6;
  int layers = 4;
  int hidden = 64;
  int time_embed_dim = 16;
  int num_steps = 256;
  bool zero_init_head = false;
};

// Non-equivariant message-passing denoiser. Raw coordinates enter the node
// features, which is what breaks rotation equivariance.
class DenoiserNet final: public NoisePredictor {
public:
  DenoiserNet(const DenoiserConfig &config, Rng &rng);

  ad::Var predict(ad::Tape &tape, const GraphBatch &batch, ad::Var z,
                  const ad::Tensor &features, std::span<const int> steps,
                  bool track) const override;

  ParameterSet &params() override { return params_; }
  const ParameterSet &params() const override { return params_; }
  int dim() const override { return config_.dim; }
  int num_steps() const override { return config_.num_steps; }
  bool equivariant() const override { return false; }
  const DenoiserConfig &config() const { return config_; }

private:
  struct Layer {
    Linear edge_dst, edge_src, edge_diff, edge_out;
    std::size_t edge_dist2 = 0;
    Linear node_h, node_agg, node_out;
  };

  DenoiserConfig config_;
  ParameterSet params_;
  Linear embed_;
  std::vector<Layer> layers_;
  Linear head_;
};

// Noise prediction for a single cloud at step t.
ad::Tensor denoiser_forward(const NoisePredictor &net, const PointCloud &z,
                            int t);

/* Equivariant stack shared by the canonicalizer and the EDM-style baseline */

struct EgnnLayer {
  Linear edge_dst, edge_src, edge_dist, edge_out;
  std::vector<Linear> coord_hidden;
  std::vector<Linear> coord_out;
  Linear node_h, node_agg, node_out;
};

struct EgnnStack {
  Linear embed;
  std::vector<EgnnLayer> layers;
  std::size_t channels = 1;
};

EgnnStack make_egnn(ParameterSet &params, const std::string &prefix,
                    std::size_t in_features, std::size_t hidden,
                    std::size_t layers, std::size_t channels, Rng &rng);

// Runs the stack on node inputs `h_in` with every coordinate channel
// initialised to x. Returns the final coordinate channels.
std::vector<ad::Var> egnn_forward(ParamBinder &bind, const EgnnStack &stack,
                                  const GraphBatch &batch, ad::Var x,
                                  ad::Var h_in);

struct CanonicalizerConfig {
  int dim = 3;
  int feature_dim = 6;
  int layers = 3;
  int hidden = 32;
  int channels = 2;
};

// Multi-channel equivariant network emitting one global vector per channel.
class CanonicalizerNet {
public:
  CanonicalizerNet(const CanonicalizerConfig &config, Rng &rng);

  // One num_graphs x dim Var per channel:
  // v_c = mean_i(x_i^c,final) - mean_i(x_i).
  std::vector<ad::Var> forward(ad::Tape &tape, const GraphBatch &batch,
                               ad::Var x, const ad::Tensor &features,
                               bool track) const;

  ParameterSet &params() { return params_; }
  const ParameterSet &params() const { return params_; }
  const CanonicalizerConfig &config() const { return config_; }

private:
  CanonicalizerConfig config_;
  ParameterSet params_;
  EgnnStack stack_;
};

// Frame vectors of a single cloud. Throws ContractViolation for n < 2.
std::vector<Eigen::VectorXd> canonicalizer_forward(const CanonicalizerNet &net,
                                                   const PointCloud &x);

struct EquivariantDenoiserConfig {
  int dim = 3;
  int feature_dim = 6;
  int layers = 4;
  int hidden = 64;
  int time_embed_dim = 16;
  int num_steps = 256;
};

// EGNN with one coordinate channel; predicts noise as the CoM-free final
// coordinate displacement.
class EquivariantDenoiser final: public NoisePredictor {
public:
  EquivariantDenoiser(const EquivariantDenoiserConfig &config, Rng &rng);

  ad::Var predict(ad::Tape &tape, const GraphBatch &batch, ad::Var z,
                  const ad::Tensor &features, std::span<const int> steps,
                  bool track) const override;

  ParameterSet &params() override { return params_; }
  const ParameterSet &params() const override { return params_; }
  int dim() const override { return config_.dim; }
  int num_steps() const override { return config_.num_steps; }
  bool equivariant() const override { return true; }
  const EquivariantDenoiserConfig &config() const { return config_; }

private:
  EquivariantDenoiserConfig config_;
  ParameterSet params_;
  EgnnStack stack_;
};

// Parameter count of an EquivariantDenoiser with the given config.
std::size_t equivariant_param_count(const EquivariantDenoiserConfig &config);

// Hidden width whose parameter count is closest to `target`.
int matched_hidden_width(EquivariantDenoiserConfig config, std::size_t target);

}  // namespace canondiff

#endif  // CANONDIFF_NETS_H_
