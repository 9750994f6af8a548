//
// Project canondiff - Copyright 2026 The canondiff Authors.
// SPDX-License-Identifier: Apache-2.0
//

#ifndef CANONDIFF_CANONICAL_H_
#define CANONDIFF_CANONICAL_H_

#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "canondiff/autodiff.h"
#include "canondiff/graph.h"
#include "canondiff/groups.h"
#include "canondiff/nets.h"
#include "canondiff/rng.h"

namespace canondiff {

enum class CanonKind { kLearned, kFrozen, kPca, kIdentity };

std::string_view to_string(CanonKind kind);
// Throws ContractViolation for an unknown name.
CanonKind canon_kind_from_string(std::string_view name);

/**
 * @brief Orbit representative map x -> h(x)^-1 x, after centering.
 *
 * learned and frozen kinds wrap a CanonicalizerNet; only learned is
 * trainable. pca uses the covariance frame. identity returns R = I and is
 * therefore not rotation invariant.
 */
class Canonicalizer {
public:
  static Canonicalizer identity(int dim);
  static Canonicalizer pca(int dim);
  static Canonicalizer learned(CanonicalizerNet net);
  static Canonicalizer frozen(CanonicalizerNet net);

  CanonKind kind() const noexcept { return kind_; }
  bool trainable() const noexcept { return kind_ == CanonKind::kLearned; }
  int dim() const noexcept { return dim_; }
  bool has_net() const noexcept { return net_ != nullptr; }
  const CanonicalizerNet &net() const;
  CanonicalizerNet &net();

  // Frame R of an already centered cloud. Throws DegenerateFrame or
  // DegenerateSpectrum.
  RotationMatrix frame(const PointCloud &centered) const;

private:
  Canonicalizer(CanonKind kind, int dim,
                std::shared_ptr<CanonicalizerNet> net)
      : kind_(kind), dim_(dim), net_(std::move(net)) { }

  CanonKind kind_;
  int dim_;
  std::shared_ptr<CanonicalizerNet> net_;
};

struct CanonicalizedSample {
  PointCloud x_canon;
  RotationMatrix rotation;
  Eigen::VectorXd translation;
};

// x_canon = Rᵀ (x - mean(x)); x == R x_canon + translation.
CanonicalizedSample canonicalize(const Canonicalizer &can, const PointCloud &x);

// Covariance eigenvectors by descending eigenvalue, each signed so that the
// third moment along it is non-negative, last column flipped for det +1.
// Throws DegenerateSpectrum when two eigenvalues are within 1e-8.
RotationMatrix pca_frame(const PointCloud &centered);

// max over n_trials random rotations g of |c(g x) - c(x)|_inf.
double invariance_error(const Canonicalizer &can, const PointCloud &x,
                        int n_trials, Rng &rng);

// True when no rotation other than the identity maps the centered cloud onto
// itself with matching features. Collinear clouds are never generic.
bool is_generic(const PointCloud &x);

/**
 * @brief Batched canonicalization on a tape.
 *
 * x holds the uncentered coordinates of every graph in `batch`. Returns the
 * canonical coordinates (num_nodes x dim), differentiable with respect to
 * the canonicalizer parameters when the kind is learned and `track` is set.
 * Graphs whose frame is degenerate are listed in `degenerate`; their rows are
 * still produced (with a smoothly floored frame) so the caller can drop them.
 * For network kinds, `penalty` receives frame_residual_penalty(v1, v2,
 * kPenaltyMargin); it is left untouched otherwise.
 */
ad::Var canonicalize_batch(const Canonicalizer &can, ad::Tape &tape,
                           const GraphBatch &batch, ad::Var x,
                           const ad::Tensor &features, bool track,
                           std::vector<std::size_t> *degenerate = nullptr,
                           ad::Var *penalty = nullptr);

// Residual norm below which the optional frame penalty is active.
inline constexpr double kPenaltyMargin = 1e-3;

}  // namespace canondiff

#endif  // CANONDIFF_CANONICAL_H_
