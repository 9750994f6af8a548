//
// Project canondiff - Copyright 2026 The canondiff Authors.
// SPDX-License-Identifier: Apache-2.0
//

#ifndef CANONDIFF_GROUPS_H_
#define CANONDIFF_GROUPS_H_

#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "canondiff/autodiff.h"
#include "canondiff/rng.h"

namespace canondiff {

using Coords =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/**
 * @brief n atoms with coordinates and per-atom features.
 *
 * coords is n x dim (dim is 2 or 3), features is n x f. labels, when
 * present, holds one element symbol per atom. comment carries the free
 * comment line of XYZ files through a read/write cycle.
 */
struct PointCloud {
  Coords coords;
  Coords features;
  std::vector<std::string> labels;
  std::string comment;

  std::size_t size() const noexcept {
    return static_cast<std::size_t>(coords.rows());
  }
  int dim() const noexcept { return static_cast<int>(coords.cols()); }
};

// Checks the PointCloud invariants; throws ContractViolation.
void validate(const PointCloud &x);

// Proper rotation (orthogonal, det +1) in 2 or 3 dimensions.
class RotationMatrix {
public:
  static RotationMatrix identity(int dim);
  // Validates RᵀR = I and det R = +1 within `tol`.
  static RotationMatrix from_matrix(const Eigen::MatrixXd &m,
                                    double tol = 1e-10);

  const Eigen::MatrixXd &matrix() const noexcept { return m_; }
  int dim() const noexcept { return static_cast<int>(m_.rows()); }

  RotationMatrix inverse() const { return RotationMatrix(m_.transpose()); }
  RotationMatrix operator*(const RotationMatrix &o) const {
    return RotationMatrix(m_ * o.m_);
  }

  // Largest deviation of RᵀR from I and of det R from +1.
  double orthogonality_error() const;
  // Rotation angle in radians, in [0, pi].
  double angle() const;

private:
  explicit RotationMatrix(Eigen::MatrixXd m): m_(std::move(m)) { }
  Eigen::MatrixXd m_;
};

// Frame vectors with norm or residual below this are degenerate.
inline constexpr double kFrameEps = 1e-8;
// Smooth norm floor used on the tape. Well below kFrameEps so that any
// non-degenerate frame matches gram_schmidt_rotation to ~5e-9 relative.
inline constexpr double kFrameSmoothing = 1e-12;

// Column 1 = v1/|v1|; column 2 = normalised component of v2 orthogonal to it
// (dim 3) or the +90 degree rotation of column 1 (dim 2); column 3 = c1 x c2.
// Throws DegenerateFrame.
RotationMatrix gram_schmidt_rotation(const Eigen::VectorXd &v1,
                                     const std::optional<Eigen::VectorXd> &v2);

// Batched, differentiable form. v1 and v2 are B x dim (v2 ignored for
// dim 2). Returns the dim frame columns, each B x dim. Norms are floored
// smoothly at kFrameEps.
std::vector<ad::Var> gram_schmidt_columns(ad::Var v1, ad::Var v2);

// Mean over rows of max(0, margin - |r|)^2, where r is the part of v2
// orthogonal to v1 (dim 3) or v1 itself (dim 2). Keeps frames away from
// degeneracy when added to a loss.
ad::Var frame_residual_penalty(ad::Var v1, ad::Var v2, double margin);

// Degenerate-frame test applied row-wise to batched frame vectors.
std::vector<bool> degenerate_frames(const ad::Tensor &v1, const ad::Tensor *v2);

// coords' = coords Rᵀ; features untouched.
PointCloud apply(const RotationMatrix &r, const PointCloud &x);

// Translated copy with zero unweighted mean, and the removed mean.
std::pair<PointCloud, Eigen::VectorXd> remove_com(const PointCloud &x);

// Haar-uniform: uniform angle (dim 2), uniform unit quaternion (dim 3).
RotationMatrix random_rotation(Rng &rng, int dim);

struct KabschResult {
  double rmsd;
  // Optimal proper rotation taking centered a onto centered b.
  RotationMatrix rotation;
};

// Minimum RMSD over proper rotations after centering both clouds. Throws
// ContractViolation when sizes or dims differ or the clouds are empty.
KabschResult kabsch_rmsd(const PointCloud &a, const PointCloud &b);

// Root mean square distance between corresponding atoms, no alignment.
double rmsd_unaligned(const Coords &a, const Coords &b);

}  // namespace canondiff

#endif  // CANONDIFF_GROUPS_H_
