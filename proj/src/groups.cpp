//
// Project canondiff - Copyright 2026 The canondiff Authors.
// SPDX-License-Identifier: Apache-2.0
//

#include "canondiff/groups.h"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/Geometry>
#include <Eigen/SVD>

#include "canondiff/errors.h"

namespace canondiff {

void validate(const PointCloud &x) {
  if (x.size() < 1)
    throw ContractViolation("point cloud has no atoms");
  if (x.dim() != 2 && x.dim() != 3)
    throw ContractViolation("point cloud dimension must be 2 or 3");
  if (!x.coords.allFinite())
    throw ContractViolation("point cloud has non-finite coordinates");
  if (x.features.rows() != x.coords.rows())
    throw ContractViolation("feature row count differs from atom count");
  if (!x.labels.empty() && x.labels.size() != x.size())
    throw ContractViolation("label count differs from atom count");
}

/* RotationMatrix */

RotationMatrix RotationMatrix::identity(int dim) {
  if (dim != 2 && dim != 3)
    throw ContractViolation("rotation dimension must be 2 or 3");
  return RotationMatrix(Eigen::MatrixXd::Identity(dim, dim));
}

RotationMatrix RotationMatrix::from_matrix(const Eigen::MatrixXd &m,
                                           double tol) {
  if (m.rows() != m.cols() || (m.rows() != 2 && m.rows() != 3))
    throw ContractViolation("rotation must be 2x2 or 3x3");
  RotationMatrix r(m);
  if (r.orthogonality_error() > tol)
    throw ContractViolation("matrix is not a proper rotation");
  return r;
}

double RotationMatrix::orthogonality_error() const {
  const auto eye = Eigen::MatrixXd::Identity(m_.rows(), m_.cols());
  const double ortho = (m_.transpose() * m_ - eye).cwiseAbs().maxCoeff();
  return std::max(ortho, std::abs(m_.determinant() - 1.0));
}

double RotationMatrix::angle() const {
  if (dim() == 2)
    return std::abs(std::atan2(m_(1, 0), m_(0, 0)));
  const double c = std::clamp((m_.trace() - 1.0) / 2.0, -1.0, 1.0);
  return std::acos(c);
}

/* Frames */

RotationMatrix gram_schmidt_rotation(const Eigen::VectorXd &v1,
                                     const std::optional<Eigen::VectorXd> &v2) {
  const auto dim = v1.size();
  if (dim != 2 && dim != 3)
    throw ContractViolation("frame vectors must have dimension 2 or 3");

  const double n1 = v1.norm();
  if (!(n1 >= kFrameEps))
    throw DegenerateFrame("first frame vector is (near) zero");
  const Eigen::VectorXd c1 = v1 / n1;

  Eigen::MatrixXd m(dim, dim);
  m.col(0) = c1;
  if (dim == 2) {
    m(0, 1) = -c1(1);
    m(1, 1) = c1(0);
    return RotationMatrix::from_matrix(m, 1e-9);
  }

  if (!v2.has_value() || v2->size() != 3)
    throw ContractViolation("3-d frames need a second vector");
  const Eigen::VectorXd u2 = *v2 - v2->dot(c1) * c1;
  const double n2 = u2.norm();
  if (!(n2 >= kFrameEps))
    throw DegenerateFrame("frame vectors are (near) collinear");
  const Eigen::Vector3d c2 = u2 / n2;
  const Eigen::Vector3d c1v = c1;
  m.col(1) = c2;
  m.col(2) = c1v.cross(c2);
  return RotationMatrix::from_matrix(m, 1e-9);
}

std::vector<ad::Var> gram_schmidt_columns(ad::Var v1, ad::Var v2) {
  using namespace ad;
  const std::size_t dim = v1.cols();
  Var c1 = v1 / row_norm(v1, kFrameSmoothing);
  if (dim == 2) {
    Var c2 = concat_cols({ neg(slice_cols(c1, 1, 2)), slice_cols(c1, 0, 1) });
    return { c1, c2 };
  }
  if (dim != 3 || !v2.valid() || v2.cols() != 3)
    throw ContractViolation("gram_schmidt_columns: bad frame vector shapes");

  Var proj = sum_axis1(v2 * c1);
  Var u2 = v2 - c1 * proj;
  Var c2 = u2 / row_norm(u2, kFrameSmoothing);

  Var ax = slice_cols(c1, 0, 1), ay = slice_cols(c1, 1, 2),
      az = slice_cols(c1, 2, 3);
  Var bx = slice_cols(c2, 0, 1), by = slice_cols(c2, 1, 2),
      bz = slice_cols(c2, 2, 3);
  Var c3 = concat_cols({ ay * bz - az * by, az * bx - ax * bz,
                         ax * by - ay * bx });
  return { c1, c2, c3 };
}

ad::Var frame_residual_penalty(ad::Var v1, ad::Var v2, double margin) {
  using namespace ad;
  Var r = v1;
  if (v1.cols() == 3) {
    if (!v2.valid() || v2.cols() != 3)
      throw ContractViolation("frame_residual_penalty: bad frame vector shapes");
    Var c1 = v1 / row_norm(v1, kFrameSmoothing);
    r = v2 - c1 * sum_axis1(v2 * c1);
  }
  Var gap = relu(add_scalar(neg(row_norm(r, kFrameEps)), margin));
  return mean(square(gap));
}

std::vector<bool> degenerate_frames(const ad::Tensor &v1,
                                    const ad::Tensor *v2) {
  std::vector<bool> out(v1.rows(), false);
  for (std::size_t b = 0; b < v1.rows(); ++b) {
    auto a = v1.row(b);
    double n1 = 0.0;
    for (double x: a)
      n1 += x * x;
    n1 = std::sqrt(n1);
    if (!(n1 >= kFrameEps)) {
      out[b] = true;
      continue;
    }
    if (v2 == nullptr || v1.cols() == 2)
      continue;
    auto c = v2->row(b);
    double d = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j)
      d += c[j] * a[j] / n1;
    double r2 = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) {
      const double u = c[j] - d * a[j] / n1;
      r2 += u * u;
    }
    if (!(std::sqrt(r2) >= kFrameEps))
      out[b] = true;
  }
  return out;
}

/* Actions */

PointCloud apply(const RotationMatrix &r, const PointCloud &x) {
  if (r.dim() != x.dim())
    throw ContractViolation("rotation and point cloud dimensions differ");
  PointCloud y = x;
  y.coords = x.coords * r.matrix().transpose();
  return y;
}

std::pair<PointCloud, Eigen::VectorXd> remove_com(const PointCloud &x) {
  if (x.size() < 1)
    throw ContractViolation("remove_com on an empty cloud");
  Eigen::VectorXd mean = x.coords.colwise().mean().transpose();
  PointCloud y = x;
  y.coords.rowwise() -= mean.transpose();
  return { std::move(y), std::move(mean) };
}

RotationMatrix random_rotation(Rng &rng, int dim) {
  if (dim == 2) {
    std::uniform_real_distribution<double> u(0.0, 2.0 * std::numbers::pi);
    const double a = u(rng);
    Eigen::MatrixXd m(2, 2);
    m << std::cos(a), -std::sin(a), std::sin(a), std::cos(a);
    return RotationMatrix::from_matrix(m);
  }
  if (dim != 3)
    throw ContractViolation("rotation dimension must be 2 or 3");
  std::normal_distribution<double> n;
  Eigen::Vector4d q;
  do {
    for (int i = 0; i < 4; ++i)
      q(i) = n(rng);
  } while (q.norm() < 1e-12);
  q.normalize();
  Eigen::Quaterniond quat(q(0), q(1), q(2), q(3));
  return RotationMatrix::from_matrix(quat.toRotationMatrix());
}

/* Alignment */

KabschResult kabsch_rmsd(const PointCloud &a, const PointCloud &b) {
  if (a.size() < 1 || b.size() < 1)
    throw ContractViolation("kabsch_rmsd needs at least one atom");
  if (a.size() != b.size() || a.dim() != b.dim())
    throw ContractViolation("kabsch_rmsd: clouds differ in size or dimension");

  const Coords ac = a.coords.rowwise() - a.coords.colwise().mean();
  const Coords bc = b.coords.rowwise() - b.coords.colwise().mean();
  const Eigen::MatrixXd h = ac.transpose() * bc;

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(h, Eigen::ComputeFullU
                                               | Eigen::ComputeFullV);
  const Eigen::MatrixXd &u = svd.matrixU();
  const Eigen::MatrixXd &v = svd.matrixV();
  Eigen::VectorXd d = Eigen::VectorXd::Ones(h.rows());
  if ((v * u.transpose()).determinant() < 0.0)
    d(d.size() - 1) = -1.0;
  const Eigen::MatrixXd r = v * d.asDiagonal() * u.transpose();

  const Coords aligned = ac * r.transpose();
  const double rmsd = rmsd_unaligned(aligned, bc);
  return { rmsd, RotationMatrix::from_matrix(r, 1e-8) };
}

double rmsd_unaligned(const Coords &a, const Coords &b) {
  if (a.rows() != b.rows() || a.cols() != b.cols() || a.rows() == 0)
    throw ContractViolation("rmsd: shape mismatch");
  return std::sqrt((a - b).rowwise().squaredNorm().mean());
}

}  // namespace canondiff
