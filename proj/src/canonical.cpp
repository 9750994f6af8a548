//
// Project canondiff - Copyright 2026 The canondiff Authors.
// SPDX-License-Identifier: Apache-2.0
//

#include "canondiff/canonical.h"

#include <algorithm>
#include <cmath>

#include <Eigen/Eigenvalues>

#include "canondiff/errors.h"

namespace canondiff {

std::string_view to_string(CanonKind kind) {
  switch (kind) {
  case CanonKind::kLearned:
    return "learned";
  case CanonKind::kFrozen:
    return "frozen";
  case CanonKind::kPca:
    return "pca";
  case CanonKind::kIdentity:
    return "identity";
  }
  return "unknown";
}

CanonKind canon_kind_from_string(std::string_view name) {
  if (name == "learned")
    return CanonKind::kLearned;
  if (name == "frozen")
    return CanonKind::kFrozen;
  if (name == "pca")
    return CanonKind::kPca;
  if (name == "identity")
    return CanonKind::kIdentity;
  throw ContractViolation("unknown canonicalizer kind '" + std::string(name)
                          + "'");
}

Canonicalizer Canonicalizer::identity(int dim) {
  return Canonicalizer(CanonKind::kIdentity, dim, nullptr);
}

Canonicalizer Canonicalizer::pca(int dim) {
  return Canonicalizer(CanonKind::kPca, dim, nullptr);
}

Canonicalizer Canonicalizer::learned(CanonicalizerNet net) {
  const int dim = net.config().dim;
  return Canonicalizer(CanonKind::kLearned, dim,
                       std::make_shared<CanonicalizerNet>(std::move(net)));
}

Canonicalizer Canonicalizer::frozen(CanonicalizerNet net) {
  const int dim = net.config().dim;
  return Canonicalizer(CanonKind::kFrozen, dim,
                       std::make_shared<CanonicalizerNet>(std::move(net)));
}

const CanonicalizerNet &Canonicalizer::net() const {
  if (!net_)
    throw ContractViolation("canonicalizer kind has no network");
  return *net_;
}

CanonicalizerNet &Canonicalizer::net() {
  if (!net_)
    throw ContractViolation("canonicalizer kind has no network");
  return *net_;
}

RotationMatrix Canonicalizer::frame(const PointCloud &centered) const {
  if (centered.dim() != dim_)
    throw ContractViolation("cloud dimension differs from the canonicalizer's");
  switch (kind_) {
  case CanonKind::kIdentity:
    return RotationMatrix::identity(dim_);
  case CanonKind::kPca:
    return pca_frame(centered);
  case CanonKind::kLearned:
  case CanonKind::kFrozen: {
    std::vector<Eigen::VectorXd> v = canonicalizer_forward(*net_, centered);
    if (dim_ == 2)
      return gram_schmidt_rotation(v[0], std::nullopt);
    return gram_schmidt_rotation(v[0], v[1]);
  }
  }
  throw ContractViolation("unknown canonicalizer kind");
}

CanonicalizedSample canonicalize(const Canonicalizer &can,
                                 const PointCloud &x) {
  validate(x);
  auto [centered, translation] = remove_com(x);
  RotationMatrix r = can.frame(centered);
  PointCloud canon = apply(r.inverse(), centered);
  return { std::move(canon), std::move(r), std::move(translation) };
}

RotationMatrix pca_frame(const PointCloud &centered) {
  const int dim = centered.dim();
  const Eigen::MatrixXd x = centered.coords;
  const Eigen::MatrixXd cov =
      x.transpose() * x / static_cast<double>(centered.size());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  if (eig.info() != Eigen::Success)
    throw DegenerateSpectrum("covariance eigendecomposition failed");

  // Ascending from Eigen; we want descending.
  const Eigen::VectorXd vals = eig.eigenvalues().reverse();
  Eigen::MatrixXd vecs = eig.eigenvectors().rowwise().reverse();
  for (int i = 0; i + 1 < dim; ++i) {
    if (vals(i) - vals(i + 1) < 1e-8)
      throw DegenerateSpectrum("covariance eigenvalues are not distinct");
  }

  for (int k = 0; k < dim; ++k) {
    const Eigen::VectorXd proj = x * vecs.col(k);
    const double skew = proj.array().cube().sum();
    const double scale = proj.array().abs().cube().sum();
    double sign = 1.0;
    if (std::abs(skew) > 1e-12 * (scale + 1e-300)) {
      sign = skew < 0.0 ? -1.0 : 1.0;
    } else {
      for (int j = 0; j < dim; ++j) {
        if (std::abs(vecs(j, k)) > 1e-12) {
          sign = vecs(j, k) < 0.0 ? -1.0 : 1.0;
          break;
        }
      }
    }
    vecs.col(k) *= sign;
  }
  if (vecs.determinant() < 0.0)
    vecs.col(dim - 1) *= -1.0;
  return RotationMatrix::from_matrix(vecs, 1e-9);
}

double invariance_error(const Canonicalizer &can, const PointCloud &x,
                        int n_trials, Rng &rng) {
  if (n_trials < 1)
    throw ContractViolation("invariance_error needs at least one trial");
  const Coords base = canonicalize(can, x).x_canon.coords;
  double worst = 0.0;
  for (int i = 0; i < n_trials; ++i) {
    const RotationMatrix g = random_rotation(rng, x.dim());
    const Coords moved = canonicalize(can, apply(g, x)).x_canon.coords;
    worst = std::max(worst, (moved - base).cwiseAbs().maxCoeff());
  }
  return worst;
}

namespace {

// Does R map the cloud onto itself, atom features included?
bool preserves(const Eigen::MatrixXd &r, const Coords &c, const Coords &f,
               double tol) {
  const Coords moved = c * r.transpose();
  for (Eigen::Index i = 0; i < c.rows(); ++i) {
    bool hit = false;
    for (Eigen::Index j = 0; j < c.rows() && !hit; ++j)
      hit = (moved.row(i) - c.row(j)).norm() <= tol && f.row(i) == f.row(j);
    if (!hit)
      return false;
  }
  return true;
}

Eigen::MatrixXd frame_of(const Eigen::VectorXd &a, const Eigen::VectorXd &b) {
  const Eigen::Vector3d e1 = a.normalized();
  const Eigen::Vector3d e2 = (b - b.dot(e1) * e1).normalized();
  Eigen::Matrix3d f;
  f << e1, e2, e1.cross(e2);
  return f;
}

}  // namespace

bool is_generic(const PointCloud &x) {
  if (x.size() < 2)
    return false;
  const Coords c = remove_com(x).first.coords;
  const Coords &f = x.features;
  const Eigen::Index n = c.rows();
  const int dim = x.dim();
  const Eigen::VectorXd norms = c.rowwise().norm();
  Eigen::Index ia = 0;
  norms.maxCoeff(&ia);
  const double scale = norms(ia);
  if (scale < 1e-8)
    return false;
  const double tol = 1e-6 * scale;

  if (dim == 2) {
    const double base = std::atan2(c(ia, 1), c(ia, 0));
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j == ia || std::abs(norms(j) - scale) > tol || f.row(j) != f.row(ia))
        continue;
      const double th = std::atan2(c(j, 1), c(j, 0)) - base;
      Eigen::Matrix2d r;
      r << std::cos(th), -std::sin(th), std::sin(th), std::cos(th);
      if ((r - Eigen::Matrix2d::Identity()).norm() > 1e-9
          && preserves(r, c, f, tol))
        return false;
    }
    return true;
  }

  // Second reference atom: the one least parallel to the first.
  const Eigen::VectorXd a = c.row(ia).transpose();
  Eigen::Index ib = 0;
  double best = -1.0;
  for (Eigen::Index j = 0; j < n; ++j) {
    const double cr = a.head<3>().cross(Eigen::Vector3d(c.row(j).transpose()))
                          .norm();
    if (cr > best) {
      best = cr;
      ib = j;
    }
  }
  // Collinear clouds are fixed by every rotation about their axis.
  if (best <= tol * scale)
    return false;
  const Eigen::VectorXd b = c.row(ib).transpose();
  const Eigen::MatrixXd fab = frame_of(a, b);
  // Any symmetry sends (a, b) to a pair with the same labels, norms and
  // angle, and is fixed by where that pair goes.
  for (Eigen::Index i = 0; i < n; ++i) {
    if (std::abs(norms(i) - norms(ia)) > tol || f.row(i) != f.row(ia))
      continue;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j == i || std::abs(norms(j) - norms(ib)) > tol
          || f.row(j) != f.row(ib)
          || std::abs(c.row(i).dot(c.row(j)) - a.dot(b)) > tol * scale)
        continue;
      const Eigen::MatrixXd r =
          frame_of(c.row(i).transpose(), c.row(j).transpose())
          * fab.transpose();
      if ((r - Eigen::MatrixXd::Identity(3, 3)).norm() > 1e-9
          && preserves(r, c, f, tol))
        return false;
    }
  }
  return true;
}

ad::Var canonicalize_batch(const Canonicalizer &can, ad::Tape &tape,
                           const GraphBatch &batch, ad::Var x,
                           const ad::Tensor &features, bool track,
                           std::vector<std::size_t> *degenerate,
                           ad::Var *penalty) {
  using namespace ad;
  const auto dim = static_cast<std::size_t>(can.dim());
  if (x.cols() != dim)
    throw ContractViolation("coordinate width differs from the canonicalizer");
  if (degenerate != nullptr)
    degenerate->clear();

  Var centered = center_per_graph(x, batch);
  std::vector<Var> cols;

  switch (can.kind()) {
  case CanonKind::kIdentity:
    return centered;
  case CanonKind::kPca: {
    std::vector<Tensor> colv(dim, Tensor(batch.num_graphs, dim));
    const Tensor &cv = centered.value();
    for (std::size_t g = 0; g < batch.num_graphs; ++g) {
      PointCloud pc;
      pc.coords = Coords(batch.graph_size(g), dim);
      for (std::size_t i = 0; i < batch.graph_size(g); ++i)
        for (std::size_t k = 0; k < dim; ++k)
          pc.coords(i, k) = cv(batch.offsets[g] + i, k);
      Eigen::MatrixXd r = Eigen::MatrixXd::Identity(dim, dim);
      try {
        r = pca_frame(pc).matrix();
      } catch (const DegenerateSpectrum &) {
        if (degenerate != nullptr)
          degenerate->push_back(g);
      }
      for (std::size_t k = 0; k < dim; ++k)
        for (std::size_t j = 0; j < dim; ++j)
          colv[k](g, j) = r(j, k);
    }
    for (auto &c: colv)
      cols.push_back(tape.constant(std::move(c)));
    break;
  }
  case CanonKind::kLearned:
  case CanonKind::kFrozen: {
    std::vector<Var> v = can.net().forward(tape, batch, centered, features,
                                           track && can.trainable());
    Var v2 = v.size() > 1 ? v[1] : Var();
    if (degenerate != nullptr) {
      const std::vector<bool> bad = degenerate_frames(
          v[0].value(), v.size() > 1 ? &v[1].value() : nullptr);
      for (std::size_t g = 0; g < bad.size(); ++g)
        if (bad[g])
          degenerate->push_back(g);
    }
    if (penalty != nullptr)
      *penalty = frame_residual_penalty(v[0], v2, kPenaltyMargin);
    cols = gram_schmidt_columns(v[0], v2);
    break;
  }
  }

  // Row form of Rᵀ x: component k is x . (column k of R).
  std::vector<Var> comps;
  for (std::size_t k = 0; k < dim; ++k)
    comps.push_back(sum_axis1(centered * gather_rows(cols[k], batch.node_graph)));
  return concat_cols(comps);
}

}  // namespace canondiff
