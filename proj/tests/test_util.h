//
// Project canondiff - Copyright 2026 The canondiff Authors.
// SPDX-License-Identifier: Apache-2.0
//

#ifndef CANONDIFF_TESTS_TEST_UTIL_H_
#define CANONDIFF_TESTS_TEST_UTIL_H_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "canondiff/autodiff.h"
#include "canondiff/groups.h"
#include "canondiff/rng.h"

namespace canondiff::testing_util {

struct GradCheck {
  double rel_err = 0.0;
  double max_abs_grad = 0.0;
  std::size_t checked = 0;
};

// Compares reverse-mode gradients of `build` with central differences on up
// to `per_tensor` randomly chosen coordinates of each parameter. `build` must
// register the parameters on the tape it is given (tape.param or a tracking
// ParamBinder). Error is max|ad - fd| / (max|ad| + 1e-8).
inline GradCheck check_gradients(std::span<ad::Tensor *const> params,
                                 const std::function<ad::Var(ad::Tape &)> &build,
                                 Rng &rng, std::size_t per_tensor = 6,
                                 double h = 1e-5) {
  ad::Tape tape(true);
  const ad::GradMap grads = tape.backward(build(tape));

  auto eval = [&] {
    ad::Tape t(false);
    return build(t).value().item();
  };

  double max_diff = 0.0, max_ad = 0.0;
  std::size_t checked = 0;
  for (ad::Tensor *p: params) {
    const ad::Tensor g = grads.get(*p);
    std::vector<std::size_t> idx(p->size());
    for (std::size_t i = 0; i < idx.size(); ++i)
      idx[i] = i;
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(std::min(per_tensor, idx.size()));
    for (std::size_t i: idx) {
      const double saved = p->data()[i];
      p->data()[i] = saved + h;
      const double up = eval();
      p->data()[i] = saved - h;
      const double down = eval();
      p->data()[i] = saved;
      const double fd = (up - down) / (2.0 * h);
      max_diff = std::max(max_diff, std::abs(fd - g.data()[i]));
      max_ad = std::max(max_ad, std::abs(g.data()[i]));
      ++checked;
    }
  }
  return { max_diff / (max_ad + 1e-8), max_ad, checked };
}

inline ad::Tensor random_tensor(std::size_t r, std::size_t c, Rng &rng,
                                double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  ad::Tensor t(r, c);
  for (double &v: t.values())
    v = n(rng);
  return t;
}

inline Coords random_coords(std::size_t n, int dim, Rng &rng,
                            double scale = 1.0) {
  std::normal_distribution<double> d(0.0, scale);
  Coords c(static_cast<Eigen::Index>(n), dim);
  for (Eigen::Index i = 0; i < c.rows(); ++i)
    for (int k = 0; k < dim; ++k)
      c(i, k) = d(rng);
  return c;
}

}  // namespace canondiff::testing_util

#endif  // CANONDIFF_TESTS_TEST_UTIL_H_
