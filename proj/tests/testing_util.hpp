// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>

#include "ffsd/rng.hpp"
#include "ffsd/tensor.hpp"

namespace ffsd::testing {

inline Tensor<double> random_tensor(int n, int c, int h, int w, Rng& rng, double lo = -1.0,
                                    double hi = 1.0) {
  Tensor<double> t(n, c, h, w);
  for (auto& v : t.data) v = rng.uniform_real(lo, hi);
  return t;
}

// Scalar projection loss = sum(weights .* out); its gradient w.r.t. out is
// exactly `weights`, which makes it the backward seed.
struct Projection {
  Tensor<double> weights;

  explicit Projection(const Tensor<double>& like, Rng& rng)
      : weights(random_tensor(like.n, like.c, like.h, like.w, rng)) {}

  double value(const Tensor<double>& out) const {
    double s = 0;
    for (int i = 0; i < out.count(); ++i) s += weights.data[i] * out.data[i];
    return s;
  }
};

// Max relative error between an analytic gradient for `target` and the
// central-difference estimate of loss() as target varies. loss() must read
// target's current contents on every call.
inline double fd_gradient_error(Tensor<double>& target, const Tensor<double>& analytic,
                                const std::function<double()>& loss, double eps = 1e-5) {
  auto f = [&](const Tensor<double>& probe) {
    Tensor<double> saved = target;
    target = probe;
    const double v = loss();
    target = saved;
    return v;
  };
  const Tensor<double> numeric = finite_diff_grad<double>(f, target, eps);
  return max_relative_error(numeric, analytic);
}

constexpr double kGradTol = 1e-6;

}  // namespace ffsd::testing
