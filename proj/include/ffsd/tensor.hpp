// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace ffsd {

// Dense 4-D feature array in NCHW order, row-major, w fastest-varying.
// Element (i,j,y,x) lives at ((i*c + j)*h + y)*w + x. No strided views;
// every op produces a fresh contiguous tensor.
template <typename T>
struct Tensor {
  int n = 0, c = 0, h = 0, w = 0;
  std::vector<T> data;

  Tensor() = default;

  Tensor(int n_, int c_, int h_, int w_, T fill = T{})
      : n(n_), c(c_), h(h_), w(w_) {
    if (n < 1 || c < 1 || h < 1 || w < 1)
      throw std::invalid_argument("Tensor: all dimensions must be >= 1, got " +
                                  shape_str());
    data.assign(static_cast<std::size_t>(n) * c * h * w, fill);
  }

  static Tensor zeros_like(const Tensor& o) { return Tensor(o.n, o.c, o.h, o.w); }

  int count() const { return n * c * h * w; }

  int idx(int i, int j, int y, int x) const { return ((i * c + j) * h + y) * w + x; }

  T& at(int i, int j, int y, int x) { return data[static_cast<std::size_t>(idx(i, j, y, x))]; }
  const T& at(int i, int j, int y, int x) const {
    return data[static_cast<std::size_t>(idx(i, j, y, x))];
  }

  bool same_shape(const Tensor& o) const {
    return n == o.n && c == o.c && h == o.h && w == o.w;
  }

  std::string shape_str() const {
    return "(" + std::to_string(n) + "," + std::to_string(c) + "," +
           std::to_string(h) + "," + std::to_string(w) + ")";
  }

  T* ptr() { return data.data(); }
  const T* ptr() const { return data.data(); }

  // Pointer to the (i,j) plane, h*w contiguous scalars.
  T* plane(int i, int j) { return data.data() + static_cast<std::size_t>(i * c + j) * h * w; }
  const T* plane(int i, int j) const {
    return data.data() + static_cast<std::size_t>(i * c + j) * h * w;
  }

  void fill(T v) { std::fill(data.begin(), data.end(), v); }
};

// Learnable tensor plus its gradient buffer. Gradients are accumulated (+=),
// never assigned, so parameter sharing composes.
template <typename T>
struct Param {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;

  Param() = default;
  Param(std::string name_, Tensor<T> value_)
      : name(std::move(name_)), value(std::move(value_)), grad(Tensor<T>::zeros_like(value)) {}

  void zero_grad() { grad.fill(T{}); }
};

namespace detail {
template <typename T>
inline void require_same_nhw(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.n != b.n || a.h != b.h || a.w != b.w)
    throw std::invalid_argument(std::string(op) + ": n/h/w mismatch " + a.shape_str() +
                                " vs " + b.shape_str());
}
}  // namespace detail

// Stacks b's channels after a's. Inputs must agree on n, h, w.
template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_nhw(a, b, "concat_channels");
  Tensor<T> out(a.n, a.c + b.c, a.h, a.w);
  const int plane = a.h * a.w;
  for (int i = 0; i < a.n; ++i) {
    std::copy(a.plane(i, 0), a.plane(i, 0) + static_cast<std::size_t>(a.c) * plane,
              out.plane(i, 0));
    std::copy(b.plane(i, 0), b.plane(i, 0) + static_cast<std::size_t>(b.c) * plane,
              out.plane(i, a.c));
  }
  return out;
}

// Channels [c0, c1) of x as a fresh tensor.
template <typename T>
Tensor<T> slice_channels(const Tensor<T>& x, int c0, int c1) {
  if (c0 < 0 || c1 > x.c || c0 >= c1)
    throw std::invalid_argument("slice_channels: bad range [" + std::to_string(c0) + "," +
                                std::to_string(c1) + ") for c=" + std::to_string(x.c));
  Tensor<T> out(x.n, c1 - c0, x.h, x.w);
  const int plane = x.h * x.w;
  for (int i = 0; i < x.n; ++i)
    std::copy(x.plane(i, c0), x.plane(i, c0) + static_cast<std::size_t>(c1 - c0) * plane,
              out.plane(i, 0));
  return out;
}

template <typename T>
Tensor<T> eltwise_sum(const Tensor<T>& a, const Tensor<T>& b) {
  if (!a.same_shape(b))
    throw std::invalid_argument("eltwise_sum: shape mismatch " + a.shape_str() + " vs " +
                                b.shape_str());
  Tensor<T> out = a;
  for (int i = 0; i < out.count(); ++i) out.data[i] += b.data[i];
  return out;
}

// Central-difference gradient of a scalar-valued function, one forward pair
// per element. This is the oracle every analytic backward in the repo is
// checked against; keep it boring.
template <typename T>
Tensor<T> finite_diff_grad(const std::function<T(const Tensor<T>&)>& f, const Tensor<T>& x,
                           T eps) {
  if (!(eps > T{})) throw std::invalid_argument("finite_diff_grad: eps must be > 0");
  Tensor<T> g = Tensor<T>::zeros_like(x);
  Tensor<T> probe = x;
  for (int i = 0; i < x.count(); ++i) {
    const T orig = probe.data[i];
    probe.data[i] = orig + eps;
    const T fp = f(probe);
    probe.data[i] = orig - eps;
    const T fm = f(probe);
    probe.data[i] = orig;
    g.data[i] = (fp - fm) / (T(2) * eps);
  }
  return g;
}

// max over elements of |a-b| / max(1, |a|, |b|).
template <typename T>
T max_relative_error(const Tensor<T>& a, const Tensor<T>& b) {
  if (!a.same_shape(b))
    throw std::invalid_argument("max_relative_error: shape mismatch");
  T worst = T{};
  for (int i = 0; i < a.count(); ++i) {
    const T denom = std::max(T(1), std::max(std::abs(a.data[i]), std::abs(b.data[i])));
    worst = std::max(worst, std::abs(a.data[i] - b.data[i]) / denom);
  }
  return worst;
}

}  // namespace ffsd
