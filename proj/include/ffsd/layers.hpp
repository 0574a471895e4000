// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "ffsd/kernels.hpp"
#include "ffsd/tape.hpp"
#include "ffsd/tensor.hpp"

namespace ffsd {

struct Conv2dSpec {
  int in_channels = 0, out_channels = 0;
  int kh = 3, kw = 3;
  int sh = 1, sw = 1;
  int ph = 0, pw = 0;
  int dh = 1, dw = 1;
  bool has_bias = true;

  int out_h(int h) const { return (h + 2 * ph - dh * (kh - 1) - 1) / sh + 1; }
  int out_w(int w) const { return (w + 2 * pw - dw * (kw - 1) - 1) / sw + 1; }

  void validate() const {
    if (in_channels < 1 || out_channels < 1 || kh < 1 || kw < 1 || sh < 1 || sw < 1 ||
        dh < 1 || dw < 1 || ph < 0 || pw < 0)
      throw std::invalid_argument("Conv2dSpec: illegal field");
  }
};

struct Deconv2dSpec {
  int in_channels = 0, out_channels = 0;
  int kh = 4, kw = 4;
  int sh = 2, sw = 2;
  int ph = 1, pw = 1;
  bool trainable = true;

  int out_h(int h) const { return (h - 1) * sh - 2 * ph + kh; }
  int out_w(int w) const { return (w - 1) * sw - 2 * pw + kw; }

  void validate() const {
    if (in_channels < 1 || out_channels < 1 || kh < 1 || kw < 1 || sh < 1 || sw < 1 ||
        ph < 0 || pw < 0)
      throw std::invalid_argument("Deconv2dSpec: illegal field");
  }
};

struct L2NormSpec {
  int channels = 0;
  double epsilon = 1e-10;
};

namespace detail {

template <typename T>
kernels::PatchGeom conv_geom(const Conv2dSpec& s, const Tensor<T>& x, int oh, int ow) {
  return {s.in_channels, s.kh, s.kw, s.sh, s.sw, s.ph, s.pw, s.dh, s.dw, oh, ow, x.h, x.w};
}

}  // namespace detail

// ---------------------------------------------------------------------------
// conv2d: cross-correlation with stride/pad/dilation, via im2col + GEMM.
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const Conv2dSpec& s, const Tensor<T>& weight,
                         const Tensor<T>* bias) {
  s.validate();
  if (x.c != s.in_channels)
    throw std::invalid_argument("conv2d: input has " + std::to_string(x.c) +
                                " channels, spec expects " + std::to_string(s.in_channels));
  if (weight.n != s.out_channels || weight.c != s.in_channels || weight.h != s.kh ||
      weight.w != s.kw)
    throw std::invalid_argument("conv2d: weight shape " + weight.shape_str() +
                                " does not match spec");
  if (bias && (!s.has_bias || bias->count() != s.out_channels))
    throw std::invalid_argument("conv2d: bad bias");
  const int oh = s.out_h(x.h), ow = s.out_w(x.w);
  if (oh < 1 || ow < 1)
    throw std::invalid_argument("conv2d: output dimension < 1 for input " + x.shape_str());

  Tensor<T> out(x.n, s.out_channels, oh, ow);
  const int K = s.in_channels * s.kh * s.kw;
  const int P = oh * ow;
  T* col = kernels::scratch<T>(static_cast<std::size_t>(K) * P, 0).data();
  const kernels::PatchGeom geom = detail::conv_geom(s, x, oh, ow);
  for (int i = 0; i < x.n; ++i) {
    kernels::im2col(geom, x.plane(i, 0), col);
    T* o = out.plane(i, 0);
    if (bias) {
      for (int co = 0; co < s.out_channels; ++co)
        std::fill(o + static_cast<std::size_t>(co) * P, o + static_cast<std::size_t>(co + 1) * P,
                  bias->data[co]);
    }
    kernels::gemm_nn(s.out_channels, P, K, weight.ptr(), col, o);
  }
  return out;
}

// Accumulates into dx / dweight / dbias (any may be null).
template <typename T>
void conv2d_backward(const Tensor<T>& x, const Conv2dSpec& s, const Tensor<T>& weight,
                     const Tensor<T>& dout, Tensor<T>* dx, Tensor<T>* dweight,
                     Tensor<T>* dbias) {
  const int oh = dout.h, ow = dout.w;
  const int K = s.in_channels * s.kh * s.kw;
  const int P = oh * ow;
  T* col = kernels::scratch<T>(static_cast<std::size_t>(K) * P, 0).data();
  T* dcol = kernels::scratch<T>(static_cast<std::size_t>(K) * P, 1).data();
  const kernels::PatchGeom geom = detail::conv_geom(s, x, oh, ow);
  for (int i = 0; i < x.n; ++i) {
    const T* dout_i = dout.plane(i, 0);
    if (dbias) {
      for (int co = 0; co < s.out_channels; ++co) {
        T acc{};
        const T* row = dout_i + static_cast<std::size_t>(co) * P;
        for (int p = 0; p < P; ++p) acc += row[p];
        dbias->data[co] += acc;
      }
    }
    if (dweight) {
      kernels::im2col(geom, x.plane(i, 0), col);
      kernels::gemm_nt(s.out_channels, K, P, dout_i, col, dweight->ptr());
    }
    if (dx) {
      std::fill(dcol, dcol + static_cast<std::size_t>(K) * P, T{});
      kernels::gemm_tn(K, P, s.out_channels, weight.ptr(), dout_i, dcol);
      kernels::col2im(geom, dcol, dx->plane(i, 0));
    }
  }
}

// ---------------------------------------------------------------------------
// deconv2d: transposed convolution (the adjoint of conv2d w.r.t. its input).
// Weight layout (in_channels, out_channels, kh, kw).
// ---------------------------------------------------------------------------

namespace detail {

inline kernels::PatchGeom deconv_geom(const Deconv2dSpec& s, int in_h, int in_w, int out_h,
                                      int out_w) {
  return {s.out_channels, s.kh, s.kw, s.sh, s.sw, s.ph, s.pw, 1, 1, in_h, in_w, out_h, out_w};
}

}  // namespace detail

template <typename T>
Tensor<T> deconv2d_forward(const Tensor<T>& x, const Deconv2dSpec& s, const Tensor<T>& weight) {
  s.validate();
  if (x.c != s.in_channels)
    throw std::invalid_argument("deconv2d: input has " + std::to_string(x.c) +
                                " channels, spec expects " + std::to_string(s.in_channels));
  if (weight.n != s.in_channels || weight.c != s.out_channels || weight.h != s.kh ||
      weight.w != s.kw)
    throw std::invalid_argument("deconv2d: weight shape " + weight.shape_str() +
                                " does not match spec");
  const int oh = s.out_h(x.h), ow = s.out_w(x.w);
  if (oh < 1 || ow < 1) throw std::invalid_argument("deconv2d: output dimension < 1");

  Tensor<T> out(x.n, s.out_channels, oh, ow);
  const int K = s.out_channels * s.kh * s.kw;  // col rows
  const int P = x.h * x.w;                     // placement grid = input positions
  T* col = kernels::scratch<T>(static_cast<std::size_t>(K) * P, 1).data();
  const kernels::PatchGeom geom = detail::deconv_geom(s, x.h, x.w, oh, ow);
  for (int i = 0; i < x.n; ++i) {
    std::fill(col, col + static_cast<std::size_t>(K) * P, T{});
    // col = W^T(out_c*k^2 x in_c) * x(in_c x P)
    kernels::gemm_tn(K, P, s.in_channels, weight.ptr(), x.plane(i, 0), col);
    kernels::col2im(geom, col, out.plane(i, 0));
  }
  return out;
}

template <typename T>
void deconv2d_backward(const Tensor<T>& x, const Deconv2dSpec& s, const Tensor<T>& weight,
                       const Tensor<T>& dout, Tensor<T>* dx, Tensor<T>* dweight) {
  const int K = s.out_channels * s.kh * s.kw;
  const int P = x.h * x.w;
  T* col = kernels::scratch<T>(static_cast<std::size_t>(K) * P, 0).data();
  const kernels::PatchGeom geom = detail::deconv_geom(s, x.h, x.w, dout.h, dout.w);
  for (int i = 0; i < x.n; ++i) {
    kernels::im2col(geom, dout.plane(i, 0), col);
    if (dx)
      kernels::gemm_nn(s.in_channels, P, K, weight.ptr(), col, dx->plane(i, 0));
    if (dweight)
      kernels::gemm_nt(s.in_channels, K, P, x.plane(i, 0), col, dweight->ptr());
  }
}

// Per-channel separable tent filter placed on the channel diagonal. This is
// the standard bilinear-upsampling initialization for a transposed conv.
template <typename T>
Tensor<T> bilinear_init(int kh, int kw, int channels) {
  if (kh != kw) throw std::invalid_argument("bilinear_init: kernel must be square");
  const int f = (kh + 1) / 2;
  const double center = (2.0 * f - 1 - f % 2) / (2.0 * f);
  std::vector<double> tent(kh);
  for (int t = 0; t < kh; ++t)
    tent[t] = 1.0 - std::abs(static_cast<double>(t) / f - center);
  Tensor<T> w(channels, channels, kh, kw);
  for (int ch = 0; ch < channels; ++ch)
    for (int y = 0; y < kh; ++y)
      for (int x = 0; x < kw; ++x)
        w.at(ch, ch, y, x) = static_cast<T>(tent[y] * tent[x]);
  return w;
}

// ---------------------------------------------------------------------------
// l2norm with learnable per-channel scale: at each location the channel
// vector is divided by sqrt(sum of squares + eps), then scaled.
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> l2norm_scale_forward(const Tensor<T>& x, const L2NormSpec& s, const Tensor<T>& scale) {
  if (x.c != s.channels || scale.count() != s.channels)
    throw std::invalid_argument("l2norm: channel mismatch");
  if (!(s.epsilon > 0)) throw std::invalid_argument("l2norm: epsilon must be > 0");
  Tensor<T> out = Tensor<T>::zeros_like(x);
  const int plane = x.h * x.w;
  for (int i = 0; i < x.n; ++i) {
    const T* xp = x.plane(i, 0);
    T* op = out.plane(i, 0);
    for (int p = 0; p < plane; ++p) {
      T ss{};
      for (int j = 0; j < x.c; ++j) {
        const T v = xp[static_cast<std::size_t>(j) * plane + p];
        ss += v * v;
      }
      const T inv = T(1) / std::sqrt(ss + static_cast<T>(s.epsilon));
      for (int j = 0; j < x.c; ++j)
        op[static_cast<std::size_t>(j) * plane + p] =
            xp[static_cast<std::size_t>(j) * plane + p] * inv * scale.data[j];
    }
  }
  return out;
}

template <typename T>
void l2norm_scale_backward(const Tensor<T>& x, const L2NormSpec& s, const Tensor<T>& scale,
                           const Tensor<T>& dout, Tensor<T>* dx, Tensor<T>* dscale) {
  const int plane = x.h * x.w;
  for (int i = 0; i < x.n; ++i) {
    const T* xp = x.plane(i, 0);
    const T* gp = dout.plane(i, 0);
    for (int p = 0; p < plane; ++p) {
      T ss{};
      for (int j = 0; j < x.c; ++j) {
        const T v = xp[static_cast<std::size_t>(j) * plane + p];
        ss += v * v;
      }
      const T inv = T(1) / std::sqrt(ss + static_cast<T>(s.epsilon));
      const T inv3 = inv * inv * inv;
      T gdotsx{};  // sum_j g_j * scale_j * x_j
      for (int j = 0; j < x.c; ++j) {
        const std::size_t k = static_cast<std::size_t>(j) * plane + p;
        gdotsx += gp[k] * scale.data[j] * xp[k];
      }
      for (int j = 0; j < x.c; ++j) {
        const std::size_t k = static_cast<std::size_t>(j) * plane + p;
        if (dx) dx->data[dx->idx(i, j, 0, 0) + p] += gp[k + 0] * scale.data[j] * inv -
                                                     inv3 * xp[k] * gdotsx;
        if (dscale) dscale->data[j] += gp[k] * xp[k] * inv;
      }
    }
  }
}

// ---------------------------------------------------------------------------
// relu / maxpool 2x2 stride 2
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> relu_forward(const Tensor<T>& x) {
  Tensor<T> out = x;
  for (auto& v : out.data)
    if (v < T{}) v = T{};
  return out;
}

template <typename T>
Tensor<T> maxpool2_forward(const Tensor<T>& x, std::vector<int>* argmax = nullptr) {
  if (x.h % 2 != 0 || x.w % 2 != 0)
    throw std::invalid_argument("maxpool2: spatial dims must be even, got " + x.shape_str());
  Tensor<T> out(x.n, x.c, x.h / 2, x.w / 2);
  if (argmax) argmax->assign(out.count(), 0);
  for (int i = 0; i < x.n; ++i)
    for (int j = 0; j < x.c; ++j) {
      const T* xp = x.plane(i, j);
      T* op = out.plane(i, j);
      for (int y = 0; y < out.h; ++y)
        for (int xw = 0; xw < out.w; ++xw) {
          // first-index tie break, scan order (0,0),(0,1),(1,0),(1,1)
          int best = (2 * y) * x.w + 2 * xw;
          T bv = xp[best];
          const int cands[3] = {(2 * y) * x.w + 2 * xw + 1, (2 * y + 1) * x.w + 2 * xw,
                                (2 * y + 1) * x.w + 2 * xw + 1};
          for (int cand : cands)
            if (xp[cand] > bv) {
              bv = xp[cand];
              best = cand;
            }
          op[y * out.w + xw] = bv;
          if (argmax) (*argmax)[out.idx(i, j, y, xw)] = best;
        }
    }
  return out;
}

// ---------------------------------------------------------------------------
// Tape-recorded variants.
// ---------------------------------------------------------------------------

template <typename T>
Node<T>* conv2d(Tape<T>& tape, Node<T>* x, const Conv2dSpec& spec, Param<T>& weight,
                Param<T>* bias) {
  Tensor<T> out = conv2d_forward(x->value, spec, weight.value, bias ? &bias->value : nullptr);
  Param<T>* b = bias;
  return tape.make(std::move(out), [x, spec, &weight, b](Tape<T>& t, Node<T>& self) {
    Tensor<T>* dx = t.wants_grad(*x) ? &x->grad : nullptr;
    conv2d_backward(x->value, spec, weight.value, self.grad, dx, &t.grad_of(weight),
                    b ? &t.grad_of(*b) : nullptr);
    if (dx) x->touched = true;
  });
}

template <typename T>
Node<T>* deconv2d(Tape<T>& tape, Node<T>* x, const Deconv2dSpec& spec, Param<T>& weight) {
  Tensor<T> out = deconv2d_forward(x->value, spec, weight.value);
  return tape.make(std::move(out), [x, spec, &weight](Tape<T>& t, Node<T>& self) {
    deconv2d_backward(x->value, spec, weight.value, self.grad, &x->grad,
                      spec.trainable ? &t.grad_of(weight) : nullptr);
    x->touched = true;
  });
}

template <typename T>
Node<T>* l2norm_scale(Tape<T>& tape, Node<T>* x, const L2NormSpec& spec, Param<T>& scale) {
  Tensor<T> out = l2norm_scale_forward(x->value, spec, scale.value);
  return tape.make(std::move(out), [x, spec, &scale](Tape<T>& t, Node<T>& self) {
    l2norm_scale_backward(x->value, spec, scale.value, self.grad, &x->grad, &t.grad_of(scale));
    x->touched = true;
  });
}

template <typename T>
Node<T>* relu(Tape<T>& tape, Node<T>* x) {
  return tape.make(relu_forward(x->value), [x](Tape<T>&, Node<T>& self) {
    for (int i = 0; i < self.grad.count(); ++i)
      if (x->value.data[i] > T{}) x->grad.data[i] += self.grad.data[i];
    x->touched = true;
  });
}

template <typename T>
Node<T>* maxpool2(Tape<T>& tape, Node<T>* x) {
  auto argmax = std::make_shared<std::vector<int>>();
  Tensor<T> out = maxpool2_forward(x->value, argmax.get());
  return tape.make(std::move(out), [x, argmax](Tape<T>&, Node<T>& self) {
    for (int i = 0; i < self.grad.count(); ++i) {
      const int plane_idx = i / (self.grad.h * self.grad.w);
      x->grad.data[static_cast<std::size_t>(plane_idx) * x->value.h * x->value.w +
                   (*argmax)[i]] += self.grad.data[i];
    }
    x->touched = true;
  });
}

template <typename T>
Node<T>* concat_channels(Tape<T>& tape, Node<T>* a, Node<T>* b) {
  Tensor<T> out = concat_channels(a->value, b->value);
  return tape.make(std::move(out), [a, b](Tape<T>&, Node<T>& self) {
    const int plane = self.grad.h * self.grad.w;
    for (int i = 0; i < self.grad.n; ++i) {
      const T* g = self.grad.plane(i, 0);
      T* ga = a->grad.plane(i, 0);
      for (int k = 0; k < a->grad.c * plane; ++k) ga[k] += g[k];
      const T* gb_src = self.grad.plane(i, a->grad.c);
      T* gb = b->grad.plane(i, 0);
      for (int k = 0; k < b->grad.c * plane; ++k) gb[k] += gb_src[k];
    }
    a->touched = b->touched = true;
  });
}

template <typename T>
Node<T>* eltwise_sum(Tape<T>& tape, Node<T>* a, Node<T>* b) {
  Tensor<T> out = eltwise_sum(a->value, b->value);
  return tape.make(std::move(out), [a, b](Tape<T>&, Node<T>& self) {
    for (int i = 0; i < self.grad.count(); ++i) {
      a->grad.data[i] += self.grad.data[i];
      b->grad.data[i] += self.grad.data[i];
    }
    a->touched = b->touched = true;
  });
}

}  // namespace ffsd
