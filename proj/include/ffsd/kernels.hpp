// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstddef>
#include <vector>

namespace ffsd {
namespace kernels {

#if defined(__GNUC__) || defined(__clang__)
#define FFSD_RESTRICT __restrict__
#else
#define FFSD_RESTRICT
#endif

// Row-major C(MxN) += A(MxK) * B(KxN). The i-k-j order keeps the inner loop a
// contiguous axpy over C/B rows; k runs in blocks of four with the adds into
// C kept in k order, so the sum association matches the plain loop.
template <typename T>
void gemm_nn(int M, int N, int K, const T* FFSD_RESTRICT A, const T* FFSD_RESTRICT B,
             T* FFSD_RESTRICT C) {
  for (int i = 0; i < M; ++i) {
    T* FFSD_RESTRICT crow = C + static_cast<std::size_t>(i) * N;
    const T* arow = A + static_cast<std::size_t>(i) * K;
    int k = 0;
    for (; k + 4 <= K; k += 4) {
      const T a0 = arow[k], a1 = arow[k + 1], a2 = arow[k + 2], a3 = arow[k + 3];
      const T* FFSD_RESTRICT b0 = B + static_cast<std::size_t>(k) * N;
      const T* FFSD_RESTRICT b1 = b0 + N;
      const T* FFSD_RESTRICT b2 = b1 + N;
      const T* FFSD_RESTRICT b3 = b2 + N;
      if (a0 == T{} && a1 == T{} && a2 == T{} && a3 == T{}) continue;
      for (int j = 0; j < N; ++j)
        crow[j] = (((crow[j] + a0 * b0[j]) + a1 * b1[j]) + a2 * b2[j]) + a3 * b3[j];
    }
    for (; k < K; ++k) {
      const T a = arow[k];
      if (a == T{}) continue;
      const T* FFSD_RESTRICT brow = B + static_cast<std::size_t>(k) * N;
      for (int j = 0; j < N; ++j) crow[j] += a * brow[j];
    }
  }
}

// C(MxN) += A(MxK) * B(NxK)^T, i.e. C[i][j] += dot(A row i, B row j). The dot
// product runs over a fixed number of independent lanes so the compiler can
// vectorize it without reassociating; the accumulation order is still fixed.
template <typename T>
void gemm_nt(int M, int N, int K, const T* FFSD_RESTRICT A, const T* FFSD_RESTRICT B,
             T* FFSD_RESTRICT C) {
  constexpr int L = 16;
  for (int i = 0; i < M; ++i) {
    const T* arow = A + static_cast<std::size_t>(i) * K;
    T* FFSD_RESTRICT crow = C + static_cast<std::size_t>(i) * N;
    for (int j = 0; j < N; ++j) {
      const T* brow = B + static_cast<std::size_t>(j) * K;
      T lane[L] = {};
      int k = 0;
      for (; k + L <= K; k += L)
        for (int l = 0; l < L; ++l) lane[l] += arow[k + l] * brow[k + l];
      T acc{};
      for (; k < K; ++k) acc += arow[k] * brow[k];
      for (int l = 0; l < L; ++l) acc += lane[l];
      crow[j] += acc;
    }
  }
}

// C(MxN) += A(KxM)^T * B(KxN). Same k-blocking and ordering story as gemm_nn.
template <typename T>
void gemm_tn(int M, int N, int K, const T* FFSD_RESTRICT A, const T* FFSD_RESTRICT B,
             T* FFSD_RESTRICT C) {
  int k = 0;
  for (; k + 4 <= K; k += 4) {
    const T* a0 = A + static_cast<std::size_t>(k) * M;
    const T* a1 = a0 + M;
    const T* a2 = a1 + M;
    const T* a3 = a2 + M;
    const T* FFSD_RESTRICT b0 = B + static_cast<std::size_t>(k) * N;
    const T* FFSD_RESTRICT b1 = b0 + N;
    const T* FFSD_RESTRICT b2 = b1 + N;
    const T* FFSD_RESTRICT b3 = b2 + N;
    for (int i = 0; i < M; ++i) {
      const T v0 = a0[i], v1 = a1[i], v2 = a2[i], v3 = a3[i];
      if (v0 == T{} && v1 == T{} && v2 == T{} && v3 == T{}) continue;
      T* FFSD_RESTRICT crow = C + static_cast<std::size_t>(i) * N;
      for (int j = 0; j < N; ++j)
        crow[j] = (((crow[j] + v0 * b0[j]) + v1 * b1[j]) + v2 * b2[j]) + v3 * b3[j];
    }
  }
  for (; k < K; ++k) {
    const T* arow = A + static_cast<std::size_t>(k) * M;
    const T* FFSD_RESTRICT brow = B + static_cast<std::size_t>(k) * N;
    for (int i = 0; i < M; ++i) {
      const T a = arow[i];
      if (a == T{}) continue;
      T* FFSD_RESTRICT crow = C + static_cast<std::size_t>(i) * N;
      for (int j = 0; j < N; ++j) crow[j] += a * brow[j];
    }
  }
}

// Per-thread scratch for the im2col buffers; contents are call-local. Slot 0
// holds a col matrix, slot 1 a gradient col matrix.
template <typename T>
std::vector<T>& scratch(std::size_t n, int slot) {
  thread_local std::vector<T> bufs[2];
  auto& b = bufs[slot];
  if (b.size() < n) b.resize(n);
  return b;
}

// Patch geometry shared by im2col/col2im. `grid` is the kernel-placement grid
// (the conv output for forward conv, the deconv input for transposed conv);
// `img` is the dense image side. Out-of-image taps read/write zero.
struct PatchGeom {
  int channels;        // img channels
  int kh, kw;          // kernel
  int sh, sw;          // stride
  int ph, pw;          // pad
  int dh, dw;          // dilation
  int grid_h, grid_w;  // placement grid
  int img_h, img_w;    // image plane
};

// col is (channels*kh*kw) x (grid_h*grid_w), row-major.
template <typename T>
void im2col(const PatchGeom& g, const T* FFSD_RESTRICT img, T* FFSD_RESTRICT col) {
  const int P = g.grid_h * g.grid_w;
  for (int ci = 0; ci < g.channels; ++ci) {
    const T* plane = img + static_cast<std::size_t>(ci) * g.img_h * g.img_w;
    for (int ky = 0; ky < g.kh; ++ky) {
      for (int kx = 0; kx < g.kw; ++kx) {
        T* crow = col + static_cast<std::size_t>((ci * g.kh + ky) * g.kw + kx) * P;
        for (int gy = 0; gy < g.grid_h; ++gy) {
          const int y = gy * g.sh + ky * g.dh - g.ph;
          T* out = crow + static_cast<std::size_t>(gy) * g.grid_w;
          if (y < 0 || y >= g.img_h) {
            std::fill(out, out + g.grid_w, T{});
            continue;
          }
          const T* src = plane + static_cast<std::size_t>(y) * g.img_w;
          const int x0 = kx * g.dw - g.pw;
          if (g.sw == 1) {
            // contiguous span with zero fringes
            int lo = std::max(0, -x0);
            int hi = std::min(g.grid_w, g.img_w - x0);
            if (hi < lo) hi = lo;
            std::fill(out, out + lo, T{});
            std::copy(src + x0 + lo, src + x0 + hi, out + lo);
            std::fill(out + hi, out + g.grid_w, T{});
          } else {
            for (int gx = 0; gx < g.grid_w; ++gx) {
              const int x = gx * g.sw + x0;
              out[gx] = (x < 0 || x >= g.img_w) ? T{} : src[x];
            }
          }
        }
      }
    }
  }
}

// Scatter-add of a col matrix back into the image. Sequential by design so
// accumulation order is fixed.
template <typename T>
void col2im(const PatchGeom& g, const T* FFSD_RESTRICT col, T* FFSD_RESTRICT img) {
  const int P = g.grid_h * g.grid_w;
  for (int ci = 0; ci < g.channels; ++ci) {
    T* plane = img + static_cast<std::size_t>(ci) * g.img_h * g.img_w;
    for (int ky = 0; ky < g.kh; ++ky) {
      for (int kx = 0; kx < g.kw; ++kx) {
        const T* crow = col + static_cast<std::size_t>((ci * g.kh + ky) * g.kw + kx) * P;
        for (int gy = 0; gy < g.grid_h; ++gy) {
          const int y = gy * g.sh + ky * g.dh - g.ph;
          if (y < 0 || y >= g.img_h) continue;
          T* dst = plane + static_cast<std::size_t>(y) * g.img_w;
          const T* src = crow + static_cast<std::size_t>(gy) * g.grid_w;
          const int x0 = kx * g.dw - g.pw;
          if (g.sw == 1) {
            const int lo = std::max(0, -x0);
            const int hi = std::min(g.grid_w, g.img_w - x0);
            for (int gx = lo; gx < hi; ++gx) dst[x0 + gx] += src[gx];
          } else {
            for (int gx = 0; gx < g.grid_w; ++gx) {
              const int x = gx * g.sw + x0;
              if (x >= 0 && x < g.img_w) dst[x] += src[gx];
            }
          }
        }
      }
    }
  }
}

#undef FFSD_RESTRICT

}  // namespace kernels
}  // namespace ffsd
