#pragma once

#include <Eigen/Core>

namespace attrenh::detail {

template <typename T>
using RowMajor = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// C(m x n) = alpha * op(A) * op(B) + beta * C, all row-major.
/// op(A) is m x k (A stored k x m when trans_a); op(B) is k x n.
template <typename T>
void gemm(bool trans_a, bool trans_b, int m, int n, int k, T alpha, const T* a, const T* b, T beta,
          T* c) {
  Eigen::Map<RowMajor<T>> cm(c, m, n);
  const int ar = trans_a ? k : m, ac = trans_a ? m : k;
  const int br = trans_b ? n : k, bc = trans_b ? k : n;
  Eigen::Map<const RowMajor<T>> am(a, ar, ac);
  Eigen::Map<const RowMajor<T>> bm(b, br, bc);
  if (beta == T(0)) {
    cm.setZero();
  } else if (beta != T(1)) {
    cm *= beta;
  }
  if (!trans_a && !trans_b) {
    cm.noalias() += alpha * am * bm;
  } else if (trans_a && !trans_b) {
    cm.noalias() += alpha * am.transpose() * bm;
  } else if (!trans_a && trans_b) {
    cm.noalias() += alpha * am * bm.transpose();
  } else {
    cm.noalias() += alpha * am.transpose() * bm.transpose();
  }
}

/// Unfolds (N, C, H, W) into rows (c, ky, kx) by columns (n, oy, ox).
template <typename T>
void im2col(const T* img, int n_batch, int channels, int height, int width, int kernel, int stride,
            int pad, int out_h, int out_w, T* col) {
  const long cols = static_cast<long>(n_batch) * out_h * out_w;
  for (int c = 0; c < channels; ++c) {
    for (int ky = 0; ky < kernel; ++ky) {
      for (int kx = 0; kx < kernel; ++kx) {
        T* row = col + (static_cast<long>(c) * kernel * kernel + ky * kernel + kx) * cols;
        for (int n = 0; n < n_batch; ++n) {
          const T* plane = img + (static_cast<long>(n) * channels + c) * height * width;
          T* dst = row + static_cast<long>(n) * out_h * out_w;
          for (int oy = 0; oy < out_h; ++oy) {
            const int iy = oy * stride - pad + ky;
            if (iy < 0 || iy >= height) {
              for (int ox = 0; ox < out_w; ++ox) dst[oy * out_w + ox] = T(0);
              continue;
            }
            const T* src = plane + static_cast<long>(iy) * width;
            for (int ox = 0; ox < out_w; ++ox) {
              const int ix = ox * stride - pad + kx;
              dst[oy * out_w + ox] = (ix >= 0 && ix < width) ? src[ix] : T(0);
            }
          }
        }
      }
    }
  }
}

/// Adjoint of im2col; accumulates into img (caller zeroes it).
template <typename T>
void col2im(const T* col, int n_batch, int channels, int height, int width, int kernel, int stride,
            int pad, int out_h, int out_w, T* img) {
  const long cols = static_cast<long>(n_batch) * out_h * out_w;
  for (int c = 0; c < channels; ++c) {
    for (int ky = 0; ky < kernel; ++ky) {
      for (int kx = 0; kx < kernel; ++kx) {
        const T* row = col + (static_cast<long>(c) * kernel * kernel + ky * kernel + kx) * cols;
        for (int n = 0; n < n_batch; ++n) {
          T* plane = img + (static_cast<long>(n) * channels + c) * height * width;
          const T* src = row + static_cast<long>(n) * out_h * out_w;
          for (int oy = 0; oy < out_h; ++oy) {
            const int iy = oy * stride - pad + ky;
            if (iy < 0 || iy >= height) continue;
            T* dst = plane + static_cast<long>(iy) * width;
            for (int ox = 0; ox < out_w; ++ox) {
              const int ix = ox * stride - pad + kx;
              if (ix >= 0 && ix < width) dst[ix] += src[oy * out_w + ox];
            }
          }
        }
      }
    }
  }
}

/// (N, C, P) <-> (C, N*P) layout changes around the batched GEMMs.
template <typename T>
void nchw_to_cm(const T* x, int n_batch, int channels, long plane, T* out) {
  for (int n = 0; n < n_batch; ++n)
    for (int c = 0; c < channels; ++c) {
      const T* src = x + (static_cast<long>(n) * channels + c) * plane;
      T* dst = out + static_cast<long>(c) * n_batch * plane + static_cast<long>(n) * plane;
      for (long i = 0; i < plane; ++i) dst[i] = src[i];
    }
}

template <typename T>
void cm_to_nchw(const T* x, int n_batch, int channels, long plane, T* out) {
  for (int n = 0; n < n_batch; ++n)
    for (int c = 0; c < channels; ++c) {
      const T* src = x + static_cast<long>(c) * n_batch * plane + static_cast<long>(n) * plane;
      T* dst = out + (static_cast<long>(n) * channels + c) * plane;
      for (long i = 0; i < plane; ++i) dst[i] = src[i];
    }
}

}  // namespace attrenh::detail
