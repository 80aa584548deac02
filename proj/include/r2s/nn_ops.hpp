#pragma once

#include <cstdint>
#include <vector>

#include "r2s/common.hpp"
#include "r2s/tensor.hpp"

namespace r2s {

inline int conv_out_size(int in, int kernel, int stride, int pad) {
  return (in + 2 * pad - kernel) / stride + 1;
}

// c(m,n) += a(m,k) * b(k,n), rows of c split across the pool.
template <typename T>
inline void matmul_parallel(const T* a, const T* b, T* c, int m, int k, int n) {
  const std::int64_t flops = 2LL * m * k * n;
  if (flops < (1 << 18)) {
    matmul_acc(a, b, c, m, k, n);
    return;
  }
  parallel_chunks(m, 8, [&](int, std::int64_t r0, std::int64_t r1) {
    matmul_acc(a + r0 * k, b, c + r0 * n, static_cast<int>(r1 - r0), k, n);
  });
}

// col(C*K*K, OH*OW) from one (C,H,W) sample.
template <typename T>
inline void im2col(const T* x, int c_in, int h, int w, int kernel, int stride, int pad, T* col) {
  const int oh = conv_out_size(h, kernel, stride, pad);
  const int ow = conv_out_size(w, kernel, stride, pad);
  const std::int64_t patch = static_cast<std::int64_t>(oh) * ow;
  std::int64_t row = 0;
  for (int c = 0; c < c_in; ++c) {
    const T* plane = x + static_cast<std::int64_t>(c) * h * w;
    for (int ki = 0; ki < kernel; ++ki)
      for (int kj = 0; kj < kernel; ++kj, ++row) {
        T* out = col + row * patch;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * stride + ki - pad;
          if (iy < 0 || iy >= h) {
            for (int ox = 0; ox < ow; ++ox) out[static_cast<std::int64_t>(oy) * ow + ox] = T(0);
            continue;
          }
          const T* src = plane + static_cast<std::int64_t>(iy) * w;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * stride + kj - pad;
            out[static_cast<std::int64_t>(oy) * ow + ox] = (ix >= 0 && ix < w) ? src[ix] : T(0);
          }
        }
      }
  }
}

// col_t(OH*OW, C*K*K): the transposed layout used for weight gradients.
template <typename T>
inline void im2col_t(const T* x, int c_in, int h, int w, int kernel, int stride, int pad, T* col_t) {
  const int oh = conv_out_size(h, kernel, stride, pad);
  const int ow = conv_out_size(w, kernel, stride, pad);
  const int ckk = c_in * kernel * kernel;
  std::int64_t row = 0;
  for (int c = 0; c < c_in; ++c) {
    const T* plane = x + static_cast<std::int64_t>(c) * h * w;
    for (int ki = 0; ki < kernel; ++ki)
      for (int kj = 0; kj < kernel; ++kj, ++row) {
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * stride + ki - pad;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * stride + kj - pad;
            const T v = (iy >= 0 && iy < h && ix >= 0 && ix < w) ? plane[static_cast<std::int64_t>(iy) * w + ix] : T(0);
            col_t[(static_cast<std::int64_t>(oy) * ow + ox) * ckk + row] = v;
          }
        }
      }
  }
}

// Scatter-add of a col gradient back onto one input sample.
template <typename T>
inline void col2im_add(const T* col, int c_in, int h, int w, int kernel, int stride, int pad, T* dx) {
  const int oh = conv_out_size(h, kernel, stride, pad);
  const int ow = conv_out_size(w, kernel, stride, pad);
  const std::int64_t patch = static_cast<std::int64_t>(oh) * ow;
  std::int64_t row = 0;
  for (int c = 0; c < c_in; ++c) {
    T* plane = dx + static_cast<std::int64_t>(c) * h * w;
    for (int ki = 0; ki < kernel; ++ki)
      for (int kj = 0; kj < kernel; ++kj, ++row) {
        const T* src = col + row * patch;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * stride + ki - pad;
          if (iy < 0 || iy >= h) continue;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * stride + kj - pad;
            if (ix >= 0 && ix < w) plane[static_cast<std::int64_t>(iy) * w + ix] += src[static_cast<std::int64_t>(oy) * ow + ox];
          }
        }
      }
  }
}

struct ConvDims {
  int n, c_in, h, w, c_out, kernel, stride, pad, oh, ow;
  std::int64_t in_plane() const { return static_cast<std::int64_t>(c_in) * h * w; }
  std::int64_t out_plane() const { return static_cast<std::int64_t>(c_out) * oh * ow; }
  std::int64_t patch() const { return static_cast<std::int64_t>(oh) * ow; }
  int ckk() const { return c_in * kernel * kernel; }
};

template <typename T>
inline ConvDims conv_dims(const TensorT<T>& x, const TensorT<T>& w, int stride, int pad) {
  if (x.rank() != 4 || w.rank() != 4) throw ShapeError("conv2d expects 4-d input and weight");
  if (x.dim(1) != w.dim(1)) throw ShapeError("conv2d channel mismatch: input " + x.shape_str() + " weight " + w.shape_str());
  ConvDims d;
  d.n = x.dim(0);
  d.c_in = x.dim(1);
  d.h = x.dim(2);
  d.w = x.dim(3);
  d.c_out = w.dim(0);
  d.kernel = w.dim(2);
  d.stride = stride;
  d.pad = pad;
  d.oh = conv_out_size(d.h, d.kernel, stride, pad);
  d.ow = conv_out_size(d.w, d.kernel, stride, pad);
  if (d.oh <= 0 || d.ow <= 0) throw ShapeError("conv2d output collapses for input " + x.shape_str());
  return d;
}

template <typename T>
inline void conv2d_forward(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& bias, const ConvDims& d, TensorT<T>& y) {
  parallel_chunks(d.n, std::min(d.n, 16), [&](int, std::int64_t n0, std::int64_t n1) {
    std::vector<T> col(static_cast<std::size_t>(d.ckk()) * d.patch());
    for (std::int64_t n = n0; n < n1; ++n) {
      im2col(x.data() + n * d.in_plane(), d.c_in, d.h, d.w, d.kernel, d.stride, d.pad, col.data());
      T* out = y.data() + n * d.out_plane();
      for (int oc = 0; oc < d.c_out; ++oc) {
        const T b = bias[oc];
        T* row = out + static_cast<std::int64_t>(oc) * d.patch();
        for (std::int64_t p = 0; p < d.patch(); ++p) row[p] = b;
      }
      matmul_acc(w.data(), col.data(), out, d.c_out, d.ckk(), static_cast<int>(d.patch()));
    }
  });
}

template <typename T>
inline void conv2d_backward_input(const TensorT<T>& w, const TensorT<T>& dy, const ConvDims& d, TensorT<T>& dx) {
  std::vector<T> wt(static_cast<std::size_t>(d.ckk()) * d.c_out);
  transpose(w.data(), wt.data(), d.c_out, d.ckk());
  parallel_chunks(d.n, std::min(d.n, 16), [&](int, std::int64_t n0, std::int64_t n1) {
    std::vector<T> gcol(static_cast<std::size_t>(d.ckk()) * d.patch());
    for (std::int64_t n = n0; n < n1; ++n) {
      std::fill(gcol.begin(), gcol.end(), T(0));
      matmul_acc(wt.data(), dy.data() + n * d.out_plane(), gcol.data(), d.ckk(), d.c_out, static_cast<int>(d.patch()));
      col2im_add(gcol.data(), d.c_in, d.h, d.w, d.kernel, d.stride, d.pad, dx.data() + n * d.in_plane());
    }
  });
}

// Accumulates into dw/db. Partial sums are produced per fixed batch chunk and
// reduced in chunk order, so the result does not depend on the pool size.
template <typename T>
inline void conv2d_backward_params(const TensorT<T>& x, const TensorT<T>& dy, const ConvDims& d, TensorT<T>& dw, TensorT<T>& db) {
  const int chunks = std::min(d.n, 8);
  const std::int64_t wsize = static_cast<std::int64_t>(d.c_out) * d.ckk();
  std::vector<std::vector<T>> dw_parts(static_cast<std::size_t>(chunks));
  std::vector<std::vector<T>> db_parts(static_cast<std::size_t>(chunks));
  parallel_chunks(d.n, chunks, [&](int chunk, std::int64_t n0, std::int64_t n1) {
    auto& dwp = dw_parts[static_cast<std::size_t>(chunk)];
    auto& dbp = db_parts[static_cast<std::size_t>(chunk)];
    dwp.assign(static_cast<std::size_t>(wsize), T(0));
    dbp.assign(static_cast<std::size_t>(d.c_out), T(0));
    std::vector<T> col_t(static_cast<std::size_t>(d.patch()) * d.ckk());
    for (std::int64_t n = n0; n < n1; ++n) {
      im2col_t(x.data() + n * d.in_plane(), d.c_in, d.h, d.w, d.kernel, d.stride, d.pad, col_t.data());
      const T* g = dy.data() + n * d.out_plane();
      matmul_acc(g, col_t.data(), dwp.data(), d.c_out, static_cast<int>(d.patch()), d.ckk());
      for (int oc = 0; oc < d.c_out; ++oc) {
        T s = T(0);
        const T* row = g + static_cast<std::int64_t>(oc) * d.patch();
        for (std::int64_t p = 0; p < d.patch(); ++p) s += row[p];
        dbp[static_cast<std::size_t>(oc)] += s;
      }
    }
  });
  for (int c = 0; c < chunks; ++c) {
    for (std::int64_t i = 0; i < wsize; ++i) dw[i] += dw_parts[static_cast<std::size_t>(c)][static_cast<std::size_t>(i)];
    for (int oc = 0; oc < d.c_out; ++oc) db[oc] += db_parts[static_cast<std::size_t>(c)][static_cast<std::size_t>(oc)];
  }
}

template <typename T>
inline void linear_forward(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& b, TensorT<T>& y) {
  const int n = x.dim(0), f = x.dim(1), o = w.dim(0);
  std::vector<T> wt(static_cast<std::size_t>(f) * o);
  transpose(w.data(), wt.data(), o, f);
  for (int r = 0; r < n; ++r) {
    T* row = y.data() + static_cast<std::int64_t>(r) * o;
    for (int j = 0; j < o; ++j) row[j] = b[j];
  }
  matmul_parallel(x.data(), wt.data(), y.data(), n, f, o);
}

template <typename T>
inline void linear_backward(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& dy, TensorT<T>* dx, TensorT<T>* dw,
                            TensorT<T>* db) {
  const int n = x.dim(0), f = x.dim(1), o = w.dim(0);
  if (dx) matmul_parallel(dy.data(), w.data(), dx->data(), n, o, f);
  if (dw) {
    std::vector<T> dyt(static_cast<std::size_t>(o) * n);
    transpose(dy.data(), dyt.data(), n, o);
    matmul_parallel(dyt.data(), x.data(), dw->data(), o, n, f);
  }
  if (db) {
    for (int r = 0; r < n; ++r)
      for (int j = 0; j < o; ++j) (*db)[j] += dy[static_cast<std::int64_t>(r) * o + j];
  }
}

}  // namespace r2s
