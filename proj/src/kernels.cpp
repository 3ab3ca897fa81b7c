#include "hst/kernels.hpp"

#include <cmath>
#include <vector>

namespace hst::kernels {

namespace {

inline int ceil_div(int a, int b) { return a > 0 ? (a + b - 1) / b : a / b; }
inline int floor_div(int a, int b) { return a >= 0 ? a / b : -((-a + b - 1) / b); }

// Valid output range [lo,hi] such that 0 <= o*stride - pad + k < limit.
inline void out_range(int k, int stride, int pad, int limit, int count, int& lo, int& hi) {
  lo = ceil_div(pad - k, stride);
  if (lo < 0) lo = 0;
  hi = floor_div(limit - 1 + pad - k, stride);
  if (hi > count - 1) hi = count - 1;
}

constexpr long long kChunk = 4096;  // fixed reduction chunk, independent of thread count

}  // namespace

template <class T>
void conv2d_fwd(const T* x, const T* w, const T* bias, T* y, int B, int Cin, int H, int W,
                int Cout, int K, int stride, int pad, int Ho, int Wo) {
#pragma omp parallel for collapse(2) schedule(static)
  for (int b = 0; b < B; ++b) {
    for (int oc = 0; oc < Cout; ++oc) {
      T* yp = y + (static_cast<size_t>(b) * Cout + oc) * Ho * Wo;
      T bv = bias ? bias[oc] : T(0);
      for (long long i = 0; i < static_cast<long long>(Ho) * Wo; ++i) yp[i] = bv;
      for (int ic = 0; ic < Cin; ++ic) {
        const T* xp = x + (static_cast<size_t>(b) * Cin + ic) * H * W;
        const T* wp = w + (static_cast<size_t>(oc) * Cin + ic) * K * K;
        for (int kh = 0; kh < K; ++kh) {
          int oh_lo, oh_hi;
          out_range(kh, stride, pad, H, Ho, oh_lo, oh_hi);
          for (int kw = 0; kw < K; ++kw) {
            int ow_lo, ow_hi;
            out_range(kw, stride, pad, W, Wo, ow_lo, ow_hi);
            T wv = wp[kh * K + kw];
            for (int oh = oh_lo; oh <= oh_hi; ++oh) {
              int ih = oh * stride - pad + kh;
              const T* xrow = xp + static_cast<size_t>(ih) * W - pad + kw;
              T* yrow = yp + static_cast<size_t>(oh) * Wo;
              if (stride == 1) {
                for (int ow = ow_lo; ow <= ow_hi; ++ow) yrow[ow] += wv * xrow[ow];
              } else {
                for (int ow = ow_lo; ow <= ow_hi; ++ow) yrow[ow] += wv * xrow[ow * stride];
              }
            }
          }
        }
      }
    }
  }
}

template <class T>
void conv2d_bwd_input(T* dx, const T* w, const T* dy, int B, int Cin, int H, int W, int Cout,
                      int K, int stride, int pad, int Ho, int Wo) {
#pragma omp parallel for collapse(2) schedule(static)
  for (int b = 0; b < B; ++b) {
    for (int ic = 0; ic < Cin; ++ic) {
      T* dxp = dx + (static_cast<size_t>(b) * Cin + ic) * H * W;
      for (int oc = 0; oc < Cout; ++oc) {
        const T* dyp = dy + (static_cast<size_t>(b) * Cout + oc) * Ho * Wo;
        const T* wp = w + (static_cast<size_t>(oc) * Cin + ic) * K * K;
        for (int kh = 0; kh < K; ++kh) {
          int oh_lo, oh_hi;
          out_range(kh, stride, pad, H, Ho, oh_lo, oh_hi);
          for (int kw = 0; kw < K; ++kw) {
            int ow_lo, ow_hi;
            out_range(kw, stride, pad, W, Wo, ow_lo, ow_hi);
            T wv = wp[kh * K + kw];
            for (int oh = oh_lo; oh <= oh_hi; ++oh) {
              int ih = oh * stride - pad + kh;
              T* dxrow = dxp + static_cast<size_t>(ih) * W - pad + kw;
              const T* dyrow = dyp + static_cast<size_t>(oh) * Wo;
              if (stride == 1) {
                for (int ow = ow_lo; ow <= ow_hi; ++ow) dxrow[ow] += wv * dyrow[ow];
              } else {
                for (int ow = ow_lo; ow <= ow_hi; ++ow) dxrow[ow * stride] += wv * dyrow[ow];
              }
            }
          }
        }
      }
    }
  }
}

template <class T>
void conv2d_bwd_weight(const T* x, T* dw, const T* dy, int B, int Cin, int H, int W, int Cout,
                       int K, int stride, int pad, int Ho, int Wo) {
#pragma omp parallel for collapse(2) schedule(static)
  for (int oc = 0; oc < Cout; ++oc) {
    for (int ic = 0; ic < Cin; ++ic) {
      T* dwp = dw + (static_cast<size_t>(oc) * Cin + ic) * K * K;
      for (int kh = 0; kh < K; ++kh) {
        for (int kw = 0; kw < K; ++kw) {
          T acc = T(0);
          for (int b = 0; b < B; ++b) {
            const T* xp = x + (static_cast<size_t>(b) * Cin + ic) * H * W;
            const T* dyp = dy + (static_cast<size_t>(b) * Cout + oc) * Ho * Wo;
            int oh_lo, oh_hi;
            out_range(kh, stride, pad, H, Ho, oh_lo, oh_hi);
            int ow_lo, ow_hi;
            out_range(kw, stride, pad, W, Wo, ow_lo, ow_hi);
            for (int oh = oh_lo; oh <= oh_hi; ++oh) {
              int ih = oh * stride - pad + kh;
              const T* xrow = xp + static_cast<size_t>(ih) * W - pad + kw;
              const T* dyrow = dyp + static_cast<size_t>(oh) * Wo;
              if (stride == 1) {
                T part = T(0);
#pragma omp simd reduction(+ : part)
                for (int ow = ow_lo; ow <= ow_hi; ++ow) part += xrow[ow] * dyrow[ow];
                acc += part;
              } else {
                T part = T(0);
#pragma omp simd reduction(+ : part)
                for (int ow = ow_lo; ow <= ow_hi; ++ow) part += xrow[ow * stride] * dyrow[ow];
                acc += part;
              }
            }
          }
          dwp[kh * K + kw] += acc;
        }
      }
    }
  }
}

template <class T>
void conv2d_bwd_bias(T* db, const T* dy, int B, int Cout, int Ho, int Wo) {
#pragma omp parallel for schedule(static)
  for (int oc = 0; oc < Cout; ++oc) {
    T acc = T(0);
    for (int b = 0; b < B; ++b) {
      const T* dyp = dy + (static_cast<size_t>(b) * Cout + oc) * Ho * Wo;
      T part = T(0);
#pragma omp simd reduction(+ : part)
      for (long long i = 0; i < static_cast<long long>(Ho) * Wo; ++i) part += dyp[i];
      acc += part;
    }
    db[oc] += acc;
  }
}

template <class T>
void linear_fwd(const T* x, const T* w, const T* b, T* y, i64 rows, int din, int dout) {
  // Transposed weight copy keeps the inner loop contiguous over independent
  // output lanes; per-output accumulation order over din stays fixed.
  std::vector<T> wt(static_cast<size_t>(din) * dout);
  for (int o = 0; o < dout; ++o)
    for (int i = 0; i < din; ++i) wt[static_cast<size_t>(i) * dout + o] = w[static_cast<size_t>(o) * din + i];
#pragma omp parallel for schedule(static)
  for (i64 r = 0; r < rows; ++r) {
    const T* xp = x + static_cast<size_t>(r) * din;
    T* yp = y + static_cast<size_t>(r) * dout;
    if (b) {
      for (int o = 0; o < dout; ++o) yp[o] = b[o];
    } else {
      for (int o = 0; o < dout; ++o) yp[o] = T(0);
    }
    for (int i = 0; i < din; ++i) {
      T xv = xp[i];
      const T* wrow = wt.data() + static_cast<size_t>(i) * dout;
#pragma omp simd
      for (int o = 0; o < dout; ++o) yp[o] += xv * wrow[o];
    }
  }
}

template <class T>
void linear_bwd_input(T* dx, const T* w, const T* dy, i64 rows, int din, int dout) {
#pragma omp parallel for schedule(static)
  for (i64 r = 0; r < rows; ++r) {
    T* dxp = dx + static_cast<size_t>(r) * din;
    const T* dyp = dy + static_cast<size_t>(r) * dout;
    for (int o = 0; o < dout; ++o) {
      T g = dyp[o];
      const T* wrow = w + static_cast<size_t>(o) * din;
#pragma omp simd
      for (int i = 0; i < din; ++i) dxp[i] += g * wrow[i];
    }
  }
}

template <class T>
void linear_bwd_weight(const T* x, T* dw, const T* dy, i64 rows, int din, int dout) {
#pragma omp parallel for schedule(static)
  for (int o = 0; o < dout; ++o) {
    T* dwrow = dw + static_cast<size_t>(o) * din;
    for (i64 r = 0; r < rows; ++r) {
      T g = dy[static_cast<size_t>(r) * dout + o];
      const T* xp = x + static_cast<size_t>(r) * din;
#pragma omp simd
      for (int i = 0; i < din; ++i) dwrow[i] += g * xp[i];
    }
  }
}

template <class T>
void linear_bwd_bias(T* db, const T* dy, i64 rows, int dout) {
#pragma omp parallel for schedule(static)
  for (int o = 0; o < dout; ++o) {
    T acc = T(0);
    for (i64 r = 0; r < rows; ++r) acc += dy[static_cast<size_t>(r) * dout + o];
    db[o] += acc;
  }
}

template <class T>
void bmm(const T* a, const T* b, T* c, i64 nbatch, int M, int K, int N, bool transpose_b,
         T alpha, bool accumulate) {
#pragma omp parallel for collapse(2) schedule(static)
  for (i64 n = 0; n < nbatch; ++n) {
    for (int m = 0; m < M; ++m) {
      const T* ap = a + (static_cast<size_t>(n) * M + m) * K;
      const T* bp = b + static_cast<size_t>(n) * K * N;
      T* cp = c + (static_cast<size_t>(n) * M + m) * N;
      if (!accumulate)
        for (int j = 0; j < N; ++j) cp[j] = T(0);
      if (transpose_b) {
        for (int j = 0; j < N; ++j) {
          const T* brow = bp + static_cast<size_t>(j) * K;
          T acc = T(0);
#pragma omp simd reduction(+ : acc)
          for (int k = 0; k < K; ++k) acc += ap[k] * brow[k];
          cp[j] += alpha * acc;
        }
      } else {
        for (int k = 0; k < K; ++k) {
          T av = alpha * ap[k];
          const T* brow = bp + static_cast<size_t>(k) * N;
#pragma omp simd
          for (int j = 0; j < N; ++j) cp[j] += av * brow[j];
        }
      }
    }
  }
}

template <class T>
void bmm_at(const T* a, const T* b, T* out, i64 nbatch, int M, int K, int J, T alpha) {
#pragma omp parallel for schedule(static)
  for (i64 n = 0; n < nbatch; ++n) {
    const T* ap = a + static_cast<size_t>(n) * M * K;
    const T* bp = b + static_cast<size_t>(n) * M * J;
    T* op = out + static_cast<size_t>(n) * K * J;
    for (int m = 0; m < M; ++m) {
      const T* brow = bp + static_cast<size_t>(m) * J;
      for (int k = 0; k < K; ++k) {
        T av = alpha * ap[static_cast<size_t>(m) * K + k];
        T* orow = op + static_cast<size_t>(k) * J;
#pragma omp simd
        for (int j = 0; j < J; ++j) orow[j] += av * brow[j];
      }
    }
  }
}

template <class T>
void layer_norm_fwd(const T* x, const T* gamma, const T* beta, T* y, T* mean, T* rstd,
                    i64 rows, int D, T eps) {
#pragma omp parallel for schedule(static)
  for (i64 r = 0; r < rows; ++r) {
    const T* xp = x + static_cast<size_t>(r) * D;
    T* yp = y + static_cast<size_t>(r) * D;
    T mu = T(0);
#pragma omp simd reduction(+ : mu)
    for (int d = 0; d < D; ++d) mu += xp[d];
    mu /= T(D);
    T var = T(0);
#pragma omp simd reduction(+ : var)
    for (int d = 0; d < D; ++d) {
      T c = xp[d] - mu;
      var += c * c;
    }
    var /= T(D);
    T rs = T(1) / std::sqrt(var + eps);
    mean[r] = mu;
    rstd[r] = rs;
#pragma omp simd
    for (int d = 0; d < D; ++d) yp[d] = (xp[d] - mu) * rs * gamma[d] + beta[d];
  }
}

template <class T>
void layer_norm_bwd(const T* x, const T* gamma, const T* mean, const T* rstd, const T* dy,
                    T* dx, T* dgamma, T* dbeta, i64 rows, int D) {
  if (dx) {
#pragma omp parallel for schedule(static)
    for (i64 r = 0; r < rows; ++r) {
      const T* xp = x + static_cast<size_t>(r) * D;
      const T* dyp = dy + static_cast<size_t>(r) * D;
      T* dxp = dx + static_cast<size_t>(r) * D;
      T mu = mean[r], rs = rstd[r];
      T s1 = T(0), s2 = T(0);
#pragma omp simd reduction(+ : s1, s2)
      for (int d = 0; d < D; ++d) {
        T gdy = gamma[d] * dyp[d];
        T xhat = (xp[d] - mu) * rs;
        s1 += gdy;
        s2 += gdy * xhat;
      }
      s1 /= T(D);
      s2 /= T(D);
#pragma omp simd
      for (int d = 0; d < D; ++d) {
        T gdy = gamma[d] * dyp[d];
        T xhat = (xp[d] - mu) * rs;
        dxp[d] += rs * (gdy - s1 - xhat * s2);
      }
    }
  }
  if (dgamma || dbeta) {
#pragma omp parallel for schedule(static)
    for (int d = 0; d < D; ++d) {
      T ag = T(0), ab = T(0);
      for (i64 r = 0; r < rows; ++r) {
        T dyv = dy[static_cast<size_t>(r) * D + d];
        T xhat = (x[static_cast<size_t>(r) * D + d] - mean[r]) * rstd[r];
        ag += dyv * xhat;
        ab += dyv;
      }
      if (dgamma) dgamma[d] += ag;
      if (dbeta) dbeta[d] += ab;
    }
  }
}

template <class T>
void gelu_fwd(const T* x, T* y, i64 n) {
  const T inv_sqrt2 = T(0.70710678118654752440084436210485L);
#pragma omp parallel for schedule(static)
  for (i64 i = 0; i < n; ++i) y[i] = T(0.5) * x[i] * (T(1) + std::erf(x[i] * inv_sqrt2));
}

template <class T>
void gelu_bwd(const T* x, const T* dy, T* dx, i64 n) {
  const T inv_sqrt2 = T(0.70710678118654752440084436210485L);
  const T inv_sqrt2pi = T(0.39894228040143267793994605993438L);
#pragma omp parallel for schedule(static)
  for (i64 i = 0; i < n; ++i) {
    T v = x[i];
    T cdf = T(0.5) * (T(1) + std::erf(v * inv_sqrt2));
    T pdf = inv_sqrt2pi * std::exp(T(-0.5) * v * v);
    dx[i] += dy[i] * (cdf + v * pdf);
  }
}

template <class T>
void softmax_fwd(const T* x, T* y, i64 rows, int D) {
#pragma omp parallel for schedule(static)
  for (i64 r = 0; r < rows; ++r) {
    const T* xp = x + static_cast<size_t>(r) * D;
    T* yp = y + static_cast<size_t>(r) * D;
    T mx = xp[0];
    for (int d = 1; d < D; ++d)
      if (xp[d] > mx) mx = xp[d];
    T sum = T(0);
    for (int d = 0; d < D; ++d) {
      T e = std::exp(xp[d] - mx);
      yp[d] = e;
      sum += e;
    }
    T inv = T(1) / sum;
#pragma omp simd
    for (int d = 0; d < D; ++d) yp[d] *= inv;
  }
}

template <class T>
void softmax_bwd(const T* y, const T* dy, T* dx, i64 rows, int D) {
#pragma omp parallel for schedule(static)
  for (i64 r = 0; r < rows; ++r) {
    const T* yp = y + static_cast<size_t>(r) * D;
    const T* dyp = dy + static_cast<size_t>(r) * D;
    T* dxp = dx + static_cast<size_t>(r) * D;
    T dot = T(0);
#pragma omp simd reduction(+ : dot)
    for (int d = 0; d < D; ++d) dot += yp[d] * dyp[d];
#pragma omp simd
    for (int d = 0; d < D; ++d) dxp[d] += yp[d] * (dyp[d] - dot);
  }
}

template <class T>
void add(const T* a, const T* b, T* y, i64 n) {
#pragma omp parallel for schedule(static)
  for (i64 i = 0; i < n; ++i) y[i] = a[i] + b[i];
}

template <class T>
void mul(const T* a, const T* b, T* y, i64 n) {
#pragma omp parallel for schedule(static)
  for (i64 i = 0; i < n; ++i) y[i] = a[i] * b[i];
}

template <class T>
void scale(const T* a, T alpha, T* y, i64 n) {
#pragma omp parallel for schedule(static)
  for (i64 i = 0; i < n; ++i) y[i] = alpha * a[i];
}

template <class T>
void axpy(T alpha, const T* x, T* y, i64 n) {
#pragma omp parallel for schedule(static)
  for (i64 i = 0; i < n; ++i) y[i] += alpha * x[i];
}

template <class T>
void mul_acc(const T* a, const T* b, T* y, i64 n) {
#pragma omp parallel for schedule(static)
  for (i64 i = 0; i < n; ++i) y[i] += a[i] * b[i];
}

template <class T>
T reduce_sum(const T* x, i64 n) {
  i64 nchunks = (n + kChunk - 1) / kChunk;
  if (nchunks == 0) return T(0);
  std::vector<T> partial(static_cast<size_t>(nchunks), T(0));
#pragma omp parallel for schedule(static)
  for (i64 c = 0; c < nchunks; ++c) {
    i64 lo = c * kChunk, hi = lo + kChunk < n ? lo + kChunk : n;
    T acc = T(0);
    for (i64 i = lo; i < hi; ++i) acc += x[i];
    partial[static_cast<size_t>(c)] = acc;
  }
  T total = T(0);
  for (i64 c = 0; c < nchunks; ++c) total += partial[static_cast<size_t>(c)];
  return total;
}

namespace {

// Shared fixed-chunk mean reduction over an elementwise term.
template <class T, class F>
T chunked_mean(const T* a, const T* b, i64 n, F term) {
  i64 nchunks = (n + kChunk - 1) / kChunk;
  std::vector<T> partial(static_cast<size_t>(nchunks), T(0));
#pragma omp parallel for schedule(static)
  for (i64 c = 0; c < nchunks; ++c) {
    i64 lo = c * kChunk, hi = lo + kChunk < n ? lo + kChunk : n;
    T acc = T(0);
    for (i64 i = lo; i < hi; ++i) acc += term(a[i], b[i]);
    partial[static_cast<size_t>(c)] = acc;
  }
  T total = T(0);
  for (i64 c = 0; c < nchunks; ++c) total += partial[static_cast<size_t>(c)];
  return total / T(n);
}

}  // namespace

template <class T>
T l1_value(const T* a, const T* b, i64 n) {
  return chunked_mean(a, b, n, [](T av, T bv) { return std::abs(av - bv); });
}

template <class T>
void l1_grad(const T* a, const T* b, T gscale, T* da, T* db, i64 n) {
  T s = gscale / T(n);
#pragma omp parallel for schedule(static)
  for (i64 i = 0; i < n; ++i) {
    T d = a[i] - b[i];
    T g = d > T(0) ? s : (d < T(0) ? -s : T(0));  // subgradient 0 at ties
    if (da) da[i] += g;
    if (db) db[i] -= g;
  }
}

template <class T>
T charbonnier_value(const T* a, const T* b, T eps, i64 n) {
  return chunked_mean(a, b, n, [eps](T av, T bv) {
    T d = av - bv;
    return std::sqrt(d * d + eps);
  });
}

template <class T>
void charbonnier_grad(const T* a, const T* b, T eps, T gscale, T* da, T* db, i64 n) {
  T s = gscale / T(n);
#pragma omp parallel for schedule(static)
  for (i64 i = 0; i < n; ++i) {
    T d = a[i] - b[i];
    T g = s * d / std::sqrt(d * d + eps);
    if (da) da[i] += g;
    if (db) db[i] -= g;
  }
}

template <class T>
T mse_value(const T* a, const T* b, i64 n) {
  return chunked_mean(a, b, n, [](T av, T bv) {
    T d = av - bv;
    return d * d;
  });
}

template <class T>
void mse_grad(const T* a, const T* b, T gscale, T* da, T* db, i64 n) {
  T s = T(2) * gscale / T(n);
#pragma omp parallel for schedule(static)
  for (i64 i = 0; i < n; ++i) {
    T g = s * (a[i] - b[i]);
    if (da) da[i] += g;
    if (db) db[i] -= g;
  }
}

template <class T>
void adam_update(T* p, const T* g, T* m, T* v, i64 n, T lr, T beta1, T beta2, T eps, T bc1,
                 T bc2) {
#pragma omp parallel for schedule(static)
  for (i64 i = 0; i < n; ++i) {
    T gi = g[i];
    m[i] = beta1 * m[i] + (T(1) - beta1) * gi;
    v[i] = beta2 * v[i] + (T(1) - beta2) * gi * gi;
    T mhat = m[i] / bc1;
    T vhat = v[i] / bc2;
    p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
  }
}

#define HST_INSTANTIATE_KERNELS(T)                                                              \
  template void conv2d_fwd<T>(const T*, const T*, const T*, T*, int, int, int, int, int, int,  \
                              int, int, int, int);                                             \
  template void conv2d_bwd_input<T>(T*, const T*, const T*, int, int, int, int, int, int, int, \
                                    int, int, int);                                            \
  template void conv2d_bwd_weight<T>(const T*, T*, const T*, int, int, int, int, int, int,     \
                                     int, int, int, int);                                      \
  template void conv2d_bwd_bias<T>(T*, const T*, int, int, int, int);                          \
  template void linear_fwd<T>(const T*, const T*, const T*, T*, i64, int, int);                \
  template void linear_bwd_input<T>(T*, const T*, const T*, i64, int, int);                    \
  template void linear_bwd_weight<T>(const T*, T*, const T*, i64, int, int);                   \
  template void linear_bwd_bias<T>(T*, const T*, i64, int);                                    \
  template void bmm<T>(const T*, const T*, T*, i64, int, int, int, bool, T, bool);             \
  template void bmm_at<T>(const T*, const T*, T*, i64, int, int, int, T);                      \
  template void layer_norm_fwd<T>(const T*, const T*, const T*, T*, T*, T*, i64, int, T);      \
  template void layer_norm_bwd<T>(const T*, const T*, const T*, const T*, const T*, T*, T*,    \
                                  T*, i64, int);                                               \
  template void gelu_fwd<T>(const T*, T*, i64);                                                \
  template void gelu_bwd<T>(const T*, const T*, T*, i64);                                      \
  template void softmax_fwd<T>(const T*, T*, i64, int);                                        \
  template void softmax_bwd<T>(const T*, const T*, T*, i64, int);                              \
  template void add<T>(const T*, const T*, T*, i64);                                           \
  template void mul<T>(const T*, const T*, T*, i64);                                           \
  template void scale<T>(const T*, T, T*, i64);                                                \
  template void axpy<T>(T, const T*, T*, i64);                                                 \
  template void mul_acc<T>(const T*, const T*, T*, i64);                                       \
  template T reduce_sum<T>(const T*, i64);                                                     \
  template T l1_value<T>(const T*, const T*, i64);                                             \
  template void l1_grad<T>(const T*, const T*, T, T*, T*, i64);                                \
  template T charbonnier_value<T>(const T*, const T*, T, i64);                                 \
  template void charbonnier_grad<T>(const T*, const T*, T, T, T*, T*, i64);                    \
  template T mse_value<T>(const T*, const T*, i64);                                            \
  template void mse_grad<T>(const T*, const T*, T, T*, T*, i64);                               \
  template void adam_update<T>(T*, const T*, T*, T*, i64, T, T, T, T, T, T);

HST_INSTANTIATE_KERNELS(float)
HST_INSTANTIATE_KERNELS(double)

}  // namespace hst::kernels
