#include "hst/ref_kernels.hpp"

#include <cmath>

namespace hst::ref {

template <class T>
void conv2d(const T* x, const T* w, const T* bias, T* y, int B, int Cin, int H, int W,
            int Cout, int K, int stride, int pad, int Ho, int Wo) {
  for (int b = 0; b < B; ++b)
    for (int oc = 0; oc < Cout; ++oc)
      for (int oh = 0; oh < Ho; ++oh)
        for (int ow = 0; ow < Wo; ++ow) {
          T acc = bias ? bias[oc] : T(0);
          for (int ic = 0; ic < Cin; ++ic)
            for (int kh = 0; kh < K; ++kh)
              for (int kw = 0; kw < K; ++kw) {
                int ih = oh * stride - pad + kh;
                int iw = ow * stride - pad + kw;
                if (ih < 0 || ih >= H || iw < 0 || iw >= W) continue;
                acc += w[((static_cast<size_t>(oc) * Cin + ic) * K + kh) * K + kw] *
                       x[((static_cast<size_t>(b) * Cin + ic) * H + ih) * W + iw];
              }
          y[((static_cast<size_t>(b) * Cout + oc) * Ho + oh) * Wo + ow] = acc;
        }
}

template <class T>
void linear(const T* x, const T* w, const T* b, T* y, i64 rows, int din, int dout) {
  for (i64 r = 0; r < rows; ++r)
    for (int o = 0; o < dout; ++o) {
      T acc = b ? b[o] : T(0);
      for (int i = 0; i < din; ++i)
        acc += x[static_cast<size_t>(r) * din + i] * w[static_cast<size_t>(o) * din + i];
      y[static_cast<size_t>(r) * dout + o] = acc;
    }
}

template <class T>
void bmm(const T* a, const T* b, T* c, i64 nbatch, int M, int K, int N, bool transpose_b,
         T alpha) {
  for (i64 n = 0; n < nbatch; ++n)
    for (int m = 0; m < M; ++m)
      for (int j = 0; j < N; ++j) {
        T acc = T(0);
        for (int k = 0; k < K; ++k) {
          T bv = transpose_b ? b[(static_cast<size_t>(n) * N + j) * K + k]
                             : b[(static_cast<size_t>(n) * K + k) * N + j];
          acc += a[(static_cast<size_t>(n) * M + m) * K + k] * bv;
        }
        c[(static_cast<size_t>(n) * M + m) * N + j] = alpha * acc;
      }
}

template <class T>
void layer_norm(const T* x, const T* gamma, const T* beta, T* y, i64 rows, int D, T eps) {
  for (i64 r = 0; r < rows; ++r) {
    const T* xp = x + static_cast<size_t>(r) * D;
    T mu = T(0);
    for (int d = 0; d < D; ++d) mu += xp[d];
    mu /= T(D);
    T var = T(0);
    for (int d = 0; d < D; ++d) var += (xp[d] - mu) * (xp[d] - mu);
    var /= T(D);
    T rs = T(1) / std::sqrt(var + eps);
    for (int d = 0; d < D; ++d)
      y[static_cast<size_t>(r) * D + d] = (xp[d] - mu) * rs * gamma[d] + beta[d];
  }
}

template <class T>
void softmax(const T* x, T* y, i64 rows, int D) {
  for (i64 r = 0; r < rows; ++r) {
    const T* xp = x + static_cast<size_t>(r) * D;
    T* yp = y + static_cast<size_t>(r) * D;
    T mx = xp[0];
    for (int d = 1; d < D; ++d) mx = xp[d] > mx ? xp[d] : mx;
    T sum = T(0);
    for (int d = 0; d < D; ++d) {
      yp[d] = std::exp(xp[d] - mx);
      sum += yp[d];
    }
    for (int d = 0; d < D; ++d) yp[d] /= sum;
  }
}

template <class T>
void gelu(const T* x, T* y, i64 n) {
  for (i64 i = 0; i < n; ++i)
    y[i] = T(0.5) * x[i] * (T(1) + std::erf(x[i] / std::sqrt(T(2))));
}

#define HST_INSTANTIATE_REF(T)                                                               \
  template void conv2d<T>(const T*, const T*, const T*, T*, int, int, int, int, int, int,   \
                          int, int, int, int);                                              \
  template void linear<T>(const T*, const T*, const T*, T*, i64, int, int);                 \
  template void bmm<T>(const T*, const T*, T*, i64, int, int, int, bool, T);                \
  template void layer_norm<T>(const T*, const T*, const T*, T*, i64, int, T);               \
  template void softmax<T>(const T*, T*, i64, int);                                         \
  template void gelu<T>(const T*, T*, i64);

HST_INSTANTIATE_REF(float)
HST_INSTANTIATE_REF(double)

}  // namespace hst::ref
