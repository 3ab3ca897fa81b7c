#pragma once

#include <cstddef>

namespace hst::kernels {

using i64 = long long;

// OpenMP-parallel kernels over raw row-major buffers. Every kernel uses a
// fixed per-element accumulation order that does not depend on the thread
// count, so results are bitwise reproducible run to run. A serial naive
// mirror of each forward kernel lives in src/ref (hst::ref) for tests and
// the benchmark target.

// x [B,Cin,H,W], w [Cout,Cin,K,K], bias [Cout] or null, y [B,Cout,Ho,Wo].
// Zero padding; Ho = (H + 2p - K)/stride + 1.
template <class T>
void conv2d_fwd(const T* x, const T* w, const T* bias, T* y, int B, int Cin, int H, int W,
                int Cout, int K, int stride, int pad, int Ho, int Wo);
template <class T>
void conv2d_bwd_input(T* dx, const T* w, const T* dy, int B, int Cin, int H, int W, int Cout,
                      int K, int stride, int pad, int Ho, int Wo);
template <class T>
void conv2d_bwd_weight(const T* x, T* dw, const T* dy, int B, int Cin, int H, int W, int Cout,
                       int K, int stride, int pad, int Ho, int Wo);
template <class T>
void conv2d_bwd_bias(T* db, const T* dy, int B, int Cout, int Ho, int Wo);

// x [rows,Din], w [Dout,Din], b [Dout] or null, y [rows,Dout].
template <class T>
void linear_fwd(const T* x, const T* w, const T* b, T* y, i64 rows, int din, int dout);
template <class T>
void linear_bwd_input(T* dx, const T* w, const T* dy, i64 rows, int din, int dout);
template <class T>
void linear_bwd_weight(const T* x, T* dw, const T* dy, i64 rows, int din, int dout);
template <class T>
void linear_bwd_bias(T* db, const T* dy, i64 rows, int dout);

// a [n,M,K], b [n,K,N] (or [n,N,K] when transpose_b), c [n,M,N].
// c = alpha * a @ b(^T), accumulated into c when accumulate is set.
template <class T>
void bmm(const T* a, const T* b, T* c, i64 nbatch, int M, int K, int N, bool transpose_b,
         T alpha, bool accumulate);

// out [n,K,J] += alpha * a^T @ b with a [n,M,K], b [n,M,J] (used by bmm's
// backward for the weight-side operand).
template <class T>
void bmm_at(const T* a, const T* b, T* out, i64 nbatch, int M, int K, int J, T alpha);

// Normalizes the trailing axis of length D over `rows` rows; biased variance.
// mean/rstd hold per-row statistics for the backward pass.
template <class T>
void layer_norm_fwd(const T* x, const T* gamma, const T* beta, T* y, T* mean, T* rstd,
                    i64 rows, int D, T eps);
template <class T>
void layer_norm_bwd(const T* x, const T* gamma, const T* mean, const T* rstd, const T* dy,
                    T* dx, T* dgamma, T* dbeta, i64 rows, int D);

// Exact erf-based gelu.
template <class T>
void gelu_fwd(const T* x, T* y, i64 n);
template <class T>
void gelu_bwd(const T* x, const T* dy, T* dx, i64 n);

// Row-wise softmax over the trailing axis with max subtraction.
template <class T>
void softmax_fwd(const T* x, T* y, i64 rows, int D);
template <class T>
void softmax_bwd(const T* y, const T* dy, T* dx, i64 rows, int D);

template <class T>
void add(const T* a, const T* b, T* y, i64 n);
template <class T>
void mul(const T* a, const T* b, T* y, i64 n);
template <class T>
void scale(const T* a, T alpha, T* y, i64 n);
template <class T>
void axpy(T alpha, const T* x, T* y, i64 n);  // y += alpha * x
template <class T>
void mul_acc(const T* a, const T* b, T* y, i64 n);  // y += a * b

// Deterministic total: fixed-size chunk partials summed serially in order.
template <class T>
T reduce_sum(const T* x, i64 n);

// Mean-reduced losses; grads accumulate gscale * d(loss)/d(input) into
// non-null buffers.
template <class T>
T l1_value(const T* a, const T* b, i64 n);
template <class T>
void l1_grad(const T* a, const T* b, T gscale, T* da, T* db, i64 n);
template <class T>
T charbonnier_value(const T* a, const T* b, T eps2, i64 n);
template <class T>
void charbonnier_grad(const T* a, const T* b, T eps2, T gscale, T* da, T* db, i64 n);
template <class T>
T mse_value(const T* a, const T* b, i64 n);
template <class T>
void mse_grad(const T* a, const T* b, T gscale, T* da, T* db, i64 n);

// One bias-corrected Adam update; bc1/bc2 are 1 - beta^t for the step being
// applied.
template <class T>
void adam_update(T* p, const T* g, T* m, T* v, i64 n, T lr, T beta1, T beta2, T eps, T bc1,
                 T bc2);

}  // namespace hst::kernels
