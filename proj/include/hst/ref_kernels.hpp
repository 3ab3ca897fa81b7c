#pragma once

namespace hst::ref {

// Serial naive mirrors of the OpenMP kernels in hst::kernels, written as
// direct loop transcriptions of the math. They exist as an independent
// route for correctness tests and as the baseline in the kernel benchmark;
// nothing in the library links against them.

using i64 = long long;

template <class T>
void conv2d(const T* x, const T* w, const T* bias, T* y, int B, int Cin, int H, int W,
            int Cout, int K, int stride, int pad, int Ho, int Wo);

template <class T>
void linear(const T* x, const T* w, const T* b, T* y, i64 rows, int din, int dout);

template <class T>
void bmm(const T* a, const T* b, T* c, i64 nbatch, int M, int K, int N, bool transpose_b,
         T alpha);

template <class T>
void layer_norm(const T* x, const T* gamma, const T* beta, T* y, i64 rows, int D, T eps);

template <class T>
void softmax(const T* x, T* y, i64 rows, int D);

template <class T>
void gelu(const T* x, T* y, i64 n);

}  // namespace hst::ref
