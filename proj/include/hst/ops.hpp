#pragma once

#include <array>
#include <vector>

#include "hst/tensor.hpp"

namespace hst::ops {

// Differentiable graph ops. Every op validates shapes, computes its result
// through hst::kernels, and, when a graph is current and any input requires
// grad, records one tape node whose backward accumulates into the inputs'
// grad buffers. Inputs are never mutated.

template <class T>
TensorT<T> add(const TensorT<T>& a, const TensorT<T>& b);
template <class T>
TensorT<T> mul(const TensorT<T>& a, const TensorT<T>& b);
template <class T>
TensorT<T> scale(const TensorT<T>& a, T alpha);
template <class T>
TensorT<T> sum(const TensorT<T>& a);

// x [B,Cin,H,W], w [Cout,Cin,K,K], bias [Cout]; zero padding, square kernel.
template <class T>
TensorT<T> conv2d(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& bias, int stride,
                  int pad);

// x [...,Din], w [Dout,Din], bias [Dout] -> [...,Dout].
template <class T>
TensorT<T> linear(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& bias);

// Normalizes the trailing axis; gamma/beta [D].
template <class T>
TensorT<T> layer_norm(const TensorT<T>& x, const TensorT<T>& gamma, const TensorT<T>& beta,
                      T eps);

template <class T>
TensorT<T> gelu(const TensorT<T>& x);

template <class T>
TensorT<T> softmax_lastdim(const TensorT<T>& x);

// a [N,M,K] with b [N,K,J] (or [N,J,K] when transpose_b) -> alpha * a@b [N,M,J].
template <class T>
TensorT<T> bmm(const TensorT<T>& a, const TensorT<T>& b, bool transpose_b, T alpha);

// [B,H,W,C] -> [B*(H/M)*(W/M), M, M, C]; H and W must be multiples of M.
template <class T>
TensorT<T> window_partition(const TensorT<T>& x, int window);
template <class T>
TensorT<T> window_reverse(const TensorT<T>& wins, int window, int B, int H, int W);

// Torus roll of a [B,H,W,C] map: out(y,x) = in((y-dy) mod H, (x-dx) mod W).
template <class T>
TensorT<T> cyclic_shift(const TensorT<T>& x, int dy, int dx);

// [B, C*r^2, H, W] -> [B, C, H*r, W*r] and its inverse.
template <class T>
TensorT<T> pixel_shuffle(const TensorT<T>& x, int r);
template <class T>
TensorT<T> pixel_unshuffle(const TensorT<T>& x, int r);

template <class T>
TensorT<T> nchw_to_nhwc(const TensorT<T>& x);
template <class T>
TensorT<T> nhwc_to_nchw(const TensorT<T>& x);

// a [B,C1,H,W] ++ b [B,C2,H,W] -> [B,C1+C2,H,W].
template <class T>
TensorT<T> concat_channels(const TensorT<T>& a, const TensorT<T>& b);

// Reflective padding of a [B,C,H,W] map (edge samples not repeated); pads
// larger than the extent fold back and forth.
template <class T>
TensorT<T> pad_reflect(const TensorT<T>& x, int top, int bottom, int left, int right);

template <class T>
TensorT<T> crop(const TensorT<T>& x, int top, int left, int h, int w);

// qkv [N,T,3C] -> {q,k,v} each [N*heads, T, C/heads]; batch index n*heads+h.
template <class T>
std::array<TensorT<T>, 3> split_qkv_heads(const TensorT<T>& qkv, int heads);
// [N*heads, T, hd] -> [N, T, heads*hd].
template <class T>
TensorT<T> merge_heads(const TensorT<T>& x, int heads);

// Flat (M^2)x(M^2) lookup into the (2M-1)^2 relative offset table.
std::vector<int> relative_index_map(int window);
// table [(2M-1)^2, heads] -> bias [heads, M^2, M^2].
template <class T>
TensorT<T> relative_bias(const TensorT<T>& table, int window, int heads);

// scores [NW*heads, T, T] + bias [heads, T, T] broadcast over windows.
template <class T>
TensorT<T> add_window_bias(const TensorT<T>& scores, const TensorT<T>& bias, int heads);
// scores [NW*heads, T, T] + mask [NW, T, T] broadcast over heads.
template <class T>
TensorT<T> add_window_mask(const TensorT<T>& scores, const TensorT<T>& mask, int heads);

// Windowed multi-head self-attention with relative position bias and an
// optional additive attention mask; scores scaled by 1/sqrt(C/heads).
// x [NW, T, C], qkv_w [3C,C], qkv_b [3C], proj_w [C,C], proj_b [C],
// rel_bias [heads,T,T], mask null or [NW,T,T].
template <class T>
TensorT<T> multi_head_attention(const TensorT<T>& x, const TensorT<T>& qkv_w,
                                const TensorT<T>& qkv_b, const TensorT<T>& proj_w,
                                const TensorT<T>& proj_b, int heads,
                                const TensorT<T>& rel_bias, const TensorT<T>* mask);

// Mean-reduced training losses (scalar outputs).
template <class T>
TensorT<T> l1_loss(const TensorT<T>& pred, const TensorT<T>& target);
template <class T>
TensorT<T> mse_loss(const TensorT<T>& pred, const TensorT<T>& target);
// charbonnier: mean(sqrt(diff^2 + eps)).
template <class T>
TensorT<T> charbonnier_loss(const TensorT<T>& pred, const TensorT<T>& target, T eps);

}  // namespace hst::ops
