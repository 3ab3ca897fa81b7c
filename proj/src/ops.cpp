#include "hst/ops.hpp"

#include <cmath>
#include <cstring>
#include <initializer_list>
#include <memory>
#include <stdexcept>

#include "hst/kernels.hpp"

namespace hst::ops {

namespace {

using kernels::i64;

template <class T>
using StoragePtr = std::shared_ptr<typename TensorT<T>::Storage>;

template <class T>
bool track(std::initializer_list<const TensorT<T>*> inputs) {
  if (!GraphT<T>::recording()) return false;
  for (const TensorT<T>* t : inputs)
    if (t->requires_grad()) return true;
  return false;
}

// Grad buffer of an input, or null when the input does not require grad.
template <class T>
T* maybe_grad(const StoragePtr<T>& s) {
  if (!s->requires_grad) return nullptr;
  if (s->g.empty()) s->g.assign(s->v.size(), T(0));
  return s->g.data();
}

// Upstream grad of an op output; null means the output never received any
// gradient (dead branch), so the node contributes nothing.
template <class T>
const T* out_grad(const StoragePtr<T>& s) {
  return s->g.empty() ? nullptr : s->g.data();
}

template <class T>
void finish(TensorT<T>& y, bool tracked, std::function<void()> bwd) {
  if (!tracked) return;
  y.set_requires_grad(true);
  GraphT<T>::current()->record(std::move(bwd));
}

template <class T>
void require_same_shape(const TensorT<T>& a, const TensorT<T>& b, const char* op) {
  if (a.shape() != b.shape())
    throw std::invalid_argument(std::string(op) + ": shapes " + shape_str(a.shape()) + " and " +
                                shape_str(b.shape()) + " differ");
}

void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

int mod_floor(int a, int n) {
  int m = a % n;
  return m < 0 ? m + n : m;
}

// Reflective index fold without edge repetition; period 2(n-1).
int fold_reflect(int i, int n) {
  if (n == 1) return 0;
  int period = 2 * (n - 1);
  int m = ((i % period) + period) % period;
  return m < n ? m : period - m;
}

}  // namespace

template <class T>
TensorT<T> add(const TensorT<T>& a, const TensorT<T>& b) {
  require_same_shape(a, b, "add");
  bool tr = track<T>({&a, &b});
  TensorT<T> y(a.shape());
  kernels::add(a.data(), b.data(), y.data(), static_cast<i64>(y.numel()));
  auto sa = a.storage(), sb = b.storage(), sy = y.storage();
  finish(y, tr, [sa, sb, sy]() {
    const T* gy = out_grad<T>(sy);
    if (!gy) return;
    i64 n = static_cast<i64>(sy->v.size());
    if (T* ga = maybe_grad<T>(sa)) kernels::axpy(T(1), gy, ga, n);
    if (T* gb = maybe_grad<T>(sb)) kernels::axpy(T(1), gy, gb, n);
  });
  return y;
}

template <class T>
TensorT<T> mul(const TensorT<T>& a, const TensorT<T>& b) {
  require_same_shape(a, b, "mul");
  bool tr = track<T>({&a, &b});
  TensorT<T> y(a.shape());
  kernels::mul(a.data(), b.data(), y.data(), static_cast<i64>(y.numel()));
  auto sa = a.storage(), sb = b.storage(), sy = y.storage();
  finish(y, tr, [sa, sb, sy]() {
    const T* gy = out_grad<T>(sy);
    if (!gy) return;
    i64 n = static_cast<i64>(sy->v.size());
    if (T* ga = maybe_grad<T>(sa)) kernels::mul_acc(gy, sb->v.data(), ga, n);
    if (T* gb = maybe_grad<T>(sb)) kernels::mul_acc(gy, sa->v.data(), gb, n);
  });
  return y;
}

template <class T>
TensorT<T> scale(const TensorT<T>& a, T alpha) {
  bool tr = track<T>({&a});
  TensorT<T> y(a.shape());
  kernels::scale(a.data(), alpha, y.data(), static_cast<i64>(y.numel()));
  auto sa = a.storage();
  auto sy = y.storage();
  finish(y, tr, [sa, sy, alpha]() {
    const T* gy = out_grad<T>(sy);
    if (!gy) return;
    if (T* ga = maybe_grad<T>(sa)) kernels::axpy(alpha, gy, ga, static_cast<i64>(sy->v.size()));
  });
  return y;
}

template <class T>
TensorT<T> sum(const TensorT<T>& a) {
  bool tr = track<T>({&a});
  TensorT<T> y = TensorT<T>::scalar_tensor(kernels::reduce_sum(a.data(), static_cast<i64>(a.numel())));
  auto sa = a.storage();
  auto sy = y.storage();
  finish(y, tr, [sa, sy]() {
    const T* gy = out_grad<T>(sy);
    if (!gy) return;
    if (T* ga = maybe_grad<T>(sa)) {
      T g = gy[0];
      i64 n = static_cast<i64>(sa->v.size());
#pragma omp parallel for schedule(static)
      for (i64 i = 0; i < n; ++i) ga[i] += g;
    }
  });
  return y;
}

template <class T>
TensorT<T> conv2d(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& bias, int stride,
                  int pad) {
  require(x.ndim() == 4, "conv2d: input must be [B,C,H,W], got " + shape_str(x.shape()));
  require(w.ndim() == 4 && w.dim(2) == w.dim(3),
          "conv2d: weight must be [Cout,Cin,K,K], got " + shape_str(w.shape()));
  require(w.dim(1) == x.dim(1), "conv2d: weight expects " + std::to_string(w.dim(1)) +
                                    " input channels, input has " + std::to_string(x.dim(1)));
  require(bias.ndim() == 1 && bias.dim(0) == w.dim(0),
          "conv2d: bias must be [Cout], got " + shape_str(bias.shape()));
  require(stride >= 1 && pad >= 0, "conv2d: stride must be >= 1 and pad >= 0");
  int B = x.dim(0), Cin = x.dim(1), H = x.dim(2), W = x.dim(3);
  int Cout = w.dim(0), K = w.dim(2);
  require(H + 2 * pad >= K && W + 2 * pad >= K,
          "conv2d: kernel " + std::to_string(K) + " exceeds padded input " + shape_str(x.shape()));
  int Ho = (H + 2 * pad - K) / stride + 1;
  int Wo = (W + 2 * pad - K) / stride + 1;

  bool tr = track<T>({&x, &w, &bias});
  TensorT<T> y({B, Cout, Ho, Wo});
  kernels::conv2d_fwd(x.data(), w.data(), bias.data(), y.data(), B, Cin, H, W, Cout, K, stride,
                      pad, Ho, Wo);
  auto sx = x.storage(), sw = w.storage(), sb = bias.storage(), sy = y.storage();
  finish(y, tr, [sx, sw, sb, sy, B, Cin, H, W, Cout, K, stride, pad, Ho, Wo]() {
    const T* gy = out_grad<T>(sy);
    if (!gy) return;
    if (T* gx = maybe_grad<T>(sx))
      kernels::conv2d_bwd_input(gx, sw->v.data(), gy, B, Cin, H, W, Cout, K, stride, pad, Ho, Wo);
    if (T* gw = maybe_grad<T>(sw))
      kernels::conv2d_bwd_weight(sx->v.data(), gw, gy, B, Cin, H, W, Cout, K, stride, pad, Ho, Wo);
    if (T* gb = maybe_grad<T>(sb)) kernels::conv2d_bwd_bias(gb, gy, B, Cout, Ho, Wo);
  });
  return y;
}

template <class T>
TensorT<T> linear(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& bias) {
  require(x.ndim() >= 2, "linear: input must have at least 2 axes, got " + shape_str(x.shape()));
  require(w.ndim() == 2, "linear: weight must be [Dout,Din], got " + shape_str(w.shape()));
  int din = w.dim(1), dout = w.dim(0);
  require(x.dim(x.ndim() - 1) == din,
          "linear: input features " + std::to_string(x.dim(x.ndim() - 1)) +
              " do not match weight Din " + std::to_string(din));
  require(bias.ndim() == 1 && bias.dim(0) == dout,
          "linear: bias must be [Dout], got " + shape_str(bias.shape()));
  i64 rows = static_cast<i64>(x.numel()) / din;

  std::vector<int> out_shape = x.shape();
  out_shape.back() = dout;
  bool tr = track<T>({&x, &w, &bias});
  TensorT<T> y(out_shape);
  kernels::linear_fwd(x.data(), w.data(), bias.data(), y.data(), rows, din, dout);
  auto sx = x.storage(), sw = w.storage(), sb = bias.storage(), sy = y.storage();
  finish(y, tr, [sx, sw, sb, sy, rows, din, dout]() {
    const T* gy = out_grad<T>(sy);
    if (!gy) return;
    if (T* gx = maybe_grad<T>(sx)) kernels::linear_bwd_input(gx, sw->v.data(), gy, rows, din, dout);
    if (T* gw = maybe_grad<T>(sw)) kernels::linear_bwd_weight(sx->v.data(), gw, gy, rows, din, dout);
    if (T* gb = maybe_grad<T>(sb)) kernels::linear_bwd_bias(gb, gy, rows, dout);
  });
  return y;
}

template <class T>
TensorT<T> layer_norm(const TensorT<T>& x, const TensorT<T>& gamma, const TensorT<T>& beta,
                      T eps) {
  require(x.ndim() >= 1, "layer_norm: undefined input");
  int D = x.dim(x.ndim() - 1);
  require(gamma.ndim() == 1 && gamma.dim(0) == D,
          "layer_norm: gamma must be [" + std::to_string(D) + "], got " + shape_str(gamma.shape()));
  require(beta.ndim() == 1 && beta.dim(0) == D,
          "layer_norm: beta must be [" + std::to_string(D) + "], got " + shape_str(beta.shape()));
  require(eps > T(0), "layer_norm: eps must be positive");
  i64 rows = static_cast<i64>(x.numel()) / D;

  bool tr = track<T>({&x, &gamma, &beta});
  TensorT<T> y(x.shape());
  auto mean = std::make_shared<std::vector<T>>(static_cast<size_t>(rows));
  auto rstd = std::make_shared<std::vector<T>>(static_cast<size_t>(rows));
  kernels::layer_norm_fwd(x.data(), gamma.data(), beta.data(), y.data(), mean->data(),
                          rstd->data(), rows, D, eps);
  auto sx = x.storage(), sg = gamma.storage(), sb = beta.storage(), sy = y.storage();
  finish(y, tr, [sx, sg, sb, sy, mean, rstd, rows, D]() {
    const T* gy = out_grad<T>(sy);
    if (!gy) return;
    kernels::layer_norm_bwd(sx->v.data(), sg->v.data(), mean->data(), rstd->data(), gy,
                            maybe_grad<T>(sx), maybe_grad<T>(sg), maybe_grad<T>(sb), rows, D);
  });
  return y;
}

template <class T>
TensorT<T> gelu(const TensorT<T>& x) {
  bool tr = track<T>({&x});
  TensorT<T> y(x.shape());
  kernels::gelu_fwd(x.data(), y.data(), static_cast<i64>(x.numel()));
  auto sx = x.storage();
  auto sy = y.storage();
  finish(y, tr, [sx, sy]() {
    const T* gy = out_grad<T>(sy);
    if (!gy) return;
    if (T* gx = maybe_grad<T>(sx))
      kernels::gelu_bwd(sx->v.data(), gy, gx, static_cast<i64>(sx->v.size()));
  });
  return y;
}

template <class T>
TensorT<T> softmax_lastdim(const TensorT<T>& x) {
  require(x.ndim() >= 1, "softmax: undefined input");
  int D = x.dim(x.ndim() - 1);
  i64 rows = static_cast<i64>(x.numel()) / D;
  bool tr = track<T>({&x});
  TensorT<T> y(x.shape());
  kernels::softmax_fwd(x.data(), y.data(), rows, D);
  auto sx = x.storage();
  auto sy = y.storage();
  finish(y, tr, [sx, sy, rows, D]() {
    const T* gy = out_grad<T>(sy);
    if (!gy) return;
    if (T* gx = maybe_grad<T>(sx)) kernels::softmax_bwd(sy->v.data(), gy, gx, rows, D);
  });
  return y;
}

template <class T>
TensorT<T> bmm(const TensorT<T>& a, const TensorT<T>& b, bool transpose_b, T alpha) {
  require(a.ndim() == 3 && b.ndim() == 3,
          "bmm: operands must be rank 3, got " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
  require(a.dim(0) == b.dim(0), "bmm: batch sizes differ: " + shape_str(a.shape()) + " vs " +
                                    shape_str(b.shape()));
  i64 nb = a.dim(0);
  int M = a.dim(1), K = a.dim(2);
  int J = transpose_b ? b.dim(1) : b.dim(2);
  int bk = transpose_b ? b.dim(2) : b.dim(1);
  require(bk == K, "bmm: inner extents differ: " + shape_str(a.shape()) + " vs " +
                       shape_str(b.shape()) + (transpose_b ? " (transposed)" : ""));

  bool tr = track<T>({&a, &b});
  TensorT<T> c({a.dim(0), M, J});
  kernels::bmm(a.data(), b.data(), c.data(), nb, M, K, J, transpose_b, alpha, false);
  auto sa = a.storage(), sb = b.storage(), sc = c.storage();
  finish(c, tr, [sa, sb, sc, nb, M, K, J, transpose_b, alpha]() {
    const T* gc = out_grad<T>(sc);
    if (!gc) return;
    if (transpose_b) {
      // c = alpha a b^T: da = alpha dc b, db = alpha dc^T a.
      if (T* ga = maybe_grad<T>(sa))
        kernels::bmm(gc, sb->v.data(), ga, nb, M, J, K, false, alpha, true);
      if (T* gb = maybe_grad<T>(sb)) kernels::bmm_at(gc, sa->v.data(), gb, nb, M, J, K, alpha);
    } else {
      // c = alpha a b: da = alpha dc b^T, db = alpha a^T dc.
      if (T* ga = maybe_grad<T>(sa))
        kernels::bmm(gc, sb->v.data(), ga, nb, M, J, K, true, alpha, true);
      if (T* gb = maybe_grad<T>(sb)) kernels::bmm_at(sa->v.data(), gc, gb, nb, M, K, J, alpha);
    }
  });
  return c;
}

namespace {

// Shared plumbing for bijective rearrangements: forward copies rows through
// an index map, backward accumulates through the same map.
struct RowMap {
  // each entry: (dst_offset, src_offset, run_length)
  std::vector<std::array<size_t, 3>> runs;
};

template <class T>
TensorT<T> apply_row_map(const TensorT<T>& x, std::vector<int> out_shape,
                         std::shared_ptr<RowMap> map, bool tracked) {
  TensorT<T> y(std::move(out_shape));
  T* yp = y.data();
  const T* xp = x.data();
  i64 nruns = static_cast<i64>(map->runs.size());
#pragma omp parallel for schedule(static)
  for (i64 i = 0; i < nruns; ++i) {
    const auto& r = map->runs[static_cast<size_t>(i)];
    std::memcpy(yp + r[0], xp + r[1], r[2] * sizeof(T));
  }
  auto sx = x.storage();
  auto sy = y.storage();
  finish(y, tracked, [sx, sy, map]() {
    const T* gy = out_grad<T>(sy);
    if (!gy) return;
    T* gx = maybe_grad<T>(sx);
    if (!gx) return;
    i64 nruns = static_cast<i64>(map->runs.size());
    // Bijective map: every source element appears in exactly one run, so
    // parallel accumulation is race-free.
#pragma omp parallel for schedule(static)
    for (i64 i = 0; i < nruns; ++i) {
      const auto& r = map->runs[static_cast<size_t>(i)];
      const T* src = gy + r[0];
      T* dst = gx + r[1];
      for (size_t k = 0; k < r[2]; ++k) dst[k] += src[k];
    }
  });
  return y;
}

}  // namespace

template <class T>
TensorT<T> window_partition(const TensorT<T>& x, int window) {
  require(x.ndim() == 4, "window_partition: input must be [B,H,W,C], got " + shape_str(x.shape()));
  require(window >= 1, "window_partition: window must be >= 1");
  int B = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
  require(H % window == 0 && W % window == 0,
          "window_partition: spatial extents " + std::to_string(H) + "x" + std::to_string(W) +
              " are not multiples of window " + std::to_string(window));
  int th = H / window, tw = W / window;
  int nw = B * th * tw;

  auto map = std::make_shared<RowMap>();
  map->runs.reserve(static_cast<size_t>(nw) * window);
  size_t run = static_cast<size_t>(window) * C;
  for (int b = 0; b < B; ++b)
    for (int ty = 0; ty < th; ++ty)
      for (int tx = 0; tx < tw; ++tx) {
        size_t win = (static_cast<size_t>(b) * th + ty) * tw + tx;
        for (int wy = 0; wy < window; ++wy) {
          size_t dst = (win * window + wy) * run;
          size_t src = ((static_cast<size_t>(b) * H + ty * window + wy) * W + tx * window) * C;
          map->runs.push_back({dst, src, run});
        }
      }
  return apply_row_map(x, {nw, window, window, C}, map, track<T>({&x}));
}

template <class T>
TensorT<T> window_reverse(const TensorT<T>& wins, int window, int B, int H, int W) {
  require(wins.ndim() == 4, "window_reverse: input must be [NW,M,M,C], got " + shape_str(wins.shape()));
  require(window >= 1 && wins.dim(1) == window && wins.dim(2) == window,
          "window_reverse: window extents " + shape_str(wins.shape()) + " do not match window " +
              std::to_string(window));
  require(H % window == 0 && W % window == 0,
          "window_reverse: target extents are not multiples of the window");
  int th = H / window, tw = W / window, C = wins.dim(3);
  require(wins.dim(0) == B * th * tw,
          "window_reverse: window count " + std::to_string(wins.dim(0)) + " does not tile " +
              std::to_string(B) + "x" + std::to_string(H) + "x" + std::to_string(W));

  auto map = std::make_shared<RowMap>();
  map->runs.reserve(static_cast<size_t>(wins.dim(0)) * window);
  size_t run = static_cast<size_t>(window) * C;
  for (int b = 0; b < B; ++b)
    for (int ty = 0; ty < th; ++ty)
      for (int tx = 0; tx < tw; ++tx) {
        size_t win = (static_cast<size_t>(b) * th + ty) * tw + tx;
        for (int wy = 0; wy < window; ++wy) {
          size_t dst = ((static_cast<size_t>(b) * H + ty * window + wy) * W + tx * window) * C;
          size_t src = (win * window + wy) * run;
          map->runs.push_back({dst, src, run});
        }
      }
  return apply_row_map(wins, {B, H, W, C}, map, track<T>({&wins}));
}

template <class T>
TensorT<T> cyclic_shift(const TensorT<T>& x, int dy, int dx) {
  require(x.ndim() == 4, "cyclic_shift: input must be [B,H,W,C], got " + shape_str(x.shape()));
  int B = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
  int sy = mod_floor(dy, H), sx = mod_floor(dx, W);

  auto map = std::make_shared<RowMap>();
  map->runs.reserve(static_cast<size_t>(B) * H * 2);
  for (int b = 0; b < B; ++b)
    for (int y = 0; y < H; ++y) {
      int ysrc = mod_floor(y - sy, H);
      size_t dst = (static_cast<size_t>(b) * H + y) * W * C;
      size_t src = (static_cast<size_t>(b) * H + ysrc) * W * C;
      // out[y][x] = in[ysrc][(x - sx) mod W]: two contiguous row segments.
      if (sx == 0) {
        map->runs.push_back({dst, src, static_cast<size_t>(W) * C});
      } else {
        size_t head = static_cast<size_t>(sx) * C;  // out[0..sx) <- in[W-sx..W)
        map->runs.push_back({dst, src + static_cast<size_t>(W - sx) * C, head});
        map->runs.push_back({dst + head, src, static_cast<size_t>(W - sx) * C});
      }
    }
  return apply_row_map(x, x.shape(), map, track<T>({&x}));
}

template <class T>
TensorT<T> pixel_shuffle(const TensorT<T>& x, int r) {
  require(x.ndim() == 4, "pixel_shuffle: input must be [B,C,H,W], got " + shape_str(x.shape()));
  require(r >= 1, "pixel_shuffle: factor must be >= 1");
  int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  require(C % (r * r) == 0, "pixel_shuffle: channels " + std::to_string(C) +
                                " not divisible by r^2 = " + std::to_string(r * r));
  int Co = C / (r * r);

  auto map = std::make_shared<RowMap>();
  map->runs.reserve(static_cast<size_t>(B) * C * H);
  for (int b = 0; b < B; ++b)
    for (int co = 0; co < Co; ++co)
      for (int iy = 0; iy < r; ++iy)
        for (int ix = 0; ix < r; ++ix) {
          int ci = co * r * r + iy * r + ix;
          for (int h = 0; h < H; ++h)
            for (int w = 0; w < W; ++w) {
              size_t dst =
                  ((static_cast<size_t>(b) * Co + co) * (H * r) + h * r + iy) * (W * r) + w * r + ix;
              size_t src = ((static_cast<size_t>(b) * C + ci) * H + h) * W + w;
              map->runs.push_back({dst, src, 1});
            }
        }
  return apply_row_map(x, {B, Co, H * r, W * r}, map, track<T>({&x}));
}

template <class T>
TensorT<T> pixel_unshuffle(const TensorT<T>& x, int r) {
  require(x.ndim() == 4, "pixel_unshuffle: input must be [B,C,H,W], got " + shape_str(x.shape()));
  require(r >= 1, "pixel_unshuffle: factor must be >= 1");
  int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  require(H % r == 0 && W % r == 0, "pixel_unshuffle: spatial extents " + std::to_string(H) + "x" +
                                        std::to_string(W) + " not divisible by " + std::to_string(r));
  int Ho = H / r, Wo = W / r;

  auto map = std::make_shared<RowMap>();
  map->runs.reserve(static_cast<size_t>(B) * C * r * r * Ho);
  for (int b = 0; b < B; ++b)
    for (int c = 0; c < C; ++c)
      for (int iy = 0; iy < r; ++iy)
        for (int ix = 0; ix < r; ++ix) {
          int co = c * r * r + iy * r + ix;
          for (int h = 0; h < Ho; ++h)
            for (int w = 0; w < Wo; ++w) {
              size_t dst = ((static_cast<size_t>(b) * C * r * r + co) * Ho + h) * Wo + w;
              size_t src = ((static_cast<size_t>(b) * C + c) * H + h * r + iy) * W + w * r + ix;
              map->runs.push_back({dst, src, 1});
            }
        }
  return apply_row_map(x, {B, C * r * r, Ho, Wo}, map, track<T>({&x}));
}

template <class T>
TensorT<T> nchw_to_nhwc(const TensorT<T>& x) {
  require(x.ndim() == 4, "nchw_to_nhwc: input must be rank 4, got " + shape_str(x.shape()));
  int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  auto map = std::make_shared<RowMap>();
  map->runs.reserve(static_cast<size_t>(B) * C * H);
  for (int b = 0; b < B; ++b)
    for (int c = 0; c < C; ++c)
      for (int h = 0; h < H; ++h)
        for (int w = 0; w < W; ++w) {
          size_t dst = ((static_cast<size_t>(b) * H + h) * W + w) * C + c;
          size_t src = ((static_cast<size_t>(b) * C + c) * H + h) * W + w;
          map->runs.push_back({dst, src, 1});
        }
  return apply_row_map(x, {B, H, W, C}, map, track<T>({&x}));
}

template <class T>
TensorT<T> nhwc_to_nchw(const TensorT<T>& x) {
  require(x.ndim() == 4, "nhwc_to_nchw: input must be rank 4, got " + shape_str(x.shape()));
  int B = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
  auto map = std::make_shared<RowMap>();
  map->runs.reserve(static_cast<size_t>(B) * C * H);
  for (int b = 0; b < B; ++b)
    for (int c = 0; c < C; ++c)
      for (int h = 0; h < H; ++h)
        for (int w = 0; w < W; ++w) {
          size_t dst = ((static_cast<size_t>(b) * C + c) * H + h) * W + w;
          size_t src = ((static_cast<size_t>(b) * H + h) * W + w) * C + c;
          map->runs.push_back({dst, src, 1});
        }
  return apply_row_map(x, {B, C, H, W}, map, track<T>({&x}));
}

template <class T>
TensorT<T> concat_channels(const TensorT<T>& a, const TensorT<T>& b) {
  require(a.ndim() == 4 && b.ndim() == 4,
          "concat_channels: inputs must be rank 4, got " + shape_str(a.shape()) + " and " +
              shape_str(b.shape()));
  require(a.dim(0) == b.dim(0) && a.dim(2) == b.dim(2) && a.dim(3) == b.dim(3),
          "concat_channels: batch/spatial extents differ: " + shape_str(a.shape()) + " vs " +
              shape_str(b.shape()));
  int B = a.dim(0), C1 = a.dim(1), C2 = b.dim(1), H = a.dim(2), W = a.dim(3);
  size_t plane = static_cast<size_t>(H) * W;

  bool tr = track<T>({&a, &b});
  TensorT<T> y({B, C1 + C2, H, W});
  T* yp = y.data();
#pragma omp parallel for schedule(static)
  for (int bi = 0; bi < B; ++bi) {
    std::memcpy(yp + static_cast<size_t>(bi) * (C1 + C2) * plane,
                a.data() + static_cast<size_t>(bi) * C1 * plane, C1 * plane * sizeof(T));
    std::memcpy(yp + (static_cast<size_t>(bi) * (C1 + C2) + C1) * plane,
                b.data() + static_cast<size_t>(bi) * C2 * plane, C2 * plane * sizeof(T));
  }
  auto sa = a.storage(), sb = b.storage(), sy = y.storage();
  finish(y, tr, [sa, sb, sy, B, C1, C2, plane]() {
    const T* gy = out_grad<T>(sy);
    if (!gy) return;
    T* ga = maybe_grad<T>(sa);
    T* gb = maybe_grad<T>(sb);
#pragma omp parallel for schedule(static)
    for (int bi = 0; bi < B; ++bi) {
      if (ga) {
        const T* src = gy + static_cast<size_t>(bi) * (C1 + C2) * plane;
        T* dst = ga + static_cast<size_t>(bi) * C1 * plane;
        for (size_t i = 0; i < C1 * plane; ++i) dst[i] += src[i];
      }
      if (gb) {
        const T* src = gy + (static_cast<size_t>(bi) * (C1 + C2) + C1) * plane;
        T* dst = gb + static_cast<size_t>(bi) * C2 * plane;
        for (size_t i = 0; i < C2 * plane; ++i) dst[i] += src[i];
      }
    }
  });
  return y;
}

template <class T>
TensorT<T> pad_reflect(const TensorT<T>& x, int top, int bottom, int left, int right) {
  require(x.ndim() == 4, "pad_reflect: input must be [B,C,H,W], got " + shape_str(x.shape()));
  require(top >= 0 && bottom >= 0 && left >= 0 && right >= 0, "pad_reflect: pads must be >= 0");
  int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  int Ho = H + top + bottom, Wo = W + left + right;

  // Precompute folded source coordinates once per axis.
  auto ymap = std::make_shared<std::vector<int>>(static_cast<size_t>(Ho));
  auto xmap = std::make_shared<std::vector<int>>(static_cast<size_t>(Wo));
  for (int y = 0; y < Ho; ++y) (*ymap)[static_cast<size_t>(y)] = fold_reflect(y - top, H);
  for (int xq = 0; xq < Wo; ++xq) (*xmap)[static_cast<size_t>(xq)] = fold_reflect(xq - left, W);

  bool tr = track<T>({&x});
  TensorT<T> y({B, C, Ho, Wo});
  const T* xp = x.data();
  T* yp = y.data();
#pragma omp parallel for collapse(2) schedule(static)
  for (int b = 0; b < B; ++b)
    for (int c = 0; c < C; ++c) {
      const T* xs = xp + (static_cast<size_t>(b) * C + c) * H * W;
      T* ys = yp + (static_cast<size_t>(b) * C + c) * Ho * Wo;
      for (int yq = 0; yq < Ho; ++yq) {
        const T* xrow = xs + static_cast<size_t>((*ymap)[static_cast<size_t>(yq)]) * W;
        T* yrow = ys + static_cast<size_t>(yq) * Wo;
        for (int xq = 0; xq < Wo; ++xq) yrow[xq] = xrow[(*xmap)[static_cast<size_t>(xq)]];
      }
    }
  auto sx = x.storage();
  auto sy = y.storage();
  finish(y, tr, [sx, sy, ymap, xmap, B, C, H, W, Ho, Wo]() {
    const T* gy = out_grad<T>(sy);
    if (!gy) return;
    T* gx = maybe_grad<T>(sx);
    if (!gx) return;
    // Many padded positions can fold onto one source sample; each (b,c) slab
    // is owned by one iteration, so the scatter-add stays deterministic.
#pragma omp parallel for collapse(2) schedule(static)
    for (int b = 0; b < B; ++b)
      for (int c = 0; c < C; ++c) {
        const T* gys = gy + (static_cast<size_t>(b) * C + c) * Ho * Wo;
        T* gxs = gx + (static_cast<size_t>(b) * C + c) * H * W;
        for (int yq = 0; yq < Ho; ++yq) {
          T* gxrow = gxs + static_cast<size_t>((*ymap)[static_cast<size_t>(yq)]) * W;
          const T* gyrow = gys + static_cast<size_t>(yq) * Wo;
          for (int xq = 0; xq < Wo; ++xq) gxrow[(*xmap)[static_cast<size_t>(xq)]] += gyrow[xq];
        }
      }
  });
  return y;
}

template <class T>
TensorT<T> crop(const TensorT<T>& x, int top, int left, int h, int w) {
  require(x.ndim() == 4, "crop: input must be [B,C,H,W], got " + shape_str(x.shape()));
  require(h >= 1 && w >= 1 && top >= 0 && left >= 0, "crop: window must be non-empty and in range");
  int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  require(top + h <= H && left + w <= W, "crop: window " + std::to_string(top) + "+" +
                                             std::to_string(h) + "," + std::to_string(left) + "+" +
                                             std::to_string(w) + " exceeds " + shape_str(x.shape()));
  auto map = std::make_shared<RowMap>();
  map->runs.reserve(static_cast<size_t>(B) * C * h);
  for (int b = 0; b < B; ++b)
    for (int c = 0; c < C; ++c)
      for (int y = 0; y < h; ++y) {
        size_t dst = ((static_cast<size_t>(b) * C + c) * h + y) * w;
        size_t src = ((static_cast<size_t>(b) * C + c) * H + top + y) * W + left;
        map->runs.push_back({dst, src, static_cast<size_t>(w)});
      }
  return apply_row_map(x, {B, C, h, w}, map, track<T>({&x}));
}

template <class T>
std::array<TensorT<T>, 3> split_qkv_heads(const TensorT<T>& qkv, int heads) {
  require(qkv.ndim() == 3, "split_qkv_heads: input must be [N,T,3C], got " + shape_str(qkv.shape()));
  require(qkv.dim(2) % 3 == 0, "split_qkv_heads: trailing axis " + std::to_string(qkv.dim(2)) +
                                   " is not a q/k/v triple");
  int N = qkv.dim(0), Tk = qkv.dim(1), C = qkv.dim(2) / 3;
  require(heads >= 1 && C % heads == 0, "split_qkv_heads: heads " + std::to_string(heads) +
                                            " must divide channels " + std::to_string(C));
  int hd = C / heads;

  bool tr = track<T>({&qkv});
  TensorT<T> q({N * heads, Tk, hd}), k({N * heads, Tk, hd}), v({N * heads, Tk, hd});
  const T* src = qkv.data();
  T* outs[3] = {q.data(), k.data(), v.data()};
#pragma omp parallel for collapse(2) schedule(static)
  for (int n = 0; n < N; ++n)
    for (int t = 0; t < Tk; ++t) {
      const T* row = src + (static_cast<size_t>(n) * Tk + t) * 3 * C;
      for (int part = 0; part < 3; ++part)
        for (int h = 0; h < heads; ++h) {
          T* dst = outs[part] +
                   ((static_cast<size_t>(n) * heads + h) * Tk + t) * hd;
          std::memcpy(dst, row + part * C + h * hd, static_cast<size_t>(hd) * sizeof(T));
        }
    }

  if (tr) {
    q.set_requires_grad(true);
    k.set_requires_grad(true);
    v.set_requires_grad(true);
    auto sq = q.storage();
    auto sk = k.storage();
    auto sv = v.storage();
    auto sin = qkv.storage();
    GraphT<T>::current()->record([sq, sk, sv, sin, N, Tk, C, heads, hd]() {
      T* gin = maybe_grad<T>(sin);
      if (!gin) return;
      const T* gs[3] = {out_grad<T>(sq), out_grad<T>(sk), out_grad<T>(sv)};
#pragma omp parallel for collapse(2) schedule(static)
      for (int n = 0; n < N; ++n)
        for (int t = 0; t < Tk; ++t) {
          T* row = gin + (static_cast<size_t>(n) * Tk + t) * 3 * C;
          for (int part = 0; part < 3; ++part) {
            if (!gs[part]) continue;
            for (int h = 0; h < heads; ++h) {
              const T* src2 = gs[part] + ((static_cast<size_t>(n) * heads + h) * Tk + t) * hd;
              T* dst = row + part * C + h * hd;
              for (int e = 0; e < hd; ++e) dst[e] += src2[e];
            }
          }
        }
    });
  }
  return {std::move(q), std::move(k), std::move(v)};
}

template <class T>
TensorT<T> merge_heads(const TensorT<T>& x, int heads) {
  require(x.ndim() == 3, "merge_heads: input must be [N*heads,T,hd], got " + shape_str(x.shape()));
  require(heads >= 1 && x.dim(0) % heads == 0,
          "merge_heads: leading extent " + std::to_string(x.dim(0)) + " not divisible by heads " +
              std::to_string(heads));
  int N = x.dim(0) / heads, Tk = x.dim(1), hd = x.dim(2);

  auto map = std::make_shared<RowMap>();
  map->runs.reserve(static_cast<size_t>(N) * heads * Tk);
  for (int n = 0; n < N; ++n)
    for (int h = 0; h < heads; ++h)
      for (int t = 0; t < Tk; ++t) {
        size_t dst = (static_cast<size_t>(n) * Tk + t) * (heads * hd) + static_cast<size_t>(h) * hd;
        size_t src = ((static_cast<size_t>(n) * heads + h) * Tk + t) * hd;
        map->runs.push_back({dst, src, static_cast<size_t>(hd)});
      }
  return apply_row_map(x, {N, Tk, heads * hd}, map, track<T>({&x}));
}

std::vector<int> relative_index_map(int window) {
  int M = window;
  int Tk = M * M;
  std::vector<int> idx(static_cast<size_t>(Tk) * Tk);
  for (int i = 0; i < Tk; ++i) {
    int yi = i / M, xi = i % M;
    for (int j = 0; j < Tk; ++j) {
      int yj = j / M, xj = j % M;
      int dy = yi - yj + M - 1;
      int dx = xi - xj + M - 1;
      idx[static_cast<size_t>(i) * Tk + j] = dy * (2 * M - 1) + dx;
    }
  }
  return idx;
}

template <class T>
TensorT<T> relative_bias(const TensorT<T>& table, int window, int heads) {
  int span = 2 * window - 1;
  require(table.ndim() == 2 && table.dim(0) == span * span && table.dim(1) == heads,
          "relative_bias: table must be [(2M-1)^2,heads] = [" + std::to_string(span * span) + "," +
              std::to_string(heads) + "], got " + shape_str(table.shape()));
  int Tk = window * window;
  auto idx = std::make_shared<std::vector<int>>(relative_index_map(window));

  bool tr = track<T>({&table});
  TensorT<T> out({heads, Tk, Tk});
  const T* tp = table.data();
  T* op = out.data();
#pragma omp parallel for schedule(static)
  for (int h = 0; h < heads; ++h)
    for (size_t ij = 0; ij < static_cast<size_t>(Tk) * Tk; ++ij)
      op[static_cast<size_t>(h) * Tk * Tk + ij] = tp[static_cast<size_t>((*idx)[ij]) * heads + h];
  auto st = table.storage();
  auto so = out.storage();
  finish(out, tr, [st, so, idx, heads, Tk]() {
    const T* go = out_grad<T>(so);
    if (!go) return;
    T* gt = maybe_grad<T>(st);
    if (!gt) return;
#pragma omp parallel for schedule(static)
    for (int h = 0; h < heads; ++h)
      for (size_t ij = 0; ij < static_cast<size_t>(Tk) * Tk; ++ij)
        gt[static_cast<size_t>((*idx)[ij]) * heads + h] += go[static_cast<size_t>(h) * Tk * Tk + ij];
  });
  return out;
}

template <class T>
TensorT<T> add_window_bias(const TensorT<T>& scores, const TensorT<T>& bias, int heads) {
  require(scores.ndim() == 3, "add_window_bias: scores must be [NW*heads,T,T], got " +
                                  shape_str(scores.shape()));
  require(heads >= 1 && scores.dim(0) % heads == 0,
          "add_window_bias: leading extent not divisible by heads");
  require(bias.ndim() == 3 && bias.dim(0) == heads && bias.dim(1) == scores.dim(1) &&
              bias.dim(2) == scores.dim(2),
          "add_window_bias: bias " + shape_str(bias.shape()) + " does not match scores " +
              shape_str(scores.shape()));
  int NW = scores.dim(0) / heads;
  size_t tt = static_cast<size_t>(scores.dim(1)) * scores.dim(2);

  bool tr = track<T>({&scores, &bias});
  TensorT<T> y(scores.shape());
  const T* sp = scores.data();
  const T* bp = bias.data();
  T* yp = y.data();
#pragma omp parallel for collapse(2) schedule(static)
  for (int w = 0; w < NW; ++w)
    for (int h = 0; h < heads; ++h) {
      size_t off = (static_cast<size_t>(w) * heads + h) * tt;
      const T* brow = bp + static_cast<size_t>(h) * tt;
      for (size_t i = 0; i < tt; ++i) yp[off + i] = sp[off + i] + brow[i];
    }
  auto ss = scores.storage(), sb = bias.storage(), sy = y.storage();
  finish(y, tr, [ss, sb, sy, NW, heads, tt]() {
    const T* gy = out_grad<T>(sy);
    if (!gy) return;
    if (T* gs = maybe_grad<T>(ss)) kernels::axpy(T(1), gy, gs, static_cast<i64>(sy->v.size()));
    if (T* gb = maybe_grad<T>(sb)) {
#pragma omp parallel for schedule(static)
      for (int h = 0; h < heads; ++h) {
        T* grow = gb + static_cast<size_t>(h) * tt;
        for (int w = 0; w < NW; ++w) {
          const T* src = gy + (static_cast<size_t>(w) * heads + h) * tt;
          for (size_t i = 0; i < tt; ++i) grow[i] += src[i];
        }
      }
    }
  });
  return y;
}

template <class T>
TensorT<T> add_window_mask(const TensorT<T>& scores, const TensorT<T>& mask, int heads) {
  require(scores.ndim() == 3, "add_window_mask: scores must be [NW*heads,T,T], got " +
                                  shape_str(scores.shape()));
  require(heads >= 1 && scores.dim(0) % heads == 0,
          "add_window_mask: leading extent not divisible by heads");
  int NW = scores.dim(0) / heads;
  require(mask.ndim() == 3 && mask.dim(0) == NW && mask.dim(1) == scores.dim(1) &&
              mask.dim(2) == scores.dim(2),
          "add_window_mask: mask " + shape_str(mask.shape()) + " does not match scores " +
              shape_str(scores.shape()));
  size_t tt = static_cast<size_t>(scores.dim(1)) * scores.dim(2);

  bool tr = track<T>({&scores, &mask});
  TensorT<T> y(scores.shape());
  const T* sp = scores.data();
  const T* mp = mask.data();
  T* yp = y.data();
#pragma omp parallel for collapse(2) schedule(static)
  for (int w = 0; w < NW; ++w)
    for (int h = 0; h < heads; ++h) {
      size_t off = (static_cast<size_t>(w) * heads + h) * tt;
      const T* mrow = mp + static_cast<size_t>(w) * tt;
      for (size_t i = 0; i < tt; ++i) yp[off + i] = sp[off + i] + mrow[i];
    }
  auto ss = scores.storage(), sm = mask.storage(), sy = y.storage();
  finish(y, tr, [ss, sm, sy, NW, heads, tt]() {
    const T* gy = out_grad<T>(sy);
    if (!gy) return;
    if (T* gs = maybe_grad<T>(ss)) kernels::axpy(T(1), gy, gs, static_cast<i64>(sy->v.size()));
    if (T* gm = maybe_grad<T>(sm)) {
#pragma omp parallel for schedule(static)
      for (int w = 0; w < NW; ++w) {
        T* grow = gm + static_cast<size_t>(w) * tt;
        for (int h = 0; h < heads; ++h) {
          const T* src = gy + (static_cast<size_t>(w) * heads + h) * tt;
          for (size_t i = 0; i < tt; ++i) grow[i] += src[i];
        }
      }
    }
  });
  return y;
}

template <class T>
TensorT<T> multi_head_attention(const TensorT<T>& x, const TensorT<T>& qkv_w,
                                const TensorT<T>& qkv_b, const TensorT<T>& proj_w,
                                const TensorT<T>& proj_b, int heads,
                                const TensorT<T>& rel_bias, const TensorT<T>* mask) {
  require(x.ndim() == 3, "attention: input must be [NW,T,C], got " + shape_str(x.shape()));
  int C = x.dim(2);
  require(heads >= 1 && C % heads == 0, "attention: heads " + std::to_string(heads) +
                                            " must divide channels " + std::to_string(C));
  require(qkv_w.ndim() == 2 && qkv_w.dim(0) == 3 * C && qkv_w.dim(1) == C,
          "attention: qkv weight must be [3C,C], got " + shape_str(qkv_w.shape()));
  require(proj_w.ndim() == 2 && proj_w.dim(0) == C && proj_w.dim(1) == C,
          "attention: proj weight must be [C,C], got " + shape_str(proj_w.shape()));
  int hd = C / heads;
  T att_scale = T(1) / std::sqrt(T(hd));

  TensorT<T> qkv = linear(x, qkv_w, qkv_b);
  auto parts = split_qkv_heads(qkv, heads);
  TensorT<T> scores = bmm(parts[0], parts[1], true, att_scale);
  scores = add_window_bias(scores, rel_bias, heads);
  if (mask) scores = add_window_mask(scores, *mask, heads);
  TensorT<T> attn = softmax_lastdim(scores);
  TensorT<T> ctx = bmm(attn, parts[2], false, T(1));
  TensorT<T> merged = merge_heads(ctx, heads);
  return linear(merged, proj_w, proj_b);
}

namespace {

enum class LossKind { L1, Mse, Charbonnier };

template <class T>
TensorT<T> pointwise_loss(const TensorT<T>& pred, const TensorT<T>& target, LossKind kind, T eps) {
  require_same_shape(pred, target, "loss");
  i64 n = static_cast<i64>(pred.numel());
  T value;
  switch (kind) {
    case LossKind::L1: value = kernels::l1_value(pred.data(), target.data(), n); break;
    case LossKind::Mse: value = kernels::mse_value(pred.data(), target.data(), n); break;
    case LossKind::Charbonnier:
      require(eps > T(0), "charbonnier: eps must be positive");
      value = kernels::charbonnier_value(pred.data(), target.data(), eps, n);
      break;
  }
  bool tr = track<T>({&pred, &target});
  TensorT<T> y = TensorT<T>::scalar_tensor(value);
  auto sp = pred.storage(), st = target.storage(), sy = y.storage();
  finish(y, tr, [sp, st, sy, kind, eps, n]() {
    const T* gy = out_grad<T>(sy);
    if (!gy || gy[0] == T(0)) return;
    T* gp = maybe_grad<T>(sp);
    T* gt = maybe_grad<T>(st);
    if (!gp && !gt) return;
    switch (kind) {
      case LossKind::L1: kernels::l1_grad(sp->v.data(), st->v.data(), gy[0], gp, gt, n); break;
      case LossKind::Mse: kernels::mse_grad(sp->v.data(), st->v.data(), gy[0], gp, gt, n); break;
      case LossKind::Charbonnier:
        kernels::charbonnier_grad(sp->v.data(), st->v.data(), eps, gy[0], gp, gt, n);
        break;
    }
  });
  return y;
}

}  // namespace

template <class T>
TensorT<T> l1_loss(const TensorT<T>& pred, const TensorT<T>& target) {
  return pointwise_loss(pred, target, LossKind::L1, T(0));
}

template <class T>
TensorT<T> mse_loss(const TensorT<T>& pred, const TensorT<T>& target) {
  return pointwise_loss(pred, target, LossKind::Mse, T(0));
}

template <class T>
TensorT<T> charbonnier_loss(const TensorT<T>& pred, const TensorT<T>& target, T eps) {
  return pointwise_loss(pred, target, LossKind::Charbonnier, eps);
}

#define HST_INSTANTIATE_OPS(T)                                                                  \
  template TensorT<T> add<T>(const TensorT<T>&, const TensorT<T>&);                            \
  template TensorT<T> mul<T>(const TensorT<T>&, const TensorT<T>&);                            \
  template TensorT<T> scale<T>(const TensorT<T>&, T);                                          \
  template TensorT<T> sum<T>(const TensorT<T>&);                                               \
  template TensorT<T> conv2d<T>(const TensorT<T>&, const TensorT<T>&, const TensorT<T>&, int,  \
                                int);                                                          \
  template TensorT<T> linear<T>(const TensorT<T>&, const TensorT<T>&, const TensorT<T>&);      \
  template TensorT<T> layer_norm<T>(const TensorT<T>&, const TensorT<T>&, const TensorT<T>&,   \
                                    T);                                                        \
  template TensorT<T> gelu<T>(const TensorT<T>&);                                              \
  template TensorT<T> softmax_lastdim<T>(const TensorT<T>&);                                   \
  template TensorT<T> bmm<T>(const TensorT<T>&, const TensorT<T>&, bool, T);                   \
  template TensorT<T> window_partition<T>(const TensorT<T>&, int);                             \
  template TensorT<T> window_reverse<T>(const TensorT<T>&, int, int, int, int);                \
  template TensorT<T> cyclic_shift<T>(const TensorT<T>&, int, int);                            \
  template TensorT<T> pixel_shuffle<T>(const TensorT<T>&, int);                                \
  template TensorT<T> pixel_unshuffle<T>(const TensorT<T>&, int);                              \
  template TensorT<T> nchw_to_nhwc<T>(const TensorT<T>&);                                      \
  template TensorT<T> nhwc_to_nchw<T>(const TensorT<T>&);                                      \
  template TensorT<T> concat_channels<T>(const TensorT<T>&, const TensorT<T>&);                \
  template TensorT<T> pad_reflect<T>(const TensorT<T>&, int, int, int, int);                   \
  template TensorT<T> crop<T>(const TensorT<T>&, int, int, int, int);                          \
  template std::array<TensorT<T>, 3> split_qkv_heads<T>(const TensorT<T>&, int);               \
  template TensorT<T> merge_heads<T>(const TensorT<T>&, int);                                  \
  template TensorT<T> relative_bias<T>(const TensorT<T>&, int, int);                           \
  template TensorT<T> add_window_bias<T>(const TensorT<T>&, const TensorT<T>&, int);           \
  template TensorT<T> add_window_mask<T>(const TensorT<T>&, const TensorT<T>&, int);           \
  template TensorT<T> multi_head_attention<T>(const TensorT<T>&, const TensorT<T>&,            \
                                              const TensorT<T>&, const TensorT<T>&,            \
                                              const TensorT<T>&, int, const TensorT<T>&,       \
                                              const TensorT<T>*);                              \
  template TensorT<T> l1_loss<T>(const TensorT<T>&, const TensorT<T>&);                        \
  template TensorT<T> mse_loss<T>(const TensorT<T>&, const TensorT<T>&);                       \
  template TensorT<T> charbonnier_loss<T>(const TensorT<T>&, const TensorT<T>&, T);

HST_INSTANTIATE_OPS(float)
HST_INSTANTIATE_OPS(double)

}  // namespace hst::ops
