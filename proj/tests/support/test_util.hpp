#pragma once

#include <doctest.h>

#include <cmath>
#include <vector>

#include "hst/rng.hpp"
#include "hst/tensor.hpp"

namespace hsttest {

template <class T>
hst::TensorT<T> rand_tensor(hst::Rng& rng, std::vector<int> shape, double lo = -1.0,
                            double hi = 1.0) {
  hst::TensorT<T> t(std::move(shape));
  for (auto& v : t.values()) v = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

// Largest |a-b| scaled by max(1, |b|); 0 when equal.
template <class T>
double max_mixed_err(const hst::TensorT<T>& a, const hst::TensorT<T>& b) {
  REQUIRE(a.numel() == b.numel());
  double worst = 0.0;
  auto av = a.values();
  auto bv = b.values();
  for (size_t i = 0; i < av.size(); ++i) {
    double scale = std::max(1.0, std::abs(static_cast<double>(bv[i])));
    worst = std::max(worst, std::abs(static_cast<double>(av[i]) - static_cast<double>(bv[i])) / scale);
  }
  return worst;
}

template <class T>
bool bitwise_equal(const hst::TensorT<T>& a, const hst::TensorT<T>& b) {
  if (a.shape() != b.shape()) return false;
  auto av = a.values();
  auto bv = b.values();
  for (size_t i = 0; i < av.size(); ++i)
    if (std::memcmp(&av[i], &bv[i], sizeof(T)) != 0) return false;
  return true;
}

}  // namespace hsttest
