#pragma once

#include <stdexcept>
#include <string>

#include "hst/ops.hpp"
#include "hst/tensor.hpp"

namespace hst {

/// Which pixel objective a training stage minimizes. `epsilon` only matters
/// for the charbonnier kind, where it smooths the absolute difference.
struct LossConfig {
  enum class Kind { kL1, kCharbonnier, kMse };

  Kind kind = Kind::kCharbonnier;
  double epsilon = 1e-9;

  void validate() const {
    if (kind == Kind::kCharbonnier && !(epsilon > 0.0))
      throw std::invalid_argument("loss: charbonnier epsilon must be > 0");
  }

  static LossConfig parse(const std::string& kind, double epsilon = 1e-9);
  std::string kind_name() const;
};

template <class T>
TensorT<T> loss_value(const LossConfig& cfg, const TensorT<T>& pred,
                      const TensorT<T>& target) {
  cfg.validate();
  switch (cfg.kind) {
    case LossConfig::Kind::kL1: return ops::l1_loss(pred, target);
    case LossConfig::Kind::kCharbonnier:
      return ops::charbonnier_loss(pred, target, static_cast<T>(cfg.epsilon));
    case LossConfig::Kind::kMse: return ops::mse_loss(pred, target);
  }
  throw std::logic_error("loss: unknown kind");
}

}  // namespace hst
