#include "hst/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace hst {

std::string LossConfig::kind_name() const {
  switch (kind) {
    case Kind::kL1: return "l1";
    case Kind::kCharbonnier: return "charbonnier";
    case Kind::kMse: return "mse";
  }
  return "?";
}

LossConfig LossConfig::parse(const std::string& kind, double epsilon) {
  LossConfig cfg;
  cfg.epsilon = epsilon;
  if (kind == "l1") cfg.kind = Kind::kL1;
  else if (kind == "charbonnier") cfg.kind = Kind::kCharbonnier;
  else if (kind == "mse") cfg.kind = Kind::kMse;
  else throw std::invalid_argument("loss: unknown kind \"" + kind + "\"");
  cfg.validate();
  return cfg;
}

template <class T>
AdamStateT<T> AdamStateT<T>::init(const ParamStoreT<T>& params, AdamConfig cfg) {
  AdamStateT state;
  state.config = cfg;
  for (const std::string& name : params.names()) {
    std::vector<int> shape = params.at(name).shape();
    state.m.add(name, TensorT<T>::zeros(shape));
    state.v.add(name, TensorT<T>::zeros(shape));
  }
  return state;
}

template <class T>
void adam_step(ParamStoreT<T>& params, AdamStateT<T>& state, T lr) {
  for (const std::string& name : params.names())
    if (!params.at(name).grad_allocated())
      throw std::runtime_error("adam_step: parameter \"" + name +
                               "\" has no gradient");

  T clip_scale = T(1);
  if (state.config.clip_norm > 0.0) {
    double sq = 0.0;
    for (const std::string& name : params.names())
      for (T g : params.at(name).grad_span())
        sq += static_cast<double>(g) * static_cast<double>(g);
    double norm = std::sqrt(sq);
    if (norm > state.config.clip_norm)
      clip_scale = static_cast<T>(state.config.clip_norm / norm);
  }

  state.step += 1;
  const T b1 = static_cast<T>(state.config.beta1);
  const T b2 = static_cast<T>(state.config.beta2);
  const T eps = static_cast<T>(state.config.eps);
  const T bc1 = T(1) - static_cast<T>(std::pow(state.config.beta1,
                                               static_cast<double>(state.step)));
  const T bc2 = T(1) - static_cast<T>(std::pow(state.config.beta2,
                                               static_cast<double>(state.step)));

  for (const std::string& name : params.names()) {
    TensorT<T>& p = params.at(name);
    T* w = p.data();
    T* g = p.grad();
    T* m = state.m.at(name).data();
    T* v = state.v.at(name).data();
    const long long n = static_cast<long long>(p.numel());
#pragma omp parallel for schedule(static)
    for (long long i = 0; i < n; ++i) {
      T gi = g[i] * clip_scale;
      m[i] = b1 * m[i] + (T(1) - b1) * gi;
      v[i] = b2 * v[i] + (T(1) - b2) * gi * gi;
      T mhat = m[i] / bc1;
      T vhat = v[i] / bc2;
      w[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

void TrainStage::validate() const {
  if (name.empty()) throw std::invalid_argument("stage: name must be nonempty");
  degradation.validate();
  loss.validate();
  if (!(lr_initial > 0.0))
    throw std::invalid_argument("stage \"" + name + "\": lr_initial must be > 0");
  if (total_iters < 0)
    throw std::invalid_argument("stage \"" + name + "\": total_iters must be >= 0");
  if (batch_size < 1)
    throw std::invalid_argument("stage \"" + name + "\": batch_size must be >= 1");
  for (size_t i = 0; i < lr_milestones.size(); ++i) {
    if (i > 0 && lr_milestones[i] <= lr_milestones[i - 1])
      throw std::invalid_argument("stage \"" + name +
                                  "\": lr_milestones must be strictly increasing");
    if (lr_milestones[i] >= total_iters)
      throw std::invalid_argument("stage \"" + name +
                                  "\": lr_milestones must be < total_iters");
  }
}

double lr_at(const TrainStage& stage, long long iter) {
  int halvings = 0;
  for (long long ms : stage.lr_milestones)
    if (ms <= iter) ++halvings;
  return stage.lr_initial * std::pow(0.5, halvings);
}

template struct AdamStateT<float>;
template struct AdamStateT<double>;
template void adam_step<float>(ParamStoreT<float>&, AdamStateT<float>&, float);
template void adam_step<double>(ParamStoreT<double>&, AdamStateT<double>&, double);

}  // namespace hst
