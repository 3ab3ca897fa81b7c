#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace hst {

size_t checked_numel(const std::vector<int>& shape);
std::string shape_str(const std::vector<int>& shape);

/// Dense row-major tensor backed by shared storage.
///
/// Canonical layouts: batch-channels-height-width for image features and
/// batch-tokens-channels for attention; rearrangement between the two is an
/// explicit op (see ops.hpp). Tensors are immutable once built except through
/// the optimizer's in-place parameter update (optim.hpp). `reshaped` returns a
/// view sharing the same buffers, so gradients flow through reshapes without a
/// tape node.
template <class T>
class TensorT {
 public:
  struct Storage {
    std::vector<T> v;
    std::vector<T> g;  // same length as v once allocated
    bool requires_grad = false;
  };

  TensorT() = default;
  explicit TensorT(std::vector<int> shape, T fill = T(0));
  TensorT(std::vector<int> shape, std::vector<T> values);

  static TensorT zeros(std::vector<int> shape) { return TensorT(std::move(shape)); }
  static TensorT full(std::vector<int> shape, T value) { return TensorT(std::move(shape), value); }
  static TensorT scalar_tensor(T value) { return TensorT({1}, std::vector<T>{value}); }

  const std::vector<int>& shape() const { return shape_; }
  int dim(int i) const;
  int ndim() const { return static_cast<int>(shape_.size()); }
  size_t numel() const { return store_ ? store_->v.size() : 0; }
  bool defined() const { return store_ != nullptr; }

  T* data();
  const T* data() const;
  std::span<T> values() { return {data(), numel()}; }
  std::span<const T> values() const { return {data(), numel()}; }

  bool requires_grad() const { return store_ && store_->requires_grad; }
  TensorT& set_requires_grad(bool rg);
  bool grad_allocated() const { return store_ && !store_->g.empty(); }
  /// Grad buffer, zero-allocated on first access. Only valid on tensors with
  /// requires_grad set.
  T* grad();
  std::span<T> grad_span() { return {grad(), numel()}; }
  void zero_grad();

  T scalar() const;
  T& at(std::initializer_list<int> idx);
  T at(std::initializer_list<int> idx) const;

  TensorT reshaped(std::vector<int> new_shape) const;
  /// Deep copy of the values (fresh storage, no grad buffer).
  TensorT clone() const;

  const std::shared_ptr<Storage>& storage() const { return store_; }

 private:
  size_t flat_index(std::initializer_list<int> idx) const;

  std::vector<int> shape_;
  std::shared_ptr<Storage> store_;
};

/// Reverse-mode tape. Each op that touches a grad-requiring tensor while a
/// graph is current appends one node holding its backward rule; backward
/// replays the nodes in reverse execution order, accumulating into the grad
/// buffer of every requires_grad leaf exactly once per use. A graph accepts a
/// single backward call; build a fresh graph per training step.
template <class T>
class GraphT {
 public:
  GraphT() = default;
  GraphT(const GraphT&) = delete;
  GraphT& operator=(const GraphT&) = delete;

  void record(std::function<void()> backward_fn);
  void backward(TensorT<T>& loss);

  size_t size() const { return tape_.size(); }
  bool consumed() const { return consumed_; }

  static GraphT* current();
  static bool recording() { return current() != nullptr; }

  /// Makes a graph current for the enclosing scope (stack discipline, one
  /// logical execution context per graph).
  class Scope {
   public:
    explicit Scope(GraphT& g);
    ~Scope();
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    GraphT* prev_;
  };

 private:
  static GraphT*& slot();

  std::vector<std::function<void()>> tape_;
  bool consumed_ = false;
};

using Tensor = TensorT<float>;
using Tensor64 = TensorT<double>;
using Graph = GraphT<float>;
using Graph64 = GraphT<double>;

}  // namespace hst
