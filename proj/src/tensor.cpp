#include "hst/tensor.hpp"

#include <sstream>
#include <stdexcept>

namespace hst {

size_t checked_numel(const std::vector<int>& shape) {
  if (shape.empty()) throw std::invalid_argument("tensor shape must have at least one extent");
  size_t n = 1;
  for (int d : shape) {
    if (d < 1) throw std::invalid_argument("tensor extents must be positive, got " + shape_str(shape));
    if (n > (static_cast<size_t>(1) << 48) / static_cast<size_t>(d))
      throw std::invalid_argument("tensor too large: " + shape_str(shape));
    n *= static_cast<size_t>(d);
  }
  return n;
}

std::string shape_str(const std::vector<int>& shape) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

template <class T>
TensorT<T>::TensorT(std::vector<int> shape, T fill) : shape_(std::move(shape)) {
  size_t n = checked_numel(shape_);
  store_ = std::make_shared<Storage>();
  store_->v.assign(n, fill);
}

template <class T>
TensorT<T>::TensorT(std::vector<int> shape, std::vector<T> values) : shape_(std::move(shape)) {
  size_t n = checked_numel(shape_);
  if (values.size() != n)
    throw std::invalid_argument("value count " + std::to_string(values.size()) +
                                " does not match shape " + shape_str(shape_));
  store_ = std::make_shared<Storage>();
  store_->v = std::move(values);
}

template <class T>
int TensorT<T>::dim(int i) const {
  if (i < 0 || i >= ndim())
    throw std::invalid_argument("dim index " + std::to_string(i) + " out of range for " + shape_str(shape_));
  return shape_[static_cast<size_t>(i)];
}

template <class T>
T* TensorT<T>::data() {
  if (!store_) throw std::logic_error("access to an undefined tensor");
  return store_->v.data();
}

template <class T>
const T* TensorT<T>::data() const {
  if (!store_) throw std::logic_error("access to an undefined tensor");
  return store_->v.data();
}

template <class T>
TensorT<T>& TensorT<T>::set_requires_grad(bool rg) {
  if (!store_) throw std::logic_error("set_requires_grad on an undefined tensor");
  store_->requires_grad = rg;
  return *this;
}

template <class T>
T* TensorT<T>::grad() {
  if (!store_) throw std::logic_error("grad access on an undefined tensor");
  if (!store_->requires_grad)
    throw std::logic_error("grad access on a tensor without requires_grad");
  if (store_->g.empty()) store_->g.assign(store_->v.size(), T(0));
  return store_->g.data();
}

template <class T>
void TensorT<T>::zero_grad() {
  if (!store_) throw std::logic_error("zero_grad on an undefined tensor");
  store_->g.assign(store_->v.size(), T(0));
}

template <class T>
T TensorT<T>::scalar() const {
  if (numel() != 1)
    throw std::invalid_argument("scalar() requires a single-element tensor, got " + shape_str(shape_));
  return store_->v[0];
}

template <class T>
size_t TensorT<T>::flat_index(std::initializer_list<int> idx) const {
  if (static_cast<int>(idx.size()) != ndim())
    throw std::invalid_argument("index rank " + std::to_string(idx.size()) +
                                " does not match tensor rank " + std::to_string(ndim()));
  size_t flat = 0;
  int axis = 0;
  for (int i : idx) {
    int extent = shape_[static_cast<size_t>(axis)];
    if (i < 0 || i >= extent)
      throw std::out_of_range("index " + std::to_string(i) + " out of range on axis " +
                              std::to_string(axis) + " of " + shape_str(shape_));
    flat = flat * static_cast<size_t>(extent) + static_cast<size_t>(i);
    ++axis;
  }
  return flat;
}

template <class T>
T& TensorT<T>::at(std::initializer_list<int> idx) {
  return store_->v[flat_index(idx)];
}

template <class T>
T TensorT<T>::at(std::initializer_list<int> idx) const {
  return store_->v[flat_index(idx)];
}

template <class T>
TensorT<T> TensorT<T>::reshaped(std::vector<int> new_shape) const {
  size_t n = checked_numel(new_shape);
  if (n != numel())
    throw std::invalid_argument("reshape from " + shape_str(shape_) + " to " +
                                shape_str(new_shape) + " changes element count");
  TensorT out;
  out.shape_ = std::move(new_shape);
  out.store_ = store_;
  return out;
}

template <class T>
TensorT<T> TensorT<T>::clone() const {
  if (!store_) return {};
  TensorT out;
  out.shape_ = shape_;
  out.store_ = std::make_shared<Storage>();
  out.store_->v = store_->v;
  out.store_->requires_grad = store_->requires_grad;
  return out;
}

template <class T>
void GraphT<T>::record(std::function<void()> backward_fn) {
  if (consumed_)
    throw std::logic_error("recording onto a graph whose backward already ran");
  tape_.push_back(std::move(backward_fn));
}

template <class T>
void GraphT<T>::backward(TensorT<T>& loss) {
  if (consumed_)
    throw std::logic_error("backward already ran on this graph; build a new graph per step");
  if (loss.numel() != 1)
    throw std::invalid_argument("backward requires a scalar loss, got " + shape_str(loss.shape()));
  consumed_ = true;
  if (loss.requires_grad()) loss.grad()[0] += T(1);
  for (size_t i = tape_.size(); i > 0; --i) tape_[i - 1]();
}

template <class T>
GraphT<T>*& GraphT<T>::slot() {
  static thread_local GraphT<T>* cur = nullptr;
  return cur;
}

template <class T>
GraphT<T>* GraphT<T>::current() {
  return slot();
}

template <class T>
GraphT<T>::Scope::Scope(GraphT& g) : prev_(slot()) {
  slot() = &g;
}

template <class T>
GraphT<T>::Scope::~Scope() {
  slot() = prev_;
}

template class TensorT<float>;
template class TensorT<double>;
template class GraphT<float>;
template class GraphT<double>;

}  // namespace hst
