#include "capsule_nlu/tensor.hpp"

#include <cmath>
#include <sstream>

namespace capsnlu {

int64_t numel(const Shape& shape) {
  int64_t n = 1;
  for (int d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

namespace {

void validate_shape(const Shape& shape) {
  for (int d : shape) {
    if (d <= 0) throw DimensionError("tensor dimension must be positive, got shape " + shape_str(shape));
  }
}

}  // namespace

template <typename S>
Tensor<S> Tensor<S>::zeros(Shape shape, bool needs_grad) {
  validate_shape(shape);
  auto n = std::make_shared<TensorNode<S>>();
  n->value.assign(static_cast<size_t>(numel(shape)), S(0));
  n->shape = std::move(shape);
  n->needs_grad = needs_grad;
  return Tensor<S>(std::move(n));
}

template <typename S>
Tensor<S> Tensor<S>::full(Shape shape, S v, bool needs_grad) {
  Tensor<S> t = zeros(std::move(shape), needs_grad);
  for (S& x : t.node()->value) x = v;
  return t;
}

template <typename S>
Tensor<S> Tensor<S>::from_data(Shape shape, std::span<const S> data, bool needs_grad) {
  validate_shape(shape);
  if (static_cast<int64_t>(data.size()) != numel(shape)) {
    throw DimensionError("tensor data length " + std::to_string(data.size()) +
                         " does not match shape " + shape_str(shape));
  }
  auto n = std::make_shared<TensorNode<S>>();
  n->shape = std::move(shape);
  n->value.assign(data.begin(), data.end());
  n->needs_grad = needs_grad;
  Tensor<S> t(std::move(n));
  t.assert_finite("tensor construction");
  return t;
}

template <typename S>
Tensor<S> Tensor<S>::from_data(Shape shape, std::initializer_list<S> data, bool needs_grad) {
  return from_data(std::move(shape), std::span<const S>(data.begin(), data.size()), needs_grad);
}

template <typename S>
std::span<S> Tensor<S>::grad() {
  node_->ensure_grad();
  return node_->grad;
}

template <typename S>
std::span<const S> Tensor<S>::grad() const {
  node_->ensure_grad();
  return node_->grad;
}

template <typename S>
void Tensor<S>::zero_grad() {
  node_->grad.assign(node_->value.size(), S(0));
}

template <typename S>
S Tensor<S>::item() const {
  if (size() != 1) throw DimensionError("item() requires a scalar tensor, got " + shape_str(shape()));
  return node_->value[0];
}

template <typename S>
S Tensor<S>::at(int r, int c) const {
  if (rank() != 2) throw DimensionError("at(r,c) requires a rank-2 tensor, got " + shape_str(shape()));
  return node_->value[static_cast<size_t>(r) * static_cast<size_t>(dim(1)) + static_cast<size_t>(c)];
}

template <typename S>
Tensor<S> Tensor<S>::detached() const {
  auto n = std::make_shared<TensorNode<S>>();
  n->shape = node_->shape;
  n->value = node_->value;
  n->needs_grad = false;
  return Tensor<S>(std::move(n));
}

template <typename S>
void Tensor<S>::assert_finite(const std::string& what) const {
  const auto& v = node_->value;
  for (size_t i = 0; i < v.size(); ++i) {
    if (!std::isfinite(static_cast<double>(v[i]))) {
      throw NumericError(what + ": non-finite value at flat index " + std::to_string(i));
    }
  }
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace capsnlu
