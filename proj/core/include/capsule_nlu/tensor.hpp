#pragma once

#include <cstdint>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "capsule_nlu/errors.hpp"

namespace capsnlu {

using Shape = std::vector<int>;

int64_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Storage node shared between tensor handles and the tape. Values are
// immutable once written by the producing op; the gradient buffer is the
// only part mutated afterwards (accumulated during a backward pass).
template <typename S>
struct TensorNode {
  Shape shape;
  std::vector<S> value;
  std::vector<S> grad;  // empty until ensure_grad()
  bool needs_grad = false;

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), S(0));
  }
};

// Value-semantic handle to a shared tensor node.
template <typename S>
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool needs_grad = false);
  static Tensor full(Shape shape, S v, bool needs_grad = false);
  // Validates that every value is finite; NaN/Inf is a hard error.
  static Tensor from_data(Shape shape, std::span<const S> data, bool needs_grad = false);
  static Tensor from_data(Shape shape, std::initializer_list<S> data, bool needs_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  int dim(int i) const { return node_->shape[static_cast<size_t>(i)]; }
  int64_t size() const { return static_cast<int64_t>(node_->value.size()); }

  std::span<S> value() { return node_->value; }
  std::span<const S> value() const { return node_->value; }
  std::span<S> grad();
  std::span<const S> grad() const;

  bool needs_grad() const { return node_->needs_grad; }
  void set_needs_grad(bool b) { node_->needs_grad = b; }
  void ensure_grad() { node_->ensure_grad(); }
  void zero_grad();

  // Scalar access; requires size() == 1.
  S item() const;
  // Row-major element access for rank-2 tensors.
  S at(int r, int c) const;

  // Deep copy of values into a fresh constant leaf (no gradient flows
  // through it). Used to stop gradients, e.g. through an argmax winner.
  Tensor detached() const;

  void assert_finite(const std::string& what) const;

  TensorNode<S>* node() const { return node_.get(); }
  std::shared_ptr<TensorNode<S>> shared_node() const { return node_; }

  explicit Tensor(std::shared_ptr<TensorNode<S>> n) : node_(std::move(n)) {}

 private:
  std::shared_ptr<TensorNode<S>> node_;
};

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace capsnlu
