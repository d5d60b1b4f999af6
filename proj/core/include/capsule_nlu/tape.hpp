#pragma once

#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "capsule_nlu/tensor.hpp"

namespace capsnlu {

// Reverse-mode gradient tape over a fixed primitive set. Every op computes
// its forward value eagerly and, when any operand requires a gradient,
// records a backward closure. backward() replays the closures in exact
// reverse execution order; each parameter's gradient accumulates over all
// of its uses.
//
// A tape and the intermediate tensors it creates belong to one worker;
// parameter tensors may be shared read-only once training is done.
template <typename S>
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // When enabled, every op output is checked for NaN/Inf (slow; meant for
  // tests and debugging).
  void set_check_finite(bool b) { check_finite_ = b; }

  // --- linear algebra ---------------------------------------------------
  // c = op(a) * op(b) with optional transposes; inner dimensions must agree.
  Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b, bool trans_a = false, bool trans_b = false);
  Tensor<S> transpose(const Tensor<S>& x);

  // --- elementwise ------------------------------------------------------
  Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b);
  Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b);
  // y = m[i][j] + col[i]; bias broadcast across columns.
  Tensor<S> add_col_broadcast(const Tensor<S>& m, const Tensor<S>& col);
  Tensor<S> tanh(const Tensor<S>& x);
  Tensor<S> sigmoid(const Tensor<S>& x);
  Tensor<S> relu(const Tensor<S>& x);
  // Natural log; domain error on x <= 0 (clamp first).
  Tensor<S> log(const Tensor<S>& x);
  Tensor<S> clamp_min(const Tensor<S>& x, S lo);
  // y = a*x + b with compile-time-constant scalars.
  Tensor<S> scale_add(const Tensor<S>& x, S a, S b);

  // --- structure --------------------------------------------------------
  Tensor<S> concat_rows(std::span<const Tensor<S>> parts);
  Tensor<S> concat_cols(std::span<const Tensor<S>> parts);
  Tensor<S> select_row(const Tensor<S>& x, int r);
  Tensor<S> select_col(const Tensor<S>& x, int c);
  Tensor<S> slice_rows(const Tensor<S>& x, int r0, int r1);
  // Gather of full rows (embedding lookup); backward scatters into the
  // source rows only.
  Tensor<S> select_rows(const Tensor<S>& x, std::span<const int> rows);
  // Slice k of a rank-3 tensor [K x R x C] -> [R x C].
  Tensor<S> select_matrix(const Tensor<S>& x3, int k);
  // Entries (rows[i], cols[i]) of a rank-2 tensor -> [n x 1].
  Tensor<S> gather_entries(const Tensor<S>& x, std::span<const int> rows, std::span<const int> cols);

  // --- reductions and nonlinear maps ------------------------------------
  // Numerically stable softmax along `axis` (max subtraction).
  Tensor<S> softmax(const Tensor<S>& x, int axis);
  // Euclidean norm over all elements -> scalar. Gradient at the zero
  // vector is the zero vector.
  Tensor<S> l2_norm(const Tensor<S>& x);
  // v = (|s|^2 / (1 + |s|^2)) * s/|s|, squash(0) = 0, direction preserved.
  Tensor<S> squash(const Tensor<S>& s);
  Tensor<S> sum_all(const Tensor<S>& x);

  // --- driver -----------------------------------------------------------
  // Seeds d(loss)/d(loss) = 1 and replays recorded ops in reverse. The
  // loss must be a scalar. Call once per forward construction.
  void backward(const Tensor<S>& loss);
  void clear() { steps_.clear(); }
  size_t num_ops() const { return steps_.size(); }

 private:
  Tensor<S> make_result(Shape shape, bool needs_grad);
  void finish(Tensor<S>& out, std::initializer_list<const Tensor<S>*> operands,
              std::function<void()> backward_fn);

  std::vector<std::function<void()>> steps_;
  bool check_finite_ = false;
};

extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace capsnlu
