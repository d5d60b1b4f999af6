#pragma once

#include "capsule_nlu/grad_check.hpp"
#include "capsule_nlu/tensor.hpp"

namespace capsnlu {

// RMSProp with running mean-square accumulators:
//   acc <- decay * acc + (1 - decay) * g^2
//   theta <- theta - lr * g / sqrt(acc + eps)
template <typename S>
class Rmsprop {
 public:
  Rmsprop(S lr, S decay, S eps) : lr_(lr), decay_(decay), eps_(eps) {}

  // Applies one update using each parameter's accumulated gradient. A
  // non-finite gradient aborts the step naming the parameter. Returns the
  // global gradient norm (before any clipping done by the caller).
  void step(NamedParams<S>& params);

  // Scales all gradients so the global L2 norm is at most max_norm.
  // Returns the pre-clip norm.
  static S clip_global_norm(NamedParams<S>& params, S max_norm);

  const std::vector<std::vector<S>>& accumulators() const { return acc_; }

 private:
  S lr_, decay_, eps_;
  std::vector<std::vector<S>> acc_;  // lazily sized to match params
};

extern template class Rmsprop<float>;
extern template class Rmsprop<double>;

}  // namespace capsnlu
