#include "capsule_nlu/optimizer.hpp"

#include <cmath>

namespace capsnlu {

template <typename S>
void Rmsprop<S>::step(NamedParams<S>& params) {
  if (acc_.size() != params.size()) {
    acc_.clear();
    for (const auto& [name, p] : params) {
      (void)name;
      acc_.emplace_back(static_cast<size_t>(p.size()), S(0));
    }
  }
  for (size_t pi = 0; pi < params.size(); ++pi) {
    auto& [name, param] = params[pi];
    auto grad = param.grad();
    auto value = param.value();
    auto& acc = acc_[pi];
    for (size_t i = 0; i < grad.size(); ++i) {
      const S g = grad[i];
      if (!std::isfinite(static_cast<double>(g))) {
        throw NumericError("rmsprop: non-finite gradient in parameter '" + name + "' at index " +
                           std::to_string(i));
      }
      acc[i] = decay_ * acc[i] + (S(1) - decay_) * g * g;
      value[i] -= lr_ * g / std::sqrt(acc[i] + eps_);
    }
  }
}

template <typename S>
S Rmsprop<S>::clip_global_norm(NamedParams<S>& params, S max_norm) {
  double ss = 0.0;
  for (auto& [name, param] : params) {
    (void)name;
    for (S g : param.grad()) ss += static_cast<double>(g) * static_cast<double>(g);
  }
  const S norm = static_cast<S>(std::sqrt(ss));
  if (norm > max_norm && norm > S(0)) {
    const S scale = max_norm / norm;
    for (auto& [name, param] : params) {
      (void)name;
      for (S& g : param.grad()) g *= scale;
    }
  }
  return norm;
}

template class Rmsprop<float>;
template class Rmsprop<double>;

}  // namespace capsnlu
