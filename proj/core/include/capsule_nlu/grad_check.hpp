#pragma once

#include <functional>
#include <string>
#include <vector>

#include "capsule_nlu/tape.hpp"

namespace capsnlu {

struct GradCheckFailure {
  std::string param;
  size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_err = 0.0;
};

struct GradCheckReport {
  double max_rel_err = 0.0;
  size_t coords_checked = 0;
  std::vector<GradCheckFailure> failures;
  bool ok() const { return failures.empty(); }
};

struct GradCheckOptions {
  double step = 1e-5;        // central-difference step h
  double tol = 1e-4;         // relative-error threshold
  double denom_floor = 1e-6; // guards the relative error for near-zero grads
  // 0 = check every coordinate; otherwise sample this many per parameter.
  size_t max_coords_per_param = 0;
  uint64_t seed = 0x5eed;
};

// Named parameter list for gradient checking and optimization.
template <typename S>
using NamedParams = std::vector<std::pair<std::string, Tensor<S>>>;

// Compares tape gradients of a deterministic scalar loss against central
// finite differences (f(x+h) - f(x-h)) / 2h, coordinate by coordinate.
// loss_fn must rebuild the forward graph from the current parameter values
// on the tape it is given. A non-finite loss propagates as NumericError.
template <typename S>
GradCheckReport check_gradients(const std::function<Tensor<S>(Tape<S>&)>& loss_fn,
                                const NamedParams<S>& params,
                                const GradCheckOptions& opts = {});

extern template GradCheckReport check_gradients<float>(
    const std::function<Tensor<float>(Tape<float>&)>&, const NamedParams<float>&, const GradCheckOptions&);
extern template GradCheckReport check_gradients<double>(
    const std::function<Tensor<double>(Tape<double>&)>&, const NamedParams<double>&, const GradCheckOptions&);

}  // namespace capsnlu
