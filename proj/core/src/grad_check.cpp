#include "capsule_nlu/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "capsule_nlu/rng.hpp"

namespace capsnlu {

template <typename S>
GradCheckReport check_gradients(const std::function<Tensor<S>(Tape<S>&)>& loss_fn,
                                const NamedParams<S>& params,
                                const GradCheckOptions& opts) {
  if (!(opts.step > 0)) throw ConfigError("check_gradients: step must be positive");

  auto eval_loss = [&]() -> S {
    Tape<S> tape;
    Tensor<S> loss = loss_fn(tape);
    const S v = loss.item();
    if (!std::isfinite(static_cast<double>(v))) {
      throw NumericError("check_gradients: loss evaluated to a non-finite value");
    }
    return v;
  };

  // Analytic gradients at the current point.
  for (const auto& [name, p] : params) {
    (void)name;
    const_cast<Tensor<S>&>(p).zero_grad();
  }
  {
    Tape<S> tape;
    Tensor<S> loss = loss_fn(tape);
    if (!std::isfinite(static_cast<double>(loss.item()))) {
      throw NumericError("check_gradients: loss evaluated to a non-finite value");
    }
    tape.backward(loss);
  }

  GradCheckReport report;
  Rng rng(opts.seed);
  const S h = static_cast<S>(opts.step);

  for (const auto& [name, p] : params) {
    Tensor<S>& param = const_cast<Tensor<S>&>(p);
    const size_t n = static_cast<size_t>(param.size());
    std::vector<size_t> coords;
    if (opts.max_coords_per_param == 0 || opts.max_coords_per_param >= n) {
      coords.resize(n);
      for (size_t i = 0; i < n; ++i) coords[i] = i;
    } else {
      for (size_t i = 0; i < opts.max_coords_per_param; ++i) {
        coords.push_back(static_cast<size_t>(rng.uniform_int(n)));
      }
      std::sort(coords.begin(), coords.end());
      coords.erase(std::unique(coords.begin(), coords.end()), coords.end());
    }

    for (size_t i : coords) {
      const S orig = param.value()[i];
      param.value()[i] = orig + h;
      const double f_plus = static_cast<double>(eval_loss());
      param.value()[i] = orig - h;
      const double f_minus = static_cast<double>(eval_loss());
      param.value()[i] = orig;

      const double numeric = (f_plus - f_minus) / (2.0 * static_cast<double>(h));
      const double analytic = static_cast<double>(param.grad()[i]);
      const double denom = std::max(std::abs(analytic) + std::abs(numeric), opts.denom_floor);
      const double rel = std::abs(analytic - numeric) / denom;

      report.max_rel_err = std::max(report.max_rel_err, rel);
      ++report.coords_checked;
      if (rel > opts.tol) {
        report.failures.push_back({name, i, analytic, numeric, rel});
      }
    }
  }
  return report;
}

template GradCheckReport check_gradients<float>(
    const std::function<Tensor<float>(Tape<float>&)>&, const NamedParams<float>&, const GradCheckOptions&);
template GradCheckReport check_gradients<double>(
    const std::function<Tensor<double>(Tape<double>&)>&, const NamedParams<double>&, const GradCheckOptions&);

}  // namespace capsnlu
