#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "dualview/autodiff.hpp"

namespace dualview {

struct GradCheckReport {
  double max_rel_error = 0.0;  // |a - n| / max(|a|, |n|, 1e-8), worst coordinate
  double max_abs_error = 0.0;
  std::size_t coordinates = 0;
  std::size_t worst_param = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

inline double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

// Compares reverse-mode gradients of a scalar function against central
// differences (f(x+h) - f(x-h)) / 2h, one coordinate at a time.
//
// `fn(tape, leaves)` must build the function on `tape` from `leaves`, which
// hold copies of *params[0], *params[1], ... in order, and return a scalar
// node. The tensors behind `params` are perturbed in place and restored.
template <class Fn>
GradCheckReport grad_check(Fn&& fn, std::span<Tensor* const> params, double h) {
  if (!(h > 0.0)) throw Error(ErrorCode::InvalidArgument, "grad_check step must be positive");

  auto evaluate = [&](autodiff::Tape& tape, std::vector<autodiff::Var>& leaves) {
    leaves.clear();
    for (Tensor* p : params) leaves.push_back(tape.leaf(*p));
    const autodiff::Var out = fn(tape, std::span<const autodiff::Var>(leaves));
    const Tensor& v = tape.value(out);
    if (v.size() != 1) throw Error(ErrorCode::ShapeMismatch, "grad_check function must be scalar");
    if (!std::isfinite(v[0])) throw Error(ErrorCode::NonFinite, "grad_check function value");
    return out;
  };

  std::vector<Tensor> analytic;
  {
    autodiff::Tape tape;
    std::vector<autodiff::Var> leaves;
    const autodiff::Var out = evaluate(tape, leaves);
    tape.backward(out);
    for (autodiff::Var leaf : leaves) analytic.push_back(tape.grad(leaf));
  }

  auto value_at = [&] {
    autodiff::Tape tape;
    std::vector<autodiff::Var> leaves;
    return tape.value(evaluate(tape, leaves))[0];
  };

  GradCheckReport report;
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor& theta = *params[p];
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double saved = theta[i];
      theta[i] = saved + h;
      const double plus = value_at();
      theta[i] = saved - h;
      const double minus = value_at();
      theta[i] = saved;

      const double numeric = (plus - minus) / (2.0 * h);
      const double a = analytic[p][i];
      if (!std::isfinite(a) || !std::isfinite(numeric)) {
        throw Error(ErrorCode::NonFinite, "grad_check produced a non-finite derivative");
      }
      const double rel = relative_error(a, numeric);
      report.max_abs_error = std::max(report.max_abs_error, std::abs(a - numeric));
      if (rel > report.max_rel_error || report.coordinates == 0) {
        report.max_rel_error = rel;
        report.worst_param = p;
        report.worst_index = i;
        report.worst_analytic = a;
        report.worst_numeric = numeric;
      }
      ++report.coordinates;
    }
  }
  return report;
}

}  // namespace dualview
