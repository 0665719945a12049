#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "ainv/tensor.hpp"

namespace ainv {

struct GradCheckEntry {
  std::string name;
  double max_rel_err = 0.0;
  bool finite = true;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_rel_err = 0.0;
  bool all_finite = true;

  bool ok(double tolerance) const { return all_finite && max_rel_err < tolerance; }
};

// Central finite differences against analytic gradients, 64-bit precision.
// `loss` must be a pure function of the parameter tensors (re-evaluated with
// perturbed entries); `analytic_grads` returns one gradient tensor per
// parameter, in the same order. Relative error per element:
// |a - n| / max(|a|, |n|, 1e-8). Entries agreeing within `abs_floor` count as
// exact: central differences of the loss cannot resolve
// gradients below ~1e-11 of cancellation noise, and parameters normalized away by a following
// batchnorm (conv biases, a beta feeding a linear layer) have true gradient
// zero on both routes.
GradCheckReport gradcheck(
    const std::vector<std::pair<std::string, Tensor64*>>& params,
    const std::function<double()>& loss,
    const std::function<std::vector<Tensor64>()>& analytic_grads,
    double fd_step = 1e-5, double abs_floor = 1e-9);

}  // namespace ainv
