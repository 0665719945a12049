#include "ainv/gradcheck.hpp"

#include <cmath>

#include "ainv/error.hpp"

namespace ainv {

GradCheckReport gradcheck(
    const std::vector<std::pair<std::string, Tensor64*>>& params,
    const std::function<double()>& loss,
    const std::function<std::vector<Tensor64>()>& analytic_grads,
    double fd_step, double abs_floor) {
  if (fd_step <= 0) throw ArgumentError("gradcheck: step must be positive");

  const std::vector<Tensor64> grads = analytic_grads();
  if (grads.size() != params.size())
    throw DimensionError("gradcheck: gradient count != parameter count");

  GradCheckReport report;
  for (size_t pi = 0; pi < params.size(); ++pi) {
    const auto& [name, tensor] = params[pi];
    if (!grads[pi].same_shape(*tensor))
      throw DimensionError("gradcheck: gradient shape mismatch for " + name);

    GradCheckEntry entry;
    entry.name = name;
    for (size_t i = 0; i < tensor->data.size(); ++i) {
      const double saved = tensor->data[i];
      tensor->data[i] = saved + fd_step;
      const double up = loss();
      tensor->data[i] = saved - fd_step;
      const double down = loss();
      tensor->data[i] = saved;

      const double numeric = (up - down) / (2.0 * fd_step);
      const double analytic = grads[pi].data[i];
      if (!std::isfinite(numeric) || !std::isfinite(analytic)) {
        entry.finite = false;
        report.all_finite = false;
        continue;
      }
      if (std::fabs(analytic - numeric) <= abs_floor) continue;
      const double denom =
          std::max({std::fabs(analytic), std::fabs(numeric), 1e-8});
      entry.max_rel_err =
          std::max(entry.max_rel_err, std::fabs(analytic - numeric) / denom);
    }
    report.max_rel_err = std::max(report.max_rel_err, entry.max_rel_err);
    report.entries.push_back(std::move(entry));
  }
  return report;
}

}  // namespace ainv
