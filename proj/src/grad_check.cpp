#include "april/grad_check.hpp"

#include <algorithm>
#include <cmath>

namespace april {

GradCheckReport finite_diff_check(const std::vector<ParamRef>& params,
                                  const std::function<double()>& loss,
                                  double tolerance, double step) {
  GradCheckReport report;
  // snapshot analytic grads so re-running the loss cannot disturb them
  std::vector<Tensor> analytic;
  analytic.reserve(params.size());
  for (const ParamRef& p : params) analytic.push_back(*p.analytic);

  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor& value = *params[pi].value;
    for (long k = 0; k < value.size(); ++k) {
      const double saved = value[k];
      value[k] = saved + step;
      const double up = loss();
      value[k] = saved - step;
      const double down = loss();
      value[k] = saved;
      if (!std::isfinite(up) || !std::isfinite(down)) {
        report.pass = false;
        report.max_rel_error = std::numeric_limits<double>::infinity();
        report.worst = "non-finite loss at " + params[pi].name + "[" + std::to_string(k) + "]";
        return report;
      }
      const double fd = (up - down) / (2.0 * step);
      const double an = analytic[pi][k];
      const double denom = std::max({std::abs(fd), std::abs(an), 1e-8});
      const double rel = std::abs(fd - an) / denom;
      ++report.checked;
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst = params[pi].name + "[" + std::to_string(k) + "]";
      }
    }
  }
  report.pass = report.max_rel_error <= tolerance;
  return report;
}

std::vector<ParamRef> param_refs(Graph& graph) {
  std::vector<ParamRef> refs;
  refs.reserve(graph.params().size());
  for (Param& p : graph.params())
    refs.push_back({graph.name() + ":" + p.name, &p.value, &p.grad});
  return refs;
}

GradCheckReport finite_diff_check(Graph& graph, const std::function<double()>& loss,
                                  double tolerance, double step) {
  return finite_diff_check(param_refs(graph), loss, tolerance, step);
}

}  // namespace april
