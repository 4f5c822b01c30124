#pragma once

#include <functional>
#include <string>
#include <vector>

#include "april/graph.hpp"

namespace april {

struct GradCheckReport {
  bool pass = false;
  double max_rel_error = 0.0;
  std::string worst;  // "pi_o:2.conv.W[17]" or failure location
  long checked = 0;
};

struct ParamRef {
  std::string name;
  Tensor* value;         // perturbed in place, restored afterwards
  const Tensor* analytic;  // matching analytic gradient
};

// Central finite differences against already-computed analytic gradients.
// `loss` must be a deterministic pure function of the referenced values.
// Relative error per element: |fd - an| / max(|fd|, |an|, 1e-8).
GradCheckReport finite_diff_check(const std::vector<ParamRef>& params,
                                  const std::function<double()>& loss,
                                  double tolerance, double step = 1e-5);

// Convenience form checking a whole graph: analytic gradients are the ones
// currently accumulated in the graph (run forward/backward first).
GradCheckReport finite_diff_check(Graph& graph, const std::function<double()>& loss,
                                  double tolerance, double step = 1e-5);

std::vector<ParamRef> param_refs(Graph& graph);

}  // namespace april
