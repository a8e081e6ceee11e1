#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "framesel/autodiff.hpp"

namespace framesel {

// Builds a scalar objective on a fresh graph from the given parameter values.
// Must be deterministic: any noise has to be sampled once, outside the builder.
using ScalarBuilder = std::function<NodeId(Graph&, const ParameterStore&)>;

struct GradCheckOptions {
  double step = 1e-6;
  double tolerance = 1e-4;
  // Relative error is |analytic - numeric| / max(|analytic|, |numeric|, floor),
  // so coordinates with vanishing gradients are judged on absolute error.
  double relative_floor = 1e-4;
  // Parameters to check; empty means every parameter in the store.
  std::vector<std::string> parameters;
};

struct ParameterCheck {
  std::string name;
  std::size_t coordinates = 0;
  double max_relative_error = 0.0;
  double max_absolute_error = 0.0;
  bool passed = true;
};

struct GradCheckReport {
  std::vector<ParameterCheck> parameters;
  double max_relative_error = 0.0;
  double tolerance = 0.0;
  bool passed = true;
};

// Compares backward() against central differences (f(p+h) - f(p-h)) / 2h for
// every coordinate of the selected parameters. The store is not modified.
GradCheckReport grad_check(const ScalarBuilder& objective, const ParameterStore& store,
                           const GradCheckOptions& options = {});

}  // namespace framesel
