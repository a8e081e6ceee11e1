#include "framesel/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "framesel/errors.hpp"

namespace framesel {
namespace {

double evaluate(const ScalarBuilder& objective, const ParameterStore& store,
                const std::string& perturbed) {
  Graph graph;
  const double value = graph.scalar_value(objective(graph, store));
  if (!std::isfinite(value)) {
    throw EvaluationError("grad_check: objective is not finite while perturbing '" + perturbed +
                          "'");
  }
  return value;
}

}  // namespace

GradCheckReport grad_check(const ScalarBuilder& objective, const ParameterStore& store,
                           const GradCheckOptions& options) {
  if (!(options.step > 0.0)) throw DomainError("grad_check: step must be > 0");

  ParameterStore work = store;
  work.zero_gradients();
  {
    Graph graph;
    const NodeId root = objective(graph, work);
    if (!std::isfinite(graph.scalar_value(root))) {
      throw EvaluationError("grad_check: objective is not finite at the base point");
    }
    graph.backward(root, work);
  }

  const std::vector<std::string> names =
      options.parameters.empty() ? work.names() : options.parameters;

  GradCheckReport report;
  report.tolerance = options.tolerance;
  const double h = options.step;

  for (const std::string& name : names) {
    ParameterCheck check;
    check.name = name;
    const Matrix analytic = work.gradient(name);
    Matrix& value = work.mutable_value(name);
    for (Eigen::Index i = 0; i < value.size(); ++i) {
      const double saved = value.data()[i];
      value.data()[i] = saved + h;
      const double plus = evaluate(objective, work, name);
      value.data()[i] = saved - h;
      const double minus = evaluate(objective, work, name);
      value.data()[i] = saved;

      const double numeric = (plus - minus) / (2.0 * h);
      const double a = analytic.data()[i];
      const double abs_err = std::abs(a - numeric);
      const double rel_err =
          abs_err / std::max({std::abs(a), std::abs(numeric), options.relative_floor});
      check.max_absolute_error = std::max(check.max_absolute_error, abs_err);
      check.max_relative_error = std::max(check.max_relative_error, rel_err);
      ++check.coordinates;
    }
    check.passed = check.max_relative_error < options.tolerance;
    report.max_relative_error = std::max(report.max_relative_error, check.max_relative_error);
    report.passed = report.passed && check.passed;
    report.parameters.push_back(std::move(check));
  }
  return report;
}

}  // namespace framesel
