#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "framesel/gradcheck.hpp"
#include "framesel/pipeline.hpp"

namespace framesel {

struct GradientSuiteConfig {
  std::uint64_t seed = 0;
  ModelDims dims{6, 5, 6, 4};
  std::size_t frames = 6;
  std::size_t options = 3;
  std::size_t k = 3;
  double tau = 0.1;
  GradCheckOptions check;
};

struct NamedReport {
  std::string name;
  GradCheckReport report;
};

// A small random instance shaped by the suite config.
VideoQAInstance random_instance(const GradientSuiteConfig& config, std::uint64_t seed);

// Finite-difference checks of
//   qfs: one frame's QFS score wrt W_e and W_q
//   qfm: summed QFM scores wrt the fusion perceptron
//   pipeline: answer loss through relaxed top-k (frozen Gumbel noise) wrt
//             every scorer parameter
std::vector<NamedReport> run_gradient_suite(const GradientSuiteConfig& config);

}  // namespace framesel
