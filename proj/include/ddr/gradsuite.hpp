// Finite-difference validation of every differentiable operator's reverse
// rule. Exposed as a library so the CLI and the test suites share one list.
#pragma once

#include <string>
#include <vector>

#include "ddr/tensor.hpp"

namespace ddr {

struct GradSuiteResult {
  std::string name;
  GradCheckReport report;
};

// Checks each operator at `points` random inputs with central differences
// (step h, tolerance rtol applied to the mixed relative error).
std::vector<GradSuiteResult> operator_gradient_suite(int points = 100, double h = 1e-6,
                                                     double rtol = 1e-4,
                                                     std::uint64_t seed = 20240801);

}  // namespace ddr
