#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace depthforge {

struct GradSuiteCase {
  std::string name;
  int points = 0;
  double max_rel_error = 0.0;
};

struct GradSuiteResult {
  std::vector<GradSuiteCase> cases;
  double tolerance = 1e-6;

  bool passed() const;
};

/// Central-difference checks of every loss and of the loss through the toy
/// model, each at `points` random generic inputs.
GradSuiteResult run_gradient_suite(std::uint64_t seed, int points = 10, double eps = 1e-5);

}  // namespace depthforge
