#pragma once

#include "depthforge/autodiff.hpp"

#include <functional>

namespace depthforge::ad {

using ScalarFn = std::function<Var(const Var&)>;

struct GradcheckReport {
  double max_rel_error = 0.0;
  Index worst_index = -1;
  double analytic = 0.0;  // at worst_index
  double numeric = 0.0;
};

/// Compares backward() against central differences at x. Error per
/// coordinate is |analytic - numeric| / max(1, |numeric|).
GradcheckReport gradcheck_report(const ScalarFn& f, const GridXd& x, double eps = 1e-5);

inline double gradcheck(const ScalarFn& f, const GridXd& x, double eps = 1e-5) {
  return gradcheck_report(f, x, eps).max_rel_error;
}

}  // namespace depthforge::ad
