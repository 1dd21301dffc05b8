#include "depthforge/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace depthforge::ad {

GradcheckReport gradcheck_report(const ScalarFn& f, const GridXd& x, double eps) {
  Var leaf = Var::parameter(x);
  Var root = f(leaf);
  backward(root);
  const GridXd analytic = leaf.grad();

  GradcheckReport report;
  GridXd probe = x;
  for (Index k = 0; k < x.size(); ++k) {
    const double orig = probe.data()[k];
    probe.data()[k] = orig + eps;
    const double up = f(Var::constant(probe)).item();
    probe.data()[k] = orig - eps;
    const double down = f(Var::constant(probe)).item();
    probe.data()[k] = orig;

    const double numeric = (up - down) / (2.0 * eps);
    const double err = std::abs(analytic.data()[k] - numeric) / std::max(1.0, std::abs(numeric));
    if (err > report.max_rel_error || report.worst_index < 0) {
      report.max_rel_error = err;
      report.worst_index = k;
      report.analytic = analytic.data()[k];
      report.numeric = numeric;
    }
  }
  return report;
}

}  // namespace depthforge::ad
