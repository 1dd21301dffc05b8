#include "depthforge/gradsuite.hpp"

#include "depthforge/gradcheck.hpp"
#include "depthforge/losses.hpp"
#include "depthforge/model.hpp"
#include "depthforge/rng.hpp"

#include <algorithm>
#include <cmath>

namespace depthforge {

namespace {

using ad::Var;

GridXd random_grid(Index rows, Index cols, Rng& rng, double lo = -1.0, double hi = 1.0) {
  GridXd g(rows, cols);
  for (Index k = 0; k < g.size(); ++k) g.data()[k] = rng.uniform(lo, hi);
  return g;
}

// Roughly 80% valid, but never fewer than four pixels.
Mask random_valid(Index rows, Index cols, Rng& rng) {
  Mask m(rows, cols);
  do {
    for (Index k = 0; k < m.size(); ++k) m.data()[k] = rng.uniform() < 0.8;
  } while (m.count() < 4);
  return m;
}

Tensor random_image(Index h, Index w, Rng& rng) {
  Tensor t({3, h, w});
  for (Index k = 0; k < t.size(); ++k) t.data()[k] = rng.uniform();
  return t;
}

// Features where some rows sit well above the margin and the rest well
// below it, so no row is within reach of the threshold under perturbation.
std::pair<GridXd, GridXd> feature_pair(Index rows, Index cols, double alpha, Rng& rng) {
  for (;;) {
    GridXd f(rows, cols);
    GridXd g(rows, cols);
    for (Index k = 0; k < f.size(); ++k) f.data()[k] = rng.normal();
    for (Index r = 0; r < rows; ++r) {
      const bool close = r % 2 == 0;
      for (Index c = 0; c < cols; ++c) g(r, c) = close ? f(r, c) + 0.05 * rng.normal() : rng.normal();
    }
    const GridXd cos = ad::cosine_rows(Var::constant(f), Var::constant(g)).value();
    if ((cos.array() - alpha).abs().minCoeff() > 1e-3) return {f, g};
  }
}

}  // namespace

bool GradSuiteResult::passed() const {
  return std::all_of(cases.begin(), cases.end(), [&](const GradSuiteCase& c) { return c.max_rel_error < tolerance; });
}

GradSuiteResult run_gradient_suite(std::uint64_t seed, int points, double eps) {
  Rng rng(derive_seed(seed, 0x67726164ULL));
  GradSuiteResult result;
  const ToleranceMargin margin(0.85);

  auto run_case = [&](const std::string& name, auto&& one_point) {
    GradSuiteCase c{name, points, 0.0};
    for (int i = 0; i < points; ++i) c.max_rel_error = std::max(c.max_rel_error, one_point());
    result.cases.push_back(c);
  };

  run_case("L_l", [&] {
    const GridXd gt = random_grid(6, 6, rng, 0.1, 2.0);
    const Mask valid = random_valid(6, 6, rng);
    return ad::gradcheck([&](const Var& x) { return affine_invariant_loss(x, Var::constant(gt), valid); },
                         random_grid(6, 6, rng), eps);
  });

  run_case("L_u cutmix", [&] {
    const GridXd a = random_grid(8, 8, rng, 0.0, 1.0);
    const GridXd b = random_grid(8, 8, rng, 0.0, 1.0);
    const auto mask = CutMixMask::from_rect(8, 8, {1, 2, 4, 5});
    return ad::gradcheck([&](const Var& x) { return cutmix_unlabeled_loss(x, a, b, mask).loss; },
                         random_grid(8, 8, rng), eps);
  });

  run_case("L_u plain", [&] {
    const GridXd pseudo = random_grid(8, 8, rng, 0.0, 1.0);
    const Mask all = Mask::Constant(8, 8, true);
    return ad::gradcheck([&](const Var& x) { return affine_invariant_loss(x, Var::constant(pseudo), all); },
                         random_grid(8, 8, rng), eps);
  });

  run_case("L_feat", [&] {
    const auto [f, g] = feature_pair(8, 6, margin.alpha(), rng);
    return ad::gradcheck([&](const Var& x) { return feature_alignment_loss(x, Var::constant(g), margin); }, f, eps);
  });

  run_case("loss through model", [&] {
    const ModelShape shape{8, 4};
    const ToyDepthModel model = init_model(shape, rng.next());
    const FrozenEncoder frozen = init_frozen_encoder(shape, rng.next());
    const Tensor labeled = random_image(16, 16, rng);
    const GridXd gt = random_grid(16, 16, rng, 0.1, 1.0);
    const Mask valid = random_valid(16, 16, rng);
    const Tensor mixed = random_image(16, 16, rng);
    const GridXd pa = random_grid(16, 16, rng, 0.0, 1.0);
    const GridXd pb = random_grid(16, 16, rng, 0.0, 1.0);
    const auto mask = CutMixMask::from_rect(16, 16, {3, 2, 8, 10});
    const GridXd f_frozen = frozen_forward(frozen, mixed);

    double worst = 0.0;
    for (const auto& p : model.params.params()) {
      const auto fn = [&](const Var& x) {
        BoundModel bound(model, false);
        bound.rebind(p.name, x);
        const auto l = forward(bound, labeled);
        const auto u = forward(bound, mixed);
        const Var ll = affine_invariant_loss(l.disparity, Var::constant(gt), valid);
        const Var lu = cutmix_unlabeled_loss(u.disparity, pa, pb, mask).loss;
        const Var lf = feature_alignment_loss(u.features, Var::constant(f_frozen), margin);
        return overall_loss(ll, lu, lf);
      };
      worst = std::max(worst, ad::gradcheck(fn, p.value, eps));
    }
    return worst;
  });

  return result;
}

}  // namespace depthforge
