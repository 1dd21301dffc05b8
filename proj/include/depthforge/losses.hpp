#pragma once

#include "depthforge/autodiff.hpp"
#include "depthforge/errors.hpp"
#include "depthforge/tensor.hpp"

#include <optional>
#include <span>
#include <vector>

namespace depthforge {

/// Scale below which affine normalization is undefined.
inline constexpr double kDegenerateScale = 1e-12;

/// Zero-median, unit mean-absolute-deviation version of a map.
struct AffineNormalized {
  GridXd values;  // (d - shift) / scale on valid pixels, 0 elsewhere
  double shift = 0.0;
  double scale = 1.0;
};

/// Gradient-carrying result of a loss evaluated on plain inputs.
struct LossResult {
  double value = 0.0;
  GridXd grad;  // d(value)/d(first argument)
};

struct CutMixRect {
  Index top = 0;
  Index left = 0;
  Index height = 0;
  Index width = 0;

  friend bool operator==(const CutMixRect&, const CutMixRect&) = default;
};

/// Binary mask whose true region is exactly `rect`.
struct CutMixMask {
  Mask mask;
  CutMixRect rect;

  static CutMixMask from_rect(Index h, Index w, CutMixRect rect);
  Index area() const { return rect.height * rect.width; }
};

/// Cosine-similarity threshold for feature alignment; locations with
/// cos > alpha are left out of the loss.
class ToleranceMargin {
 public:
  ToleranceMargin() = default;
  explicit ToleranceMargin(double alpha);
  double alpha() const { return alpha_; }

 private:
  double alpha_ = 0.85;
};

/// Flat row-major indices of the true entries of a mask.
std::vector<Index> mask_indices(const Mask& mask);

AffineNormalized normalize_affine(const GridXd& d, const Mask& valid);

// Graph-building forms. The pred/student/feature argument may carry a
// gradient; targets are treated as constants.

/// Mean over valid pixels of |p_hat - g_hat|, each side normalized on its own.
ad::Var affine_invariant_loss(const ad::Var& pred, const ad::Var& gt, const Mask& valid);

struct CutMixLoss {
  ad::Var loss;
  bool fell_back = false;  // a region was degenerate; plain loss on the composite target used
};

/// Region-wise affine-invariant loss against the two pseudo-labels, area
/// weighted. Statistics are recomputed inside each region.
CutMixLoss cutmix_unlabeled_loss(const ad::Var& student_on_mixed, const GridXd& teacher_a, const GridXd& teacher_b,
                                 const CutMixMask& mask);

/// sum over locations with cos <= alpha of (1 - cos), divided by the number
/// of locations. No gradient reaches f_frozen.
ad::Var feature_alignment_loss(const ad::Var& f, const ad::Var& f_frozen, ToleranceMargin margin = {});

/// Arithmetic mean of the terms that are present.
ad::Var overall_loss(const std::optional<ad::Var>& labeled, const std::optional<ad::Var>& unlabeled,
                     const std::optional<ad::Var>& feat);
double overall_loss(std::optional<double> labeled, std::optional<double> unlabeled, std::optional<double> feat);

// Plain-value forms, gradient taken w.r.t. the first argument.
LossResult affine_invariant_loss(const GridXd& pred, const GridXd& gt, const Mask& valid);
LossResult cutmix_unlabeled_loss(const GridXd& student_on_mixed, const GridXd& teacher_a, const GridXd& teacher_b,
                                 const CutMixMask& mask);
LossResult feature_alignment_loss(const GridXd& f, const GridXd& f_frozen, ToleranceMargin margin = {});

}  // namespace depthforge
