#include "depthforge/losses.hpp"

#include <cmath>
#include <string>

namespace depthforge {

namespace {

struct NormalizedVar {
  ad::Var values;  // n x 1, one entry per selected pixel
  ad::Var shift;
  ad::Var scale;
};

NormalizedVar normalize_selected(const ad::Var& d, std::span<const Index> idx) {
  if (idx.size() < 2) throw DegenerateSample("affine normalization needs at least 2 valid pixels");
  const auto n = static_cast<Index>(idx.size());
  ad::Var sel = ad::gather(d, idx, n, 1);
  ad::Var t = ad::median_even_avg(sel);
  ad::Var centered = ad::sub(sel, t);
  ad::Var s = ad::mean(ad::abs(centered));
  if (!(s.item() >= kDegenerateScale)) {
    throw DegenerateSample("affine normalization: scale " + std::to_string(s.item()) + " below threshold");
  }
  return {ad::div(centered, s), t, s};
}

ad::Var region_loss(const ad::Var& pred, const ad::Var& gt, std::span<const Index> idx) {
  const NormalizedVar p = normalize_selected(pred, idx);
  const NormalizedVar g = normalize_selected(gt, idx);
  return ad::mean(ad::abs(ad::sub(p.values, g.values)));
}

void require_same_shape(const GridXd& a, Index rows, Index cols, const char* what) {
  if (a.rows() != rows || a.cols() != cols) {
    throw ad::ShapeError(std::string(what) + ": expected " + shape_string(rows, cols) + ", got " +
                         shape_string(a.rows(), a.cols()));
  }
}

LossResult evaluate(const GridXd& x, const std::function<ad::Var(const ad::Var&)>& f) {
  ad::Var leaf = ad::Var::parameter(x);
  ad::Var loss = f(leaf);
  ad::backward(loss);
  return {loss.item(), leaf.grad()};
}

}  // namespace

CutMixMask CutMixMask::from_rect(Index h, Index w, CutMixRect rect) {
  if (rect.top < 0 || rect.left < 0 || rect.height < 0 || rect.width < 0 || rect.top + rect.height > h ||
      rect.left + rect.width > w) {
    throw std::invalid_argument("CutMixMask: rectangle outside " + shape_string(h, w));
  }
  CutMixMask m{Mask::Constant(h, w, false), rect};
  m.mask.block(rect.top, rect.left, rect.height, rect.width).setConstant(true);
  return m;
}

ToleranceMargin::ToleranceMargin(double alpha) : alpha_(alpha) {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw std::invalid_argument("tolerance margin must lie in (0, 1]");
}

std::vector<Index> mask_indices(const Mask& mask) {
  std::vector<Index> idx;
  idx.reserve(static_cast<std::size_t>(mask.count()));
  for (Index k = 0; k < mask.size(); ++k) {
    if (mask.data()[k]) idx.push_back(k);
  }
  return idx;
}

AffineNormalized normalize_affine(const GridXd& d, const Mask& valid) {
  if (valid.rows() != d.rows() || valid.cols() != d.cols()) throw ad::ShapeError("normalize_affine: mask shape mismatch");
  const auto idx = mask_indices(valid);
  const NormalizedVar n = normalize_selected(ad::Var::constant(d), idx);
  AffineNormalized out{GridXd::Zero(d.rows(), d.cols()), n.shift.item(), n.scale.item()};
  for (std::size_t k = 0; k < idx.size(); ++k) out.values.data()[idx[k]] = n.values.value().data()[k];
  return out;
}

ad::Var affine_invariant_loss(const ad::Var& pred, const ad::Var& gt, const Mask& valid) {
  require_same_shape(gt.value(), pred.rows(), pred.cols(), "affine_invariant_loss gt");
  if (valid.rows() != pred.rows() || valid.cols() != pred.cols()) {
    throw ad::ShapeError("affine_invariant_loss: mask shape mismatch");
  }
  const auto idx = mask_indices(valid);
  return region_loss(pred, gt, idx);
}

CutMixLoss cutmix_unlabeled_loss(const ad::Var& student, const GridXd& teacher_a, const GridXd& teacher_b,
                                 const CutMixMask& mask) {
  const Index h = student.rows();
  const Index w = student.cols();
  require_same_shape(teacher_a, h, w, "cutmix teacher_a");
  require_same_shape(teacher_b, h, w, "cutmix teacher_b");
  if (mask.mask.rows() != h || mask.mask.cols() != w) throw ad::ShapeError("cutmix: mask shape mismatch");

  const auto inside = mask_indices(mask.mask);
  const Mask outside_mask = (!mask.mask.array()).matrix();
  const auto outside = mask_indices(outside_mask);
  const double hw = static_cast<double>(h * w);

  if (outside.empty()) return {region_loss(student, ad::Var::constant(teacher_a), inside), false};
  if (inside.empty()) return {region_loss(student, ad::Var::constant(teacher_b), outside), false};

  try {
    ad::Var l_in = region_loss(student, ad::Var::constant(teacher_a), inside);
    ad::Var l_out = region_loss(student, ad::Var::constant(teacher_b), outside);
    const double w_in = static_cast<double>(inside.size()) / hw;
    const double w_out = static_cast<double>(outside.size()) / hw;
    return {ad::add(ad::scale(l_in, w_in), ad::scale(l_out, w_out)), false};
  } catch (const DegenerateSample&) {
    const GridXd composite = mask.mask.select(teacher_a, teacher_b);
    const Mask all = Mask::Constant(h, w, true);
    return {affine_invariant_loss(student, ad::Var::constant(composite), all), true};
  }
}

ad::Var feature_alignment_loss(const ad::Var& f, const ad::Var& f_frozen, ToleranceMargin margin) {
  if (f.rows() != f_frozen.rows() || f.cols() != f_frozen.cols()) {
    throw ad::ShapeError("feature_alignment_loss: " + shape_string(f.rows(), f.cols()) + " vs " +
                         shape_string(f_frozen.rows(), f_frozen.cols()));
  }
  const Index g = f.rows();
  if (g == 0) throw DomainError("feature_alignment_loss: empty feature grid");
  ad::Var cos = ad::cosine_rows(f, ad::detach(f_frozen));

  std::vector<Index> kept;
  for (Index i = 0; i < g; ++i) {
    if (!(cos.value()(i, 0) > margin.alpha())) kept.push_back(i);
  }
  if (kept.empty()) return ad::scale(ad::sum(cos), 0.0);

  const auto n = static_cast<Index>(kept.size());
  ad::Var kept_sum = ad::sum(ad::gather(cos, kept, n, 1));
  return ad::scale(ad::shift(ad::neg(kept_sum), static_cast<double>(n)), 1.0 / static_cast<double>(g));
}

ad::Var overall_loss(const std::optional<ad::Var>& labeled, const std::optional<ad::Var>& unlabeled,
                     const std::optional<ad::Var>& feat) {
  std::optional<ad::Var> total;
  int present = 0;
  for (const auto* term : {&labeled, &unlabeled, &feat}) {
    if (!*term) continue;
    total = total ? ad::add(*total, **term) : **term;
    ++present;
  }
  if (!total) return ad::Var::scalar(0.0);
  return ad::scale(*total, 1.0 / present);
}

double overall_loss(std::optional<double> labeled, std::optional<double> unlabeled, std::optional<double> feat) {
  double total = 0.0;
  int present = 0;
  for (const auto& term : {labeled, unlabeled, feat}) {
    if (!term) continue;
    total += *term;
    ++present;
  }
  return present == 0 ? 0.0 : total / present;
}

LossResult affine_invariant_loss(const GridXd& pred, const GridXd& gt, const Mask& valid) {
  return evaluate(pred, [&](const ad::Var& p) { return affine_invariant_loss(p, ad::Var::constant(gt), valid); });
}

LossResult cutmix_unlabeled_loss(const GridXd& student, const GridXd& teacher_a, const GridXd& teacher_b,
                                 const CutMixMask& mask) {
  return evaluate(student, [&](const ad::Var& s) { return cutmix_unlabeled_loss(s, teacher_a, teacher_b, mask).loss; });
}

LossResult feature_alignment_loss(const GridXd& f, const GridXd& f_frozen, ToleranceMargin margin) {
  return evaluate(f, [&](const ad::Var& x) { return feature_alignment_loss(x, ad::Var::constant(f_frozen), margin); });
}

}  // namespace depthforge
