#include "depthforge/eval.hpp"

#include "depthforge/autodiff.hpp"
#include "depthforge/losses.hpp"
#include "depthforge/parallel.hpp"

#include <cmath>

namespace depthforge {

namespace {

void check_shapes(const GridXd& a, const GridXd& b, const Mask& valid, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols() || valid.rows() != a.rows() || valid.cols() != a.cols()) {
    throw std::invalid_argument(std::string(what) + ": shape mismatch");
  }
}

std::vector<double> selected(const GridXd& g, const Mask& valid) {
  std::vector<double> out;
  for (Index k = 0; k < g.size(); ++k) {
    if (valid.data()[k]) out.push_back(g.data()[k]);
  }
  return out;
}

Alignment median_ratio(const std::vector<double>& p, const std::vector<double>& g) {
  const double mp = ad::median_even_avg(p);
  const double mg = ad::median_even_avg(g);
  if (mp != 0.0) return {mg / mp, 0.0, true};
  return {1.0, mg - mp, true};
}

double mean_abs_dev(const std::vector<double>& v, double center) {
  double acc = 0.0;
  for (double x : v) acc += std::abs(x - center);
  return acc / static_cast<double>(v.size());
}

}  // namespace

Alignment align_least_squares(const GridXd& pred, const GridXd& gt, const Mask& valid) {
  check_shapes(pred, gt, valid, "align_least_squares");
  const auto p = selected(pred, valid);
  const auto g = selected(gt, valid);
  if (p.size() < 2) throw DomainError("align_least_squares: need at least 2 valid pixels");

  const double n = static_cast<double>(p.size());
  double pm = 0.0;
  double gm = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    pm += p[i];
    gm += g[i];
  }
  pm /= n;
  gm /= n;
  // Centered form of the 2x2 normal equations.
  double spp = 0.0;
  double spg = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    spp += (p[i] - pm) * (p[i] - pm);
    spg += (p[i] - pm) * (g[i] - gm);
  }
  if (!(spp > 1e-24 * n * std::max(1.0, pm * pm))) return median_ratio(p, g);
  const double s = spg / spp;
  return {s, gm - s * pm, false};
}

Alignment align_median_mad(const GridXd& pred, const GridXd& gt, const Mask& valid) {
  check_shapes(pred, gt, valid, "align_median_mad");
  const auto p = selected(pred, valid);
  const auto g = selected(gt, valid);
  if (p.size() < 2) throw DomainError("align_median_mad: need at least 2 valid pixels");
  const double tp = ad::median_even_avg(p);
  const double tg = ad::median_even_avg(g);
  const double sp = mean_abs_dev(p, tp);
  const double sg = mean_abs_dev(g, tg);
  if (sp < kDegenerateScale) return median_ratio(p, g);
  const double s = sg / sp;
  return {s, tg - s * tp, false};
}

Alignment align(const GridXd& pred, const GridXd& gt, const Mask& valid, AlignMode mode) {
  return mode == AlignMode::LeastSquares ? align_least_squares(pred, gt, valid) : align_median_mad(pred, gt, valid);
}

GridXd apply_alignment(const GridXd& pred, const Alignment& a) { return (pred.array() * a.scale + a.shift).matrix(); }

DepthMetrics depth_metrics(const GridXd& pred, const GridXd& gt, const Mask& valid) {
  check_shapes(pred, gt, valid, "depth_metrics");
  DepthMetrics m;
  double abs_rel = 0.0;
  double sq = 0.0;
  double sq_log = 0.0;
  double l10 = 0.0;
  Index d1 = 0;
  Index d2 = 0;
  Index d3 = 0;
  for (Index k = 0; k < pred.size(); ++k) {
    if (!valid.data()[k]) continue;
    const double p = pred.data()[k];
    const double g = gt.data()[k];
    if (!(p > 0.0) || !(g > 0.0)) throw DomainError("depth_metrics: nonpositive depth on a valid pixel");
    abs_rel += std::abs(p - g) / g;
    sq += (p - g) * (p - g);
    const double dl = std::log(p) - std::log(g);
    sq_log += dl * dl;
    l10 += std::abs(std::log10(p) - std::log10(g));
    const double ratio = std::max(p / g, g / p);
    d1 += ratio < 1.25;
    d2 += ratio < 1.25 * 1.25;
    d3 += ratio < 1.25 * 1.25 * 1.25;
    ++m.n_pixels;
  }
  if (m.n_pixels == 0) throw DomainError("depth_metrics: empty valid set");
  const double n = static_cast<double>(m.n_pixels);
  m.absrel = abs_rel / n;
  m.delta1 = static_cast<double>(d1) / n;
  m.delta2 = static_cast<double>(d2) / n;
  m.delta3 = static_cast<double>(d3) / n;
  m.rmse = std::sqrt(sq / n);
  m.rmse_log = std::sqrt(sq_log / n);
  m.log10 = l10 / n;
  return m;
}

DepthMetrics compute_metrics(const GridXd& aligned_disparity, const DepthMap& gt, const Mask& valid) {
  const GridXd depth = aligned_disparity.cwiseMax(kDisparityFloor).cwiseInverse();
  return depth_metrics(depth, gt.values, valid);
}

ImageEvaluation evaluate_prediction(const GridXd& pred_disparity, const DepthMap& gt, const Mask& valid,
                                    AlignMode mode) {
  check_shapes(pred_disparity, gt.values, valid, "evaluate_prediction");
  GridXd gt_disparity = GridXd::Zero(gt.values.rows(), gt.values.cols());
  for (Index k = 0; k < gt_disparity.size(); ++k) {
    if (!valid.data()[k]) continue;
    const double t = gt.values.data()[k];
    if (!(t > 0.0)) throw DomainError("evaluate_prediction: nonpositive ground-truth depth");
    gt_disparity.data()[k] = 1.0 / t;
  }
  ImageEvaluation e;
  e.alignment = align(pred_disparity, gt_disparity, valid, mode);
  e.metrics = compute_metrics(apply_alignment(pred_disparity, e.alignment), gt, valid);
  return e;
}

MetricReport aggregate(std::string dataset, std::span<const ImageEvaluation> images) {
  MetricReport r;
  r.dataset = std::move(dataset);
  for (const auto& e : images) {
    r.absrel += e.metrics.absrel;
    r.delta1 += e.metrics.delta1;
    r.delta2 += e.metrics.delta2;
    r.delta3 += e.metrics.delta3;
    r.rmse += e.metrics.rmse;
    r.rmse_log += e.metrics.rmse_log;
    r.log10 += e.metrics.log10;
    r.n_pixels += e.metrics.n_pixels;
    r.alignments.push_back(e.alignment);
  }
  r.n_images = static_cast<Index>(images.size());
  if (r.n_images > 0) {
    const double n = static_cast<double>(r.n_images);
    r.absrel /= n;
    r.delta1 /= n;
    r.delta2 /= n;
    r.delta3 /= n;
    r.rmse /= n;
    r.rmse_log /= n;
    r.log10 /= n;
  }
  return r;
}

Mask evaluation_mask(const DepthSample& sample) {
  if (!sample.sky) return sample.depth.valid;
  return (sample.depth.valid.array() && !sample.sky->array()).matrix();
}

MetricReport evaluate_predictor(const std::function<GridXd(const DepthSample&)>& predictor, std::string dataset,
                                std::span<const DepthSample> samples, AlignMode mode) {
  std::vector<ImageEvaluation> per_image(samples.size());
  parallel_for(samples.size(), [&](std::size_t i) {
    const auto& s = samples[i];
    per_image[i] = evaluate_prediction(predictor(s), s.depth, evaluation_mask(s), mode);
  });
  return aggregate(std::move(dataset), per_image);
}

MetricReport evaluate_checkpoint(const ToyDepthModel& model, std::string dataset, std::span<const DepthSample> samples,
                                 AlignMode mode) {
  return evaluate_predictor([&model](const DepthSample& s) { return predict(model, s.image).disparity; },
                            std::move(dataset), samples, mode);
}

}  // namespace depthforge
