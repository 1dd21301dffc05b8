#pragma once

#include "depthforge/depth.hpp"
#include "depthforge/model.hpp"

#include <span>
#include <string>
#include <vector>

namespace depthforge {

/// Aligned disparities are clamped to this before inversion to depth.
inline constexpr double kDisparityFloor = 1e-6;

enum class AlignMode {
  LeastSquares,  // closed-form fit in disparity space
  MedianMad,     // match median and mean absolute deviation
};

struct Alignment {
  double scale = 1.0;
  double shift = 0.0;
  bool degenerate = false;  // constant prediction; median-ratio fallback used
};

/// argmin over (s, t) of sum_valid (s p + t - g)^2.
Alignment align_least_squares(const GridXd& pred, const GridXd& gt, const Mask& valid);
Alignment align_median_mad(const GridXd& pred, const GridXd& gt, const Mask& valid);
Alignment align(const GridXd& pred, const GridXd& gt, const Mask& valid, AlignMode mode);

GridXd apply_alignment(const GridXd& pred, const Alignment& a);

struct DepthMetrics {
  double absrel = 0.0;
  double delta1 = 0.0;
  double delta2 = 0.0;
  double delta3 = 0.0;
  double rmse = 0.0;
  double rmse_log = 0.0;
  double log10 = 0.0;
  Index n_pixels = 0;
};

/// Metrics of a depth prediction against ground-truth depth over `valid`.
/// Both maps must be positive on valid pixels.
DepthMetrics depth_metrics(const GridXd& pred_depth, const GridXd& gt_depth, const Mask& valid);

/// Clamps an already-aligned disparity at kDisparityFloor, inverts it to
/// depth and scores it.
DepthMetrics compute_metrics(const GridXd& aligned_disparity, const DepthMap& gt, const Mask& valid);

struct ImageEvaluation {
  Alignment alignment;
  DepthMetrics metrics;
};

/// Aligns a raw disparity prediction to 1/gt over `valid`, then scores it.
ImageEvaluation evaluate_prediction(const GridXd& pred_disparity, const DepthMap& gt, const Mask& valid,
                                    AlignMode mode = AlignMode::LeastSquares);

struct MetricReport {
  std::string dataset;
  double absrel = 0.0;
  double delta1 = 0.0;
  double delta2 = 0.0;
  double delta3 = 0.0;
  double rmse = 0.0;
  double rmse_log = 0.0;
  double log10 = 0.0;
  Index n_pixels = 0;
  Index n_images = 0;
  std::vector<Alignment> alignments;
};

/// Equal-weight mean over images, summed in input order.
MetricReport aggregate(std::string dataset, std::span<const ImageEvaluation> images);

/// Evaluation mask for a sample: valid and not sky.
Mask evaluation_mask(const DepthSample& sample);

/// Forward, align, score and aggregate over a test set. Images are
/// evaluated in parallel; the reduction order is fixed.
MetricReport evaluate_checkpoint(const ToyDepthModel& model, std::string dataset, std::span<const DepthSample> samples,
                            AlignMode mode = AlignMode::LeastSquares);

/// Same, with an arbitrary disparity predictor (used for oracle checks).
MetricReport evaluate_predictor(const std::function<GridXd(const DepthSample&)>& predictor, std::string dataset,
                                std::span<const DepthSample> samples, AlignMode mode = AlignMode::LeastSquares);

}  // namespace depthforge
