#pragma once

#include "depthforge/errors.hpp"
#include "depthforge/tensor.hpp"

#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>

namespace depthforge {

struct DepthMap {
  GridXd values;  // t >= 0, arbitrary units
  Mask valid;
};

struct DisparityMap {
  GridXd values;  // [0, 1] on valid pixels
  Mask valid;
};

/// Labeled unit: image 3 x H x W in [0,1], depth, optional sky mask.
struct DepthSample {
  Tensor image;
  DepthMap depth;
  std::optional<Mask> sky;

  Index height() const { return depth.values.rows(); }
  Index width() const { return depth.values.cols(); }
};

/// Where a pseudo-label came from. The student asserts `clean_input` before
/// training on it.
struct PseudoProvenance {
  std::uint64_t teacher_hash = 0;
  bool clean_input = false;
};

struct PseudoSample {
  Tensor image;
  DisparityMap pseudo_disparity;
  PseudoProvenance provenance;
};

struct MaskedStats {
  Index count = 0;
  double min = std::numeric_limits<double>::quiet_NaN();
  double max = std::numeric_limits<double>::quiet_NaN();
  double mean = std::numeric_limits<double>::quiet_NaN();

  bool defined() const { return count > 0; }
};

/// Statistics over mask-true entries only. Empty mask gives count 0 and NaN
/// for the rest.
template <typename Derived, typename MaskDerived>
MaskedStats masked_stats(const Eigen::DenseBase<Derived>& values, const Eigen::DenseBase<MaskDerived>& mask) {
  if (values.rows() != mask.rows() || values.cols() != mask.cols()) {
    throw std::invalid_argument("masked_stats: shape mismatch " + shape_string(values.rows(), values.cols()) +
                                " vs " + shape_string(mask.rows(), mask.cols()));
  }
  MaskedStats s;
  double sum = 0.0;
  for (Index r = 0; r < values.rows(); ++r) {
    for (Index c = 0; c < values.cols(); ++c) {
      if (!mask(r, c)) continue;
      const double v = static_cast<double>(values(r, c));
      if (s.count == 0) {
        s.min = s.max = v;
      } else {
        s.min = std::min(s.min, v);
        s.max = std::max(s.max, v);
      }
      sum += v;
      ++s.count;
    }
  }
  if (s.count > 0) s.mean = sum / static_cast<double>(s.count);
  return s;
}

/// Raw disparity range below this is treated as a flat scene.
inline constexpr double kDegenerateRange = 1e-12;

/// d = 1/t on valid non-sky pixels, min-max normalized over them; sky forced
/// to 0 afterwards; invalid pixels stored as 0 and left invalid.
DisparityMap depth_to_disparity(const DepthMap& depth, const std::optional<Mask>& sky = std::nullopt);

/// Mirrors image, depth, validity and sky along the width axis.
DepthSample horizontal_flip(const DepthSample& sample);

GridXd flip_columns(const GridXd& g);
Mask flip_columns(const Mask& m);
Tensor flip_columns(const Tensor& image);

/// Checks the DepthSample invariants; throws std::invalid_argument.
void validate(const DepthSample& sample);

}  // namespace depthforge
