#include "depthforge/depth.hpp"

namespace depthforge {

DisparityMap depth_to_disparity(const DepthMap& depth, const std::optional<Mask>& sky) {
  const Index h = depth.values.rows();
  const Index w = depth.values.cols();
  if (depth.valid.rows() != h || depth.valid.cols() != w) {
    throw std::invalid_argument("depth_to_disparity: valid mask shape mismatch");
  }
  if (sky && (sky->rows() != h || sky->cols() != w)) {
    throw std::invalid_argument("depth_to_disparity: sky mask shape mismatch");
  }

  DisparityMap out{GridXd::Zero(h, w), depth.valid};
  Mask ground = depth.valid;
  if (sky) ground = ground.array() && !sky->array();

  for (Index r = 0; r < h; ++r) {
    for (Index c = 0; c < w; ++c) {
      if (!ground(r, c)) continue;
      const double t = depth.values(r, c);
      if (!(t > 0.0) || !std::isfinite(t)) {
        throw DomainError("depth_to_disparity: nonpositive depth " + std::to_string(t) + " at (" +
                          std::to_string(r) + ", " + std::to_string(c) + ")");
      }
      out.values(r, c) = 1.0 / t;
    }
  }

  const MaskedStats stats = masked_stats(out.values, ground);
  if (!stats.defined()) {
    const bool any_sky = sky && (sky->array() && depth.valid.array()).any();
    if (!any_sky) throw DomainError("depth_to_disparity: empty valid set");
    return out;  // all valid pixels are sky: zeros
  }

  const double range = stats.max - stats.min;
  for (Index r = 0; r < h; ++r) {
    for (Index c = 0; c < w; ++c) {
      if (!ground(r, c)) continue;
      out.values(r, c) = range < kDegenerateRange ? 0.5 : (out.values(r, c) - stats.min) / range;
    }
  }
  return out;
}

GridXd flip_columns(const GridXd& g) { return g.rowwise().reverse(); }

Mask flip_columns(const Mask& m) { return m.rowwise().reverse(); }

Tensor flip_columns(const Tensor& image) {
  Tensor out(image.shape());
  const Index planes = image.size() / (image.height() * image.width());
  for (Index c = 0; c < planes; ++c) out.plane(c) = image.plane(c).rowwise().reverse();
  return out;
}

DepthSample horizontal_flip(const DepthSample& sample) {
  DepthSample out;
  out.image = flip_columns(sample.image);
  out.depth.values = flip_columns(sample.depth.values);
  out.depth.valid = flip_columns(sample.depth.valid);
  if (sample.sky) out.sky = flip_columns(*sample.sky);
  return out;
}

void validate(const DepthSample& sample) {
  const Index h = sample.height();
  const Index w = sample.width();
  if (sample.image.rank() != 3 || sample.image.dim(0) != 3 || sample.image.height() != h ||
      sample.image.width() != w) {
    throw std::invalid_argument("DepthSample: image must be 3x" + shape_string(h, w));
  }
  if (sample.depth.valid.rows() != h || sample.depth.valid.cols() != w) {
    throw std::invalid_argument("DepthSample: valid mask shape mismatch");
  }
  for (Index r = 0; r < h; ++r) {
    for (Index c = 0; c < w; ++c) {
      if (sample.depth.valid(r, c) && !(sample.depth.values(r, c) > 0.0)) {
        throw std::invalid_argument("DepthSample: valid pixel with nonpositive depth");
      }
    }
  }
  if (sample.sky) {
    if (sample.sky->rows() != h || sample.sky->cols() != w) {
      throw std::invalid_argument("DepthSample: sky mask shape mismatch");
    }
    if ((sample.sky->array() && !sample.depth.valid.array()).any()) {
      throw std::invalid_argument("DepthSample: sky pixel not marked valid");
    }
  }
}

}  // namespace depthforge
