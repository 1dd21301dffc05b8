#pragma once

#include "depthforge/losses.hpp"
#include "depthforge/rng.hpp"
#include "depthforge/tensor.hpp"

#include <cstdint>

namespace depthforge {

struct Range {
  double lo = 0.0;
  double hi = 0.0;

  double sample(Rng& rng) const { return lo == hi ? lo : rng.uniform(lo, hi); }
  friend bool operator==(const Range&, const Range&) = default;
};

/// Strength of the perturbations applied to the student's view of unlabeled
/// images. Jitter factors are multiplicative; hue is a fraction of the hue
/// circle.
struct PerturbConfig {
  Range brightness{0.6, 1.4};
  Range contrast{0.6, 1.4};
  Range saturation{0.6, 1.4};
  Range hue{-0.1, 0.1};
  Range blur_sigma{0.1, 2.0};
  double cutmix_probability = 0.5;
  Range cutmix_area{0.25, 0.75};
  Range cutmix_aspect{0.5, 2.0};  // width / height
  std::uint64_t seed = 0;

  void validate() const;
  friend bool operator==(const PerturbConfig&, const PerturbConfig&) = default;
};

/// Brightness, contrast, saturation and hue in a random order, each with a
/// factor drawn from the config. Output clamped to [0,1]. Identity factors
/// are skipped so that collapsed ranges reproduce the input exactly.
Tensor color_jitter(const Tensor& image, const PerturbConfig& config, Rng& rng);

/// Separable Gaussian, radius ceil(3 sigma), symmetric reflection at the
/// borders. sigma == 0 returns the input.
GridXd gaussian_blur(const GridXd& plane, double sigma);
Tensor gaussian_blur(const Tensor& image, double sigma);

/// Normalized 1-D kernel of length 2 * ceil(3 sigma) + 1.
Eigen::VectorXd gaussian_kernel(double sigma);

/// Index into [0, n) under symmetric reflection (edge sample repeated).
Index reflect_index(Index i, Index n);

CutMixMask sample_cutmix_mask(Index h, Index w, const PerturbConfig& config, Rng& rng);

/// u_a where the mask is set, u_b elsewhere, on every channel.
Tensor cutmix_images(const Tensor& u_a, const Tensor& u_b, const CutMixMask& mask);

/// Color jitter followed by a blur with a sampled sigma.
Tensor color_distort(const Tensor& image, const PerturbConfig& config, Rng& rng);

/// Rec. 601 luma of a 3 x H x W image.
GridXd luminance(const Tensor& image);

}  // namespace depthforge
