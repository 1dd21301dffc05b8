#include "depthforge/perturb.hpp"

#include <array>
#include <cmath>
#include <stdexcept>

namespace depthforge {

namespace {

void check_range(const Range& r, const char* name) {
  if (!(r.lo <= r.hi) || !std::isfinite(r.lo) || !std::isfinite(r.hi)) {
    throw std::invalid_argument(std::string("PerturbConfig: range ") + name + " is empty or unordered");
  }
}

void require_rgb(const Tensor& image) {
  if (image.rank() != 3 || image.dim(0) != 3) throw std::invalid_argument("expected a 3 x H x W image");
}

void clamp01(Tensor& image) { image.data() = image.data().cwiseMax(0.0).cwiseMin(1.0); }

void adjust_brightness(Tensor& image, double factor) {
  image.data() *= factor;
  clamp01(image);
}

void adjust_contrast(Tensor& image, double factor) {
  const double m = luminance(image).mean();
  image.data() = ((image.data().array() - m) * factor + m).matrix();
  clamp01(image);
}

void adjust_saturation(Tensor& image, double factor) {
  const GridXd y = luminance(image);
  for (Index c = 0; c < 3; ++c) {
    image.plane(c) = ((image.plane(c) - y) * factor + y).eval();
  }
  clamp01(image);
}

std::array<double, 3> rgb_to_hsv(double r, double g, double b) {
  const double mx = std::max({r, g, b});
  const double mn = std::min({r, g, b});
  const double delta = mx - mn;
  double h = 0.0;
  if (delta > 0.0) {
    if (mx == r) {
      h = std::fmod((g - b) / delta, 6.0);
    } else if (mx == g) {
      h = (b - r) / delta + 2.0;
    } else {
      h = (r - g) / delta + 4.0;
    }
    h /= 6.0;
    if (h < 0.0) h += 1.0;
  }
  const double s = mx > 0.0 ? delta / mx : 0.0;
  return {h, s, mx};
}

std::array<double, 3> hsv_to_rgb(double h, double s, double v) {
  const double hh = h * 6.0;
  const int sector = static_cast<int>(std::floor(hh)) % 6;
  const double f = hh - std::floor(hh);
  const double p = v * (1.0 - s);
  const double q = v * (1.0 - s * f);
  const double t = v * (1.0 - s * (1.0 - f));
  switch (sector) {
    case 0: return {v, t, p};
    case 1: return {q, v, p};
    case 2: return {p, v, t};
    case 3: return {p, q, v};
    case 4: return {t, p, v};
    default: return {v, p, q};
  }
}

void adjust_hue(Tensor& image, double shift) {
  auto r = image.plane(0);
  auto g = image.plane(1);
  auto b = image.plane(2);
  for (Index k = 0; k < r.size(); ++k) {
    auto [h, s, v] = rgb_to_hsv(r.data()[k], g.data()[k], b.data()[k]);
    h = h + shift;
    h -= std::floor(h);
    const auto rgb = hsv_to_rgb(h, s, v);
    r.data()[k] = rgb[0];
    g.data()[k] = rgb[1];
    b.data()[k] = rgb[2];
  }
  clamp01(image);
}

}  // namespace

void PerturbConfig::validate() const {
  check_range(brightness, "brightness");
  check_range(contrast, "contrast");
  check_range(saturation, "saturation");
  check_range(hue, "hue");
  check_range(blur_sigma, "blur_sigma");
  check_range(cutmix_area, "cutmix_area");
  check_range(cutmix_aspect, "cutmix_aspect");
  if (brightness.lo < 0 || contrast.lo < 0 || saturation.lo < 0) {
    throw std::invalid_argument("PerturbConfig: jitter factors must be nonnegative");
  }
  if (blur_sigma.lo < 0) throw std::invalid_argument("PerturbConfig: blur sigma must be nonnegative");
  if (!(cutmix_probability >= 0.0 && cutmix_probability <= 1.0)) {
    throw std::invalid_argument("PerturbConfig: cutmix_probability outside [0, 1]");
  }
  if (!(cutmix_area.lo > 0.0 && cutmix_area.hi < 1.0)) {
    throw std::invalid_argument("PerturbConfig: cutmix_area must lie in (0, 1)");
  }
  if (!(cutmix_aspect.lo > 0.0)) throw std::invalid_argument("PerturbConfig: cutmix_aspect must be positive");
}

GridXd luminance(const Tensor& image) {
  require_rgb(image);
  return 0.299 * image.plane(0) + 0.587 * image.plane(1) + 0.114 * image.plane(2);
}

Tensor color_jitter(const Tensor& image, const PerturbConfig& config, Rng& rng) {
  require_rgb(image);
  const double b = config.brightness.sample(rng);
  const double c = config.contrast.sample(rng);
  const double s = config.saturation.sample(rng);
  const double h = config.hue.sample(rng);
  std::array<int, 4> order{0, 1, 2, 3};
  rng.shuffle(order.begin(), order.end());

  Tensor out = image;
  for (int op : order) {
    switch (op) {
      case 0:
        if (b != 1.0) adjust_brightness(out, b);
        break;
      case 1:
        if (c != 1.0) adjust_contrast(out, c);
        break;
      case 2:
        if (s != 1.0) adjust_saturation(out, s);
        break;
      default:
        if (h != 0.0) adjust_hue(out, h);
        break;
    }
  }
  return out;
}

Index reflect_index(Index i, Index n) {
  if (n == 1) return 0;
  const Index period = 2 * n;
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - 1 - i;
}

Eigen::VectorXd gaussian_kernel(double sigma) {
  if (!(sigma > 0.0)) return Eigen::VectorXd::Ones(1);
  const auto radius = static_cast<Index>(std::ceil(3.0 * sigma));
  Eigen::VectorXd k(2 * radius + 1);
  for (Index i = -radius; i <= radius; ++i) {
    k(i + radius) = std::exp(-0.5 * static_cast<double>(i * i) / (sigma * sigma));
  }
  return k / k.sum();
}

GridXd gaussian_blur(const GridXd& plane, double sigma) {
  if (sigma < 0.0) throw std::invalid_argument("gaussian_blur: negative sigma");
  if (sigma == 0.0) return plane;
  const Eigen::VectorXd k = gaussian_kernel(sigma);
  const Index radius = (k.size() - 1) / 2;
  const Index h = plane.rows();
  const Index w = plane.cols();

  GridXd tmp(h, w);
  for (Index r = 0; r < h; ++r) {
    for (Index c = 0; c < w; ++c) {
      double acc = 0.0;
      for (Index j = -radius; j <= radius; ++j) acc += k(j + radius) * plane(r, reflect_index(c + j, w));
      tmp(r, c) = acc;
    }
  }
  GridXd out(h, w);
  for (Index r = 0; r < h; ++r) {
    for (Index c = 0; c < w; ++c) {
      double acc = 0.0;
      for (Index j = -radius; j <= radius; ++j) acc += k(j + radius) * tmp(reflect_index(r + j, h), c);
      out(r, c) = acc;
    }
  }
  return out;
}

Tensor gaussian_blur(const Tensor& image, double sigma) {
  Tensor out(image.shape());
  const Index planes = image.size() / (image.height() * image.width());
  for (Index c = 0; c < planes; ++c) out.plane(c) = gaussian_blur(GridXd(image.plane(c)), sigma);
  out.data() = out.data().cwiseMax(0.0).cwiseMin(1.0);
  return out;
}

CutMixMask sample_cutmix_mask(Index h, Index w, const PerturbConfig& config, Rng& rng) {
  if (h < 2 || w < 2) throw std::invalid_argument("sample_cutmix_mask: map must be at least 2x2");
  const double hw = static_cast<double>(h * w);
  const double area = config.cutmix_area.sample(rng);
  const double aspect = config.cutmix_aspect.sample(rng);

  auto rh = static_cast<Index>(std::lround(std::sqrt(area * hw / aspect)));
  auto rw = static_cast<Index>(std::lround(std::sqrt(area * hw * aspect)));
  // Keep the area when one side saturates.
  if (rw > w) {
    rw = w;
    rh = static_cast<Index>(std::lround(area * hw / static_cast<double>(w)));
  }
  if (rh > h) {
    rh = h;
    rw = static_cast<Index>(std::lround(area * hw / static_cast<double>(h)));
  }
  rh = std::clamp<Index>(rh, 1, h);
  rw = std::clamp<Index>(rw, 1, w);
  if (rh == h && rw == w) --rw;

  const auto top = static_cast<Index>(rng.uniform_int(static_cast<std::uint64_t>(h - rh + 1)));
  const auto left = static_cast<Index>(rng.uniform_int(static_cast<std::uint64_t>(w - rw + 1)));
  return CutMixMask::from_rect(h, w, {top, left, rh, rw});
}

Tensor cutmix_images(const Tensor& u_a, const Tensor& u_b, const CutMixMask& mask) {
  if (u_a.shape() != u_b.shape()) throw std::invalid_argument("cutmix_images: image shapes differ");
  if (mask.mask.rows() != u_a.height() || mask.mask.cols() != u_a.width()) {
    throw std::invalid_argument("cutmix_images: mask shape differs from images");
  }
  Tensor out(u_a.shape());
  const Index planes = u_a.size() / (u_a.height() * u_a.width());
  for (Index c = 0; c < planes; ++c) out.plane(c) = mask.mask.select(u_a.plane(c), u_b.plane(c));
  return out;
}

Tensor color_distort(const Tensor& image, const PerturbConfig& config, Rng& rng) {
  Tensor out = color_jitter(image, config, rng);
  return gaussian_blur(out, config.blur_sigma.sample(rng));
}

}  // namespace depthforge
