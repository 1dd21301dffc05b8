#include "depthforge/synth.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

namespace depthforge {

namespace {

using Color = std::array<double, 3>;

struct DomainStyle {
  Shape shape = Shape::Rectangle;
  Color sky_top;
  Color sky_bottom;
  Color fog;
  Color ground;
  Color tint;  // multiplied into primitive colors
  double gain = 1.0;
  double noise_scale = 1.0;
  double fog_distance = 8.0;  // in units of t_min
};

DomainStyle style_for(int domain) {
  switch (domain) {
    case 0:
      return {Shape::Rectangle,
              {0.45, 0.62, 0.92},
              {0.78, 0.86, 0.97},
              {0.74, 0.79, 0.85},
              {0.33, 0.42, 0.24},
              {1.0, 1.0, 1.0},
              1.0,
              1.0,
              3.0};
    case 1:
      return {Shape::Disk,
              {0.92, 0.66, 0.42},
              {0.97, 0.84, 0.66},
              {0.86, 0.74, 0.58},
              {0.52, 0.36, 0.26},
              {1.1, 0.85, 0.7},
              0.8,
              1.0,
              3.0};
    default: {
      Rng rng(derive_seed(0x5eed0d0a11ULL, static_cast<std::uint64_t>(domain)));
      auto color = [&rng](double lo, double hi) { return Color{rng.uniform(lo, hi), rng.uniform(lo, hi), rng.uniform(lo, hi)}; };
      DomainStyle s;
      s.shape = rng.bernoulli(0.5) ? Shape::Disk : Shape::Rectangle;
      s.sky_top = color(0.3, 0.95);
      s.sky_bottom = color(0.5, 1.0);
      s.fog = color(0.5, 0.95);
      s.ground = color(0.2, 0.6);
      s.tint = color(0.7, 1.2);
      s.gain = rng.uniform(0.7, 1.1);
      s.noise_scale = rng.uniform(0.5, 3.0);
      s.fog_distance = rng.uniform(5.0, 12.0);
      return s;
    }
  }
}

Index horizon_row(const SceneSpec& spec) {
  return std::clamp<Index>(static_cast<Index>(std::lround(spec.horizon * static_cast<double>(spec.height))), 0,
                           spec.height - 1);
}

double ground_depth(const SceneSpec& spec, Index row, Index hr) {
  const double t = spec.t_min * static_cast<double>(spec.height - hr) / (static_cast<double>(row - hr) + 0.5);
  return std::min(t, 0.95 * spec.t_max);
}

double round_to_float(double v) { return static_cast<double>(static_cast<float>(v)); }

}  // namespace

void SceneSpec::validate() const {
  if (height <= 0 || width <= 0) throw std::invalid_argument("SceneSpec: image size must be positive");
  if (!(t_min > 0.0 && t_max > t_min)) throw std::invalid_argument("SceneSpec: need t_max > t_min > 0");
  if (primitives < 0) throw std::invalid_argument("SceneSpec: negative primitive count");
  if (!(horizon >= 0.0 && horizon < 1.0)) throw std::invalid_argument("SceneSpec: horizon outside [0, 1)");
  if (texture_noise < 0.0) throw std::invalid_argument("SceneSpec: negative texture noise");
}

bool Primitive::covers(Index r, Index c) const {
  const double dr = static_cast<double>(r) - center_row;
  const double dc = static_cast<double>(c) - center_col;
  if (shape == Shape::Rectangle) return std::abs(dr) <= half_height && std::abs(dc) <= half_width;
  return (dr * dr) / (half_height * half_height) + (dc * dc) / (half_width * half_width) <= 1.0;
}

DepthSample render_scene(const SceneSpec& spec, std::vector<Primitive> primitives, Rng& rng) {
  spec.validate();
  const DomainStyle style = style_for(spec.domain);
  const Index h = spec.height;
  const Index w = spec.width;
  const Index hr = horizon_row(spec);

  DepthSample s;
  s.image = Tensor({3, h, w});
  s.depth.values = GridXd(h, w);
  s.depth.valid = Mask::Constant(h, w, true);
  s.sky = Mask::Constant(h, w, false);

  GridXd albedo[3] = {GridXd(h, w), GridXd(h, w), GridXd(h, w)};
  for (Index r = 0; r < h; ++r) {
    for (Index c = 0; c < w; ++c) {
      if (r < hr) {
        const double a = hr > 1 ? static_cast<double>(r) / static_cast<double>(hr - 1) : 1.0;
        s.depth.values(r, c) = spec.t_max;
        (*s.sky)(r, c) = true;
        for (int ch = 0; ch < 3; ++ch) albedo[ch](r, c) = (1.0 - a) * style.sky_top[ch] + a * style.sky_bottom[ch];
      } else {
        const double t = ground_depth(spec, r, hr);
        s.depth.values(r, c) = t;
        const double stripe = 0.08 * std::sin(2.0 * M_PI * 6.0 * spec.t_min / t);
        for (int ch = 0; ch < 3; ++ch) albedo[ch](r, c) = style.ground[ch] + stripe;
      }
    }
  }

  // Farthest first, so nearer primitives overwrite.
  std::stable_sort(primitives.begin(), primitives.end(),
                   [](const Primitive& a, const Primitive& b) { return a.depth > b.depth; });
  for (const auto& p : primitives) {
    if (!(p.depth > 0.0)) throw std::invalid_argument("render_scene: primitive depth must be positive");
    for (Index r = 0; r < h; ++r) {
      for (Index c = 0; c < w; ++c) {
        if (!p.covers(r, c)) continue;
        s.depth.values(r, c) = p.depth;
        (*s.sky)(r, c) = false;
        for (int ch = 0; ch < 3; ++ch) albedo[ch](r, c) = p.color[ch];
      }
    }
  }

  const double fog_distance = style.fog_distance * spec.t_min;
  const double amp = spec.texture_noise * style.noise_scale;
  for (Index r = 0; r < h; ++r) {
    for (Index c = 0; c < w; ++c) {
      const bool sky = (*s.sky)(r, c);
      const double att = sky ? 0.0 : std::exp(-s.depth.values(r, c) / fog_distance);
      for (Index ch = 0; ch < 3; ++ch) {
        const double base = sky ? albedo[ch](r, c) : att * albedo[ch](r, c) + (1.0 - att) * style.fog[ch];
        const double noise = amp * (sky ? 0.25 : att + 0.25) * rng.normal();
        s.image.plane(ch)(r, c) = round_to_float(std::clamp(style.gain * base + noise, 0.0, 1.0));
      }
      s.depth.values(r, c) = round_to_float(s.depth.values(r, c));
    }
  }
  return s;
}

DepthSample generate_sample(const SceneSpec& spec, std::uint64_t seed) {
  spec.validate();
  const DomainStyle style = style_for(spec.domain);
  Rng rng(seed);
  const Index hr = horizon_row(spec);
  const double ground_rows = static_cast<double>(spec.height - hr);

  std::vector<Primitive> prims;
  for (int i = 0; i < spec.primitives; ++i) {
    Primitive p;
    p.shape = style.shape;
    const double far = std::max(spec.t_min * 1.01, 0.6 * spec.t_max);
    p.depth = spec.t_min * std::pow(far / spec.t_min, rng.uniform());
    const double foot = static_cast<double>(hr) - 0.5 + spec.t_min * ground_rows / p.depth;
    p.half_height = 0.5 * static_cast<double>(spec.height) * rng.uniform(0.25, 0.7) * spec.t_min / p.depth + 1.0;
    p.half_width = p.half_height * rng.uniform(0.5, 1.5);
    p.center_row = foot - p.half_height;
    p.center_col = rng.uniform(0.0, static_cast<double>(spec.width));
    for (int ch = 0; ch < 3; ++ch) p.color[ch] = std::clamp(rng.uniform(0.1, 0.45) * style.tint[ch], 0.0, 1.0);
    prims.push_back(p);
  }
  return render_scene(spec, std::move(prims), rng);
}

void DatasetConfig::validate() const {
  if (labeled < 0 || unlabeled < 0 || test < 0) throw std::invalid_argument("DatasetConfig: negative split size");
  if (unlabeled > 0 && unlabeled_domains.empty()) {
    throw std::invalid_argument("DatasetConfig: unlabeled_domains is empty");
  }
}

std::uint64_t sample_seed(std::uint64_t master, int split, int index) {
  return derive_seed(derive_seed(master, 0x1000u + static_cast<std::uint64_t>(split)), static_cast<std::uint64_t>(index));
}

Datasets generate_datasets(const SceneSpec& scene, const DatasetConfig& config, std::uint64_t master_seed) {
  scene.validate();
  config.validate();
  Datasets out;
  std::set<std::uint64_t> used;
  auto claim = [&used](std::uint64_t seed) {
    if (!used.insert(seed).second) throw std::logic_error("dataset seed collision across splits");
    return seed;
  };

  SceneSpec train = scene;
  train.domain = config.train_domain;
  for (int i = 0; i < config.labeled; ++i) {
    const auto seed = claim(sample_seed(master_seed, 0, i));
    out.labeled_seeds.push_back(seed);
    out.labeled.push_back(generate_sample(train, seed));
  }
  for (int i = 0; i < config.unlabeled; ++i) {
    SceneSpec u = scene;
    u.domain = config.unlabeled_domains[static_cast<std::size_t>(i) % config.unlabeled_domains.size()];
    const auto seed = claim(sample_seed(master_seed, 1, i));
    out.unlabeled_seeds.push_back(seed);
    out.unlabeled.push_back(generate_sample(u, seed).image);
  }
  for (std::size_t d = 0; d < config.test_domains.size(); ++d) {
    TestSplit split;
    split.domain = config.test_domains[d];
    split.name = "domain" + std::to_string(split.domain);
    SceneSpec t = scene;
    t.domain = split.domain;
    for (int i = 0; i < config.test; ++i) {
      const auto seed = claim(sample_seed(master_seed, 2 + static_cast<int>(d), i));
      split.seeds.push_back(seed);
      split.samples.push_back(generate_sample(t, seed));
    }
    out.tests.push_back(std::move(split));
  }
  return out;
}

double mean_gradient_magnitude(const Tensor& image) {
  const GridXd y = 0.299 * image.plane(0) + 0.587 * image.plane(1) + 0.114 * image.plane(2);
  if (y.rows() < 2 || y.cols() < 2) return 0.0;
  const Index h = y.rows() - 1;
  const Index w = y.cols() - 1;
  const GridXd dx = y.block(0, 1, h, w) - y.block(0, 0, h, w);
  const GridXd dy = y.block(1, 0, h, w) - y.block(0, 0, h, w);
  return (dx.array().square() + dy.array().square()).sqrt().mean();
}

}  // namespace depthforge
