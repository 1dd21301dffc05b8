#pragma once

#include "depthforge/depth.hpp"
#include "depthforge/rng.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace depthforge {

/// Parameters of one synthetic scene family. `domain` selects primitive
/// shapes, palette, fog color and texture statistics; training and held-out
/// data use different domains.
struct SceneSpec {
  Index height = 64;
  Index width = 64;
  int primitives = 4;
  double t_min = 1.0;
  double t_max = 5.0;
  double horizon = 0.3;  // fraction of rows above the horizon (sky)
  double texture_noise = 0.04;
  int domain = 0;

  void validate() const;
  friend bool operator==(const SceneSpec&, const SceneSpec&) = default;
};

enum class Shape { Rectangle, Disk };

/// Fronto-parallel object at constant depth.
struct Primitive {
  Shape shape = Shape::Rectangle;
  double depth = 1.0;
  double center_row = 0.0;
  double center_col = 0.0;
  double half_height = 1.0;  // radius for disks
  double half_width = 1.0;
  std::array<double, 3> color{0.5, 0.5, 0.5};

  bool covers(Index r, Index c) const;
};

/// Paints sky, ground and primitives (farthest first) into a sample.
DepthSample render_scene(const SceneSpec& spec, std::vector<Primitive> primitives, Rng& rng);

/// Draws primitives for the spec's domain and renders them. Pure in
/// (spec, seed). Values are rounded to float precision so that the sample
/// survives a PFM round trip unchanged.
DepthSample generate_sample(const SceneSpec& spec, std::uint64_t seed);

struct DatasetConfig {
  int labeled = 200;
  int unlabeled = 400;
  int test = 100;  // per test domain
  int train_domain = 0;
  std::vector<int> unlabeled_domains{0};
  std::vector<int> test_domains{1};

  void validate() const;
  friend bool operator==(const DatasetConfig&, const DatasetConfig&) = default;
};

struct TestSplit {
  std::string name;
  int domain = 0;
  std::vector<DepthSample> samples;
  std::vector<std::uint64_t> seeds;
};

struct Datasets {
  std::vector<DepthSample> labeled;
  std::vector<Tensor> unlabeled;  // images only
  std::vector<TestSplit> tests;
  std::vector<std::uint64_t> labeled_seeds;
  std::vector<std::uint64_t> unlabeled_seeds;
};

/// Per-sample seed for split `split` (0 labeled, 1 unlabeled, 2+ test).
std::uint64_t sample_seed(std::uint64_t master, int split, int index);

/// Generates every split; throws std::logic_error on a seed collision
/// across splits.
Datasets generate_datasets(const SceneSpec& scene, const DatasetConfig& config, std::uint64_t master_seed);

/// Mean magnitude of the luminance gradient (forward differences).
double mean_gradient_magnitude(const Tensor& image);

}  // namespace depthforge
