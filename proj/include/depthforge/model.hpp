#pragma once

#include "depthforge/autodiff.hpp"
#include "depthforge/rng.hpp"
#include "depthforge/tensor.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace depthforge {

enum class ParamGroup { Encoder, Decoder };

struct NamedParam {
  std::string name;
  ParamGroup group = ParamGroup::Encoder;
  GridXd value;

  friend bool operator==(const NamedParam&, const NamedParam&) = default;
};

/// Ordered collection of named trainable tensors.
class ParamSet {
 public:
  ParamSet() = default;
  explicit ParamSet(std::vector<NamedParam> params) : params_(std::move(params)) {}

  const std::vector<NamedParam>& params() const { return params_; }
  std::vector<NamedParam>& params() { return params_; }
  std::size_t size() const { return params_.size(); }

  const GridXd& at(const std::string& name) const;
  GridXd& at(const std::string& name);

  /// FNV-1a over names, shapes and raw value bytes.
  std::uint64_t hash() const;
  Index scalar_count() const;

  friend bool operator==(const ParamSet&, const ParamSet&) = default;

 private:
  std::vector<NamedParam> params_;
};

struct ModelShape {
  Index patch = 8;
  Index channels = 32;

  Index patch_inputs() const { return 3 * patch * patch; }
  friend bool operator==(const ModelShape&, const ModelShape&) = default;
};

/// patchify -> linear(3P^2 -> C) -> relu -> linear(C -> C) gives the feature
/// grid; a per-patch linear(C -> P^2) -> sigmoid reassembled to H x W gives
/// disparity in (0, 1).
struct ToyDepthModel {
  ModelShape shape;
  ParamSet params;
};

/// Same encoder stack, drawn once from a fixed seed and never trained.
struct FrozenEncoder {
  ModelShape shape;
  ParamSet params;
};

/// uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases.
ToyDepthModel init_model(const ModelShape& shape, std::uint64_t seed);
FrozenEncoder init_frozen_encoder(const ModelShape& shape, std::uint64_t seed);

/// Row g holds patch g (row-major over the patch grid); columns run over
/// channel, then patch row, then patch column.
GridXd patchify(const Tensor& image, Index patch);

/// Flat indices that reassemble a G x P^2 patch matrix into an H x W map.
std::vector<Index> unpatchify_index(Index height, Index width, Index patch);

/// Parameters bound as graph leaves for one training step.
class BoundModel {
 public:
  BoundModel(const ToyDepthModel& model, bool trainable);

  const ModelShape& shape() const { return shape_; }
  const std::vector<ad::Var>& leaves() const { return leaves_; }
  const ad::Var& leaf(const std::string& name) const;
  /// Swaps in an external leaf, e.g. to differentiate through one tensor.
  void rebind(const std::string& name, ad::Var leaf);

  /// Gradients in ParamSet order; zeros where nothing flowed.
  std::vector<GridXd> gradients() const;

 private:
  ModelShape shape_;
  std::vector<std::string> names_;
  std::vector<ad::Var> leaves_;
};

struct ForwardResult {
  ad::Var disparity;  // H x W
  ad::Var features;   // G x C, the decoder's input
};

ForwardResult forward(const BoundModel& model, const Tensor& image);

struct Prediction {
  GridXd disparity;
  GridXd features;
};

/// Inference without gradients.
Prediction predict(const ToyDepthModel& model, const Tensor& image);

/// Features of the frozen stand-in encoder; always constants.
GridXd frozen_forward(const FrozenEncoder& encoder, const Tensor& image);

/// Encoder stack on given leaves, shared by the model and the frozen encoder.
ad::Var encode(const ad::Var& patches, const ad::Var& w1, const ad::Var& b1, const ad::Var& w2, const ad::Var& b2);

// ---------------------------------------------------------------- optimizer

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;

  friend bool operator==(const AdamWConfig&, const AdamWConfig&) = default;
};

struct GroupRates {
  double encoder = 0.0;
  double decoder = 0.0;
};

/// Decoupled weight decay Adam with per-group learning rates. Moments start
/// at zero; bias correction uses the step count.
class AdamW {
 public:
  explicit AdamW(AdamWConfig config = {}) : config_(config) {}

  void step(ParamSet& params, const std::vector<GridXd>& grads, GroupRates rates);
  /// Forget moments and the step count.
  void reset() {
    m_.clear();
    v_.clear();
    t_ = 0;
  }
  long steps() const { return t_; }

 private:
  AdamWConfig config_;
  std::vector<GridXd> m_;
  std::vector<GridXd> v_;
  long t_ = 0;
};

/// lr0 * (1 - step / total); 0 at and after total.
double linear_lr(double base, long step, long total);

/// Encoder and decoder rates at a schedule step; the decoder rate is
/// `decoder_multiplier` times the encoder rate.
GroupRates scheduled_rates(double encoder_base, double decoder_multiplier, long step, long total);

}  // namespace depthforge
