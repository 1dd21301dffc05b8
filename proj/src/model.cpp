#include "depthforge/model.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

namespace depthforge {

namespace {

constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

void fnv(std::uint64_t& h, const void* bytes, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(bytes);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= kFnvPrime;
  }
}

GridXd uniform_init(Index rows, Index cols, Index fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  GridXd g(rows, cols);
  for (Index k = 0; k < g.size(); ++k) g.data()[k] = rng.uniform(-bound, bound);
  return g;
}

std::vector<NamedParam> encoder_params(const ModelShape& s, Rng& rng) {
  const Index in = s.patch_inputs();
  const Index c = s.channels;
  return {
      {"encoder.w1", ParamGroup::Encoder, uniform_init(in, c, in, rng)},
      {"encoder.b1", ParamGroup::Encoder, uniform_init(1, c, in, rng)},
      {"encoder.w2", ParamGroup::Encoder, uniform_init(c, c, c, rng)},
      {"encoder.b2", ParamGroup::Encoder, uniform_init(1, c, c, rng)},
  };
}

void check_divisible(const Tensor& image, Index patch) {
  if (image.rank() != 3 || image.dim(0) != 3) throw std::invalid_argument("model input must be 3 x H x W");
  if (image.height() % patch != 0 || image.width() % patch != 0 || image.height() == 0 || image.width() == 0) {
    throw std::invalid_argument("image " + shape_string(image.height(), image.width()) +
                                " is not divisible by patch size " + std::to_string(patch));
  }
}

}  // namespace

const GridXd& ParamSet::at(const std::string& name) const {
  for (const auto& p : params_) {
    if (p.name == name) return p.value;
  }
  throw std::out_of_range("no parameter named " + name);
}

GridXd& ParamSet::at(const std::string& name) {
  return const_cast<GridXd&>(static_cast<const ParamSet&>(*this).at(name));
}

std::uint64_t ParamSet::hash() const {
  std::uint64_t h = kFnvOffset;
  for (const auto& p : params_) {
    fnv(h, p.name.data(), p.name.size());
    const std::int64_t dims[2] = {p.value.rows(), p.value.cols()};
    fnv(h, dims, sizeof(dims));
    fnv(h, p.value.data(), static_cast<std::size_t>(p.value.size()) * sizeof(double));
  }
  return h;
}

Index ParamSet::scalar_count() const {
  Index n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

ToyDepthModel init_model(const ModelShape& shape, std::uint64_t seed) {
  if (shape.patch <= 0 || shape.channels <= 0) throw std::invalid_argument("model shape must be positive");
  Rng rng(seed);
  auto params = encoder_params(shape, rng);
  const Index c = shape.channels;
  const Index p2 = shape.patch * shape.patch;
  params.push_back({"decoder.w3", ParamGroup::Decoder, uniform_init(c, p2, c, rng)});
  params.push_back({"decoder.b3", ParamGroup::Decoder, uniform_init(1, p2, c, rng)});
  return {shape, ParamSet(std::move(params))};
}

FrozenEncoder init_frozen_encoder(const ModelShape& shape, std::uint64_t seed) {
  Rng rng(seed);
  return {shape, ParamSet(encoder_params(shape, rng))};
}

GridXd patchify(const Tensor& image, Index patch) {
  check_divisible(image, patch);
  const Index gh = image.height() / patch;
  const Index gw = image.width() / patch;
  GridXd out(gh * gw, 3 * patch * patch);
  for (Index pr = 0; pr < gh; ++pr) {
    for (Index pc = 0; pc < gw; ++pc) {
      const Index g = pr * gw + pc;
      Index col = 0;
      for (Index ch = 0; ch < 3; ++ch) {
        const auto plane = image.plane(ch);
        for (Index i = 0; i < patch; ++i) {
          for (Index j = 0; j < patch; ++j) out(g, col++) = plane(pr * patch + i, pc * patch + j);
        }
      }
    }
  }
  return out;
}

std::vector<Index> unpatchify_index(Index height, Index width, Index patch) {
  const Index gw = width / patch;
  const Index p2 = patch * patch;
  std::vector<Index> idx(static_cast<std::size_t>(height * width));
  for (Index r = 0; r < height; ++r) {
    for (Index c = 0; c < width; ++c) {
      const Index g = (r / patch) * gw + c / patch;
      const Index k = (r % patch) * patch + c % patch;
      idx[static_cast<std::size_t>(r * width + c)] = g * p2 + k;
    }
  }
  return idx;
}

BoundModel::BoundModel(const ToyDepthModel& model, bool trainable) : shape_(model.shape) {
  for (const auto& p : model.params.params()) {
    names_.push_back(p.name);
    leaves_.push_back(trainable ? ad::Var::parameter(p.value) : ad::Var::constant(p.value));
  }
}

const ad::Var& BoundModel::leaf(const std::string& name) const {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i] == name) return leaves_[i];
  }
  throw std::out_of_range("no parameter named " + name);
}

void BoundModel::rebind(const std::string& name, ad::Var leaf) {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i] == name) {
      if (leaf.rows() != leaves_[i].rows() || leaf.cols() != leaves_[i].cols()) {
        throw ad::ShapeError("rebind: shape mismatch for " + name);
      }
      leaves_[i] = std::move(leaf);
      return;
    }
  }
  throw std::out_of_range("no parameter named " + name);
}

std::vector<GridXd> BoundModel::gradients() const {
  std::vector<GridXd> g;
  g.reserve(leaves_.size());
  for (const auto& l : leaves_) g.push_back(l.grad());
  return g;
}

ad::Var encode(const ad::Var& patches, const ad::Var& w1, const ad::Var& b1, const ad::Var& w2, const ad::Var& b2) {
  ad::Var hidden = ad::relu(ad::add(ad::matmul(patches, w1), b1));
  return ad::add(ad::matmul(hidden, w2), b2);
}

ForwardResult forward(const BoundModel& model, const Tensor& image) {
  const Index p = model.shape().patch;
  const ad::Var patches = ad::Var::constant(patchify(image, p));
  ad::Var features = encode(patches, model.leaf("encoder.w1"), model.leaf("encoder.b1"), model.leaf("encoder.w2"),
                            model.leaf("encoder.b2"));
  ad::Var per_patch = ad::sigmoid(ad::add(ad::matmul(features, model.leaf("decoder.w3")), model.leaf("decoder.b3")));
  const auto idx = unpatchify_index(image.height(), image.width(), p);
  ad::Var disparity = ad::gather(per_patch, idx, image.height(), image.width());
  return {std::move(disparity), std::move(features)};
}

Prediction predict(const ToyDepthModel& model, const Tensor& image) {
  const BoundModel bound(model, false);
  const ForwardResult out = forward(bound, image);
  return {out.disparity.value(), out.features.value()};
}

GridXd frozen_forward(const FrozenEncoder& encoder, const Tensor& image) {
  const auto& ps = encoder.params;
  const ad::Var patches = ad::Var::constant(patchify(image, encoder.shape.patch));
  const ad::Var f = encode(patches, ad::Var::constant(ps.at("encoder.w1")), ad::Var::constant(ps.at("encoder.b1")),
                           ad::Var::constant(ps.at("encoder.w2")), ad::Var::constant(ps.at("encoder.b2")));
  return f.value();
}

void AdamW::step(ParamSet& params, const std::vector<GridXd>& grads, GroupRates rates) {
  auto& ps = params.params();
  if (grads.size() != ps.size()) throw std::invalid_argument("AdamW: gradient count does not match parameters");
  if (m_.empty()) {
    for (const auto& p : ps) {
      m_.push_back(GridXd::Zero(p.value.rows(), p.value.cols()));
      v_.push_back(GridXd::Zero(p.value.rows(), p.value.cols()));
    }
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < ps.size(); ++i) {
    auto& p = ps[i].value;
    const auto& g = grads[i];
    if (g.rows() != p.rows() || g.cols() != p.cols()) throw std::invalid_argument("AdamW: gradient shape mismatch");
    const double lr = ps[i].group == ParamGroup::Decoder ? rates.decoder : rates.encoder;

    m_[i] = config_.beta1 * m_[i] + (1.0 - config_.beta1) * g;
    v_[i] = config_.beta2 * v_[i] + (1.0 - config_.beta2) * g.cwiseProduct(g);
    if (config_.weight_decay != 0.0) p *= (1.0 - lr * config_.weight_decay);
    const auto m_hat = m_[i].array() / bc1;
    const auto v_hat = v_[i].array() / bc2;
    p.array() -= lr * m_hat / (v_hat.sqrt() + config_.eps);
  }
}

double linear_lr(double base, long step, long total) {
  if (total <= 0 || step >= total) return 0.0;
  return base * (1.0 - static_cast<double>(step) / static_cast<double>(total));
}

GroupRates scheduled_rates(double encoder_base, double decoder_multiplier, long step, long total) {
  const double enc = linear_lr(encoder_base, step, total);
  return {enc, enc * decoder_multiplier};
}

}  // namespace depthforge
