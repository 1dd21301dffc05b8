#include "depthforge/gradcheck.hpp"
#include "depthforge/losses.hpp"
#include "depthforge/model.hpp"

#include "doctest.h"
#include "helpers.hpp"

#include <cmath>

using namespace depthforge;
using ad::Var;

namespace {

ToyDepthModel zero_model(ModelShape shape) {
  ToyDepthModel m = init_model(shape, 1);
  for (auto& p : m.params.params()) p.value.setZero();
  return m;
}

ParamSet scalar_param(double value, ParamGroup group = ParamGroup::Encoder) {
  return ParamSet({{"p", group, GridXd::Constant(1, 1, value)}});
}

}  // namespace

TEST_CASE("zero model predicts one half") {
  const ToyDepthModel m = zero_model({8, 4});
  const auto p = predict(m, Tensor({3, 16, 24}));
  CHECK(p.disparity.rows() == 16);
  CHECK(p.disparity.cols() == 24);
  CHECK((p.disparity.array() == 0.5).all());
  CHECK(p.features.rows() == 6);
  CHECK(p.features.cols() == 4);
}

TEST_CASE("outputs stay strictly inside the unit interval") {
  Rng rng(1);
  ToyDepthModel m = init_model({4, 8}, 2);
  // Pushes the sigmoid toward its tails without rounding to exactly 0 or 1.
  for (auto& p : m.params.params()) p.value *= 3.0;
  const auto d = predict(m, dft::random_image(16, 16, rng)).disparity;
  CHECK(d.minCoeff() > 0.0);
  CHECK(d.maxCoeff() < 1.0);
}

TEST_CASE("indivisible image is rejected") {
  const ToyDepthModel m = init_model({8, 4}, 3);
  CHECK_THROWS(predict(m, Tensor({3, 12, 16})));
}

TEST_CASE("initialization bounds and names") {
  const ToyDepthModel m = init_model({8, 32}, 4);
  const char* names[] = {"encoder.w1", "encoder.b1", "encoder.w2", "encoder.b2", "decoder.w3", "decoder.b3"};
  REQUIRE(m.params.size() == 6);
  for (std::size_t i = 0; i < 6; ++i) CHECK(m.params.params()[i].name == names[i]);
  CHECK(m.params.at("encoder.w1").rows() == 192);
  CHECK(m.params.at("decoder.w3").cols() == 64);
  const double b1 = 1.0 / std::sqrt(192.0);
  CHECK(m.params.at("encoder.w1").cwiseAbs().maxCoeff() <= b1);
  CHECK(m.params.at("encoder.b1").cwiseAbs().maxCoeff() <= b1);
  const double b2 = 1.0 / std::sqrt(32.0);
  CHECK(m.params.at("decoder.w3").cwiseAbs().maxCoeff() <= b2);
  CHECK(m.params.params()[4].group == ParamGroup::Decoder);
}

TEST_CASE("fresh seeds give fresh parameters") {
  const ModelShape s{8, 8};
  CHECK(init_model(s, 5).params.hash() == init_model(s, 5).params.hash());
  CHECK(init_model(s, 5).params.hash() != init_model(s, 6).params.hash());
}

TEST_CASE("patches reassemble into the image") {
  Rng rng(6);
  const Tensor img = dft::random_image(16, 24, rng);
  const GridXd patches = patchify(img, 4);
  // Red channel of each patch occupies the first P*P columns.
  const GridXd red = patches.leftCols(16);
  const auto idx = unpatchify_index(16, 24, 4);
  GridXd back(16, 24);
  for (Index k = 0; k < back.size(); ++k) back.data()[k] = red.data()[idx[static_cast<std::size_t>(k)]];
  CHECK(back == GridXd(img.plane(0)));
}

TEST_CASE("frozen encoder is deterministic and carries no gradient") {
  Rng rng(7);
  const FrozenEncoder e = init_frozen_encoder({8, 8}, 0xF202E11ULL);
  const Tensor img = dft::random_image(16, 16, rng);
  CHECK(frozen_forward(e, img) == frozen_forward(e, img));
  CHECK(frozen_forward(e, Tensor({3, 16, 16})).rows() == 4);
}

TEST_CASE("features of the model equal the frozen stack on the same weights") {
  Rng rng(8);
  const ModelShape s{8, 8};
  const ToyDepthModel m = init_model(s, 9);
  FrozenEncoder e{s, ParamSet({m.params.params().begin(), m.params.params().begin() + 4})};
  const Tensor img = dft::random_image(16, 16, rng);
  CHECK(predict(m, img).features == frozen_forward(e, img));
}

TEST_CASE("loss through the model passes gradcheck for every parameter") {
  Rng rng(10);
  const ModelShape s{8, 4};
  const ToyDepthModel m = init_model(s, 11);
  const FrozenEncoder e = init_frozen_encoder(s, 12);
  const Tensor img = dft::random_image(16, 16, rng);
  const GridXd gt = dft::random_grid(16, 16, rng, 0.1, 1.0);
  const GridXd f_frozen = frozen_forward(e, img);
  const Mask all = dft::all_true(16, 16);

  for (const auto& p : m.params.params()) {
    const auto fn = [&](const Var& x) {
      BoundModel bound(m, false);
      bound.rebind(p.name, x);
      const auto out = forward(bound, img);
      return overall_loss(affine_invariant_loss(out.disparity, Var::constant(gt), all), std::nullopt,
                          feature_alignment_loss(out.features, Var::constant(f_frozen)));
    };
    INFO(p.name);
    CHECK(ad::gradcheck(fn, p.value) < 1e-6);
  }
}

TEST_CASE("bound model reports gradients in parameter order") {
  Rng rng(13);
  const ToyDepthModel m = init_model({8, 4}, 14);
  BoundModel bound(m, true);
  const auto out = forward(bound, dft::random_image(8, 8, rng));
  ad::backward(ad::sum(out.disparity));
  const auto grads = bound.gradients();
  REQUIRE(grads.size() == 6);
  CHECK(grads[5].cwiseAbs().sum() > 0.0);
  CHECK(grads[0].rows() == m.params.params()[0].value.rows());
  CHECK_THROWS(bound.rebind("encoder.w1", Var::constant(GridXd::Zero(2, 2))));
  CHECK_THROWS(bound.leaf("nope"));
}

TEST_CASE("adamw first step moves by about the learning rate") {
  ParamSet p = scalar_param(1.0);
  AdamW opt({0.9, 0.999, 1e-8, 0.0});
  opt.step(p, {GridXd::Constant(1, 1, 1.0)}, {0.1, 1.0});
  // m_hat = 1, v_hat = 1, so the step is 0.1 / (1 + 1e-8).
  CHECK(p.at("p")(0, 0) == doctest::Approx(1.0 - 0.1 / (1.0 + 1e-8)).epsilon(1e-15));
  CHECK(std::abs(p.at("p")(0, 0) - 0.9) < 1e-8);
}

TEST_CASE("adamw matches a hand-run recurrence") {
  const double b1 = 0.8, b2 = 0.9, eps = 1e-6, wd = 0.05, lr = 0.03;
  const double gs[] = {0.5, -1.5, 2.0, 0.25};
  ParamSet p = scalar_param(2.0, ParamGroup::Decoder);
  AdamW opt({b1, b2, eps, wd});
  double x = 2.0, m = 0.0, v = 0.0;
  for (int t = 1; t <= 4; ++t) {
    const double g = gs[t - 1];
    opt.step(p, {GridXd::Constant(1, 1, g)}, {999.0, lr});
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    x *= 1 - lr * wd;
    x -= lr * (m / (1 - std::pow(b1, t))) / (std::sqrt(v / (1 - std::pow(b2, t))) + eps);
    CHECK(p.at("p")(0, 0) == doctest::Approx(x).epsilon(1e-14));
  }
  CHECK(opt.steps() == 4);
}

TEST_CASE("adamw leaves parameters alone with zero gradient and no decay") {
  ParamSet p = scalar_param(1.5);
  AdamW opt({0.9, 0.999, 1e-8, 0.0});
  for (int i = 0; i < 3; ++i) opt.step(p, {GridXd::Zero(1, 1)}, {0.1, 1.0});
  CHECK(p.at("p")(0, 0) == 1.5);
}

TEST_CASE("decoupled weight decay alone") {
  ParamSet p = scalar_param(2.0);
  AdamW opt({0.9, 0.999, 1e-8, 0.1});
  opt.step(p, {GridXd::Constant(1, 1, 1.0)}, {0.1, 1.0});
  opt.reset();
  const double before = p.at("p")(0, 0);
  opt.step(p, {GridXd::Zero(1, 1)}, {0.1, 1.0});
  CHECK(p.at("p")(0, 0) == before * (1.0 - 0.1 * 0.1));
}

TEST_CASE("linear schedule and group ratio") {
  CHECK(linear_lr(1e-3, 0, 100) == 1e-3);
  CHECK(linear_lr(1e-3, 50, 100) == doctest::Approx(5e-4).epsilon(1e-15));
  CHECK(linear_lr(1e-3, 100, 100) == 0.0);
  for (long step = 0; step < 100; step += 7) {
    const GroupRates r = scheduled_rates(1e-3, 10.0, step, 100);
    CHECK(r.decoder == 10.0 * r.encoder);
  }
}
