#include <doctest.h>

#include <cmath>
#include <random>

#include "ipacp/seg_net.hpp"
#include "test_util.hpp"

using namespace ipacp;

namespace {

const NetConfig kSmall{3, 4, 2, 2};

TrainingSample random_sample(const Dims& d, int classes, std::mt19937_64& rng) {
  return {test::random_volume(d, rng), test::random_labels(d, classes, rng)};
}

}  // namespace

TEST_CASE("layout and architecture string") {
  const SegNet net(NetConfig{8, 16, 2, 4});
  CHECK(net.num_params() == 8 * 27 + 8 + 16 * 8 * 27 + 16 + 2 * 8 + 2 * 16 + 2);
  CHECK(net.layout().at("conv2.w").size == 16 * 8 * 27);
  CHECK_THROWS_AS(net.layout().at("nope"), std::out_of_range);
  CHECK(parse_arch_string(arch_string(kSmall)) == kSmall);
  CHECK_THROWS_AS(parse_arch_string("resnet"), std::invalid_argument);
  CHECK_THROWS_AS(SegNet(NetConfig{0, 4, 2, 2}), std::invalid_argument);
}

TEST_CASE("zero parameters give a uniform prediction") {
  const SegNet net(NetConfig{3, 4, 3, 2});
  std::mt19937_64 rng(1);
  const Volume v = test::random_volume({4, 4, 4}, rng);
  const ProbMap p = net.forward(ParamVector::Zero(net.num_params()), v);
  CHECK((p.probs().array() - 1.0 / 3.0).abs().maxCoeff() <= 1e-15);
}

TEST_CASE("forward produces a valid probability map and checks shapes") {
  const SegNet net(kSmall);
  std::mt19937_64 rng(2);
  const ParamVector p = net.init_params(7);
  CHECK(p == net.init_params(7));
  CHECK_FALSE(p == net.init_params(8));
  const ProbMap out = net.forward(p, test::random_volume({4, 6, 8}, rng));
  CHECK(is_valid_probmap(out, 1e-12));
  CHECK_THROWS_AS(net.forward(p, test::random_volume({4, 5, 8}, rng)), std::invalid_argument);
  CHECK_THROWS_AS(net.forward(ParamVector::Zero(3), test::random_volume({4, 4, 4}, rng)),
                  std::invalid_argument);
}

TEST_CASE("loss values") {
  const Dims d{2, 2, 2};
  LabelMap y(d, 0);
  y[1] = 1;
  y[6] = 1;
  const ProbMap perfect = one_hot(y, 2);
  CHECK(dice_loss(perfect, y) <= 1e-4);
  CHECK(ce_loss(perfect, y) <= 1e-7);
  const ProbMap uniform(d, 2);
  CHECK(ce_loss(uniform, y) == doctest::Approx(std::log(2.0)).epsilon(1e-12));

  // Prediction covering voxels {1, 2}: intersection 1, |p| = 2, |y| = 2.
  LabelMap half(d, 0);
  half[1] = 1;
  half[2] = 1;
  const ProbMap p = one_hot(half, 2);
  const double expected = 1.0 - (2.0 * 1.0 + kDiceSmooth) / (2.0 + 2.0 + kDiceSmooth);
  CHECK(dice_loss(p, y) == doctest::Approx(expected).epsilon(1e-14));
  CHECK(combined_loss(p, y, LossMode::Dice) == dice_loss(p, y));
  CHECK(combined_loss(p, y, LossMode::Ce) == ce_loss(p, y));
  CHECK(combined_loss(p, y, LossMode::CeDice) == dice_loss(p, y) + ce_loss(p, y));
}

TEST_CASE("loss_and_grad loss matches the standalone loss") {
  const SegNet net(kSmall);
  std::mt19937_64 rng(3);
  const ParamVector p = net.init_params(1);
  const std::vector<TrainingSample> batch{random_sample({4, 4, 4}, 2, rng),
                                          random_sample({4, 4, 4}, 2, rng)};
  for (auto mode : {LossMode::Ce, LossMode::Dice, LossMode::CeDice}) {
    const LossGrad lg = net.loss_and_grad(p, batch, mode);
    CHECK(lg.loss == doctest::Approx(net.loss(p, batch, mode)).epsilon(1e-12));
    CHECK(lg.grad.size() == net.num_params());
  }
  CHECK_THROWS_AS(net.loss_and_grad(p, std::span<const TrainingSample>{}), std::invalid_argument);
}

TEST_CASE("analytic gradient matches central differences") {
  std::mt19937_64 rng(4);
  for (auto mode : {LossMode::Ce, LossMode::Dice, LossMode::CeDice}) {
    const SegNet net(NetConfig{2, 3, 3, 2});
    const ParamVector p = net.init_params(11);
    const std::vector<TrainingSample> batch{random_sample({4, 4, 4}, 3, rng)};
    const ParamVector g = net.loss_and_grad(p, batch, mode).grad;
    const double h = 1e-5;
    for (Eigen::Index i = 0; i < p.size(); ++i) {
      ParamVector a = p, b = p;
      a[i] += h;
      b[i] -= h;
      const double fd = (net.loss(a, batch, mode) - net.loss(b, batch, mode)) / (2.0 * h);
      CHECK(std::abs(fd - g[i]) <= 1e-6 * std::max(1.0, std::abs(fd)));
    }
  }
}

TEST_CASE("zero-loss batch has a vanishing gradient") {
  // A saturated head makes the prediction one-hot at the labels.
  const SegNet net(kSmall);
  ParamVector p = ParamVector::Zero(net.num_params());
  p[net.layout().at("head.b").offset] = 60.0;
  const Dims d{4, 4, 4};
  const TrainingSample s{Volume(d, 0.5), LabelMap(d, 0)};
  const LossGrad lg = net.loss_and_grad(p, std::span<const TrainingSample>(&s, 1), LossMode::Ce);
  CHECK(lg.loss <= 1e-12);
  CHECK(lg.grad.norm() <= 1e-8);
}

TEST_CASE("Adam") {
  SUBCASE("zero gradient leaves parameters and counts the step") {
    ParamVector p = ParamVector::Constant(4, 0.3);
    OptimState s = OptimState::zeros(4);
    adam_step(p, ParamVector::Zero(4), s, 0.1);
    CHECK(p == ParamVector::Constant(4, 0.3));
    CHECK(s.step == 1);
  }
  SUBCASE("first step moves by lr against the gradient sign") {
    ParamVector p(3);
    p << 1.0, -2.0, 0.5;
    const ParamVector start = p;
    ParamVector g(3);
    g << 0.7, -3.0, 1e-3;
    OptimState s = OptimState::zeros(3);
    adam_step(p, g, s, 0.01);
    for (int i = 0; i < 3; ++i) {
      const double expected = 0.01 * std::abs(g[i]) / (std::abs(g[i]) + 1e-8);
      CHECK(start[i] - p[i] == doctest::Approx(std::copysign(expected, g[i])).epsilon(1e-9));
    }
  }
  SUBCASE("three steps against a scalar oracle") {
    ParamVector p = ParamVector::Constant(1, 2.0);
    OptimState s = OptimState::zeros(1);
    const double grads[] = {0.5, -0.25, 1.0};
    double theta = 2.0, m = 0.0, v = 0.0;
    for (int t = 1; t <= 3; ++t) {
      const double gt = grads[t - 1];
      m = 0.9 * m + 0.1 * gt;
      v = 0.999 * v + 0.001 * gt * gt;
      const double mh = m / (1.0 - std::pow(0.9, t));
      const double vh = v / (1.0 - std::pow(0.999, t));
      theta -= 0.05 * mh / (std::sqrt(vh) + 1e-8);
      adam_step(p, ParamVector::Constant(1, gt), s, 0.05);
      CHECK(p[0] == doctest::Approx(theta).epsilon(1e-14));
    }
  }
}

TEST_CASE("polynomial learning rate") {
  CHECK(poly_lr(2.5e-4, 0, 1000) == 2.5e-4);
  CHECK(poly_lr(2.5e-4, 1000, 1000) == 0.0);
  CHECK(poly_lr(2.5e-4, 500, 1000) == doctest::Approx(2.5e-4 * std::pow(0.5, 0.9)).epsilon(1e-15));
  CHECK(poly_lr(1.0, 500, 1000) == doctest::Approx(0.5359).epsilon(1e-4));
  CHECK_THROWS_AS(poly_lr(1.0, 1001, 1000), std::invalid_argument);
}

TEST_CASE("EMA update") {
  std::mt19937_64 rng(5);
  const ParamVector s = ParamVector::Random(20);
  ParamVector t = s;
  ema_update(t, s, 0.99);
  CHECK(t == s);
  t = ParamVector::Random(20);
  ema_update(t, s, 0.0);
  CHECK(t == s);
  t = ParamVector::Zero(20);
  ema_update(t, s, 0.5);
  CHECK((t - 0.5 * s).norm() <= 1e-15);
  CHECK_THROWS_AS(ema_update(t, ParamVector::Zero(3), 0.5), std::invalid_argument);
}
