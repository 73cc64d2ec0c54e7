#include <doctest.h>

#include <cmath>
#include <random>

#include "ipacp/augmentation.hpp"
#include "test_util.hpp"

using namespace ipacp;

namespace {

Volume indicator(const LabelMap& l, int c) {
  Volume v(l.dims(), 0.0);
  for (Eigen::Index i = 0; i < l.size(); ++i) v[i] = l[i] == c ? 1.0 : 0.0;
  return v;
}

/// Intensity-weighted centroid of the squared volume.
Eigen::Vector3d energy_centroid(const Volume& v) {
  Eigen::Vector3d acc = Eigen::Vector3d::Zero();
  double total = 0.0;
  const Dims d = v.dims();
  for (int z = 0; z < d.depth; ++z)
    for (int y = 0; y < d.height; ++y)
      for (int x = 0; x < d.width; ++x) {
        const double e = v(z, y, x) * v(z, y, x);
        acc += e * Eigen::Vector3d(z, y, x);
        total += e;
      }
  return acc / total;
}

}  // namespace

TEST_CASE("weak augmentation with no op fired is the identity") {
  std::mt19937_64 rng(1);
  const Volume v = test::random_volume({6, 6, 6}, rng);
  const LabelMap l = test::random_labels(v.dims(), 2, rng);
  WeakAugmentConfig never;
  never.probability = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const WeakResult r = weak_augment(v, &l, seed, never);
    CHECK(r.record.applied_ops.empty());
    CHECK(r.volume == v);
    CHECK(*r.labels == l);
  }
}

TEST_CASE("strong augmentation with no op fired is the identity") {
  std::mt19937_64 rng(2);
  const Volume v = test::random_volume({5, 6, 7}, rng);
  StrongAugmentConfig never;
  never.probability = 0.0;
  const StrongResult r = strong_augment(v, 99, never);
  CHECK(r.record.applied_ops.empty());
  CHECK(r.volume == v);
}

TEST_CASE("flip is an involution") {
  std::mt19937_64 rng(3);
  const Volume v = test::random_volume({5, 4, 3}, rng);
  const LabelMap l = test::random_labels(v.dims(), 3, rng);
  const AugmentRecord rec{0, {{"flip", {{"axis", 0.0}}}}};
  const WeakResult once = replay_weak(v, &l, rec);
  CHECK_FALSE(once.volume == v);
  const WeakResult twice = replay_weak(once.volume, &*once.labels, rec);
  CHECK(twice.volume == v);
  CHECK(*twice.labels == l);
}

TEST_CASE("quarter turns compose to the identity") {
  std::mt19937_64 rng(4);
  const Volume v = test::random_volume({4, 4, 4}, rng);
  for (int plane = 0; plane < 2; ++plane) {
    SpatialResult r{v, std::nullopt};
    for (int k = 0; k < 4; ++k) r = rotate90(r.volume, nullptr, plane, 1);
    CHECK(r.volume == v);
    CHECK(rotate90(rotate90(v, nullptr, plane, 1).volume, nullptr, plane, 3).volume == v);
  }
  const Volume flat = test::random_volume({4, 3, 4}, rng);
  CHECK_THROWS_AS(rotate90(flat, nullptr, 0, 1), std::invalid_argument);
  CHECK(rotate90(rotate90(flat, nullptr, 0, 2).volume, nullptr, 0, 2).volume == flat);
}

TEST_CASE("zoom by 1 and identity affine reproduce the input") {
  std::mt19937_64 rng(5);
  const Volume v = test::random_volume({7, 6, 5}, rng);
  CHECK((zoom(v, nullptr, 1.0).volume.data() - v.data()).abs().maxCoeff() <= 1e-9);
  const auto a = affine(v, nullptr, Eigen::Matrix3d::Identity(), Eigen::Vector3d::Zero());
  CHECK((a.volume.data() - v.data()).abs().maxCoeff() <= 1e-9);
}

TEST_CASE("weak augmentation replays bit-exactly and serializes") {
  std::mt19937_64 rng(6);
  const Volume v = test::random_volume({8, 8, 8}, rng);
  const LabelMap l = test::random_labels(v.dims(), 2, rng);
  WeakAugmentConfig always;
  always.probability = 1.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const WeakResult r = weak_augment(v, &l, seed, always);
    CHECK(r.record.applied_ops.size() == 4);
    const WeakResult again = replay_weak(v, &l, r.record);
    CHECK(again.volume == r.volume);
    CHECK(*again.labels == *r.labels);
    CHECK(augment_record_from_json(to_json(r.record)) == r.record);
    CHECK(weak_augment(v, &l, seed, always).volume == r.volume);
  }
}

TEST_CASE("strong augmentation replays bit-exactly") {
  std::mt19937_64 rng(7);
  const Volume v = test::random_volume({8, 8, 8}, rng);
  StrongAugmentConfig always;
  always.probability = 1.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const StrongResult r = strong_augment(v, seed, always);
    CHECK(r.record.applied_ops.size() == 5);
    CHECK(replay_strong(v, r.record) == r.volume);
    CHECK(replay_strong(v, augment_record_from_json(to_json(r.record))) == r.volume);
  }
}

TEST_CASE("weak spatial transforms commute with one-hot label transforms") {
  std::mt19937_64 rng(8);
  WeakAugmentConfig always;
  always.probability = 1.0;
  for (int trial = 0; trial < 30; ++trial) {
    const int classes = 2 + trial % 2;
    const Dims d = trial % 3 == 0 ? Dims{6, 6, 6} : Dims{6, 5, 7};
    const Volume v = test::random_volume(d, rng);
    const LabelMap l = test::random_labels(d, classes, rng);
    const WeakResult r = weak_augment(v, &l, std::uint64_t(trial), always);

    // Labels are re-discretized after every op, so compare one op at a time:
    // each class indicator augmented as an image, then argmax with ties to
    // the lowest class.
    for (const AugmentOp& op : r.record.applied_ops) {
      const AugmentRecord single{r.record.seed, {op}};
      const WeakResult one = replay_weak(v, &l, single);
      std::vector<Volume> planes;
      for (int c = 0; c < classes; ++c) planes.push_back(replay_weak(indicator(l, c), nullptr, single).volume);
      LabelMap expected(d, 0);
      for (Eigen::Index i = 0; i < expected.size(); ++i) {
        int best = 0;
        for (int c = 1; c < classes; ++c) {
          if (planes[std::size_t(c)][i] > planes[std::size_t(best)][i]) best = c;
        }
        expected[i] = std::uint8_t(best);
      }
      CHECK(*one.labels == expected);
    }
  }
}

TEST_CASE("noise with zero sigma and smoothing of a constant are fixed points") {
  std::mt19937_64 rng(9);
  const Volume v = test::random_volume({4, 5, 6}, rng);
  CHECK(add_gaussian_noise(v, 0.0, 123) == v);
  const Volume c({6, 7, 8}, 0.37);
  for (double sigma : {0.5, 1.0, 1.5}) {
    CHECK((gaussian_smooth(c, sigma).data() - 0.37).abs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("bias field with zero coefficients and unit gamma are identities") {
  std::mt19937_64 rng(10);
  const Volume v = test::random_volume({4, 5, 6}, rng);
  CHECK(apply_bias_field(v, std::vector<double>(std::size_t(bias_field_terms()), 0.0)) == v);
  CHECK((adjust_contrast(v, 1.0).data() - v.data()).abs().maxCoeff() <= 1e-12);
}

TEST_CASE("strong augmentation never moves an impulse") {
  StrongAugmentConfig config;
  config.probability = 0.7;
  // Additive noise spreads energy uniformly and would swamp the centroid.
  config.noise_sigma_min = config.noise_sigma_max = 0.0;
  const double radius = smoothing_radius(config.smooth_sigma_max);
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> pos(2, 14);
  for (std::uint64_t seed = 0; seed < 60; ++seed) {
    Volume v({17, 17, 17}, 0.0);
    const Eigen::Vector3d at(pos(rng), pos(rng), pos(rng));
    v(int(at[0]), int(at[1]), int(at[2])) = 1.0;
    const StrongResult r = strong_augment(v, seed, config);
    for (const auto& op : r.record.applied_ops) {
      CHECK(op.name != "flip");
      CHECK(op.name != "rotate90");
      CHECK(op.name != "zoom");
      CHECK(op.name != "affine");
    }
    if (r.volume.data().square().sum() == 0.0) continue;
    const Eigen::Vector3d c = energy_centroid(r.volume);
    CHECK((c - at).lpNorm<Eigen::Infinity>() <= radius);
  }
}
