#include <doctest.h>

#include <cmath>
#include <random>

#include "ipacp/adaptive_mix.hpp"
#include "ipacp/uncertainty.hpp"
#include "test_util.hpp"

using namespace ipacp;

namespace {

ProbMap voxel(double a, double b) {
  ProbMap p({1, 1, 1}, 2);
  p.probs()(0, 0) = a;
  p.probs()(0, 1) = b;
  return p;
}

}  // namespace

TEST_CASE("prediction disagreement") {
  std::mt19937_64 rng(1);
  const ProbMap p = test::random_probmap({3, 3, 3}, 3, rng);
  CHECK((prediction_disagreement(p, p).data() == 0).all());
  CHECK(prediction_disagreement(voxel(0.6, 0.4), voxel(0.4, 0.6))[0] == 1);
  CHECK(prediction_disagreement(voxel(0.6, 0.4), voxel(0.9, 0.1))[0] == 0);
}

TEST_CASE("two-way KL hand values") {
  const auto u = kl_two_way(voxel(0.9, 0.1), voxel(0.5, 0.5));
  const double s_to_t = 0.9 * std::log(1.8) + 0.1 * std::log(0.2);
  const double t_to_s = 0.5 * std::log(0.5 / 0.9) + 0.5 * std::log(5.0);
  CHECK(u.d_s_to_t[0] == doctest::Approx(s_to_t).epsilon(1e-7));
  CHECK(u.d_t_to_s[0] == doctest::Approx(t_to_s).epsilon(1e-7));
  CHECK(u.d_s_to_t[0] == doctest::Approx(0.368).epsilon(1e-3));
  CHECK(u.d_t_to_s[0] == doctest::Approx(0.511).epsilon(1e-3));
}

TEST_CASE("KL of identical inputs is zero") {
  std::mt19937_64 rng(2);
  const ProbMap p = test::random_probmap({4, 4, 4}, 2, rng);
  const auto u = kl_two_way(p, p);
  CHECK(u.d_s_to_t.data().maxCoeff() <= 1e-7);
  CHECK(u.d_t_to_s.data().maxCoeff() <= 1e-7);
}

TEST_CASE("mu single voxel equals the sum of both directions") {
  const ProbMap ps = voxel(0.6, 0.4), pt = voxel(0.5, 0.5);
  const auto u = kl_two_way(ps, pt);
  const double mu = high_uncertainty_score(ps, pt, u, 0.9);
  const double kl_st = 0.6 * std::log(1.2) + 0.4 * std::log(0.8);
  const double kl_ts = 0.5 * std::log(0.5 / 0.6) + 0.5 * std::log(0.5 / 0.4);
  CHECK(mu == doctest::Approx(kl_st + kl_ts).epsilon(1e-7));
}

TEST_CASE("mu vanishes under full confidence and identical predictions") {
  std::mt19937_64 rng(3);
  ProbMap confident_s({3, 3, 3}, 2), confident_t({3, 3, 3}, 2);
  std::bernoulli_distribution coin(0.5);
  for (Eigen::Index v = 0; v < confident_s.voxels(); ++v) {
    confident_s.probs().row(v) << (coin(rng) ? Eigen::RowVector2d(0.95, 0.05) : Eigen::RowVector2d(0.02, 0.98));
    confident_t.probs().row(v) << (coin(rng) ? Eigen::RowVector2d(0.91, 0.09) : Eigen::RowVector2d(0.0, 1.0));
  }
  CHECK(high_uncertainty_score(confident_s, confident_t, kl_two_way(confident_s, confident_t), 0.9) == 0.0);

  const ProbMap p = test::random_probmap({3, 3, 3}, 2, rng);
  CHECK(high_uncertainty_score(p, p, kl_two_way(p, p), 0.9) <= 1e-7);
}

TEST_CASE("mu is non-decreasing in tau") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    const ProbMap a = test::random_probmap({3, 3, 2}, 2, rng);
    const ProbMap b = test::random_probmap({3, 3, 2}, 2, rng);
    const auto u = kl_two_way(a, b);
    double prev = 0.0;
    for (double tau = 0.5; tau < 0.999; tau += 0.05) {
      const double mu = high_uncertainty_score(a, b, u, tau);
      CHECK(mu >= prev);
      CHECK(mu >= 0.0);
      CHECK(mu <= 1.0);
      prev = mu;
    }
  }
}

TEST_CASE("uncertainty preconditions") {
  const ProbMap a({2, 2, 2}, 2), b({2, 2, 2}, 3), c({2, 2, 3}, 2);
  CHECK_THROWS_AS(kl_two_way(a, b), std::invalid_argument);
  CHECK_THROWS_AS(kl_two_way(a, c), std::invalid_argument);
  CHECK_THROWS_AS(kl_two_way(a, a, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(high_uncertainty_score(a, a, kl_two_way(a, a), 1.0), std::invalid_argument);
}

TEST_CASE("masked strong view") {
  std::mt19937_64 rng(5);
  const Volume weak = test::random_volume({4, 4, 4}, rng);
  const Volume strong = test::random_volume({4, 4, 4}, rng);
  CHECK(masked_strong_view(weak, strong, BinaryMask({4, 4, 4}, 1)) == strong);
  CHECK((masked_strong_view(weak, strong, BinaryMask({4, 4, 4}, 0)).data() == 0.0).all());
  BinaryMask hole({4, 4, 4}, 1);
  hole(1, 2, 3) = 0;
  const Volume out = masked_strong_view(weak, strong, hole);
  for (Eigen::Index i = 0; i < out.size(); ++i) CHECK(out[i] == (hole[i] ? strong[i] : 0.0));
}

TEST_CASE("adaptive blend") {
  std::mt19937_64 rng(6);
  const Volume weak = test::random_volume({3, 4, 5}, rng);
  const Volume ms = test::random_volume({3, 4, 5}, rng);
  CHECK(adaptive_blend(weak, ms, 0.0) == weak);
  CHECK(adaptive_blend(weak, ms, 1.0) == ms);
  Volume a({1, 1, 1}, 0.2), b({1, 1, 1}, 0.6);
  CHECK(adaptive_blend(a, b, 0.5)[0] == doctest::Approx(0.4).epsilon(1e-15));
  CHECK_THROWS_AS(adaptive_blend(weak, ms, 1.5), std::invalid_argument);
  CHECK_THROWS_AS(adaptive_blend(weak, ms, -0.1), std::invalid_argument);
}

TEST_CASE("disagreement blend") {
  std::mt19937_64 rng(7);
  const Dims d{4, 5, 6};
  const Volume u = test::random_volume(d, rng);
  const Volume ms = test::random_volume(d, rng);
  CHECK(disagreement_blend(u, ms, BinaryMask(d, 0)) == u);
  CHECK(disagreement_blend(u, ms, BinaryMask(d, 1)) == ms);
  BinaryMask checker(d, 0);
  for (int z = 0; z < d.depth; ++z)
    for (int y = 0; y < d.height; ++y)
      for (int x = 0; x < d.width; ++x) checker(z, y, x) = std::uint8_t((z + y + x) % 2);
  const Volume out = disagreement_blend(u, ms, checker);
  for (Eigen::Index i = 0; i < out.size(); ++i) CHECK(out[i] == (checker[i] ? ms[i] : u[i]));
}
