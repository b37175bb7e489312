#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "lesionkit/imbalance.hpp"
#include "oracles.hpp"

using namespace lesionkit;

namespace {

// 10x10x10 mask with a 10-voxel and a 2-voxel component.
Mask hand_mask() {
  Mask m(Dims{10, 10, 10}, Spacing{}, std::uint8_t{0});
  for (std::size_t x = 0; x < 10; ++x) m.at(x, 2, 2) = 1;
  m.at(5, 7, 7) = 1;
  m.at(6, 7, 7) = 1;
  return m;
}

struct Instance {
  std::vector<double> p;
  std::vector<std::uint8_t> y;
  std::vector<float> w;
};

Instance random_instance(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> up(0.02, 0.98), uw(0.5, 20.0), coin(0.0, 1.0);
  Instance in;
  for (std::size_t j = 0; j < n; ++j) {
    in.p.push_back(up(rng));
    in.y.push_back(coin(rng) < 0.3 ? 1 : 0);
    in.w.push_back(static_cast<float>(uw(rng)));
  }
  return in;
}

}  // namespace

TEST(WeightGrid, HandExample) {
  const auto lm = label_components(hand_mask());
  ASSERT_EQ(lm.component_count(), 2u);
  const auto wg = build_weight_grid(lm, 0.012);
  ASSERT_EQ(wg.component_weights.size(), 3u);
  EXPECT_EQ(wg.component_weights[0], 1.0);
  EXPECT_DOUBLE_EQ(wg.component_weights[1], 1.2);
  EXPECT_DOUBLE_EQ(wg.component_weights[2], 6.0);
  EXPECT_FLOAT_EQ(wg.weights.at(0, 2, 2), 1.2f);
  EXPECT_FLOAT_EQ(wg.weights.at(5, 7, 7), 6.0f);
  EXPECT_EQ(wg.weights.at(0, 0, 0), 1.0f);
}

TEST(WeightGrid, NoComponentsAllOnes) {
  const Mask m(Dims{4, 4, 4}, Spacing{}, std::uint8_t{0});
  const auto wg = build_weight_grid(label_components(m), 0.5);
  for (float v : wg.weights.values()) EXPECT_EQ(v, 1.0f);
}

TEST(WeightGrid, EqualSizesEqualWeights) {
  Mask m(Dims{8, 8, 8}, Spacing{}, std::uint8_t{0});
  m.at(1, 1, 1) = m.at(2, 1, 1) = 1;
  m.at(5, 5, 5) = m.at(5, 6, 5) = 1;
  const auto wg = build_weight_grid(label_components(m), 0.1);
  EXPECT_EQ(wg.component_weights[1], wg.component_weights[2]);
}

TEST(WeightGrid, InverseSizeIdentity) {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> ub(1e-3, 1.0);
  for (int t = 0; t < 100; ++t) {
    const Mask m = oracle::random_mask(Dims{9, 8, 7}, rng, 0.05 + 0.002 * t);
    const auto lm = label_components(m);
    const double beta = ub(rng);
    const auto wg = build_weight_grid(lm, beta);
    EXPECT_EQ(wg.component_weights[0], 1.0);
    const double rhs = beta * static_cast<double>(m.size());
    for (std::size_t i = 1; i < lm.sizes.size(); ++i) {
      const double lhs = wg.component_weights[i] * static_cast<double>(lm.sizes[i]);
      EXPECT_LE(std::fabs(lhs - rhs) / rhs, 1e-12);
    }
    for (std::size_t j = 0; j < m.size(); ++j) {
      if (!m[j]) {
        ASSERT_EQ(wg.weights[j], 1.0f);
      }
    }
  }
}

TEST(WeightGrid, RejectsBadBeta) {
  const auto lm = label_components(hand_mask());
  EXPECT_THROW(build_weight_grid(lm, 0.0), ArgumentError);
  EXPECT_THROW(build_weight_grid(lm, 1.5), ArgumentError);
}

TEST(Bce, UniformHalf) {
  const VoxelGrid p(Dims{10, 10, 10}, Spacing{}, 0.5f);
  const auto r = bce(p, hand_mask());
  EXPECT_NEAR(r.value, std::log(2.0), 1e-12);
}

TEST(Bce, PerfectPrediction) {
  const Mask m = hand_mask();
  VoxelGrid p(m.dims(), m.spacing());
  for (std::size_t i = 0; i < m.size(); ++i) p[i] = m[i];
  const auto r = bce(p, m);
  EXPECT_LE(r.value, -std::log(1.0 - kProbClamp) + 1e-15);
  for (double g : r.gradient->values()) EXPECT_EQ(g, 0.0);
}

TEST(Bce, SingleVoxelGradient) {
  const std::vector<double> p{0.5};
  const std::vector<std::uint8_t> y{1};
  std::vector<double> g(1);
  losses::bce<double>(p, y, g);
  EXPECT_DOUBLE_EQ(g[0], -2.0);
}

TEST(IwBce, HandExampleValue) {
  const Mask m = hand_mask();
  const auto wg = build_weight_grid(label_components(m), 0.012);
  const VoxelGrid p(m.dims(), m.spacing(), 0.5f);
  const auto r = iwbce(p, m, wg);
  // mean weight (988 + 10 * 1.2 + 2 * 6) / 1000 = 1.012
  EXPECT_NEAR(r.value, std::log(2.0) * 1.012, 1e-6);
  EXPECT_NEAR(r.value, 0.70147, 1e-5);
}

TEST(IwBce, UnitWeightsReduceToBceExactly) {
  std::mt19937_64 rng(4);
  for (int t = 0; t < 100; ++t) {
    Instance in = random_instance(rng, 512);
    std::vector<float> ones(in.p.size(), 1.0f);
    std::vector<double> gb(in.p.size()), gw(in.p.size());
    const double vb = losses::bce<double>(in.p, in.y, gb);
    const double vw = losses::iwbce<double, float>(in.p, in.y, ones, gw);
    ASSERT_EQ(vb, vw);
    ASSERT_EQ(gb, gw);
  }
}

TEST(IwBce, PerfectPredictionBoundedByMaxWeight) {
  const Mask m = hand_mask();
  const auto wg = build_weight_grid(label_components(m), 0.012);
  VoxelGrid p(m.dims(), m.spacing());
  for (std::size_t i = 0; i < m.size(); ++i) p[i] = m[i];
  EXPECT_LE(iwbce(p, m, wg).value, 6.0 * -std::log(1.0 - kProbClamp) + 1e-15);
}

TEST(IwBce, RequiresMatchingWeights) {
  const Mask m = hand_mask();
  const VoxelGrid p(m.dims(), m.spacing(), 0.5f);
  const VoxelGrid w(Dims{5, 5, 5}, Spacing{}, 1.0f);
  EXPECT_THROW(iwbce(p, m, w), ArgumentError);
}

TEST(Dice, ClosedForms) {
  const Mask m = hand_mask();
  VoxelGrid p(m.dims(), m.spacing());
  for (std::size_t i = 0; i < m.size(); ++i) p[i] = m[i];
  const double n = static_cast<double>(count_positive(m));
  EXPECT_LE(dice_loss(p, m).value, kDiceSmooth / (2.0 * n + kDiceSmooth));
  EXPECT_NEAR(dice_loss(p, m).value, 0.0, 1e-12);
  const VoxelGrid zero(m.dims(), m.spacing(), 0.0f);
  EXPECT_NEAR(dice_loss(zero, m).value, 1.0 - kDiceSmooth / (n + kDiceSmooth), 1e-12);
}

TEST(Losses, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(8);
  for (int t = 0; t < 20; ++t) {
    Instance in = random_instance(rng, 64);
    auto check = [&](auto&& f) {
      std::vector<double> g(in.p.size());
      f(in.p, std::span<double>(g));
      for (std::size_t j = 0; j < in.p.size(); ++j) {
        const double num = oracle::central_difference(
            [&](const std::vector<double>& x) { return f(x, std::span<double>{}); }, in.p, j, 1e-5);
        EXPECT_LT(oracle::relative_error(g[j], num), 1e-6) << "voxel " << j;
      }
    };
    check([&](const std::vector<double>& p, std::span<double> g) { return losses::bce<double>(p, in.y, g); });
    check([&](const std::vector<double>& p, std::span<double> g) {
      return losses::iwbce<double, float>(p, in.y, in.w, g);
    });
    check([&](const std::vector<double>& p, std::span<double> g) { return losses::dice<double>(p, in.y, g); });
  }
}

TEST(Losses, ClampedVoxelsHaveZeroGradient) {
  const std::vector<double> p{0.0, 1.0};
  const std::vector<std::uint8_t> y{1, 0};
  std::vector<double> g(2);
  const double v = losses::bce<double>(p, y, g);
  EXPECT_TRUE(std::isfinite(v));
  EXPECT_EQ(g[0], 0.0);
  EXPECT_EQ(g[1], 0.0);
}

TEST(Losses, ParseKind) {
  EXPECT_EQ(parse_loss_kind("iwbce"), LossKind::kIwBce);
  EXPECT_EQ(to_string(LossKind::kDice), "dice");
  EXPECT_THROW(parse_loss_kind("focal"), ArgumentError);
}
