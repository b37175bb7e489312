#include <gtest/gtest.h>

#include <random>

#include "lesionkit/phantom.hpp"
#include "lesionkit/trainer.hpp"
#include "oracles.hpp"

using namespace lesionkit;

namespace {

VoxelGrid random_image(const Dims& d, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  VoxelGrid img(d, Spacing{});
  for (auto& v : img.values()) v = static_cast<float>(n(rng));
  return img;
}

VoxelModel random_model(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 0.3);
  VoxelModel m = VoxelModel::zeros();
  for (double& w : m.weights) w = n(rng);
  m.bias = n(rng);
  return m;
}

VoxelModel from_params(const std::vector<double>& x) {
  VoxelModel m = VoxelModel::zeros();
  for (std::size_t k = 0; k < m.weights.size(); ++k) m.weights[k] = x[k];
  m.bias = x.back();
  return m;
}

std::vector<double> to_params(const VoxelModel& m) {
  std::vector<double> x = m.weights;
  x.push_back(m.bias);
  return x;
}

std::vector<TrainingCase> training_set(std::size_t n, std::uint64_t seed, LossKind kind) {
  PhantomParams p;
  p.dims = {40, 40, 40};
  p.diameter_max_mm = 16.0;
  p.lesion_count_mean = 3.0;
  Rng rng(seed);
  std::vector<SampleCase> cases;
  for (std::size_t i = 0; i < n; ++i) {
    PhantomCase pc = gen_case(p, rng);
    cases.push_back(make_sample_case(std::to_string(i), pc.image, pc.gt));
  }
  return prepare_training_cases(std::move(cases), kind);
}

TrainConfig small_config(LossKind kind, std::uint64_t seed) {
  TrainConfig c;
  c.loss = kind;
  c.epochs = 8;
  c.iterations_per_epoch = 10;
  c.batch_size = 6;
  c.patch_size = {16, 16, 16};
  c.seed = seed;
  return c;
}

}  // namespace

TEST(Features, ConstantImage) {
  const VoxelGrid img(Dims{9, 7, 5}, Spacing{}, 2.5f);
  const auto fv = extract_features(img);
  ASSERT_EQ(fv.count, 7u);
  for (std::size_t k = 0; k < 3; ++k) {
    for (float v : fv.feature(1 + 2 * k)) ASSERT_FLOAT_EQ(v, 2.5f);
    for (float v : fv.feature(2 + 2 * k)) ASSERT_EQ(v, 0.0f);
  }
}

TEST(Features, BrightVoxelPeaksInMean) {
  VoxelGrid img(Dims{9, 9, 9}, Spacing{}, 0.0f);
  img.at(4, 4, 4) = 1.0f;
  const auto fv = extract_features(img);
  const auto mean1 = fv.feature(1);
  const std::size_t peak = img.dims().index(4, 4, 4);
  for (std::size_t j = 0; j < mean1.size(); ++j) EXPECT_LE(mean1[j], mean1[peak]);
  EXPECT_FLOAT_EQ(mean1[peak], 1.0f / 27.0f);
}

TEST(Features, MatchNaiveWindowOracle) {
  std::mt19937_64 rng(1);
  const VoxelGrid img = random_image(Dims{16, 16, 16}, rng);
  const FeatureSpec spec;
  const auto fv = extract_features(img, spec);
  const Dims& d = img.dims();
  for (std::size_t z = 0; z < d.nz; ++z) {
    for (std::size_t y = 0; y < d.ny; ++y) {
      for (std::size_t x = 0; x < d.nx; ++x) {
        const std::size_t j = d.index(x, y, z);
        for (std::size_t k = 0; k < spec.radii.size(); ++k) {
          const auto [mean, sd] = oracle::window_stats(img, x, y, z, spec.radii[k]);
          ASSERT_NEAR(fv.feature(1 + 2 * k)[j], mean, 1e-6);
          ASSERT_NEAR(fv.feature(2 + 2 * k)[j], sd, 1e-6);
        }
      }
    }
  }
}

TEST(Features, CropMatchesFullVolume) {
  std::mt19937_64 rng(2);
  const VoxelGrid img = random_image(Dims{12, 10, 8}, rng);
  const auto fv = extract_features(img);
  const auto part = crop_features(fv, {2, 3, 1}, Dims{5, 4, 3});
  for (std::size_t f = 0; f < fv.count; ++f) {
    EXPECT_EQ(part.feature(f)[0], fv.feature(f)[img.dims().index(2, 3, 1)]);
    EXPECT_EQ(part.feature(f)[part.dims.index(4, 3, 2)], fv.feature(f)[img.dims().index(6, 6, 3)]);
  }
  EXPECT_THROW(crop_features(fv, {10, 0, 0}, Dims{5, 4, 3}), ArgumentError);
}

TEST(Model, ZeroModelIsUniformHalf) {
  std::mt19937_64 rng(3);
  const auto p = predict(VoxelModel::zeros(), random_image(Dims{6, 6, 6}, rng));
  for (float v : p.values()) EXPECT_EQ(v, 0.5f);
}

TEST(Model, BiasSaturates) {
  std::mt19937_64 rng(4);
  VoxelModel m = VoxelModel::zeros();
  m.bias = 50.0;
  const auto fv = extract_features(random_image(Dims{4, 4, 4}, rng));
  for (double p : forward_probabilities(m, fv)) EXPECT_GE(p, 1.0 - 1e-20);
  m.bias = -800.0;
  for (double p : forward_probabilities(m, fv)) EXPECT_TRUE(std::isfinite(p));
}

TEST(Model, JsonRoundTrip) {
  std::mt19937_64 rng(5);
  const VoxelModel m = random_model(rng);
  const VoxelModel back = model_from_json(to_json(m));
  EXPECT_EQ(back.weights, m.weights);
  EXPECT_EQ(back.bias, m.bias);
  auto bad = to_json(m);
  bad["weights"].erase(0);
  EXPECT_THROW(model_from_json(bad), ValidationError);
}

TEST(Gradient, ParametersMatchFiniteDifferences) {
  std::mt19937_64 rng(6);
  double worst = 0.0;
  for (int t = 0; t < 20; ++t) {
    const VoxelGrid img = random_image(Dims{8, 8, 8}, rng);
    const Mask gt = oracle::random_mask(img.dims(), rng, 0.2);
    std::uniform_real_distribution<float> uw(0.5f, 30.0f);
    std::vector<float> w(gt.size());
    for (auto& v : w) v = uw(rng);
    const auto fv = extract_features(img);
    const VoxelModel m = random_model(rng);
    for (LossKind kind : {LossKind::kBce, LossKind::kIwBce, LossKind::kDice}) {
      const auto lg = loss_and_grad(m, fv, gt.values(), w, kind);
      auto f = [&](const std::vector<double>& x) { return loss_and_grad(from_params(x), fv, gt.values(), w, kind).value; };
      for (std::size_t k = 0; k < m.parameter_count(); ++k) {
        const double num = oracle::central_difference(f, to_params(m), k, 1e-5);
        worst = std::max(worst, oracle::relative_error(lg.gradient[k], num));
      }
    }
  }
  EXPECT_LT(worst, 1e-4);
}

TEST(Gradient, LogitChainMatchesProbabilityGradient) {
  // d/dbias equals sum_j dL/dp_j * p_j (1 - p_j), using the loss kernel directly.
  std::mt19937_64 rng(7);
  const VoxelGrid img = random_image(Dims{6, 6, 6}, rng);
  const Mask gt = oracle::random_mask(img.dims(), rng, 0.2);
  const auto fv = extract_features(img);
  const VoxelModel m = random_model(rng);
  const auto p = forward_probabilities(m, fv);
  std::vector<double> dp(p.size());
  losses::dice<double>(p, gt.values(), dp);
  double expect = 0.0;
  for (std::size_t j = 0; j < p.size(); ++j) expect += dp[j] * p[j] * (1.0 - p[j]);
  EXPECT_NEAR(loss_and_grad(m, fv, gt.values(), {}, LossKind::kDice).gradient.back(), expect, 1e-12);
}

TEST(Gradient, SaturatedSeparationIsFixedPoint) {
  Mask gt(Dims{8, 8, 8}, Spacing{}, std::uint8_t{0});
  for (std::size_t z = 2; z < 6; ++z)
    for (std::size_t y = 2; y < 6; ++y)
      for (std::size_t x = 2; x < 6; ++x) gt.at(x, y, z) = 1;
  VoxelGrid img(gt.dims(), gt.spacing());
  for (std::size_t j = 0; j < img.size(); ++j) img[j] = gt[j];
  VoxelModel m = VoxelModel::zeros();
  m.weights[0] = 200.0;
  m.bias = -100.0;
  const auto fv = extract_features(img);
  for (LossKind kind : {LossKind::kBce, LossKind::kDice}) {
    const auto lg = loss_and_grad(m, fv, gt.values(), {}, kind);
    double norm = 0.0;
    for (double g : lg.gradient) norm += g * g;
    EXPECT_LT(std::sqrt(norm), 1e-6) << to_string(kind);
  }
}

TEST(Gradient, IwBceNeedsWeights) {
  const VoxelGrid img(Dims{4, 4, 4}, Spacing{}, 0.0f);
  const Mask gt(img.dims(), img.spacing(), std::uint8_t{0});
  EXPECT_THROW(loss_and_grad(VoxelModel::zeros(), extract_features(img), gt.values(), {}, LossKind::kIwBce),
               ArgumentError);
}

TEST(Schedule, DropEpoch) {
  TrainConfig c;
  EXPECT_EQ(c.drop_epoch(), 18u);
  EXPECT_EQ(c.lr_at(17), c.lr);
  EXPECT_EQ(c.lr_at(18), c.lr_dropped);
  c.epochs = 4;
  EXPECT_EQ(c.drop_epoch(), 3u);
  c.lr_drop_epoch = 4;
  EXPECT_THROW(validate(c), ValidationError);
  c.lr_drop_epoch = 1;
  EXPECT_EQ(c.lr_at(1), c.lr_dropped);
}

TEST(Training, LossDecreasesForEveryLoss) {
  for (LossKind kind : {LossKind::kBce, LossKind::kIwBce, LossKind::kDice}) {
    const auto cases = training_set(6, 100, kind);
    for (std::uint64_t seed : {1u, 2u, 3u}) {
      const auto r = train(cases, small_config(kind, seed));
      ASSERT_EQ(r.log.size(), 8u);
      EXPECT_LT(r.log.back().mean_loss, r.log.front().mean_loss) << to_string(kind) << " seed " << seed;
      EXPECT_EQ(r.log.back().lr, 0.01);
    }
  }
}

TEST(Training, Deterministic) {
  const auto cases = training_set(3, 200, LossKind::kIwBce);
  const auto a = train(cases, small_config(LossKind::kIwBce, 9));
  const auto b = train(cases, small_config(LossKind::kIwBce, 9));
  EXPECT_EQ(a.model.weights, b.model.weights);
  EXPECT_EQ(a.model.bias, b.model.bias);
}

TEST(Evaluate, UniformHalfFindsNothing) {
  std::mt19937_64 rng(8);
  const Mask gt = oracle::random_mask(Dims{10, 10, 10}, rng, 0.05);
  const std::vector<ProbabilityMap> probs{ProbabilityMap(gt.dims(), gt.spacing(), 0.5f)};
  const std::vector<Mask> gts{gt};
  const auto r = evaluate_predictions(probs, gts, Connectivity::k26, 10.0);
  ASSERT_EQ(r.overall.points.size(), 1u);
  EXPECT_EQ(r.overall.points[0].recall, 0.0);
  EXPECT_EQ(r.overall.points[0].tp_pred + r.overall.points[0].fp, 0u);
  for (double d : r.lesion_dice) EXPECT_EQ(d, 0.0);
  EXPECT_EQ(oracle::curve_violation(r.overall), "");
}

TEST(Evaluate, OracleModelIsPerfect) {
  std::mt19937_64 rng(9);
  const Mask gt = oracle::random_mask(Dims{10, 10, 10}, rng, 0.05);
  ProbabilityMap p(gt.dims(), gt.spacing());
  for (std::size_t j = 0; j < gt.size(); ++j) p[j] = gt[j];
  const std::vector<ProbabilityMap> probs{p};
  const std::vector<Mask> gts{gt};
  const auto r = evaluate_predictions(probs, gts, Connectivity::k26, 10.0);
  EXPECT_EQ(r.overall.points[0].recall, 1.0);
  EXPECT_EQ(r.overall.points[0].precision, 1.0);
  for (double d : r.lesion_dice) EXPECT_EQ(d, 1.0);
  EXPECT_EQ(oracle::curve_violation(r.overall), "");
  EXPECT_EQ(oracle::curve_violation(r.small), "");
}
