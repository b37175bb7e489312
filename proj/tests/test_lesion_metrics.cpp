#include <gtest/gtest.h>

#include <random>

#include "lesionkit/lesion_metrics.hpp"
#include "oracles.hpp"

using namespace lesionkit;

namespace {

MatchTable toy_table() {
  // Two gt lesions; P1 (0.9) overlaps G1, P2 (0.6) overlaps nothing.
  MatchTable t;
  t.case_id = "toy";
  t.gt_diameters = {6.0, 4.0};
  t.pred_certainties = {0.9, 0.6};
  t.overlaps = {{1, 1}};
  return t;
}

MatchTable table_for(const VoxelGrid& prob, const Mask& gt, Connectivity conn, std::string id = {}) {
  return match_lesions(extract_predicted_lesions(prob, conn), label_components(gt, conn), std::move(id));
}

}  // namespace

TEST(PredictedLesions, BelowCutIsEmpty) {
  const VoxelGrid p(Dims{5, 5, 5}, Spacing{}, 0.4f);
  EXPECT_TRUE(extract_predicted_lesions(p).lesions.empty());
}

TEST(PredictedLesions, CertaintyIsMax) {
  VoxelGrid p(Dims{6, 6, 6}, Spacing{}, 0.1f);
  p.at(1, 1, 1) = 0.6f;
  p.at(2, 1, 1) = 0.9f;
  p.at(4, 4, 4) = 0.7f;
  const auto ps = extract_predicted_lesions(p);
  ASSERT_EQ(ps.lesions.size(), 2u);
  EXPECT_EQ(ps.lesions[0].certainty, static_cast<double>(0.9f));
  EXPECT_EQ(ps.lesions[0].voxels, 2u);
  EXPECT_EQ(ps.lesions[1].certainty, static_cast<double>(0.7f));
}

TEST(MatchLesions, PairsArePerOverlap) {
  Mask gt(Dims{8, 4, 4}, Spacing{}, std::uint8_t{0});
  gt.at(1, 1, 1) = 1;
  gt.at(5, 1, 1) = 1;
  VoxelGrid p(gt.dims(), gt.spacing(), 0.0f);
  for (std::size_t x = 1; x <= 5; ++x) p.at(x, 1, 1) = 0.8f;  // one blob over both
  p.at(7, 3, 3) = 0.8f;                                        // disjoint
  const auto t = table_for(p, gt, Connectivity::k26);
  ASSERT_EQ(t.overlaps.size(), 2u);
  EXPECT_EQ(t.overlaps[0], (std::pair<std::int32_t, std::int32_t>{1, 1}));
  EXPECT_EQ(t.overlaps[1], (std::pair<std::int32_t, std::int32_t>{2, 1}));

  VoxelGrid same(gt.dims(), gt.spacing(), 0.0f);
  same.at(1, 1, 1) = 0.9f;
  EXPECT_EQ(table_for(same, gt, Connectivity::k26).overlaps.size(), 1u);
}

TEST(LesionPrc, ToyExample) {
  const std::vector<MatchTable> cases{toy_table()};
  const auto prc = lesion_prc(cases);
  ASSERT_EQ(prc.points.size(), 3u);  // 0.5, 0.6, 0.9
  EXPECT_EQ(prc.points[0].threshold, 0.5);
  EXPECT_DOUBLE_EQ(prc.points[0].precision, 0.5);
  EXPECT_DOUBLE_EQ(prc.points[0].recall, 0.5);
  EXPECT_EQ(prc.points[1].threshold, 0.6);
  EXPECT_DOUBLE_EQ(prc.points[1].precision, 1.0);
  EXPECT_DOUBLE_EQ(prc.points[1].recall, 0.5);
  EXPECT_EQ(prc.points[2].tp, 0u);
  EXPECT_EQ(prc.points[2].fn, 2u);
  EXPECT_DOUBLE_EQ(prc.points[2].precision, 1.0);
  EXPECT_EQ(oracle::curve_violation(prc), "");
}

TEST(LesionPrc, PerfectPrediction) {
  std::mt19937_64 rng(3);
  const Mask gt = oracle::random_mask(Dims{12, 12, 12}, rng, 0.04);
  VoxelGrid p(gt.dims(), gt.spacing(), 0.0f);
  for (std::size_t i = 0; i < gt.size(); ++i) p[i] = gt[i] ? 0.95f : 0.0f;
  const std::vector<MatchTable> cases{table_for(p, gt, Connectivity::k26)};
  const auto prc = lesion_prc(cases);
  EXPECT_EQ(prc.points.front().precision, 1.0);
  EXPECT_EQ(prc.points.front().recall, 1.0);
}

TEST(LesionPrc, NoGroundTruthIsAnError) {
  MatchTable t;
  t.pred_certainties = {0.7};
  const std::vector<MatchTable> cases{t};
  EXPECT_THROW(lesion_prc(cases), ArgumentError);
}

TEST(LesionPrc, MatchesBruteForceOracle) {
  std::mt19937_64 rng(2024);
  std::vector<VoxelGrid> probs;
  std::vector<Mask> gts;
  std::vector<MatchTable> tables;
  for (int i = 0; i < 50; ++i) {
    oracle::RandomCase c = oracle::random_prc_case(rng, i % 2 == 0 ? 20.0 : 100.0);
    tables.push_back(table_for(c.prob, c.gt, Connectivity::k26));
    probs.push_back(std::move(c.prob));
    gts.push_back(std::move(c.gt));
  }
  for (auto conn : {Connectivity::k26, Connectivity::k6}) {
    std::vector<MatchTable> t = tables;
    if (conn == Connectivity::k6) {
      for (std::size_t i = 0; i < t.size(); ++i) t[i] = table_for(probs[i], gts[i], conn);
    }
    const auto prc = lesion_prc(t);
    const auto ref = oracle::brute_force_prc(probs, gts, conn);
    ASSERT_GT(ref.size(), 20u);
    ASSERT_EQ(prc.points.size(), ref.size());
    for (std::size_t k = 0; k < ref.size(); ++k) {
      const auto& p = prc.points[k];
      EXPECT_EQ((oracle::CurveCounts{p.threshold, p.tp, p.fp, p.fn, p.tp_pred}), ref[k]) << "threshold " << ref[k].threshold;
    }
    EXPECT_EQ(oracle::curve_violation(prc), "");
  }
}

TEST(LesionPrc, StratumCountsOnlySmallLesions) {
  MatchTable t = toy_table();
  const std::vector<MatchTable> cases{t};
  const auto small = lesion_prc(cases, Stratum::below(5.0));
  EXPECT_EQ(small.points[0].tp + small.points[0].fn, 1u);
  EXPECT_EQ(small.points[0].fn, 1u);
  // Predictions are not stratified.
  EXPECT_EQ(small.points[0].fp, 1u);
  EXPECT_EQ(oracle::curve_violation(small), "");
}

TEST(Bootstrap, IdenticalCasesZeroWidth) {
  const std::vector<MatchTable> cases(6, toy_table());
  Rng rng(1);
  const auto prc = bootstrap_prc(cases, {50, 0.8}, rng);
  ASSERT_TRUE(prc.band.has_value());
  for (std::size_t g = 0; g < prc.points.size(); ++g) {
    const auto& b = (*prc.band)[g];
    EXPECT_EQ(b.recall_lo, b.recall_hi);
    EXPECT_EQ(b.precision_lo, b.precision_hi);
    EXPECT_EQ(b.recall_lo, prc.points[g].recall);
  }
}

TEST(Bootstrap, DeterministicAndContainsCurve) {
  std::mt19937_64 gen(77);
  std::vector<MatchTable> cases;
  for (int i = 0; i < 20; ++i) {
    oracle::RandomCase c = oracle::random_prc_case(gen, 1000.0);
    cases.push_back(table_for(c.prob, c.gt, Connectivity::k26));
  }
  Rng a(5), b(5);
  const auto pa = bootstrap_prc(cases, {100, 0.8}, a);
  const auto pb = bootstrap_prc(cases, {100, 0.8}, b);
  ASSERT_TRUE(pa.band && pb.band);
  std::size_t inside = 0;
  for (std::size_t g = 0; g < pa.points.size(); ++g) {
    const auto& x = (*pa.band)[g];
    const auto& y = (*pb.band)[g];
    EXPECT_EQ(x.recall_lo, y.recall_lo);
    EXPECT_EQ(x.precision_hi, y.precision_hi);
    const auto& p = pa.points[g];
    if (p.recall >= x.recall_lo && p.recall <= x.recall_hi && p.precision >= x.precision_lo &&
        p.precision <= x.precision_hi) {
      ++inside;
    }
  }
  EXPECT_GE(static_cast<double>(inside), 0.9 * static_cast<double>(pa.points.size()));
  EXPECT_EQ(oracle::curve_violation(pa), "");
}

TEST(Bootstrap, RejectsBadOptions) {
  const std::vector<MatchTable> cases(3, toy_table());
  Rng rng(1);
  EXPECT_THROW(bootstrap_prc(cases, {10, 0.0}, rng), ArgumentError);
  EXPECT_THROW(bootstrap_prc(std::span<const MatchTable>(cases).first(1), {10, 0.8}, rng), ArgumentError);
}

TEST(LesionDice, SetArithmetic) {
  Mask gt(Dims{8, 8, 8}, Spacing{}, std::uint8_t{0});
  for (std::size_t x = 0; x < 8; ++x) gt.at(x, 2, 2) = 1;
  Mask pred(gt.dims(), gt.spacing(), std::uint8_t{0});
  for (std::size_t x = 4; x < 8; ++x) pred.at(x, 2, 2) = 1;
  for (std::size_t x = 4; x < 8; ++x) pred.at(x, 2, 3) = 1;  // adjacent, same component
  const auto d = lesion_dice(pred, label_components(gt));
  ASSERT_EQ(d.size(), 1u);
  EXPECT_DOUBLE_EQ(d[0].second, 0.5);

  EXPECT_DOUBLE_EQ(lesion_dice(gt, label_components(gt))[0].second, 1.0);
  const Mask empty(gt.dims(), gt.spacing(), std::uint8_t{0});
  EXPECT_EQ(lesion_dice(empty, label_components(gt))[0].second, 0.0);
}

TEST(VolumetricDice, Formula) {
  Mask a(Dims{10, 10, 2}, Spacing{}, std::uint8_t{0});
  Mask b = a;
  for (std::size_t i = 0; i < 100; ++i) a[i] = 1;
  for (std::size_t i = 20; i < 120; ++i) b[i] = 1;
  EXPECT_DOUBLE_EQ(volumetric_dice(a, b), 0.8);
  EXPECT_EQ(volumetric_dice(a, a), 1.0);
  Mask c(a.dims(), a.spacing(), std::uint8_t{0});
  for (std::size_t i = 100; i < 200; ++i) c[i] = 1;
  EXPECT_EQ(volumetric_dice(a, c), 0.0);
  const Mask e(a.dims(), a.spacing(), std::uint8_t{0});
  EXPECT_EQ(volumetric_dice(e, e), 1.0);
}

TEST(MatchedPrecision, PicksLowestThresholdReachingTarget) {
  // Model A: precision 0.5 at the cut, 1.0 from 0.6. Model B: precision 1.0.
  const std::vector<MatchTable> a{toy_table()};
  MatchTable tb;
  tb.gt_diameters = {6.0, 4.0};
  tb.pred_certainties = {0.8, 0.7};
  tb.overlaps = {{1, 1}, {2, 2}};
  const std::vector<MatchTable> b{tb};
  const auto m = compare_at_matched_precision(a, b, Stratum::below(5.0));
  EXPECT_EQ(m.target_precision, 1.0);
  EXPECT_EQ(m.a.overall.threshold, 0.6);
  EXPECT_EQ(m.b.overall.threshold, 0.5);
  EXPECT_EQ(m.a.stratum.fn, 1u);
  EXPECT_EQ(m.b.stratum.fn, 0u);
}
