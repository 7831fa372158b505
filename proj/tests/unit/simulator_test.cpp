#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "gradlens/error.hpp"
#include "gradlens/simulator.hpp"
#include "sim_oracle.inc"

namespace gradlens {
namespace {

constexpr double kPi = std::numbers::pi;

template <typename F>
ErrorCode code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no gradlens::Error thrown";
  return ErrorCode::kInvalidParams;
}

// Mean of `fn` over n anchors drawn at (mu_pos, mu_neg) with the default spreads.
template <typename F>
double cell_mean(double mu_pos, double mu_neg, std::size_t n, std::uint64_t seed, F&& fn) {
  DistributionSpec spec;
  spec.mu_pos = mu_pos;
  spec.mu_neg = mu_neg;
  NormalSampler normal(seed);
  double acc = 0.0;
  for (std::size_t b = 0; b < n; ++b) acc += fn(sample_angles(spec, 127, normal));
  return acc / static_cast<double>(n);
}

TEST(Axes, EndpointsAndNearest) {
  const auto pos = mu_pos_axis(100);
  const auto neg = mu_neg_axis(100);
  EXPECT_DOUBLE_EQ(pos.front(), kPi / 20);
  EXPECT_DOUBLE_EQ(pos.back(), kPi / 2);
  EXPECT_DOUBLE_EQ(neg.back(), kPi);
  EXPECT_EQ(nearest_index(neg, kPi), 99u);
  EXPECT_EQ(nearest_index(pos, kPi / 20), 0u);
  EXPECT_EQ(linspace(1.0, 2.0, 1).size(), 1u);
}

TEST(AngleGd, MarginCells) {
  const LossParams p = LossParams::defaults();
  const double close = cell_mean(kPi / 4, kPi / 4, 1000, 1, [&](const AngleBatch& a) {
    return angle_gd(LossKind::kMpt, a, p);
  });
  const double far = cell_mean(kPi / 20, kPi, 1000, 2, [&](const AngleBatch& a) {
    return angle_gd(LossKind::kMpt, a, p);
  });
  EXPECT_GE(close, 0.99);
  EXPECT_LE(far, 0.01);
}

TEST(AngleGd, InfoDichotomy) {
  const LossParams p = LossParams::defaults();
  const double diag = cell_mean(kPi / 3, kPi / 3, 1000, 3, [&](const AngleBatch& a) {
    return angle_gd(LossKind::kInfo, a, p);
  });
  EXPECT_GE(diag, 0.9);
  // cos(pi/20) - cos(3pi/4) is well past 0.8
  const double far = cell_mean(kPi / 20, 3 * kPi / 4, 1000, 4, [&](const AngleBatch& a) {
    return angle_gd(LossKind::kInfo, a, p);
  });
  EXPECT_LE(far, 0.05);
}

TEST(AngleGd, IneffectiveKindsGiveOne) {
  AngleBatch a{0.3, {1.0, 2.0}};
  for (LossKind k : kAllLossKinds) {
    if (is_unmodified_ineffective(k)) EXPECT_EQ(angle_gd(k, a, LossParams::defaults()), 1.0);
  }
}

TEST(AngleGd, ValidatesAngles) {
  AngleBatch bad{-0.1, {1.0}};
  EXPECT_EQ(code_of([&] { angle_gd(LossKind::kInfo, bad, LossParams::defaults()); }), ErrorCode::kInvalidAngle);
  AngleBatch empty{0.5, {}};
  EXPECT_EQ(code_of([&] { angle_gd(LossKind::kInfo, empty, LossParams::defaults()); }), ErrorCode::kInvalidAngle);
}

TEST(AngleRatio, MetCellMatchesOracle) {
  const LossParams p = LossParams::defaults();
  const std::size_t n = 4000;
  const double mean = cell_mean(kPi / 3, kPi / 2, n, 5, [&](const AngleBatch& a) {
    return angle_ratio(LossKind::kMet, a, p);
  });
  EXPECT_NEAR(mean, kMetRatioPi3Pi2Mean, 5 * kMetRatioPi3Pi2Sd / std::sqrt(double(n)));
}

TEST(AngleRatio, MetExactCell) {
  AngleBatch a{kPi / 2, {kPi / 2, kPi / 2}};
  EXPECT_NEAR(angle_ratio(LossKind::kMet, a, LossParams::defaults()), 1.0, 1e-15);
  AngleBatch b{kPi / 3, {kPi / 2}};
  EXPECT_NEAR(angle_ratio(LossKind::kMet, b, LossParams::defaults()), std::sqrt(2.0), 1e-14);
}

TEST(AngleRatio, ArcAtRightAngle) {
  const LossParams p = LossParams::defaults();
  const std::size_t n = 2000;
  const double mean = cell_mean(kPi / 2, kPi / 2, n, 6, [&](const AngleBatch& a) {
    return angle_ratio(LossKind::kArc, a, p);
  });
  EXPECT_NEAR(mean, std::cos(0.1), 0.01);
  EXPECT_NEAR(mean, kArcRatioPi2Mean, 5 * kArcRatioPi2Sd / std::sqrt(double(n)));
}

TEST(AngleRatio, UnsupportedKinds) {
  AngleBatch a{0.5, {1.0}};
  for (LossKind k : {LossKind::kInfo, LossKind::kMpt, LossKind::kBarlowEq}) {
    EXPECT_EQ(code_of([&] { angle_ratio(k, a, LossParams::defaults()); }), ErrorCode::kUnsupportedKind);
  }
}

TEST(HardestFraction, SingleAndTied) {
  EXPECT_EQ(hardest_fraction(AngleBatch{0.5, {1.0}}, 0.05), 1.0);
  EXPECT_NEAR(hardest_fraction(AngleBatch{0.5, {1.0, 1.0, 1.0, 1.0}}, 0.05), 0.25, 1e-15);
}

TEST(WeightCurves, MatchOracle) {
  SweepProtocol proto;
  proto.n_batches = 2000;
  proto.seed = 7;
  const std::vector<double> taus(std::begin(kCurveTaus), std::end(kCurveTaus));
  const auto curves = weight_fraction_curve(LossKind::kInfo, kPi / 6, taus, proto);
  ASSERT_EQ(curves.fraction.rows(), 6);
  ASSERT_EQ(curves.fraction.cols(), 100);
  const double n = static_cast<double>(proto.n_batches);
  for (Eigen::Index t = 0; t < 6; ++t) {
    for (Eigen::Index j = 0; j < 100; ++j) {
      const double mean = kCurveMean[t * 100 + j];
      const double sd = kCurveSd[t * 100 + j];
      EXPECT_NEAR(curves.fraction(t, j), mean, 5 * sd / std::sqrt(n) + 1e-9) << "tau " << taus[t] << " j " << j;
    }
  }
}

TEST(WeightCurves, LowerTemperatureConcentratesAtRightAngle) {
  SweepProtocol proto;
  proto.n_grid = 100;
  proto.n_batches = 200;
  const double taus[] = {0.05, 0.3};
  const auto c = weight_fraction_curve(LossKind::kInfo, kPi / 6, taus, proto);
  const auto j = static_cast<Eigen::Index>(nearest_index(c.mu_neg_axis, kPi / 2));
  EXPECT_GT(c.fraction(0, j), c.fraction(1, j));
}

TEST(WeightCurves, HardestOnlyKindsAreOne) {
  SweepProtocol proto;
  proto.n_grid = 5;
  proto.n_batches = 3;
  const double taus[] = {0.05};
  const auto c = weight_fraction_curve(LossKind::kMpt, kPi / 6, taus, proto);
  EXPECT_EQ(c.fraction.minCoeff(), 1.0);
  EXPECT_EQ(code_of([&] { weight_fraction_curve(LossKind::kBarlowEq, kPi / 6, taus, proto); }),
            ErrorCode::kUnsupportedKind);
  const double bad[] = {0.0};
  EXPECT_EQ(code_of([&] { weight_fraction_curve(LossKind::kInfo, kPi / 6, bad, proto); }),
            ErrorCode::kInvalidParams);
}

TEST(GdHeatmap, MatchesOracleCells) {
  SweepProtocol proto;
  proto.n_batches = 200;
  proto.seed = 11;
  const LossKind kinds[] = {LossKind::kInfo, LossKind::kArc, LossKind::kMpt};
  const auto grids = gd_heatmaps(kinds, proto, LossParams::defaults());
  const std::size_t rows = std::size(kGdCells) / 5;
  const double n = static_cast<double>(proto.n_batches);
  for (std::size_t r = 0; r < rows; ++r) {
    const auto i = static_cast<Eigen::Index>(kGdCells[5 * r]);
    const auto j = static_cast<Eigen::Index>(kGdCells[5 * r + 1]);
    for (std::size_t k = 0; k < 3; ++k) {
      const double p = kGdCells[5 * r + 2 + k];
      EXPECT_NEAR(grids[k].values(i, j), p, 5 * std::sqrt((p * (1 - p) + 1e-3) / n))
          << name(kinds[k]) << " cell " << i << "," << j;
    }
  }
}

TEST(GdHeatmap, DeterministicAcrossRuns) {
  SweepProtocol proto;
  proto.n_grid = 8;
  proto.n_batches = 20;
  proto.seed = 3;
  const auto a = gd_heatmap(LossKind::kArc, proto, LossParams::defaults());
  const auto b = gd_heatmap(LossKind::kArc, proto, LossParams::defaults());
  EXPECT_EQ(a.values, b.values);
  proto.seed = 4;
  EXPECT_NE(gd_heatmap(LossKind::kArc, proto, LossParams::defaults()).values, a.values);
}

TEST(GdHeatmap, RejectsBadProtocol) {
  SweepProtocol proto;
  proto.n_batches = 0;
  EXPECT_EQ(code_of([&] { gd_heatmap(LossKind::kInfo, proto, LossParams::defaults()); }),
            ErrorCode::kInvalidParams);
  proto.n_batches = 1;
  proto.sigma_pos = 0.0;
  EXPECT_EQ(code_of([&] { gd_heatmap(LossKind::kInfo, proto, LossParams::defaults()); }),
            ErrorCode::kInvalidParams);
}

TEST(RatioHeatmap, MasksUpperTriangle) {
  SweepProtocol proto;
  proto.n_grid = 10;
  proto.n_batches = 10;
  const auto g = ratio_heatmap(LossKind::kMet, proto, LossParams::defaults());
  ASSERT_EQ(g.values.rows(), 10);
  for (std::size_t i = 0; i < 10; ++i) {
    for (std::size_t j = 0; j < 10; ++j) {
      if (g.mu_pos_axis[i] >= g.mu_neg_axis[j]) EXPECT_TRUE(g.masked(i, j));
    }
  }
  EXPECT_EQ(code_of([&] { ratio_heatmap(LossKind::kInfo, proto, LossParams::defaults()); }),
            ErrorCode::kUnsupportedKind);
}

}  // namespace
}  // namespace gradlens
