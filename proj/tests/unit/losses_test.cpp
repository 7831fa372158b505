#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numbers>

#include "gradlens/error.hpp"
#include "gradlens/losses.hpp"
#include "gradlens/paradigm.hpp"

namespace gradlens {
namespace {

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

Matrix m2(double a, double b, double c, double d) {
  Matrix m(2, 2);
  m << a, b, c, d;
  return m;
}

// h_1 = h_1' = (1, 0), h_2 = h_2' = (0, 1).
EmbeddingBatch b2() { return {m2(1, 0, 0, 1), m2(1, 0, 0, 1)}; }

// h_1 = (1, 0), h_1' = (0.8, 0.6), h_2' = (0.6, 0.8).
EmbeddingBatch margin_batch() { return {m2(1, 0, 0, 1), m2(0.8, 0.6, 0.6, 0.8)}; }

LossParams with_tau(double tau) {
  LossParams p = LossParams::defaults();
  p.tau = tau;
  return p;
}

TEST(Losses, InfoValueOnTwoPointBatch) {
  const LossValue v = loss_value(LossKind::kInfo, b2(), with_tau(1.0));
  EXPECT_NEAR(v.per_anchor[0], std::log1p(std::exp(-1.0)), 1e-14);
  EXPECT_NEAR(v.per_anchor[0], 0.31326, 1e-5);
  EXPECT_NEAR(v.total, v.per_anchor[0] + v.per_anchor[1], 1e-15);
}

TEST(Losses, InfoGradientOnTwoPointBatch) {
  const GradientMatrix g = analytic_grad(LossKind::kInfo, b2(), with_tau(1.0));
  const double w = 1.0 / (std::numbers::e + 1.0);
  EXPECT_NEAR(g.grads(0, 0), -w, 1e-15);
  EXPECT_NEAR(g.grads(0, 1), w, 1e-15);
  EXPECT_NEAR(w, 0.2689, 1e-4);
  EXPECT_FALSE(g.any_boundary());
}

TEST(Losses, MarginGradientInsideMargin) {
  LossParams p = LossParams::defaults();
  p.m = 0.3;
  const GradientMatrix g = analytic_grad(LossKind::kMpt, margin_batch(), p);
  EXPECT_NEAR(g.grads(0, 0), -0.2, 1e-15);
  EXPECT_NEAR(g.grads(0, 1), 0.2, 1e-15);
  const LossValue v = loss_value(LossKind::kMpt, margin_batch(), p);
  EXPECT_NEAR(v.per_anchor[0], 0.1, 1e-15);
}

TEST(Losses, MarginGradientVanishesOutsideMargin) {
  LossParams p = LossParams::defaults();
  p.m = 0.1;
  const GradientMatrix g = analytic_grad(LossKind::kMpt, margin_batch(), p);
  EXPECT_EQ(g.grads.row(0).norm(), 0.0);
  EXPECT_EQ(loss_value(LossKind::kMpt, margin_batch(), p).per_anchor[0], 0.0);
}

TEST(Losses, BoundaryFlags) {
  LossParams p = LossParams::defaults();
  p.m = 0.2;  // gap is exactly 0.2
  const GradientMatrix edge = analytic_grad(LossKind::kMpt, margin_batch(), p);
  EXPECT_TRUE(edge.boundary[0]);

  // Two cross-view negatives tied for hardest.
  Matrix a(3, 3), q(3, 3);
  a << 1, 0, 0, 0, 1, 0, 0, 0, 1;
  const double c = std::sqrt(0.5);
  q << 0.8, 0.6, 0, c, c, 0, c, 0, c;
  const GradientMatrix tie = analytic_grad(LossKind::kMet, EmbeddingBatch(a, q), LossParams::defaults());
  EXPECT_TRUE(tie.boundary[0]);

  // Anchor equal to its positive: MET distance is singular once the hinge is active.
  LossParams wide = LossParams::defaults();
  wide.m = 2.0;
  EXPECT_TRUE(analytic_grad(LossKind::kMet, b2(), wide).boundary[0]);
  EXPECT_FALSE(analytic_grad(LossKind::kMet, b2(), LossParams::defaults()).boundary[0]);
}

TEST(Losses, NegativeMarginClosesBaselineGate) {
  LossParams p = LossParams::defaults();
  p.m = -1.0;
  const EmbeddingBatch batch = random_batch(8, 16, 3);
  const Matrix sims = batch.anchors() * batch.positives().transpose();
  for (Eigen::Index i = 0; i < 8; ++i) {
    double top = -1.0;
    for (Eigen::Index j = 0; j < 8; ++j) {
      if (j != i) top = std::max(top, sims(i, j));
    }
    ASSERT_GE(sims(i, i) - top, -1.0) << "batch would open the gate";
  }
  EXPECT_EQ(analytic_grad(LossKind::kBaseline, batch, p).grads.norm(), 0.0);
  for (double g : decompose(LossKind::kBaseline, batch, p).gd) EXPECT_EQ(g, 0.0);
}

TEST(Losses, InfiniteMarginOpensGate) {
  LossParams p = LossParams::defaults();
  p.m = std::numeric_limits<double>::infinity();
  const EmbeddingBatch batch = random_batch(8, 16, 4);
  for (LossKind k : {LossKind::kBaseline, LossKind::kMB, LossKind::kMV, LossKind::kMMhe}) {
    for (double g : decompose(k, batch, p).gd) EXPECT_EQ(g, 1.0) << name(k);
  }
}

TEST(Losses, ParameterValidation) {
  LossParams empty;
  EXPECT_EQ(code_of([&] { empty.validate_for(LossKind::kInfo); }), ErrorCode::kParamMissing);
  EXPECT_EQ(code_of([&] { loss_value(LossKind::kInfo, b2(), empty); }), ErrorCode::kParamMissing);
  EXPECT_EQ(code_of([] { with_tau(0.0).validate_for(LossKind::kInfo); }), ErrorCode::kInvalidParams);
  LossParams p = LossParams::defaults();
  p.u = 2.0;
  EXPECT_EQ(code_of([&] { p.validate_for(LossKind::kArc); }), ErrorCode::kInvalidParams);
  p = LossParams::defaults();
  p.m = -0.5;
  EXPECT_NO_THROW(p.validate_for(LossKind::kMpt));
  p.m = std::numeric_limits<double>::quiet_NaN();
  EXPECT_EQ(code_of([&] { p.validate_for(LossKind::kMpt); }), ErrorCode::kInvalidParams);
  p = LossParams::defaults();
  p.nu_B = -1.0;
  EXPECT_EQ(code_of([&] { p.validate_for(LossKind::kBarlowEq); }), ErrorCode::kInvalidParams);
  p = LossParams::defaults();
  p.r.reset();
  EXPECT_EQ(code_of([&] { p.validate_for(LossKind::kBaseline); }), ErrorCode::kParamMissing);
  for (LossKind k : kAllLossKinds) EXPECT_NO_THROW(LossParams::defaults().validate_for(k)) << name(k);
}

TEST(Losses, KindNamesRoundTrip) {
  for (LossKind k : kAllLossKinds) {
    const auto parsed = parse_loss_kind(name(k));
    ASSERT_TRUE(parsed.has_value());
    EXPECT_EQ(*parsed, k);
  }
  EXPECT_EQ(parse_loss_kind("InFo"), LossKind::kInfo);
  EXPECT_FALSE(parse_loss_kind("nosuch").has_value());
}

TEST(Losses, Classification) {
  int global = 0, ineffective = 0;
  for (LossKind k : kAllLossKinds) {
    global += is_global(k) ? 1 : 0;
    ineffective += is_unmodified_ineffective(k) ? 1 : 0;
  }
  EXPECT_EQ(global, 1);
  EXPECT_TRUE(is_global(LossKind::kAMhe));
  EXPECT_EQ(ineffective, 4);
  EXPECT_TRUE(is_unmodified_ineffective(LossKind::kVicregEq));
  EXPECT_FALSE(is_unmodified_ineffective(LossKind::kMV));
}

TEST(Losses, ValuesAreFiniteOnRandomBatches) {
  for (LossKind k : kAllLossKinds) {
    for (std::uint64_t s = 0; s < 5; ++s) {
      const LossValue v = loss_value(k, random_batch(8, 16, s), LossParams::defaults());
      EXPECT_TRUE(std::isfinite(v.total)) << name(k);
      if (!is_global(k)) {
        double sum = 0.0;
        for (double x : v.per_anchor) sum += x;
        EXPECT_NEAR(sum, v.total, 1e-12 * std::max(1.0, std::abs(sum))) << name(k);
      }
    }
  }
}

TEST(Losses, HigherTemperatureSpreadsWeight) {
  // Larger temperature spreads weight more evenly: the hardest negative's
  // share of the gradient mass decreases.
  const EmbeddingBatch batch = random_batch(8, 16, 21);
  const ParadigmComponents cold = decompose(LossKind::kInfo, batch, with_tau(0.05));
  const ParadigmComponents warm = decompose(LossKind::kInfo, batch, with_tau(1.0));
  for (Eigen::Index i = 0; i < 8; ++i) {
    EXPECT_GT(cold.weights.row(i).maxCoeff() / cold.weights.row(i).sum(),
              warm.weights.row(i).maxCoeff() / warm.weights.row(i).sum());
  }
}

}  // namespace
}  // namespace gradlens
