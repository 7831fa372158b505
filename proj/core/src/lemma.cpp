#include "gradlens/lemma.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "gradlens/error.hpp"
#include "gradlens/simulator.hpp"

namespace gradlens {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kSearchBound = 1e6;

// Distance from the moved anchor to the projected positive, tangent plane
// coordinates with u_p = (1, 0) and u_n = (cos alpha, sin alpha).
double moved_distance(const LemmaConfig& c, double r) {
  const double sp = std::sin(c.theta_pos);
  const double sn = std::sin(c.theta_neg);
  const double x = c.lambda * r * sp - c.lambda * sn * std::cos(c.alpha) - sp;
  const double y = -c.lambda * sn * std::sin(c.alpha);
  return std::hypot(x, y);
}

double golden_section_min(const LemmaConfig& c, double lo, double hi, double tol) {
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo, b = hi;
  double x1 = b - inv_phi * (b - a);
  double x2 = a + inv_phi * (b - a);
  double f1 = moved_distance(c, x1);
  double f2 = moved_distance(c, x2);
  while (b - a > tol * std::max(1.0, std::abs(a) + std::abs(b))) {
    if (f1 < f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - inv_phi * (b - a);
      f1 = moved_distance(c, x1);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + inv_phi * (b - a);
      f2 = moved_distance(c, x2);
    }
  }
  return (a + b) / 2.0;
}

}  // namespace

void LemmaConfig::validate() const {
  auto open = [](double t) { return t > 0.0 && t < kPi; };
  if (!open(theta_pos) || !open(theta_neg)) {
    throw Error(ErrorCode::kInvalidParams, "lemma angles must lie in (0, pi)");
  }
  if (!(alpha >= 0.0 && alpha <= kPi)) throw Error(ErrorCode::kInvalidParams, "alpha must lie in [0, pi]");
  if (!(lambda > 0.0) || !std::isfinite(lambda)) {
    throw Error(ErrorCode::kInvalidParams, "lambda must be positive");
  }
  if (r && !std::isfinite(*r)) throw Error(ErrorCode::kInvalidParams, "r must be finite");
}

bool LemmaConfig::feasible() const {
  return lambda * std::sin(theta_neg) * std::sin(alpha) <= std::sin(theta_pos);
}

QuadraticRoots ratio_roots(const LemmaConfig& config) {
  config.validate();
  if (!config.feasible()) {
    throw Error(ErrorCode::kInfeasibleGeometry, "lambda sin(theta_neg) sin(alpha) > sin(theta_pos)");
  }
  const double sp = std::sin(config.theta_pos);
  const double sn = std::sin(config.theta_neg);
  const double c = sn * std::cos(config.alpha) / sp;
  const double s = sn * std::sin(config.alpha) / sp;
  const double inv = 1.0 / config.lambda;
  const double root = std::sqrt(std::max(0.0, inv * inv - s * s));
  // 1/lambda - root rewritten without cancellation.
  const double near = s * s / (inv + root);
  return {c + near, c + inv + root};
}

double r_min_closed_form(const LemmaConfig& config) { return ratio_roots(config).low; }

double r_min_oracle(const LemmaConfig& config, double tol) {
  config.validate();
  if (!(tol >= 1e-12 && tol <= 1e-3)) throw Error(ErrorCode::kInvalidParams, "tol must lie in [1e-12, 1e-3]");
  const double pre = std::sin(config.theta_pos);
  const auto ok = [&](double r) { return moved_distance(config, r) <= pre; };

  const double best = golden_section_min(config, -kSearchBound, kSearchBound, 1e-15);
  if (!ok(best)) throw Error(ErrorCode::kNoSolution, "no ratio in range brings the anchor closer");

  double lo = -kSearchBound;
  double hi = best;
  if (ok(lo)) return lo;
  while (hi - lo > tol) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    (ok(mid) ? hi : lo) = mid;
  }
  return hi;
}

Satisfaction satisfied(const LemmaConfig& config) {
  config.validate();
  if (!config.r) throw Error(ErrorCode::kParamMissing, "satisfied() needs a ratio r");
  const double pre = std::sin(config.theta_pos);
  const double delta = moved_distance(config, *config.r) - pre;
  return {delta <= 0.0, delta};
}

double MinRatioHistogram::fraction_above(double threshold) const {
  if (values.empty()) return 0.0;
  std::size_t above = 0;
  for (double v : values) above += v > threshold ? 1 : 0;
  return static_cast<double>(above) / static_cast<double>(values.size());
}

MinRatioHistogram min_ratio_distribution(std::span<const EmbeddingBatch> batches, double lambda,
                                         std::size_t bins) {
  if (batches.empty()) throw Error(ErrorCode::kEmptyInput, "no batches given");
  if (!(lambda > 0.0)) throw Error(ErrorCode::kInvalidParams, "lambda must be positive");
  if (bins < 1) throw Error(ErrorCode::kInvalidParams, "bins must be at least 1");

  MinRatioHistogram out;
  out.lambda = lambda;
  for (const auto& batch : batches) {
    const Matrix sims = batch.anchors() * batch.positives().transpose();
    for (Eigen::Index i = 0; i < batch.size(); ++i) {
      Eigen::Index j_star = -1;
      for (Eigen::Index j = 0; j < batch.size(); ++j) {
        if (j != i && (j_star < 0 || sims(i, j) > sims(i, j_star))) j_star = j;
      }
      const Vector h = batch.anchors().row(i).transpose();
      const Vector pos_perp = batch.positives().row(i).transpose() - sims(i, i) * h;
      const Vector neg_perp = batch.positives().row(j_star).transpose() - sims(i, j_star) * h;
      const double sp = std::sin(clamped_acos(sims(i, i)));
      if (sp == 0.0 || pos_perp.norm() < 1e-12) {
        ++out.skipped;
        continue;
      }
      LemmaConfig config;
      config.theta_pos = clamped_acos(sims(i, i));
      config.theta_neg = clamped_acos(sims(i, j_star));
      config.lambda = lambda;
      config.alpha = neg_perp.norm() < 1e-12
                         ? 0.0
                         : clamped_acos(pos_perp.dot(neg_perp) / (pos_perp.norm() * neg_perp.norm()));
      if (!(config.theta_neg > 0.0 && config.theta_neg < kPi)) {
        // Negative collinear with the anchor: no sideways pull, ratio bound is 0.
        out.values.push_back(0.0);
        continue;
      }
      if (!config.feasible()) {
        ++out.infeasible;
        continue;
      }
      out.values.push_back(r_min_closed_form(config));
    }
  }

  out.counts.assign(bins, 0);
  if (out.values.empty()) {
    out.bin_edges = linspace(0.0, 1.0, bins + 1);
    return out;
  }
  const auto [lo_it, hi_it] = std::minmax_element(out.values.begin(), out.values.end());
  double lo = *lo_it, hi = *hi_it;
  if (hi <= lo) hi = lo + 1.0;
  out.bin_edges = linspace(lo, hi, bins + 1);
  for (double v : out.values) {
    auto b = static_cast<std::size_t>((v - lo) / (hi - lo) * static_cast<double>(bins));
    ++out.counts[std::min(b, bins - 1)];
  }
  return out;
}

SphereStep sphere_step_check(const LemmaConfig& config, Eigen::Index d) {
  config.validate();
  if (d < 3) throw Error(ErrorCode::kInvalidShape, "sphere_step_check needs d >= 3");
  if (!config.r) throw Error(ErrorCode::kParamMissing, "sphere_step_check needs a ratio r");
  const double r = *config.r;

  Vector h = Vector::Unit(d, 0);
  Vector hp = Vector::Zero(d);
  hp(0) = std::cos(config.theta_pos);
  hp(1) = std::sin(config.theta_pos);
  Vector hn = Vector::Zero(d);
  hn(0) = std::cos(config.theta_neg);
  hn(1) = std::sin(config.theta_neg) * std::cos(config.alpha);
  hn(2) = std::sin(config.theta_neg) * std::sin(config.alpha);

  const Vector moved = normalize(h + config.lambda * (r * hp - hn)).coords();
  SphereStep out;
  out.sphere_delta = clamped_acos(moved.dot(hp)) - config.theta_pos;
  out.tangent_delta = satisfied(config).delta;
  out.agree = out.sphere_delta == 0.0 || out.tangent_delta == 0.0 ||
              (out.sphere_delta < 0.0) == (out.tangent_delta < 0.0);
  return out;
}


LemmaConfig sample_feasible_config(Xoshiro256& rng, double max_lambda) {
  if (!(max_lambda > 0.0)) throw Error(ErrorCode::kInvalidParams, "max_lambda must be positive");
  auto open_angle = [&] {
    double t = 0.0;
    while (t <= 0.0 || t >= kPi) t = kPi * rng.uniform();
    return t;
  };
  while (true) {
    LemmaConfig c;
    c.theta_pos = open_angle();
    c.theta_neg = open_angle();
    c.alpha = kPi * rng.uniform();
    c.lambda = max_lambda * (1.0 - rng.uniform());
    if (c.feasible()) return c;
  }
}

LemmaSweep verify_closed_form(std::size_t configs, std::uint64_t seed, double tolerance) {
  if (configs < 1) throw Error(ErrorCode::kInvalidParams, "configs must be at least 1");
  Xoshiro256 rng(seed);
  LemmaSweep out;
  out.configs = configs;
  out.tolerance = tolerance;
  for (std::size_t k = 0; k < configs; ++k) {
    const LemmaConfig c = sample_feasible_config(rng);
    try {
      const double diff = std::abs(r_min_oracle(c) - r_min_closed_form(c));
      out.max_abs_diff = std::max(out.max_abs_diff, diff);
      if (!(diff < tolerance)) ++out.mismatches;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kNoSolution) throw;
      ++out.mismatches;
    }
  }
  return out;
}

}  // namespace gradlens
