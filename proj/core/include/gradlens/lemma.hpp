#pragma once

#include <optional>
#include <span>
#include <vector>

#include "gradlens/embeddings.hpp"

namespace gradlens {

// Anchor-positive angle, anchor-negative angle, dihedral alpha between the
// planes (O, h, h') and (O, h, h_j'), step size lambda and optional ratio r.
struct LemmaConfig {
  double theta_pos = 0.0;
  double theta_neg = 0.0;
  double alpha = 0.0;
  double lambda = 1.0;
  std::optional<double> r;

  // Throws InvalidParams on out-of-range fields.
  void validate() const;
  // lambda * sin(theta_neg) * sin(alpha) <= sin(theta_pos).
  bool feasible() const;
};

struct Satisfaction {
  bool satisfied = false;
  // Post-step minus pre-step distance to the projected positive (negative
  // means the anchor moved closer).
  double delta = 0.0;
};

struct QuadraticRoots {
  double low = 0.0;
  double high = 0.0;
};

// Lower and upper ratio bounds of the tangent-plane condition.
// Throws InfeasibleGeometry when the radicand is negative.
QuadraticRoots ratio_roots(const LemmaConfig& config);

// Smallest ratio that moves the anchor no farther from its positive.
double r_min_closed_form(const LemmaConfig& config);

// Brute-force counterpart: golden-section search for the distance minimizer in
// r, then bisection for the lower crossing on [-1e6, minimizer]. Negative
// ratios are admitted because the lower root is negative for obtuse alpha.
// Throws NoSolution when no r in that range satisfies the condition.
double r_min_oracle(const LemmaConfig& config, double tol = 1e-12);

// Evaluates the tangent-plane move for config.r (ParamMissing if absent).
Satisfaction satisfied(const LemmaConfig& config);

struct MinRatioHistogram {
  std::vector<double> bin_edges;  // bins + 1 edges
  std::vector<std::size_t> counts;
  std::vector<double> values;     // every feasible r_min, in anchor order
  std::size_t skipped = 0;        // sin(theta_pos) = 0
  std::size_t infeasible = 0;
  double lambda = 0.0;

  double fraction_above(double threshold) const;
};

// Per anchor: hardest cross-view negative, alpha measured from the components
// of h' and h_j' orthogonal to h, then r_min_closed_form.
MinRatioHistogram min_ratio_distribution(std::span<const EmbeddingBatch> batches, double lambda,
                                         std::size_t bins);

struct SphereStep {
  double tangent_delta = 0.0;  // tangent-plane model, distance change
  double sphere_delta = 0.0;   // ambient step then renormalize, angle change
  bool agree = false;          // same sign (zero counts as either)
};

// Realizes the triple in R^d (d >= 3), applies
// h_new = normalize(h + lambda (r h' - h_j')) and compares signs with the
// tangent-plane model.
SphereStep sphere_step_check(const LemmaConfig& config, Eigen::Index d);

// theta_pos, theta_neg uniform on (0, pi), alpha uniform on [0, pi], lambda
// uniform on (0, max_lambda]; redrawn until feasible.
LemmaConfig sample_feasible_config(Xoshiro256& rng, double max_lambda = 2.0);

struct LemmaSweep {
  std::size_t configs = 0;
  std::size_t mismatches = 0;  // |oracle - closed form| >= tolerance, or no oracle solution
  double max_abs_diff = 0.0;
  double tolerance = 0.0;
};

// Oracle against closed form on `configs` sampled configurations.
LemmaSweep verify_closed_form(std::size_t configs, std::uint64_t seed, double tolerance = 1e-6);

}  // namespace gradlens
