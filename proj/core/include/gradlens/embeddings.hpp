#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "gradlens/rng.hpp"

namespace gradlens {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

inline constexpr double kUnitTolerance = 1e-12;

class UnitVector {
 public:
  // Throws InvalidShape unless coords has D >= 2 entries and unit norm.
  explicit UnitVector(Vector coords);

  const Vector& coords() const { return coords_; }
  Eigen::Index dim() const { return coords_.size(); }

 private:
  Vector coords_;
};

// Throws ZeroVector when ||v|| < 1e-300.
UnitVector normalize(const Vector& v);

// Row-wise normalization of a raw matrix; same error rule as normalize.
Matrix normalize_rows(const Matrix& m);

class EmbeddingBatch {
 public:
  // Validates shape (N >= 2, D >= 2, equal shapes) and unit-norm rows.
  EmbeddingBatch(Matrix anchors, Matrix positives);

  const Matrix& anchors() const { return anchors_; }
  const Matrix& positives() const { return positives_; }
  Eigen::Index size() const { return anchors_.rows(); }
  Eigen::Index dim() const { return anchors_.cols(); }

 private:
  Matrix anchors_;
  Matrix positives_;
};

struct AngleBatch {
  double theta_pos = 0.0;
  std::vector<double> theta_neg;

  // Throws InvalidAngle on out-of-range entries or an empty negative list.
  void validate() const;
};

struct DistributionSpec {
  double mu_pos = 0.0;
  double sigma_pos = 0.05;
  double mu_neg = 0.0;
  double sigma_neg = 0.10;

  // Throws InvalidParams. With wide_range=false the means must lie in the
  // sweep ranges [pi/20, pi/2] and [pi/20, pi].
  void validate(bool wide_range = false) const;
};

struct SpaceStats {
  double mu_pos_hat = 0.0;
  double mu_neg_hat = 0.0;
  double sigma_pos_hat = 0.0;
  double sigma_neg_hat = 0.0;
  double mean_pos_cos = 0.0;
  double hardest_weight_fraction = 0.0;
};

// Rows are i.i.d. standard normals, normalized. Anchors are filled row-major
// first, then positives, from one stream seeded with `seed`.
EmbeddingBatch random_batch(Eigen::Index n, Eigen::Index d, std::uint64_t seed);

// Anchor is e_1. The positive and each negative sit at their prescribed angle
// with a uniformly random direction in the complement of e_1. Row 0 of the
// result is the anchor/positive pair; rows k >= 1 hold negative k-1 in both
// views, so same-view and cross-view negatives coincide.
EmbeddingBatch batch_from_angles(const AngleBatch& angles, Eigen::Index d, std::uint64_t seed);

AngleBatch angles_from_batch(const EmbeddingBatch& batch, Eigen::Index anchor_index,
                             bool cross_view);

// Draws theta_pos ~ N(mu_pos, sigma_pos^2) and n_neg negatives from
// N(mu_neg, sigma_neg^2), each folded into [0, pi] by reflection.
AngleBatch sample_angles(const DistributionSpec& spec, std::size_t n_neg, NormalSampler& normal);

// Reflects x into [0, pi] (x -> -x below 0, x -> 2pi - x above pi, repeated).
double fold_angle(double x);

// Pooled statistics of positive and cross-view negative angles. Standard
// deviations use the n-1 denominator (0 for a single sample).
SpaceStats space_stats(std::span<const EmbeddingBatch> batches, double tau);

inline double clamped_acos(double c) { return std::acos(std::clamp(c, -1.0, 1.0)); }

}  // namespace gradlens
