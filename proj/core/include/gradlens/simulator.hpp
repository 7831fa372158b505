#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "gradlens/embeddings.hpp"
#include "gradlens/losses.hpp"

namespace gradlens {

struct SweepProtocol {
  std::size_t n_grid = 100;
  std::size_t n_batches = 1000;
  std::size_t n_negatives = 127;
  double sigma_pos = 0.05;
  double sigma_neg = 0.10;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SweepGrid {
  std::vector<double> mu_pos_axis;
  std::vector<double> mu_neg_axis;
  Matrix values;                   // |mu_pos_axis| x |mu_neg_axis|
  std::vector<std::uint8_t> mask;  // row-major, same shape as values

  bool masked(std::size_t i, std::size_t j) const { return mask[i * mu_neg_axis.size() + j] != 0; }
};

struct WeightCurves {
  double mu_pos = 0.0;
  std::vector<double> mu_neg_axis;
  std::vector<double> taus;
  Matrix fraction;  // |taus| x |mu_neg_axis|
};

// n evenly spaced points from lo to hi inclusive.
std::vector<double> linspace(double lo, double hi, std::size_t n);
std::vector<double> mu_pos_axis(std::size_t n_grid);  // [pi/20, pi/2]
std::vector<double> mu_neg_axis(std::size_t n_grid);  // [pi/20, pi]
std::size_t nearest_index(std::span<const double> axis, double value);

// Gradient dissipation of one anchor expressed in angles. The unmodified
// ineffective losses return exactly 1.
double angle_gd(LossKind kind, const AngleBatch& angles, const LossParams& params);

// Dynamic ratio: ARC sin(theta+u)/sin(theta), MET at the hardest negative.
// Throws UnsupportedKind for other kinds.
double angle_ratio(LossKind kind, const AngleBatch& angles, const LossParams& params);

// Share of the exponential weight held by the hardest negative:
// 1 / sum_k exp((cos theta_k - cos theta_min) / tau).
double hardest_fraction(const AngleBatch& angles, double tau);

SweepGrid gd_heatmap(LossKind kind, const SweepProtocol& protocol, const LossParams& params);

// Several kinds evaluated on one shared angle pool per cell.
std::vector<SweepGrid> gd_heatmaps(std::span<const LossKind> kinds, const SweepProtocol& protocol,
                                   const LossParams& params);

// One curve per tau over the mu_neg axis. Exponential-weight kinds (INFO, ARC,
// BASELINE) are sampled; hardest-only kinds (MPT, MET, A_MHS, M_MHS) give 1.
WeightCurves weight_fraction_curve(LossKind kind, double mu_pos, std::span<const double> taus,
                                   const SweepProtocol& protocol);

// Mask marks mu_pos >= mu_neg and cells whose mean gd for `kind` is below 0.01.
SweepGrid ratio_heatmap(LossKind kind, const SweepProtocol& protocol, const LossParams& params);

}  // namespace gradlens
