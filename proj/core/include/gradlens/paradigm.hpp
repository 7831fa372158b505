#pragma once

#include <cstdint>
#include <optional>

#include "gradlens/losses.hpp"

namespace gradlens {

enum class NegativeSource { kCrossView, kSameView };
enum class WeightSource { kAnchorView, kPrimedView };

struct ParadigmComponents {
  LossKind kind = LossKind::kInfo;
  std::vector<double> gd;  // per anchor
  Matrix weights;          // N x N, entry (i, j) for j != i; diagonal is 0
  Matrix ratios;           // N x N, same layout
  // BARLOW_EQ only: its ratio is the matrix N*diag(a) / (nu_B * sum_k h_i'.h_k').
  // ratios holds the scalar factor and ratio_diag the diagonal a, applied
  // elementwise to h_i' before scaling.
  std::optional<Vector> ratio_diag;
  NegativeSource negative_source = NegativeSource::kCrossView;
  WeightSource weight_source = WeightSource::kAnchorView;
  std::vector<std::uint8_t> boundary;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  double mean_rel_error = 0.0;
  std::size_t n_checked = 0;           // batches compared
  std::size_t n_rows = 0;              // anchor rows compared
  std::size_t n_boundary_skipped = 0;  // batches excluded for a boundary row
  std::size_t n_richardson = 0;        // rows re-differenced with extrapolation
  double epsilon = 0.0;
};

ParadigmComponents decompose(LossKind kind, const EmbeddingBatch& batch, const LossParams& params);

// Row i = gd_i * sum_{j != i} w_ij (neg_j - ratio_ij * h_i'). Throws
// ShapeMismatch when the components were built for another batch shape.
Matrix reconstruct(const ParadigmComponents& components, const EmbeddingBatch& batch);

// Central differences of the loss with respect to every anchor coordinate,
// stop-gradient factors frozen at `batch`, no renormalization. Per-anchor
// kinds differentiate L_i, A_MHE differentiates the total.
Matrix fd_grad(LossKind kind, const EmbeddingBatch& batch, const LossParams& params,
               double epsilon = 1e-6);

// Same, Richardson-extrapolated from steps h and h/2.
Matrix fd_grad_richardson(LossKind kind, const EmbeddingBatch& batch, const LossParams& params,
                          double h = 1e-5);

// g - (g . h_i) h_i per row.
Matrix tangent_project(const Matrix& grads, const Matrix& anchors);

struct GradCheckOptions {
  double epsilon = 1e-6;
  double richardson_step = 1e-3;
  double tolerance = 1e-5;  // rows above this are retried with extrapolation
};

// Random batches from derive_seed(seed, trial). Batches containing a boundary
// row are skipped and counted.
GradCheckReport check(LossKind kind, std::size_t n_trials, Eigen::Index n, Eigen::Index d,
                      const LossParams& params, std::uint64_t seed,
                      const GradCheckOptions& options = {});

}  // namespace gradlens
