#pragma once

// Raw-matrix loss kernels shared by the losses and paradigm translation units.

#include <limits>
#include <vector>

#include "gradlens/losses.hpp"

namespace gradlens::detail {

// Factors the loss treats as constants, taken from a reference batch.
struct StopGradient {
  std::vector<double> gate;  // d_i, or GD_i for BASELINE
  std::vector<double> scale; // c_i (M_MHE, M_MHS) or w_p,i (M_B, M_V)
  Matrix pair;               // per-pair constants (w_n, softmax weights, Gram terms)
  Vector diag;               // BARLOW_EQ diagonal a
};

struct Hardest {
  Eigen::Index index = -1;
  double value = -std::numeric_limits<double>::infinity();
  bool tied = false;
};

// argmax_{j != i} sims(i, j); ties break toward the lowest index and are
// flagged when the runner-up is within kBoundaryTolerance.
Hardest hardest(const Matrix& sims, Eigen::Index i);

// Gradient dissipation gate I[p_i - max_{k != i} h_i.h_k' < m].
double indicator_gate(const Matrix& cross, Eigen::Index i, double m);
bool gate_on_edge(const Matrix& cross, Eigen::Index i, double m);

StopGradient freeze(LossKind kind, const Matrix& anchors, const Matrix& positives,
                    const LossParams& params);

// L_i for per-anchor kinds. Not defined for global kinds.
double anchor_loss(LossKind kind, const Matrix& anchors, const Matrix& positives,
                   const LossParams& params, const StopGradient& frozen, Eigen::Index i);

// Batch total: sum of L_i, or the global formula for A_MHE.
double total_loss(LossKind kind, const Matrix& anchors, const Matrix& positives,
                  const LossParams& params, const StopGradient& frozen);

// gd * sum_{j != i} w_j (neg_j - ratio_j * target), the shared paradigm sum.
Vector paradigm_row(double gd, const Eigen::Ref<const Vector>& weights,
                    const Eigen::Ref<const Vector>& ratios, const Matrix& negatives,
                    const Vector& target, Eigen::Index i);

// log(2 / (N(N-1)) * sum_{k<l} exp(-||h_k - h_l||^2 / scale)).
double log_pair_energy(const Matrix& anchors, double scale);

// sin(theta + u) / sin(theta); 1 when u = 0, denominator floored at 1e-12.
double arc_ratio(double theta, double u);

// max_{k != l} m(k, l) over off-diagonal entries.
double offdiag_max(const Matrix& m);

}  // namespace gradlens::detail
