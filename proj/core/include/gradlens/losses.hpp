#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "gradlens/embeddings.hpp"

namespace gradlens {

enum class LossKind {
  kInfo,
  kArc,
  kMpt,
  kMet,
  kAMhe,
  kAMhs,
  kBarlowEq,
  kVicregEq,
  kMMhe,
  kMMhs,
  kMB,
  kMV,
  kBaseline,
};

inline constexpr std::array<LossKind, 13> kAllLossKinds = {
    LossKind::kInfo,     LossKind::kArc,      LossKind::kMpt,  LossKind::kMet,
    LossKind::kAMhe,     LossKind::kAMhs,     LossKind::kBarlowEq,
    LossKind::kVicregEq, LossKind::kMMhe,     LossKind::kMMhs, LossKind::kMB,
    LossKind::kMV,       LossKind::kBaseline,
};

// Lower-case names used on the command line and in reports ("info", "m_b").
std::string_view name(LossKind kind);
std::optional<LossKind> parse_loss_kind(std::string_view text);

// A_MHE is the only loss whose value is not a sum of independent per-anchor
// terms; its gradient rows are derivatives of the batch total.
bool is_global(LossKind kind);

// The four alignment/uniformity and redundancy-reduction objectives before
// modification. Their gradient dissipation is identically 1.
bool is_unmodified_ineffective(LossKind kind);

struct LossParams {
  std::optional<double> tau;
  std::optional<double> u;
  std::optional<double> m;
  std::optional<double> nu_u;
  std::optional<double> nu_B;
  std::optional<double> nu_V1;
  std::optional<double> nu_V2;
  std::optional<double> gamma;
  std::optional<double> r;

  // tau=0.05, u=0.1, m=0.3, nu_u=1, nu_B=0.005, nu_V1=1, nu_V2=25, gamma=1, r=1.
  static LossParams defaults();

  // Throws ParamMissing if a parameter the kind reads is absent, and
  // InvalidParams if a present one is out of range. m may be negative (forces
  // dissipation) or +inf (disables it).
  void validate_for(LossKind kind) const;
};

struct LossValue {
  std::vector<double> per_anchor;
  double total = 0.0;
};

struct GradientMatrix {
  Matrix grads;
  // Per-row flag: the row sits on an indicator edge, an argmax tie, or a
  // singular point, so the gradient there is one subgradient choice.
  std::vector<std::uint8_t> boundary;

  std::size_t boundary_count() const;
  bool any_boundary() const { return boundary_count() > 0; }
};

// Stop-gradient factors are evaluated on `batch` and then held constant.
LossValue loss_value(LossKind kind, const EmbeddingBatch& batch, const LossParams& params);

// Row i is dL_i/dh_i in closed form (dL/dh_i for A_MHE).
GradientMatrix analytic_grad(LossKind kind, const EmbeddingBatch& batch, const LossParams& params);

inline constexpr double kBoundaryTolerance = 1e-9;

}  // namespace gradlens
