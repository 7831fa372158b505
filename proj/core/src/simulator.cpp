#include "gradlens/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>

#include "gradlens/error.hpp"
#include "gradlens/parallel.hpp"

namespace gradlens {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kMaskThreshold = 0.01;

double chord(double cosine) { return std::sqrt(std::max(0.0, 2.0 - 2.0 * cosine)); }

// Cosines of one sampled anchor, shared by every observable in a cell.
struct CosineView {
  double theta_pos = 0.0;
  double cos_pos = 0.0;
  std::vector<double> cos_neg;
  double max_cos = 0.0;

  void assign(const AngleBatch& angles) {
    theta_pos = angles.theta_pos;
    cos_pos = std::cos(theta_pos);
    cos_neg.resize(angles.theta_neg.size());
    max_cos = -1.0;
    for (std::size_t k = 0; k < cos_neg.size(); ++k) {
      cos_neg[k] = std::cos(angles.theta_neg[k]);
      max_cos = std::max(max_cos, cos_neg[k]);
    }
  }

  // sum_k exp((c_k - max_cos) / tau)
  double shifted_mass(double tau) const {
    double acc = 0.0;
    for (double c : cos_neg) acc += std::exp((c - max_cos) / tau);
    return acc;
  }
};

// Memoizes shifted_mass per tau for the current anchor.
class MassCache {
 public:
  void reset(const CosineView* view) {
    view_ = view;
    entries_.clear();
  }
  double get(double tau) {
    for (const auto& [t, mass] : entries_) {
      if (t == tau) return mass;
    }
    entries_.emplace_back(tau, view_->shifted_mass(tau));
    return entries_.back().second;
  }

 private:
  const CosineView* view_ = nullptr;
  std::vector<std::pair<double, double>> entries_;
};

double fraction_gd(double top, const CosineView& v, double tau, MassCache& cache) {
  const double x = (top - v.max_cos) / tau - std::log(cache.get(tau));
  return 1.0 / (1.0 + std::exp(x));
}

double gd_of(LossKind kind, const CosineView& v, const LossParams& params, MassCache& cache) {
  switch (kind) {
    case LossKind::kInfo:
      return fraction_gd(v.cos_pos, v, *params.tau, cache);
    case LossKind::kArc:
      return fraction_gd(std::cos(v.theta_pos + *params.u), v, *params.tau, cache);
    case LossKind::kMet:
      return chord(v.max_cos) - chord(v.cos_pos) < *params.m ? 1.0 : 0.0;
    case LossKind::kMpt:
    case LossKind::kMMhe:
    case LossKind::kMMhs:
    case LossKind::kMB:
    case LossKind::kMV:
    case LossKind::kBaseline:
      return v.cos_pos - v.max_cos < *params.m ? 1.0 : 0.0;
    case LossKind::kAMhe:
    case LossKind::kAMhs:
    case LossKind::kBarlowEq:
    case LossKind::kVicregEq:
      return 1.0;
  }
  return 1.0;
}

double ratio_of(LossKind kind, const CosineView& v, const LossParams& params) {
  switch (kind) {
    case LossKind::kArc:
      return std::sin(v.theta_pos + *params.u) / std::sin(v.theta_pos);
    case LossKind::kMet:
      return std::sqrt((1.0 - v.max_cos) / (1.0 - v.cos_pos));
    default:
      throw Error(ErrorCode::kUnsupportedKind,
                  std::string(name(kind)) + " has no dynamic ratio (ARC and MET only)");
  }
}

enum class WeightForm { kExponential, kHardestOnly };

WeightForm weight_form(LossKind kind) {
  switch (kind) {
    case LossKind::kInfo:
    case LossKind::kArc:
    case LossKind::kBaseline:
      return WeightForm::kExponential;
    case LossKind::kMpt:
    case LossKind::kMet:
    case LossKind::kAMhs:
    case LossKind::kMMhs:
      return WeightForm::kHardestOnly;
    default:
      throw Error(ErrorCode::kUnsupportedKind,
                  std::string(name(kind)) + " weights are not a function of anchor angles alone");
  }
}

// Streams n_batches sampled anchors of one cell into `visit`. The PRNG stream
// depends only on (seed, cell), so results do not depend on scheduling.
void sample_cell(const SweepProtocol& protocol, const DistributionSpec& spec, std::uint64_t cell,
                 const std::function<void(const CosineView&)>& visit) {
  NormalSampler normal(derive_seed(protocol.seed, cell));
  AngleBatch angles;
  CosineView view;
  for (std::size_t b = 0; b < protocol.n_batches; ++b) {
    angles = sample_angles(spec, protocol.n_negatives, normal);
    view.assign(angles);
    visit(view);
  }
}

struct CellMeans {
  std::vector<double> gd;     // one per requested kind
  double ratio = 0.0;
};

// Runs every cell of the grid, accumulating mean gd for `kinds` and, when
// ratio_kind is set, the mean dynamic ratio.
std::vector<CellMeans> run_grid(std::span<const LossKind> kinds, const LossKind* ratio_kind,
                                const SweepProtocol& protocol, const LossParams& params,
                                const std::vector<double>& pos_axis,
                                const std::vector<double>& neg_axis) {
  const std::size_t cells = pos_axis.size() * neg_axis.size();
  std::vector<CellMeans> out(cells);
  parallel_for(cells, [&](std::size_t cell) {
    DistributionSpec spec;
    spec.mu_pos = pos_axis[cell / neg_axis.size()];
    spec.mu_neg = neg_axis[cell % neg_axis.size()];
    spec.sigma_pos = protocol.sigma_pos;
    spec.sigma_neg = protocol.sigma_neg;
    CellMeans& means = out[cell];
    means.gd.assign(kinds.size(), 0.0);
    MassCache cache;
    sample_cell(protocol, spec, cell, [&](const CosineView& v) {
      cache.reset(&v);
      for (std::size_t k = 0; k < kinds.size(); ++k) means.gd[k] += gd_of(kinds[k], v, params, cache);
      if (ratio_kind) means.ratio += ratio_of(*ratio_kind, v, params);
    });
    const auto n = static_cast<double>(protocol.n_batches);
    for (double& g : means.gd) g /= n;
    means.ratio /= n;
  });
  return out;
}

SweepGrid empty_grid(const SweepProtocol& protocol) {
  SweepGrid grid;
  grid.mu_pos_axis = mu_pos_axis(protocol.n_grid);
  grid.mu_neg_axis = mu_neg_axis(protocol.n_grid);
  grid.values = Matrix::Zero(static_cast<Eigen::Index>(grid.mu_pos_axis.size()),
                             static_cast<Eigen::Index>(grid.mu_neg_axis.size()));
  grid.mask.assign(grid.mu_pos_axis.size() * grid.mu_neg_axis.size(), 0);
  return grid;
}

void require_params(LossKind kind, const LossParams& params) {
  if (is_unmodified_ineffective(kind)) return;
  params.validate_for(kind);
}

}  // namespace

void SweepProtocol::validate() const {
  if (n_grid < 1 || n_batches < 1 || n_negatives < 1) {
    throw Error(ErrorCode::kInvalidParams, "protocol counts must be at least 1");
  }
  if (!(sigma_pos > 0.0) || !(sigma_neg > 0.0)) {
    throw Error(ErrorCode::kInvalidParams, "protocol sigmas must be positive");
  }
}

std::vector<double> linspace(double lo, double hi, std::size_t n) {
  std::vector<double> out(n);
  if (n == 1) {
    out[0] = lo;
    return out;
  }
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
  }
  out[n - 1] = hi;
  return out;
}

std::vector<double> mu_pos_axis(std::size_t n_grid) { return linspace(kPi / 20.0, kPi / 2.0, n_grid); }
std::vector<double> mu_neg_axis(std::size_t n_grid) { return linspace(kPi / 20.0, kPi, n_grid); }

std::size_t nearest_index(std::span<const double> axis, double value) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < axis.size(); ++i) {
    if (std::abs(axis[i] - value) < std::abs(axis[best] - value)) best = i;
  }
  return best;
}

double angle_gd(LossKind kind, const AngleBatch& angles, const LossParams& params) {
  angles.validate();
  require_params(kind, params);
  CosineView view;
  view.assign(angles);
  MassCache cache;
  cache.reset(&view);
  return gd_of(kind, view, params, cache);
}

double angle_ratio(LossKind kind, const AngleBatch& angles, const LossParams& params) {
  angles.validate();
  params.validate_for(kind);
  CosineView view;
  view.assign(angles);
  return ratio_of(kind, view, params);
}

double hardest_fraction(const AngleBatch& angles, double tau) {
  angles.validate();
  CosineView view;
  view.assign(angles);
  return 1.0 / view.shifted_mass(tau);
}

std::vector<SweepGrid> gd_heatmaps(std::span<const LossKind> kinds, const SweepProtocol& protocol,
                                   const LossParams& params) {
  protocol.validate();
  for (LossKind k : kinds) require_params(k, params);
  SweepGrid proto = empty_grid(protocol);
  const auto means = run_grid(kinds, nullptr, protocol, params, proto.mu_pos_axis, proto.mu_neg_axis);
  std::vector<SweepGrid> grids(kinds.size(), proto);
  const std::size_t cols = proto.mu_neg_axis.size();
  for (std::size_t cell = 0; cell < means.size(); ++cell) {
    for (std::size_t k = 0; k < kinds.size(); ++k) {
      grids[k].values(static_cast<Eigen::Index>(cell / cols), static_cast<Eigen::Index>(cell % cols)) =
          means[cell].gd[k];
    }
  }
  return grids;
}

SweepGrid gd_heatmap(LossKind kind, const SweepProtocol& protocol, const LossParams& params) {
  const LossKind kinds[] = {kind};
  return std::move(gd_heatmaps(kinds, protocol, params).front());
}

WeightCurves weight_fraction_curve(LossKind kind, double mu_pos, std::span<const double> taus,
                                   const SweepProtocol& protocol) {
  protocol.validate();
  for (double tau : taus) {
    if (!(tau > 0.0)) throw Error(ErrorCode::kInvalidParams, "tau must be positive");
  }
  WeightCurves out;
  out.mu_pos = mu_pos;
  out.mu_neg_axis = mu_neg_axis(protocol.n_grid);
  out.taus.assign(taus.begin(), taus.end());
  const auto n_tau = static_cast<Eigen::Index>(taus.size());
  const auto n_neg = static_cast<Eigen::Index>(out.mu_neg_axis.size());
  out.fraction = Matrix::Ones(n_tau, n_neg);
  if (weight_form(kind) == WeightForm::kHardestOnly) return out;

  parallel_for(out.mu_neg_axis.size(), [&](std::size_t j) {
    DistributionSpec spec;
    spec.mu_pos = mu_pos;
    spec.mu_neg = out.mu_neg_axis[j];
    spec.sigma_pos = protocol.sigma_pos;
    spec.sigma_neg = protocol.sigma_neg;
    std::vector<double> sums(taus.size(), 0.0);
    sample_cell(protocol, spec, j, [&](const CosineView& v) {
      for (std::size_t t = 0; t < taus.size(); ++t) sums[t] += 1.0 / v.shifted_mass(taus[t]);
    });
    for (std::size_t t = 0; t < taus.size(); ++t) {
      out.fraction(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(j)) =
          sums[t] / static_cast<double>(protocol.n_batches);
    }
  });
  return out;
}

SweepGrid ratio_heatmap(LossKind kind, const SweepProtocol& protocol, const LossParams& params) {
  protocol.validate();
  if (kind != LossKind::kArc && kind != LossKind::kMet) {
    throw Error(ErrorCode::kUnsupportedKind, std::string(name(kind)) + " has no dynamic ratio");
  }
  params.validate_for(kind);
  SweepGrid grid = empty_grid(protocol);
  const LossKind kinds[] = {kind};
  const auto means = run_grid(kinds, &kind, protocol, params, grid.mu_pos_axis, grid.mu_neg_axis);
  const std::size_t cols = grid.mu_neg_axis.size();
  for (std::size_t cell = 0; cell < means.size(); ++cell) {
    const std::size_t i = cell / cols;
    const std::size_t j = cell % cols;
    grid.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = means[cell].ratio;
    const bool above = grid.mu_pos_axis[i] >= grid.mu_neg_axis[j];
    grid.mask[cell] = above || means[cell].gd[0] < kMaskThreshold ? 1 : 0;
  }
  return grid;
}

}  // namespace gradlens
