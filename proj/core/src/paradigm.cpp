#include "gradlens/paradigm.hpp"

#include <algorithm>
#include <cmath>

#include "gradlens/error.hpp"
#include "gradlens/parallel.hpp"
#include "kernels.hpp"

namespace gradlens {

namespace {

double chord(double cosine) { return std::sqrt(std::max(0.0, 2.0 - 2.0 * cosine)); }

// Table form of the exponential weights shared by INFO and ARC: the shifted
// negative mass and the weights e^{c_ij/tau} / (tau * sum_{k != i} e^{c_ik/tau}).
struct SoftNegatives {
  double shift;
  double mass;  // sum_{k != i} e^{(c_ik - shift)/tau}
};

SoftNegatives soft_negatives(const Matrix& cross, Eigen::Index i, double tau, Matrix& weights) {
  SoftNegatives s{detail::hardest(cross, i).value, 0.0};
  for (Eigen::Index j = 0; j < cross.cols(); ++j) {
    if (j != i) s.mass += std::exp((cross(i, j) - s.shift) / tau);
  }
  for (Eigen::Index j = 0; j < cross.cols(); ++j) {
    if (j != i) weights(i, j) = std::exp((cross(i, j) - s.shift) / tau) / (tau * s.mass);
  }
  return s;
}

// 1 / (1 + e^{top/tau} / sum_{k != i} e^{c_ik/tau}) from the shifted mass.
double fraction_gd(double top, const SoftNegatives& s, double tau) {
  const double x = (top - s.shift) / tau - std::log(s.mass);
  return 1.0 / (1.0 + std::exp(x));
}

template <typename Fn>
Matrix differentiate(LossKind kind, const EmbeddingBatch& batch, const LossParams& params,
                     double step, Fn&& evaluate) {
  params.validate_for(kind);
  const Matrix& positives = batch.positives();
  const detail::StopGradient frozen = detail::freeze(kind, batch.anchors(), positives, params);
  Matrix probe = batch.anchors();
  Matrix out(batch.size(), batch.dim());
  for (Eigen::Index i = 0; i < batch.size(); ++i) {
    for (Eigen::Index k = 0; k < batch.dim(); ++k) {
      const double saved = probe(i, k);
      probe(i, k) = saved + step;
      const double up = evaluate(probe, positives, frozen, i);
      probe(i, k) = saved - step;
      const double down = evaluate(probe, positives, frozen, i);
      probe(i, k) = saved;
      out(i, k) = (up - down) / (2.0 * step);
    }
  }
  return out;
}

Matrix central_difference(LossKind kind, const EmbeddingBatch& batch, const LossParams& params,
                          double step) {
  return differentiate(kind, batch, params, step,
                       [&](const Matrix& h, const Matrix& hp, const detail::StopGradient& frozen,
                           Eigen::Index i) {
                         if (is_global(kind)) return detail::total_loss(kind, h, hp, params, frozen);
                         return detail::anchor_loss(kind, h, hp, params, frozen, i);
                       });
}

}  // namespace

ParadigmComponents decompose(LossKind kind, const EmbeddingBatch& batch, const LossParams& params) {
  params.validate_for(kind);
  const Matrix& h = batch.anchors();
  const Matrix& hp = batch.positives();
  const Eigen::Index n = batch.size();
  const auto nd = static_cast<double>(n);
  const Matrix cross = h * hp.transpose();
  const Matrix same = h * h.transpose();

  ParadigmComponents out;
  out.kind = kind;
  out.gd.assign(static_cast<std::size_t>(n), 1.0);
  out.weights = Matrix::Zero(n, n);
  out.ratios = Matrix::Zero(n, n);
  out.boundary.assign(static_cast<std::size_t>(n), 0);
  auto gd = [&](Eigen::Index i) -> double& { return out.gd[static_cast<std::size_t>(i)]; };
  auto flag = [&](Eigen::Index i) { out.boundary[static_cast<std::size_t>(i)] = 1; };
  auto fill_ratio = [&](Eigen::Index i, double value) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j != i) out.ratios(i, j) = value;
    }
  };
  auto gate = [&](Eigen::Index i) {
    if (detail::gate_on_edge(cross, i, *params.m)) flag(i);
    gd(i) = detail::indicator_gate(cross, i, *params.m);
  };

  switch (kind) {
    case LossKind::kInfo:
    case LossKind::kArc: {
      const double tau = *params.tau;
      for (Eigen::Index i = 0; i < n; ++i) {
        const SoftNegatives s = soft_negatives(cross, i, tau, out.weights);
        if (kind == LossKind::kInfo) {
          gd(i) = fraction_gd(cross(i, i), s, tau);
          fill_ratio(i, 1.0);
        } else {
          const double theta = clamped_acos(cross(i, i));
          if (std::sin(theta) < kBoundaryTolerance) flag(i);
          gd(i) = fraction_gd(std::cos(theta + *params.u), s, tau);
          fill_ratio(i, detail::arc_ratio(theta, *params.u));
        }
      }
      break;
    }
    case LossKind::kMpt:
      for (Eigen::Index i = 0; i < n; ++i) {
        const auto top = detail::hardest(cross, i);
        if (top.tied) flag(i);
        gate(i);
        out.weights(i, top.index) = 1.0;
        fill_ratio(i, 1.0);
      }
      break;
    case LossKind::kMet:
      for (Eigen::Index i = 0; i < n; ++i) {
        const auto top = detail::hardest(cross, i);
        const double d_pos = chord(cross(i, i));
        const double d_neg = chord(top.value);
        if (top.tied || std::abs(d_neg - d_pos - *params.m) < kBoundaryTolerance) flag(i);
        gd(i) = d_neg - d_pos < *params.m ? 1.0 : 0.0;
        out.weights(i, top.index) = 1.0 / d_neg;
        const double denom = 1.0 - std::clamp(cross(i, i), -1.0, 1.0);
        if (d_pos < 1e-12) flag(i);
        for (Eigen::Index j = 0; j < n; ++j) {
          if (j == i) continue;
          const double numer = 1.0 - std::clamp(cross(i, j), -1.0, 1.0);
          out.ratios(i, j) = d_pos < 1e-12 ? 0.0 : std::sqrt(numer / denom);
        }
      }
      break;
    case LossKind::kAMhe: {
      out.negative_source = NegativeSource::kSameView;
      const double nu = *params.nu_u;
      const double shift = detail::offdiag_max(same);
      double z2 = 0.0;
      for (Eigen::Index k = 0; k < n; ++k) {
        for (Eigen::Index l = k + 1; l < n; ++l) z2 += std::exp(2.0 * (same(k, l) - shift));
      }
      for (Eigen::Index i = 0; i < n; ++i) {
        double row = 0.0;
        for (Eigen::Index j = 0; j < n; ++j) {
          if (j == i) continue;
          const double e = std::exp(2.0 * (same(i, j) - shift));
          out.weights(i, j) = 2.0 * nu * e / z2;
          row += e;
        }
        fill_ratio(i, z2 / (nu * nd * row));
      }
      break;
    }
    case LossKind::kAMhs: {
      out.negative_source = NegativeSource::kSameView;
      const double nu = *params.nu_u;
      for (Eigen::Index i = 0; i < n; ++i) {
        const auto top = detail::hardest(same, i);
        if (top.tied) flag(i);
        for (Eigen::Index j = 0; j < n; ++j) {
          if (j != i) out.ratios(i, j) = 2.0 * (h.row(i) - h.row(j)).norm() / (nu * nd);
        }
        out.weights(i, top.index) = nu / (h.row(i) - h.row(top.index)).norm();
      }
      break;
    }
    case LossKind::kBarlowEq: {
      out.negative_source = NegativeSource::kSameView;
      out.weight_source = WeightSource::kPrimedView;
      const double nu = *params.nu_B;
      const Matrix gram = hp * hp.transpose();
      out.ratio_diag =
          (1.0 - (1.0 - nu) * (h.cwiseProduct(hp).colwise().sum() / nd).array()).matrix().transpose();
      for (Eigen::Index i = 0; i < n; ++i) {
        double mass = 0.0;
        for (Eigen::Index j = 0; j < n; ++j) {
          if (j == i) continue;
          out.weights(i, j) = 2.0 * nu * gram(i, j) / (nd * nd);
          mass += gram(i, j);
        }
        if (std::abs(mass) < kBoundaryTolerance) flag(i);
        fill_ratio(i, nd / (nu * mass));
      }
      break;
    }
    case LossKind::kVicregEq: {
      out.negative_source = NegativeSource::kSameView;
      const double nu1 = *params.nu_V1;
      const double dd = static_cast<double>(batch.dim());
      const double spread = dd * (nd - 1.0) * (nd - 1.0);
      for (Eigen::Index i = 0; i < n; ++i) {
        double mass = 0.0;
        for (Eigen::Index j = 0; j < n; ++j) {
          if (j == i) continue;
          out.weights(i, j) = 4.0 * nu1 * same(i, j) / spread;
          mass += same(i, j);
        }
        if (std::abs(mass) < kBoundaryTolerance) flag(i);
        fill_ratio(i, spread / nd / (2.0 * nu1 * mass));
      }
      break;
    }
    case LossKind::kMMhe: {
      out.negative_source = NegativeSource::kSameView;
      const double tau = *params.tau;
      const double shift = detail::offdiag_max(same);
      double z = 0.0;
      for (Eigen::Index k = 0; k < n; ++k) {
        for (Eigen::Index l = k + 1; l < n; ++l) z += std::exp((same(k, l) - shift) / tau);
      }
      for (Eigen::Index i = 0; i < n; ++i) {
        gate(i);
        for (Eigen::Index j = 0; j < n; ++j) {
          if (j != i) out.weights(i, j) = std::exp((same(i, j) - shift) / tau) / (tau * z);
        }
        fill_ratio(i, *params.r);
      }
      break;
    }
    case LossKind::kMMhs:
      out.negative_source = NegativeSource::kSameView;
      for (Eigen::Index i = 0; i < n; ++i) {
        const auto top = detail::hardest(same, i);
        if (top.tied) flag(i);
        gate(i);
        out.weights(i, top.index) = 1.0 / (h.row(i) - h.row(top.index)).norm();
        fill_ratio(i, *params.r);
      }
      break;
    case LossKind::kMB:
    case LossKind::kMV: {
      out.negative_source = NegativeSource::kSameView;
      if (kind == LossKind::kMB) out.weight_source = WeightSource::kPrimedView;
      const double tau = *params.tau;
      const Matrix gram = kind == LossKind::kMB ? Matrix(hp * hp.transpose()) : same;
      const double shift = detail::offdiag_max(gram);
      double z = 0.0;
      for (Eigen::Index k = 0; k < n; ++k) {
        for (Eigen::Index l = 0; l < n; ++l) {
          if (k != l) z += std::exp((gram(k, l) - shift) / tau);
        }
      }
      for (Eigen::Index i = 0; i < n; ++i) {
        gate(i);
        for (Eigen::Index j = 0; j < n; ++j) {
          if (j != i) out.weights(i, j) = std::exp((gram(i, j) - shift) / tau) / z;
        }
        fill_ratio(i, *params.r);
      }
      break;
    }
    case LossKind::kBaseline: {
      const auto frozen = detail::freeze(kind, h, hp, params);
      out.weights = frozen.pair;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (detail::gate_on_edge(cross, i, *params.m)) flag(i);
        gd(i) = frozen.gate[static_cast<std::size_t>(i)];
        fill_ratio(i, *params.r);
      }
      break;
    }
  }
  return out;
}

Matrix reconstruct(const ParadigmComponents& components, const EmbeddingBatch& batch) {
  const Eigen::Index n = batch.size();
  const bool shaped = static_cast<Eigen::Index>(components.gd.size()) == n &&
                      components.weights.rows() == n && components.weights.cols() == n &&
                      components.ratios.rows() == n && components.ratios.cols() == n &&
                      (!components.ratio_diag || components.ratio_diag->size() == batch.dim());
  if (!shaped) throw Error(ErrorCode::kShapeMismatch, "components do not match the batch shape");

  const Matrix& negatives = components.negative_source == NegativeSource::kCrossView
                                ? batch.positives()
                                : batch.anchors();
  Matrix out(n, batch.dim());
  for (Eigen::Index i = 0; i < n; ++i) {
    Vector target = batch.positives().row(i).transpose();
    if (components.ratio_diag) target = target.cwiseProduct(*components.ratio_diag);
    out.row(i) = detail::paradigm_row(components.gd[static_cast<std::size_t>(i)],
                                      components.weights.row(i).transpose(),
                                      components.ratios.row(i).transpose(), negatives, target, i)
                     .transpose();
  }
  return out;
}

Matrix fd_grad(LossKind kind, const EmbeddingBatch& batch, const LossParams& params,
               double epsilon) {
  if (!(epsilon >= 1e-8 && epsilon <= 1e-4)) {
    throw Error(ErrorCode::kInvalidParams, "epsilon must lie in [1e-8, 1e-4]");
  }
  return central_difference(kind, batch, params, epsilon);
}

Matrix fd_grad_richardson(LossKind kind, const EmbeddingBatch& batch, const LossParams& params,
                          double h) {
  const Matrix coarse = central_difference(kind, batch, params, h);
  const Matrix fine = central_difference(kind, batch, params, h / 2.0);
  return (4.0 * fine - coarse) / 3.0;
}

Matrix tangent_project(const Matrix& grads, const Matrix& anchors) {
  Matrix out = grads;
  for (Eigen::Index i = 0; i < grads.rows(); ++i) {
    out.row(i) -= grads.row(i).dot(anchors.row(i)) * anchors.row(i);
  }
  return out;
}

GradCheckReport check(LossKind kind, std::size_t n_trials, Eigen::Index n, Eigen::Index d,
                      const LossParams& params, std::uint64_t seed, const GradCheckOptions& options) {
  if (n_trials < 1) throw Error(ErrorCode::kInvalidParams, "check needs at least one trial");
  params.validate_for(kind);

  struct Trial {
    bool skipped = false;
    double max_err = 0.0;
    double sum_err = 0.0;
    std::size_t rows = 0;
    std::size_t richardson = 0;
  };
  std::vector<Trial> trials(n_trials);

  parallel_for(n_trials, [&](std::size_t t) {
    Trial& out = trials[t];
    const EmbeddingBatch batch = random_batch(n, d, derive_seed(seed, t));
    const GradientMatrix analytic = analytic_grad(kind, batch, params);
    if (analytic.any_boundary()) {
      out.skipped = true;
      return;
    }
    const Matrix ga = tangent_project(analytic.grads, batch.anchors());
    const Matrix gf = tangent_project(fd_grad(kind, batch, params, options.epsilon), batch.anchors());
    std::optional<Matrix> extrapolated;
    for (Eigen::Index i = 0; i < n; ++i) {
      double err = (ga.row(i) - gf.row(i)).norm() / std::max(gf.row(i).norm(), 1e-12);
      if (err > options.tolerance) {
        if (!extrapolated) {
          extrapolated = tangent_project(
              fd_grad_richardson(kind, batch, params, options.richardson_step), batch.anchors());
        }
        const auto gr = extrapolated->row(i);
        err = (ga.row(i) - gr).norm() / std::max(gr.norm(), 1e-12);
        ++out.richardson;
      }
      out.max_err = std::max(out.max_err, err);
      out.sum_err += err;
      ++out.rows;
    }
  });

  GradCheckReport report;
  report.epsilon = options.epsilon;
  double sum = 0.0;
  for (const Trial& t : trials) {
    if (t.skipped) {
      ++report.n_boundary_skipped;
      continue;
    }
    ++report.n_checked;
    report.n_rows += t.rows;
    report.n_richardson += t.richardson;
    report.max_rel_error = std::max(report.max_rel_error, t.max_err);
    sum += t.sum_err;
  }
  report.mean_rel_error = report.n_rows > 0 ? sum / static_cast<double>(report.n_rows) : 0.0;
  return report;
}

}  // namespace gradlens
