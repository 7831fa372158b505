#include "gradlens/embeddings.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "gradlens/error.hpp"

namespace gradlens {

namespace {

constexpr double kPi = std::numbers::pi;

bool rows_unit(const Matrix& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    if (!(std::abs(m.row(i).norm() - 1.0) <= kUnitTolerance)) return false;
  }
  return true;
}

void check_angle(double theta, const char* what) {
  if (!(theta >= 0.0 && theta <= kPi)) {
    throw Error(ErrorCode::kInvalidAngle, std::string(what) + " = " + std::to_string(theta) +
                                              " is outside [0, pi]");
  }
}

// Uniformly random unit direction orthogonal to e_1 in R^d.
Vector random_orthogonal_direction(Eigen::Index d, NormalSampler& normal) {
  Vector v = Vector::Zero(d);
  double norm = 0.0;
  while (norm < 1e-12) {
    for (Eigen::Index k = 1; k < d; ++k) v(k) = normal();
    norm = v.norm();
  }
  return v / norm;
}

Vector at_angle(double theta, const Vector& direction) {
  Vector out = std::sin(theta) * direction;
  out(0) = std::cos(theta);
  return out;
}

}  // namespace

UnitVector::UnitVector(Vector coords) : coords_(std::move(coords)) {
  if (coords_.size() < 2) throw Error(ErrorCode::kInvalidShape, "unit vector needs D >= 2");
  if (!(std::abs(coords_.norm() - 1.0) <= kUnitTolerance)) {
    throw Error(ErrorCode::kInvalidShape, "vector is not unit norm");
  }
}

UnitVector normalize(const Vector& v) {
  const double norm = v.norm();
  if (!(norm >= 1e-300)) throw Error(ErrorCode::kZeroVector, "cannot normalize a zero vector");
  return UnitVector(v / norm);
}

Matrix normalize_rows(const Matrix& m) {
  Matrix out(m.rows(), m.cols());
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const double norm = m.row(i).norm();
    if (!(norm >= 1e-300)) throw Error(ErrorCode::kZeroVector, "row " + std::to_string(i) + " is zero");
    out.row(i) = m.row(i) / norm;
  }
  return out;
}

EmbeddingBatch::EmbeddingBatch(Matrix anchors, Matrix positives)
    : anchors_(std::move(anchors)), positives_(std::move(positives)) {
  if (anchors_.rows() != positives_.rows() || anchors_.cols() != positives_.cols()) {
    throw Error(ErrorCode::kInvalidBatch, "anchors and positives differ in shape");
  }
  if (anchors_.rows() < 2 || anchors_.cols() < 2) {
    throw Error(ErrorCode::kInvalidBatch, "batch needs N >= 2 and D >= 2");
  }
  if (!rows_unit(anchors_) || !rows_unit(positives_)) {
    throw Error(ErrorCode::kInvalidBatch, "batch rows must be unit norm");
  }
}

void AngleBatch::validate() const {
  check_angle(theta_pos, "theta_pos");
  if (theta_neg.empty()) throw Error(ErrorCode::kInvalidAngle, "theta_neg is empty");
  for (double t : theta_neg) check_angle(t, "theta_neg");
}

void DistributionSpec::validate(bool wide_range) const {
  if (!(sigma_pos > 0.0) || !(sigma_neg > 0.0)) {
    throw Error(ErrorCode::kInvalidParams, "sigmas must be positive");
  }
  if (!std::isfinite(mu_pos) || !std::isfinite(mu_neg)) {
    throw Error(ErrorCode::kInvalidParams, "means must be finite");
  }
  if (!wide_range) {
    constexpr double lo = kPi / 20.0;
    const double slack = 1e-12;
    if (mu_pos < lo - slack || mu_pos > kPi / 2.0 + slack || mu_neg < lo - slack ||
        mu_neg > kPi + slack) {
      throw Error(ErrorCode::kInvalidParams, "means outside the sweep ranges");
    }
  }
}

EmbeddingBatch random_batch(Eigen::Index n, Eigen::Index d, std::uint64_t seed) {
  if (n < 2 || d < 2) throw Error(ErrorCode::kInvalidShape, "random_batch needs n >= 2, d >= 2");
  NormalSampler normal(seed);
  auto draw = [&] {
    Matrix m(n, d);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index k = 0; k < d; ++k) m(i, k) = normal();
    }
    return normalize_rows(m);
  };
  Matrix anchors = draw();
  Matrix positives = draw();
  return EmbeddingBatch(std::move(anchors), std::move(positives));
}

EmbeddingBatch batch_from_angles(const AngleBatch& angles, Eigen::Index d, std::uint64_t seed) {
  if (d < 3) throw Error(ErrorCode::kInvalidShape, "batch_from_angles needs d >= 3");
  angles.validate();
  NormalSampler normal(seed);
  const auto n = static_cast<Eigen::Index>(angles.theta_neg.size()) + 1;
  Matrix anchors(n, d);
  Matrix positives(n, d);
  anchors.row(0) = Vector::Unit(d, 0).transpose();
  positives.row(0) = at_angle(angles.theta_pos, random_orthogonal_direction(d, normal)).transpose();
  for (Eigen::Index k = 1; k < n; ++k) {
    Vector neg = at_angle(angles.theta_neg[k - 1], random_orthogonal_direction(d, normal));
    anchors.row(k) = neg.transpose();
    positives.row(k) = neg.transpose();
  }
  return EmbeddingBatch(std::move(anchors), std::move(positives));
}

AngleBatch angles_from_batch(const EmbeddingBatch& batch, Eigen::Index anchor_index,
                             bool cross_view) {
  if (anchor_index < 0 || anchor_index >= batch.size()) {
    throw Error(ErrorCode::kInvalidShape, "anchor index out of range");
  }
  const auto h = batch.anchors().row(anchor_index);
  const Matrix& partners = cross_view ? batch.positives() : batch.anchors();
  AngleBatch out;
  out.theta_pos = clamped_acos(h.dot(batch.positives().row(anchor_index)));
  out.theta_neg.reserve(static_cast<std::size_t>(batch.size() - 1));
  for (Eigen::Index j = 0; j < batch.size(); ++j) {
    if (j != anchor_index) out.theta_neg.push_back(clamped_acos(h.dot(partners.row(j))));
  }
  return out;
}

double fold_angle(double x) {
  x = std::fmod(std::abs(x), 2.0 * kPi);
  return x > kPi ? 2.0 * kPi - x : x;
}

AngleBatch sample_angles(const DistributionSpec& spec, std::size_t n_neg, NormalSampler& normal) {
  AngleBatch out;
  out.theta_pos = fold_angle(normal(spec.mu_pos, spec.sigma_pos));
  out.theta_neg.resize(n_neg);
  for (auto& t : out.theta_neg) t = fold_angle(normal(spec.mu_neg, spec.sigma_neg));
  return out;
}

SpaceStats space_stats(std::span<const EmbeddingBatch> batches, double tau) {
  if (batches.empty()) throw Error(ErrorCode::kEmptyInput, "space_stats needs at least one batch");
  if (!(tau > 0.0)) throw Error(ErrorCode::kInvalidParams, "tau must be positive");

  // Welford accumulators keep the pooled moments stable for large pools.
  struct Moments {
    double n = 0, mean = 0, m2 = 0;
    void add(double x) {
      n += 1;
      const double delta = x - mean;
      mean += delta / n;
      m2 += delta * (x - mean);
    }
    double stddev() const { return n > 1 ? std::sqrt(m2 / (n - 1)) : 0.0; }
  };
  Moments pos, neg;
  double cos_sum = 0.0, fraction_sum = 0.0, anchors = 0.0;

  for (const auto& batch : batches) {
    const Matrix sims = batch.anchors() * batch.positives().transpose();
    const Eigen::Index n = batch.size();
    for (Eigen::Index i = 0; i < n; ++i) {
      const double p = std::clamp(sims(i, i), -1.0, 1.0);
      pos.add(std::acos(p));
      cos_sum += p;
      double best = -std::numeric_limits<double>::infinity();
      for (Eigen::Index j = 0; j < n; ++j) {
        if (j == i) continue;
        const double c = std::clamp(sims(i, j), -1.0, 1.0);
        neg.add(std::acos(c));
        best = std::max(best, c);
      }
      double denom = 0.0;
      for (Eigen::Index j = 0; j < n; ++j) {
        if (j != i) denom += std::exp((std::clamp(sims(i, j), -1.0, 1.0) - best) / tau);
      }
      fraction_sum += 1.0 / denom;
      anchors += 1;
    }
  }

  SpaceStats out;
  out.mu_pos_hat = pos.mean;
  out.mu_neg_hat = neg.mean;
  out.sigma_pos_hat = pos.stddev();
  out.sigma_neg_hat = neg.stddev();
  out.mean_pos_cos = cos_sum / anchors;
  out.hardest_weight_fraction = fraction_sum / anchors;
  return out;
}

}  // namespace gradlens
