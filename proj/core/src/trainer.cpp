#include "gradlens/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

#include "gradlens/paradigm.hpp"
#include "kernels.hpp"

namespace gradlens {

namespace {

enum Stream : std::uint64_t { kDataStream = 1, kInitStream = 2, kTrainStream = 3 };

Matrix gaussian(Eigen::Index rows, Eigen::Index cols, double stddev, NormalSampler& normal) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index k = 0; k < cols; ++k) m(i, k) = stddev * normal();
  }
  return m;
}

// (G - (G.h)h) / ||v|| per row: the pullback of an output-space gradient
// through v -> v / ||v||.
Matrix pull_back(const Matrix& grads, const Matrix& unit, const Matrix& raw) {
  Matrix out = tangent_project(grads, unit);
  for (Eigen::Index i = 0; i < raw.rows(); ++i) out.row(i) /= raw.row(i).norm();
  return out;
}

std::vector<std::size_t> sample_without_replacement(std::size_t population, std::size_t count,
                                                    Xoshiro256& rng) {
  std::vector<std::size_t> pool(population);
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  for (std::size_t k = 0; k < count; ++k) {
    const auto offset = static_cast<std::size_t>(rng.uniform() * static_cast<double>(population - k));
    std::swap(pool[k], pool[k + std::min(offset, population - k - 1)]);
  }
  pool.resize(count);
  return pool;
}

TraceRecord evaluate(std::size_t step, const Encoder& encoder, const Dataset& data,
                     const TrainerConfig& config) {
  const auto batches = holdout_batches(encoder, data, config.batch_size);
  TraceRecord rec;
  rec.step = step;
  rec.stats = space_stats(batches, config.resolved_eval_tau());
  const double u = config.params.u.value_or(0.1);
  double arc = 0.0, met = 0.0, count = 0.0;
  for (const auto& batch : batches) {
    const Matrix sims = batch.anchors() * batch.positives().transpose();
    for (Eigen::Index i = 0; i < batch.size(); ++i) {
      const double cos_pos = std::clamp(sims(i, i), -1.0, 1.0);
      const double top = std::clamp(detail::hardest(sims, i).value, -1.0, 1.0);
      arc += detail::arc_ratio(std::acos(cos_pos), u);
      met += std::sqrt((1.0 - top) / std::max(1.0 - cos_pos, 1e-300));
      count += 1.0;
    }
  }
  rec.arc_ratio = arc / count;
  rec.met_ratio = met / count;
  return rec;
}

}  // namespace

double TrainerConfig::resolved_eval_tau() const { return eval_tau.value_or(params.tau.value_or(0.05)); }

void TrainerConfig::validate() const {
  auto fail = [](const std::string& what) { throw Error(ErrorCode::kInvalidConfig, what); };
  if (batch_size < 2) fail("batch_size must be at least 2");
  if (n_items < batch_size) fail("n_items must be at least batch_size");
  if (!(holdout_fraction >= 0.0 && holdout_fraction < 1.0)) fail("holdout_fraction must lie in [0, 1)");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) fail("learning_rate must be >= 0");
  if (latent_dim < 1 || embed_dim < 2) fail("latent_dim >= 1 and embed_dim >= 2 required");
  if (content_rank < 1 || content_rank > latent_dim) fail("content_rank must lie in [1, latent_dim]");
  if (n_clusters < 1) fail("n_clusters must be at least 1");
  if (!(noise_sigma >= 0.0) || !(within_sigma >= 0.0) || !(cluster_spread >= 0.0) ||
      !(common_offset >= 0.0)) {
    fail("noise and spread parameters must be non-negative");
  }
  if (eval_interval < 1) fail("eval_interval must be at least 1");
  if (encoder.kind == EncoderKind::kMlp && (encoder.width < 1 || encoder.depth < 1)) {
    fail("mlp encoder needs width >= 1 and depth >= 1");
  }
  if (!(resolved_eval_tau() > 0.0)) fail("eval_tau must be positive");
  const auto holdout = static_cast<std::size_t>(std::floor(holdout_fraction * static_cast<double>(n_items)));
  if (holdout < 2) fail("holdout must contain at least 2 items");
  if (n_items - holdout < batch_size) fail("training split is smaller than batch_size");
  try {
    params.validate_for(loss);
  } catch (const Error& e) {
    fail(e.what());
  }
}

Dataset make_dataset(const TrainerConfig& config) {
  config.validate();
  NormalSampler normal(derive_seed(config.seed, kDataStream));
  const auto latent = static_cast<Eigen::Index>(config.latent_dim);
  const auto rank = static_cast<Eigen::Index>(config.content_rank);
  const auto n = static_cast<Eigen::Index>(config.n_items);

  const Matrix raw = gaussian(latent, latent, 1.0, normal);
  const Eigen::HouseholderQR<Eigen::MatrixXd> qr(raw);
  const Eigen::MatrixXd basis = (qr.householderQ() * Eigen::MatrixXd::Identity(latent, rank));

  const Matrix centers = gaussian(static_cast<Eigen::Index>(config.n_clusters), rank,
                                  config.cluster_spread, normal);
  const Vector offset = gaussian(1, latent, config.common_offset, normal).row(0).transpose();

  Matrix items(n, latent);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto cluster = static_cast<Eigen::Index>(
        std::min(normal.engine().uniform() * static_cast<double>(config.n_clusters),
                 static_cast<double>(config.n_clusters - 1)));
    Vector content = centers.row(cluster).transpose();
    for (Eigen::Index k = 0; k < rank; ++k) content(k) += config.within_sigma * normal();
    items.row(i) = (basis * content + offset).transpose();
  }

  const auto holdout = static_cast<Eigen::Index>(
      std::floor(config.holdout_fraction * static_cast<double>(config.n_items)));
  const auto order = sample_without_replacement(config.n_items, config.n_items, normal.engine());
  Dataset data;
  data.holdout.resize(holdout, latent);
  data.train.resize(n - holdout, latent);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto src = static_cast<Eigen::Index>(order[static_cast<std::size_t>(i)]);
    if (i < holdout) {
      data.holdout.row(i) = items.row(src);
    } else {
      data.train.row(i - holdout) = items.row(src);
    }
  }
  data.holdout_view_a = data.holdout + gaussian(holdout, latent, config.noise_sigma, normal);
  data.holdout_view_b = data.holdout + gaussian(holdout, latent, config.noise_sigma, normal);
  return data;
}

Encoder::Encoder(const EncoderSpec& spec, std::size_t input_dim, std::size_t output_dim,
                 std::uint64_t seed) {
  NormalSampler normal(seed);
  auto layer = [&](std::size_t out, std::size_t in) {
    return gaussian(static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in),
                    1.0 / std::sqrt(static_cast<double>(in)), normal);
  };
  std::size_t fan_in = input_dim;
  if (spec.kind == EncoderKind::kMlp) {
    for (std::size_t l = 0; l < spec.depth; ++l) {
      weights_.push_back(layer(spec.width, fan_in));
      biases_.push_back(Vector::Zero(static_cast<Eigen::Index>(spec.width)));
      fan_in = spec.width;
    }
  }
  weights_.push_back(layer(output_dim, fan_in));
}

Matrix Encoder::forward(const Matrix& inputs) const {
  Matrix a = inputs;
  for (std::size_t l = 0; l + 1 < weights_.size(); ++l) {
    a = ((a * weights_[l].transpose()).rowwise() + biases_[l].transpose()).array().tanh().matrix();
  }
  return a * weights_.back().transpose();
}

Matrix Encoder::embed(const Matrix& inputs) const { return normalize_rows(forward(inputs)); }

void Encoder::backward(const Matrix& inputs, const Matrix& grad_outputs,
                       std::vector<Matrix>& grad_weights, std::vector<Vector>& grad_biases) const {
  std::vector<Matrix> acts{inputs};
  for (std::size_t l = 0; l + 1 < weights_.size(); ++l) {
    acts.push_back(
        ((acts.back() * weights_[l].transpose()).rowwise() + biases_[l].transpose()).array().tanh().matrix());
  }
  if (grad_weights.empty()) {
    for (const auto& w : weights_) grad_weights.push_back(Matrix::Zero(w.rows(), w.cols()));
    for (const auto& b : biases_) grad_biases.push_back(Vector::Zero(b.size()));
  }
  Matrix delta = grad_outputs;
  for (std::size_t l = weights_.size(); l-- > 0;) {
    grad_weights[l] += delta.transpose() * acts[l];
    if (l == 0) break;
    const Matrix& a = acts[l];
    delta = ((delta * weights_[l]).array() * (1.0 - a.array().square())).matrix();
    grad_biases[l - 1] += delta.colwise().sum().transpose();
  }
}

void Encoder::apply(const std::vector<Matrix>& grad_weights, const std::vector<Vector>& grad_biases,
                    double learning_rate) {
  for (std::size_t l = 0; l < weights_.size(); ++l) weights_[l] -= learning_rate * grad_weights[l];
  for (std::size_t l = 0; l < biases_.size(); ++l) biases_[l] -= learning_rate * grad_biases[l];
}

std::string Encoder::digest() const {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  auto feed = [&](const double* data, Eigen::Index count) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(data);
    for (std::size_t k = 0; k < static_cast<std::size_t>(count) * sizeof(double); ++k) {
      hash ^= bytes[k];
      hash *= 0x100000001b3ULL;
    }
  };
  for (const auto& w : weights_) feed(w.data(), w.size());
  for (const auto& b : biases_) feed(b.data(), b.size());
  std::ostringstream out;
  out << std::hex;
  out.width(16);
  out.fill('0');
  out << hash;
  return out.str();
}

void output_gradients(LossKind kind, const LossParams& params, const Matrix& raw_a,
                      const Matrix& raw_b, Matrix& grad_a, Matrix& grad_b) {
  const Matrix h = normalize_rows(raw_a);
  const Matrix hp = normalize_rows(raw_b);
  const double scale = is_global(kind) ? 1.0 : 1.0 / static_cast<double>(raw_a.rows());
  const Matrix ga = analytic_grad(kind, EmbeddingBatch(h, hp), params).grads * scale;
  const Matrix gb = analytic_grad(kind, EmbeddingBatch(hp, h), params).grads * scale;
  grad_a = pull_back(ga, h, raw_a);
  grad_b = pull_back(gb, hp, raw_b);
}

std::vector<EmbeddingBatch> holdout_batches(const Encoder& encoder, const Dataset& data,
                                            std::size_t batch_size) {
  const Matrix a = encoder.embed(data.holdout_view_a);
  const Matrix b = encoder.embed(data.holdout_view_b);
  const auto total = static_cast<std::size_t>(a.rows());
  std::vector<EmbeddingBatch> out;
  if (total < batch_size) {
    out.emplace_back(a, b);
    return out;
  }
  for (std::size_t start = 0; start + batch_size <= total; start += batch_size) {
    const auto s = static_cast<Eigen::Index>(start);
    const auto len = static_cast<Eigen::Index>(batch_size);
    out.emplace_back(a.middleRows(s, len), b.middleRows(s, len));
  }
  return out;
}

TrainResult train(const TrainerConfig& config) {
  const Dataset data = make_dataset(config);
  TrainResult result{TrainTrace{}, Encoder(config.encoder, config.latent_dim, config.embed_dim,
                                           derive_seed(config.seed, kInitStream))};
  TrainTrace& trace = result.trace;
  Encoder& encoder = result.encoder;
  trace.eval_tau = config.resolved_eval_tau();

  NormalSampler normal(derive_seed(config.seed, kTrainStream));
  const auto latent = static_cast<Eigen::Index>(config.latent_dim);
  const auto batch = static_cast<Eigen::Index>(config.batch_size);
  const auto diverged = [&](const std::string& why) {
    trace.digest = encoder.digest();
    throw DivergenceDetected(why, trace);
  };

  auto record = [&](std::size_t step) {
    try {
      trace.records.push_back(evaluate(step, encoder, data, config));
    } catch (const Error& e) {
      diverged(std::string("evaluation failed: ") + e.what());
    }
  };

  record(0);
  for (std::size_t step = 1; step <= config.steps; ++step) {
    const auto idx =
        sample_without_replacement(static_cast<std::size_t>(data.train.rows()), config.batch_size,
                                   normal.engine());
    Matrix x(batch, latent);
    for (Eigen::Index i = 0; i < batch; ++i) {
      x.row(i) = data.train.row(static_cast<Eigen::Index>(idx[static_cast<std::size_t>(i)]));
    }
    const Matrix xa = x + gaussian(batch, latent, config.noise_sigma, normal);
    const Matrix xb = x + gaussian(batch, latent, config.noise_sigma, normal);

    const Matrix va = encoder.forward(xa);
    const Matrix vb = encoder.forward(xb);
    Matrix ga, gb;
    try {
      const EmbeddingBatch views(normalize_rows(va), normalize_rows(vb));
      if (!std::isfinite(loss_value(config.loss, views, config.params).total)) {
        diverged("non-finite loss at step " + std::to_string(step));
      }
      output_gradients(config.loss, config.params, va, vb, ga, gb);
    } catch (const DivergenceDetected&) {
      throw;
    } catch (const Error& e) {
      diverged("step " + std::to_string(step) + ": " + e.what());
    }

    std::vector<Matrix> grad_w;
    std::vector<Vector> grad_b;
    encoder.backward(xa, ga, grad_w, grad_b);
    encoder.backward(xb, gb, grad_w, grad_b);
    encoder.apply(grad_w, grad_b, config.learning_rate);

    if (step % config.eval_interval == 0 || step == config.steps) record(step);
  }
  trace.digest = encoder.digest();
  return result;
}

bool ConjectureReport::all_passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const ConjectureCheck& c) { return c.passed; });
}

ConjectureReport evaluate_conjectures(std::span<const LabeledTrace> traces) {
  auto missing = [](const std::string& what) { throw Error(ErrorCode::kMissingVariant, what); };
  auto final_of = [&](const LabeledTrace& t) -> const TraceRecord& {
    if (t.trace.records.empty()) missing("trace has no records");
    return t.trace.records.back();
  };
  auto gap = [&](const LabeledTrace& t) {
    const auto& s = final_of(t).stats;
    return s.mu_neg_hat - s.mu_pos_hat;
  };

  std::map<double, const LabeledTrace*> gd_axis, weight_axis, ratio_axis;
  for (const auto& t : traces) {
    auto& axis = t.axis == AblationAxis::kGd ? gd_axis
                 : t.axis == AblationAxis::kWeight ? weight_axis
                                                   : ratio_axis;
    axis[t.value] = &t;
  }

  ConjectureReport report;
  const double inf = std::numeric_limits<double>::infinity();

  if (!gd_axis.empty()) {
    const auto off = gd_axis.find(inf);
    if (off == gd_axis.end()) missing("gd axis has no variant without dissipation");
    std::vector<const LabeledTrace*> finite;
    for (const auto& [m, t] : gd_axis) {
      if (std::isfinite(m)) finite.push_back(t);
    }
    if (finite.empty()) missing("gd axis has no variant with dissipation");

    ConjectureCheck c1{"C1", false, "", {}};
    const LabeledTrace* with = finite.front();
    for (const auto* t : finite) {
      if (t->baseline) with = t;
    }
    c1.numbers = {{"m", with->value}, {"gap_with_gd", gap(*with)}, {"gap_without_gd", gap(*off->second)}};
    c1.passed = gap(*with) < gap(*off->second);
    c1.detail = "final mu_neg - mu_pos gap with dissipation is strictly smaller than with gd = 1";
    report.checks.push_back(c1);

    if (finite.size() >= 2) {
      ConjectureCheck trend{"gd_trend", true, "final gap non-decreasing in m", {}};
      double previous = -inf;
      for (const auto* t : finite) {
        const double g = gap(*t);
        trend.numbers.emplace_back("gap_m_" + std::to_string(t->value), g);
        if (g < previous) trend.passed = false;
        previous = g;
      }
      report.checks.push_back(trend);
    }
  }

  {
    ConjectureCheck c2{"C2", true, "hardest-negative fraction at tau 0.05 grows with training", {}};
    bool any = false;
    for (const auto& t : traces) {
      if (!t.baseline || std::abs(t.trace.eval_tau - 0.05) > 1e-12) continue;
      if (t.trace.records.size() < 2) missing("baseline trace needs a first and a last record");
      any = true;
      const double before = t.trace.records.front().stats.hardest_weight_fraction;
      const double after = t.trace.records.back().stats.hardest_weight_fraction;
      c2.numbers.emplace_back("fraction_before", before);
      c2.numbers.emplace_back("fraction_after", after);
      if (!(after > before)) c2.passed = false;
    }
    if (any) report.checks.push_back(c2);
  }

  if (!ratio_axis.empty()) {
    if (ratio_axis.size() < 2) missing("ratio axis needs at least two values of r");
    ConjectureCheck c3{"C3", true, "final mean anchor-positive cosine strictly increasing in r", {}};
    double previous = -inf;
    for (const auto& [r, t] : ratio_axis) {
      const double cos_pos = final_of(*t).stats.mean_pos_cos;
      c3.numbers.emplace_back("mean_pos_cos_r_" + std::to_string(r), cos_pos);
      if (!(cos_pos > previous)) c3.passed = false;
      previous = cos_pos;
    }
    report.checks.push_back(c3);
  }

  if (!weight_axis.empty()) {
    ConjectureCheck collapse{"weight_collapse", true, "hardest fraction below 0.1 once tau >= 3", {}};
    bool any = false;
    for (const auto& [tau, t] : weight_axis) {
      const double f = final_of(*t).stats.hardest_weight_fraction;
      collapse.numbers.emplace_back("fraction_tau_" + std::to_string(tau), f);
      if (tau >= 3.0) {
        any = true;
        if (!(f < 0.1)) collapse.passed = false;
      }
    }
    if (!any) collapse.detail += " (no tau >= 3 variant; not evaluated)";
    report.checks.push_back(collapse);
  }

  if (report.checks.empty()) missing("no conjecture could be evaluated from the given traces");
  return report;
}

}  // namespace gradlens
