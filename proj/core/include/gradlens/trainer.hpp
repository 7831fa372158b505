#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gradlens/embeddings.hpp"
#include "gradlens/error.hpp"
#include "gradlens/losses.hpp"

namespace gradlens {

enum class EncoderKind { kLinear, kMlp };

struct EncoderSpec {
  EncoderKind kind = EncoderKind::kLinear;
  std::size_t width = 64;  // hidden width (mlp only)
  std::size_t depth = 1;   // hidden layers (mlp only)
};

struct TrainerConfig {
  std::size_t n_items = 2048;
  std::size_t latent_dim = 64;
  std::size_t content_rank = 24;   // dimension of the subspace carrying item identity
  std::size_t n_clusters = 1;
  double cluster_spread = 1.0;     // std of cluster centers
  double within_sigma = 0.5;       // std of items around their center
  double common_offset = 0.3;      // length scale of a shared offset added to all items
  std::size_t embed_dim = 64;
  double noise_sigma = 0.1;        // augmentation noise per view
  std::size_t batch_size = 128;
  std::size_t steps = 1000;
  double learning_rate = 1.0;
  LossKind loss = LossKind::kBaseline;
  LossParams params = LossParams::defaults();
  std::uint64_t seed = 1;
  double holdout_fraction = 0.10;
  EncoderSpec encoder;
  std::size_t eval_interval = 50;
  std::optional<double> eval_tau;  // defaults to params.tau, then 0.05

  double resolved_eval_tau() const;
  // Throws InvalidConfig.
  void validate() const;
};

struct Dataset {
  Matrix train;           // items x latent_dim
  Matrix holdout;
  Matrix holdout_view_a;  // fixed noisy views of the holdout items
  Matrix holdout_view_b;
};

// Items: x = B (c_k + e) + g, with B an orthonormal latent_dim x content_rank
// basis, c_k ~ N(0, spread^2) the cluster center, e ~ N(0, within^2) and g a
// single N(0, offset^2 I) vector shared by every item.
Dataset make_dataset(const TrainerConfig& config);

class Encoder {
 public:
  Encoder(const EncoderSpec& spec, std::size_t input_dim, std::size_t output_dim, std::uint64_t seed);

  // Raw (unnormalized) outputs, one row per input row.
  Matrix forward(const Matrix& inputs) const;
  // Normalized outputs.
  Matrix embed(const Matrix& inputs) const;

  // Accumulates parameter gradients given dLoss/dOutput for `inputs`.
  void backward(const Matrix& inputs, const Matrix& grad_outputs, std::vector<Matrix>& grad_weights,
                std::vector<Vector>& grad_biases) const;
  void apply(const std::vector<Matrix>& grad_weights, const std::vector<Vector>& grad_biases,
             double learning_rate);

  std::vector<Matrix>& weights() { return weights_; }
  const std::vector<Matrix>& weights() const { return weights_; }
  const std::vector<Vector>& biases() const { return biases_; }

  // FNV-1a over the parameter bytes, as 16 hex digits.
  std::string digest() const;

 private:
  std::vector<Matrix> weights_;  // layer l maps rows: out = in * W^T + b
  std::vector<Vector> biases_;
};

// Gradient of the batch objective with respect to the encoder's raw outputs
// for one pair of views. Rows of the anchor-side paradigm gradient are pulled
// back through the normalization, views are swapped for the other side, and
// per-anchor losses are averaged over the batch.
void output_gradients(LossKind kind, const LossParams& params, const Matrix& raw_a,
                      const Matrix& raw_b, Matrix& grad_a, Matrix& grad_b);

struct TraceRecord {
  std::size_t step = 0;
  SpaceStats stats;
  double arc_ratio = 0.0;  // mean sin(theta+u)/sin(theta) over holdout anchors
  double met_ratio = 0.0;  // mean distance ratio at the hardest negative
};

struct TrainTrace {
  std::vector<TraceRecord> records;
  double eval_tau = 0.05;
  std::string digest;
};

struct TrainResult {
  TrainTrace trace;
  Encoder encoder;
};

class DivergenceDetected : public Error {
 public:
  DivergenceDetected(const std::string& what, TrainTrace partial)
      : Error(ErrorCode::kDivergenceDetected, what), partial_(std::move(partial)) {}
  const TrainTrace& partial_trace() const { return partial_; }

 private:
  TrainTrace partial_;
};

TrainResult train(const TrainerConfig& config);

// Holdout split into consecutive batches of batch_size (one batch of
// everything if the holdout is smaller).
std::vector<EmbeddingBatch> holdout_batches(const Encoder& encoder, const Dataset& data,
                                            std::size_t batch_size);

enum class AblationAxis { kGd, kWeight, kRatio };

struct LabeledTrace {
  AblationAxis axis = AblationAxis::kGd;
  double value = 0.0;  // m, tau or r; +inf on the gd axis means no dissipation
  bool baseline = false;
  TrainTrace trace;
};

struct ConjectureCheck {
  std::string id;
  bool passed = false;
  std::string detail;
  std::vector<std::pair<std::string, double>> numbers;
};

struct ConjectureReport {
  std::vector<ConjectureCheck> checks;
  bool all_passed() const;
};

// C1: final gap smaller with dissipation than without (gd axis, needs the
//     +inf variant); gd trend: gap non-decreasing in finite m.
// C2: hardest fraction rises from the first to the last record on baseline
//     traces evaluated at tau = 0.05.
// C3: final mean positive cosine strictly increasing in r.
// weight collapse: final fraction < 0.1 for tau >= 3.
// Throws MissingVariant when an axis lacks its paired traces.
ConjectureReport evaluate_conjectures(std::span<const LabeledTrace> traces);

}  // namespace gradlens
