// One PASS/FAIL line per acceptance criterion. Exit status is nonzero when any
// criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "gradlens/lemma.hpp"
#include "gradlens/paradigm.hpp"
#include "gradlens/parallel.hpp"
#include "gradlens/simulator.hpp"
#include "gradlens/trainer.hpp"
#include "sim_oracle.inc"
#include "table_formulas.hpp"

using namespace gradlens;

namespace {

constexpr double kPi = std::numbers::pi;

struct Outcome {
  bool passed = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      passed = false;
      detail << " [" << what << "]";
    }
  }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double rel(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

void gradient_correctness(Outcome& o) {
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  std::size_t skipped = 0, checked = 0;
  for (LossKind k : kAllLossKinds) {
    const auto r = check(k, 100, 8, 16, LossParams::defaults(), 1);
    worst = std::max(worst, r.max_rel_error);
    skipped += r.n_boundary_skipped;
    checked += r.n_checked;
    o.require(r.max_rel_error < 1e-5, std::string(name(k)) + " error " + std::to_string(r.max_rel_error));
    o.require(r.n_checked > 0, std::string(name(k)) + " had no usable batch");
  }
  const double secs = seconds_since(t0);
  o.require(secs < 60.0, "runtime");
  o.detail << " max_rel_error=" << worst << " checked=" << checked << " boundary_skipped=" << skipped
           << " seconds=" << secs;
}

void reconstruction_identity(Outcome& o) {
  double worst = 0.0;
  for (LossKind k : kAllLossKinds) {
    std::size_t used = 0;
    for (std::uint64_t s = 0; used < 100 && s < 1000; ++s) {
      const EmbeddingBatch b = random_batch(8, 16, 5000 + s);
      const auto g = analytic_grad(k, b, LossParams::defaults());
      if (g.any_boundary()) continue;
      ++used;
      const double d = (reconstruct(decompose(k, b, LossParams::defaults()), b) - g.grads).cwiseAbs().maxCoeff();
      worst = std::max(worst, d);
      if (d >= 1e-10) o.require(false, std::string(name(k)) + " diff " + std::to_string(d));
    }
    o.require(used == 100, std::string(name(k)) + " short of batches");
  }
  o.detail << " max_abs_diff=" << worst;
}

double cos_gap(const SweepGrid& g, std::size_t i, std::size_t j) {
  return std::cos(g.mu_pos_axis[i]) - std::cos(g.mu_neg_axis[j]);
}

// Every cell below `near_one` must be >= 0.99 and every cell above `near_zero` <= 0.01.
void dichotomy(Outcome& o, const SweepGrid& g, const std::string& label, double near_one, double near_zero) {
  std::size_t bad_one = 0, bad_zero = 0, n_one = 0, n_zero = 0;
  for (std::size_t i = 0; i < g.mu_pos_axis.size(); ++i) {
    for (std::size_t j = 0; j < g.mu_neg_axis.size(); ++j) {
      const double v = g.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      const double gap = cos_gap(g, i, j);
      if (gap < near_one) {
        ++n_one;
        bad_one += v < 0.99 ? 1 : 0;
      }
      if (gap > near_zero) {
        ++n_zero;
        bad_zero += v > 0.01 ? 1 : 0;
      }
    }
  }
  o.require(bad_one == 0, label + " near-one violations " + std::to_string(bad_one) + "/" + std::to_string(n_one));
  o.require(bad_zero == 0,
            label + " near-zero violations " + std::to_string(bad_zero) + "/" + std::to_string(n_zero));
}

void gd_heatmaps_at_scale(Outcome& o) {
  const auto t0 = std::chrono::steady_clock::now();
  SweepProtocol proto;
  proto.seed = 2024;
  const LossParams p = LossParams::defaults();
  const LossKind kinds[] = {LossKind::kMpt, LossKind::kInfo, LossKind::kArc};
  const auto grids = gd_heatmaps(kinds, proto, p);
  const SweepGrid& mpt = grids[0];

  std::size_t diag_bad = 0, far_bad = 0, far_n = 0;
  double diag_min = 1.0, far_max = 0.0;
  for (std::size_t i = 0; i < mpt.mu_pos_axis.size(); ++i) {
    const std::size_t jd = nearest_index(mpt.mu_neg_axis, mpt.mu_pos_axis[i]);
    const double d = mpt.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(jd));
    diag_min = std::min(diag_min, d);
    diag_bad += d < 0.99 ? 1 : 0;
    for (std::size_t j = 0; j < mpt.mu_neg_axis.size(); ++j) {
      if (cos_gap(mpt, i, j) > *p.m + 0.2) {
        const double v = mpt.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
        ++far_n;
        far_max = std::max(far_max, v);
        far_bad += v > 0.01 ? 1 : 0;
      }
    }
  }
  o.require(diag_bad == 0, "MPT diagonal cells below 0.99: " + std::to_string(diag_bad));
  o.require(far_bad == 0, "MPT far cells above 0.01: " + std::to_string(far_bad) + "/" + std::to_string(far_n));
  dichotomy(o, grids[1], "INFO", kInfoNearOneBelowGap, kInfoNearZeroAboveGap);
  dichotomy(o, grids[2], "ARC", kArcNearOneBelowGap, kArcNearZeroAboveGap);
  const double secs = seconds_since(t0);
  o.require(secs <= 600.0, "runtime");
  o.detail << " mpt_diag_min=" << diag_min << " mpt_far_max=" << far_max << " seconds=" << secs;
}

void weight_curves(Outcome& o) {
  SweepProtocol proto;
  proto.seed = 2025;
  const std::vector<double> taus(std::begin(kCurveTaus), std::end(kCurveTaus));
  const auto c = weight_fraction_curve(LossKind::kInfo, kPi / 6, taus, proto);
  const auto cols = c.fraction.cols();

  std::size_t order_bad = 0, sharp_bad = 0, pin_bad = 0;
  double sharp_min = 1.0;
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index t = 2; t < c.fraction.rows(); ++t) {
      if (c.fraction(t, j) > c.fraction(t - 1, j) + 0.01) ++order_bad;
    }
    sharp_min = std::min(sharp_min, c.fraction(0, j));
    if (!(c.fraction(0, j) > 0.99)) ++sharp_bad;
    for (Eigen::Index t = 0; t < c.fraction.rows(); ++t) {
      const double mean = kCurveMean[t * cols + j], sd = kCurveSd[t * cols + j];
      const double se = std::sqrt(sd * sd / static_cast<double>(proto.n_batches) + sd * sd / kOracleCurveBatches);
      if (std::abs(c.fraction(t, j) - mean) > 5 * se + 1e-12) ++pin_bad;
    }
  }
  o.require(order_bad == 0, "non-monotone points " + std::to_string(order_bad));
  o.require(sharp_bad == 0, "tau=0.001 points at or below 0.99: " + std::to_string(sharp_bad) + "/" +
                                std::to_string(cols));
  o.require(pin_bad == 0, "points off the oracle by > 5 se: " + std::to_string(pin_bad));
  o.detail << " min_fraction_tau_0.001=" << sharp_min;
}

void dynamic_ratios(Outcome& o) {
  SweepProtocol proto;
  proto.seed = 2026;
  for (LossKind k : {LossKind::kArc, LossKind::kMet}) {
    const auto g = ratio_heatmap(k, proto, LossParams::defaults());
    double lo = std::numeric_limits<double>::infinity(), hi = -lo, met_lo = lo;
    std::size_t outside = 0, below = 0, unmasked = 0;
    for (std::size_t i = 0; i < g.mu_pos_axis.size(); ++i) {
      for (std::size_t j = 0; j < g.mu_neg_axis.size(); ++j) {
        if (g.masked(i, j)) continue;
        ++unmasked;
        const double v = g.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
        lo = std::min(lo, v);
        hi = std::max(hi, v);
        outside += (v < 0.9 || v > 2.2) ? 1 : 0;
        if (k == LossKind::kMet && g.mu_neg_axis[j] > g.mu_pos_axis[i]) {
          met_lo = std::min(met_lo, v);
          below += v < 1.0 - 0.02 ? 1 : 0;
        }
      }
    }
    const std::string label(name(k));
    o.require(unmasked > 0, label + " has no unmasked cells");
    o.require(outside == 0, label + " cells outside [0.9, 2.2]: " + std::to_string(outside));
    if (k == LossKind::kMet) {
      o.require(below == 0, "MET cells below 0.98: " + std::to_string(below) + "/" + std::to_string(unmasked));
      o.detail << " met_min_above_diagonal=" << met_lo;
    }
    o.detail << " " << label << "_range=[" << lo << ", " << hi << "] unmasked=" << unmasked;
  }
}

void lemma_checks(Outcome& o) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto sweep = verify_closed_form(10000, 6);
  o.require(sweep.mismatches == 0, "oracle mismatches " + std::to_string(sweep.mismatches));

  double collapse = 0.0;
  for (int a = 1; a < 20; ++a) {
    for (int b = 1; b < 20; ++b) {
      for (double lambda : {0.05, 0.5, 1.0, 4.0}) {
        LemmaConfig c;
        c.theta_pos = kPi * a / 20;
        c.theta_neg = kPi * b / 20;
        c.alpha = 0.0;
        c.lambda = lambda;
        collapse = std::max(collapse, std::abs(r_min_closed_form(c) - std::sin(c.theta_neg) / std::sin(c.theta_pos)));
      }
    }
  }
  o.require(collapse <= 1e-12, "alpha=0 collapse error " + std::to_string(collapse));

  // Satisfaction holds exactly on [low, high]; delta decreases up to the vertex.
  Xoshiro256 rng(7);
  std::size_t monotone_bad = 0;
  for (int k = 0; k < 2000; ++k) {
    LemmaConfig c = sample_feasible_config(rng);
    const auto roots = ratio_roots(c);
    const double vertex = 0.5 * (roots.low + roots.high);
    const double start = roots.low - 2.0 - std::abs(roots.low);
    double prev = std::numeric_limits<double>::infinity();
    const int steps = 200;
    for (int s = 0; s <= steps; ++s) {
      c.r = start + (roots.high + 1.0 - start) * s / steps;
      const auto sat = satisfied(c);
      const double margin = 1e-9 * (1.0 + std::abs(*c.r));
      if (*c.r < roots.low - margin || *c.r > roots.high + margin) monotone_bad += sat.satisfied ? 1 : 0;
      if (*c.r > roots.low + margin && *c.r < roots.high - margin) monotone_bad += sat.satisfied ? 0 : 1;
      if (*c.r <= vertex) {
        monotone_bad += sat.delta > prev + 1e-12 ? 1 : 0;
        prev = sat.delta;
      }
    }
  }
  o.require(monotone_bad == 0, "monotonicity violations " + std::to_string(monotone_bad));
  const double secs = seconds_since(t0);
  o.require(secs < 30.0, "runtime");
  o.detail << " max_abs_diff=" << sweep.max_abs_diff << " collapse_err=" << collapse << " seconds=" << secs;
}

struct SeedRuns {
  std::uint64_t seed = 0;
  std::vector<LabeledTrace> traces;
};

// Baseline (m=0.3, tau=0.05, r=1) is shared by all three axes.
std::vector<SeedRuns> run_trainer(double& secs) {
  const auto t0 = std::chrono::steady_clock::now();
  const double inf = std::numeric_limits<double>::infinity();
  struct Job {
    std::size_t seed_index;
    AblationAxis axis;
    double value;
    bool baseline;
  };
  const std::vector<std::uint64_t> seeds{1, 2, 3};
  std::vector<Job> jobs;
  for (std::size_t s = 0; s < seeds.size(); ++s) {
    jobs.push_back({s, AblationAxis::kGd, 0.3, true});
    for (double m : {0.6, 1.0, inf}) jobs.push_back({s, AblationAxis::kGd, m, false});
    for (double r : {0.5, 2.0}) jobs.push_back({s, AblationAxis::kRatio, r, false});
    jobs.push_back({s, AblationAxis::kWeight, 3.0, false});
  }
  std::vector<TrainTrace> traces(jobs.size());
  parallel_for(jobs.size(), [&](std::size_t k) {
    const Job& j = jobs[k];
    TrainerConfig c;
    c.seed = seeds[j.seed_index];
    if (j.axis == AblationAxis::kGd) c.params.m = j.value;
    if (j.axis == AblationAxis::kRatio) c.params.r = j.value;
    if (j.axis == AblationAxis::kWeight) c.params.tau = j.value;
    traces[k] = train(c).trace;
  });

  std::vector<SeedRuns> out(seeds.size());
  for (std::size_t s = 0; s < seeds.size(); ++s) out[s].seed = seeds[s];
  for (std::size_t k = 0; k < jobs.size(); ++k) {
    const Job& j = jobs[k];
    auto& runs = out[j.seed_index].traces;
    runs.push_back({j.axis, j.value, j.baseline, traces[k]});
    if (j.baseline) {
      runs.push_back({AblationAxis::kRatio, 1.0, true, traces[k]});
      runs.push_back({AblationAxis::kWeight, 0.05, true, traces[k]});
    }
  }
  secs = seconds_since(t0);
  return out;
}

const ConjectureCheck* find(const ConjectureReport& r, const std::string& id) {
  for (const auto& c : r.checks) {
    if (c.id == id) return &c;
  }
  return nullptr;
}

void conjectures(Outcome& c7, Outcome& c8, const std::vector<SeedRuns>& runs, double secs) {
  for (const auto& seed : runs) {
    const auto report = evaluate_conjectures(seed.traces);
    const std::string tag = "seed " + std::to_string(seed.seed) + " ";
    for (const char* id : {"C1", "C2", "C3"}) {
      const auto* c = find(report, id);
      c7.require(c && c->passed, tag + id);
    }
    for (const char* id : {"gd_trend", "weight_collapse"}) {
      const auto* c = find(report, id);
      c8.require(c && c->passed, tag + id);
      if (c) {
        for (const auto& [k, v] : c->numbers) c8.detail << " s" << seed.seed << ":" << k << "=" << v;
      }
    }
    if (const auto* c = find(report, "C1")) {
      for (const auto& [k, v] : c->numbers) c7.detail << " s" << seed.seed << ":" << k << "=" << v;
    }
  }
  c7.require(secs <= 300.0, "runtime");
  c7.detail << " seconds=" << secs;
}

void table_components(Outcome& o) {
  std::size_t cells = 0;
  double worst = 0.0;
  for (LossKind k : kAllLossKinds) {
    for (std::uint64_t s = 0; s < 100; ++s) {
      const EmbeddingBatch b = random_batch(8, 16, 9000 + s);
      const auto parts = decompose(k, b, LossParams::defaults());
      const auto table = testing::table_cells(k, b, LossParams::defaults());
      for (Eigen::Index i = 0; i < b.size(); ++i) {
        const double gd = parts.gd[static_cast<std::size_t>(i)];
        if (is_unmodified_ineffective(k) && gd != 1.0) o.require(false, std::string(name(k)) + " gd != 1");
        if (rel(gd, table.gd[static_cast<std::size_t>(i)]) > 1e-12) o.require(false, std::string(name(k)) + " gd cell");
        for (Eigen::Index j = 0; j < b.size(); ++j) {
          const double dw = rel(parts.weights(i, j), table.weights(i, j));
          const double dr = rel(parts.ratios(i, j), table.ratios(i, j));
          worst = std::max({worst, dw, dr});
          cells += 2;
          if (dw > 1e-10 || dr > 1e-10) o.require(false, std::string(name(k)) + " weight/ratio cell");
        }
      }
      if (table.ratio_diag) {
        const double d = (*parts.ratio_diag - *table.ratio_diag).cwiseAbs().maxCoeff();
        worst = std::max(worst, d);
        if (d > 1e-10) o.require(false, std::string(name(k)) + " ratio diagonal");
      }
    }
  }
  o.detail << " cells=" << cells << " max_rel_diff=" << worst;
}

}  // namespace

int main() {
  std::vector<std::pair<std::string, Outcome>> results(9);
  const char* titles[] = {"gradient correctness",   "reconstruction identity", "gd heatmaps",
                          "hardest-negative weight", "dynamic ratios",          "minimum ratio lemma",
                          "training conjectures",    "ablation trends",         "table components"};
  for (std::size_t k = 0; k < 9; ++k) results[k].first = titles[k];

  auto guarded = [](Outcome& o, const std::function<void()>& body) {
    try {
      body();
    } catch (const std::exception& e) {
      o.require(false, std::string("exception: ") + e.what());
    }
  };
  auto report = [&](std::size_t k) {
    const auto& [title, o] = results[k];
    std::printf("%s criterion %zu (%s):%s\n", o.passed ? "PASS" : "FAIL", k + 1, title.c_str(),
                o.detail.str().c_str());
    std::fflush(stdout);
  };

  guarded(results[0].second, [&] { gradient_correctness(results[0].second); });
  report(0);
  guarded(results[1].second, [&] { reconstruction_identity(results[1].second); });
  report(1);
  guarded(results[2].second, [&] { gd_heatmaps_at_scale(results[2].second); });
  report(2);
  guarded(results[3].second, [&] { weight_curves(results[3].second); });
  report(3);
  guarded(results[4].second, [&] { dynamic_ratios(results[4].second); });
  report(4);
  guarded(results[5].second, [&] { lemma_checks(results[5].second); });
  report(5);
  guarded(results[6].second, [&] {
    double secs = 0.0;
    const auto runs = run_trainer(secs);
    conjectures(results[6].second, results[7].second, runs, secs);
  });
  if (!results[6].second.passed && results[7].second.detail.str().empty()) results[7].second.passed = false;
  report(6);
  report(7);
  guarded(results[8].second, [&] { table_components(results[8].second); });
  report(8);

  bool all = true;
  for (const auto& [title, o] : results) all = all && o.passed;
  return all ? 0 : 1;
}
