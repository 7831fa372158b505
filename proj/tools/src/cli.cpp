#include "gradlens/cli/cli.hpp"

#include <CLI11.hpp>
#include <cmath>
#include <filesystem>
#include <json.hpp>
#include <map>
#include <numbers>

#include "gradlens/cli/config.hpp"
#include "gradlens/cli/io.hpp"
#include "gradlens/lemma.hpp"
#include "gradlens/parallel.hpp"
#include "gradlens/paradigm.hpp"
#include "gradlens/simulator.hpp"
#include "gradlens/trainer.hpp"

#ifndef GRADLENS_VERSION
#define GRADLENS_VERSION "unknown"
#endif

namespace gradlens::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Thrown for problems the user must fix in the invocation.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

json number(double x) { return std::isfinite(x) ? json(x) : json(format_double(x)); }

std::string dashed(std::string key) {
  for (auto& c : key) c = c == '_' ? '-' : static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return key;
}

json params_json(const LossParams& p) {
  json out = json::object();
  for (const auto& [key, value] : {std::pair{"tau", p.tau}, {"u", p.u}, {"m", p.m}, {"nu_u", p.nu_u},
                                   {"nu_B", p.nu_B}, {"nu_V1", p.nu_V1}, {"nu_V2", p.nu_V2},
                                   {"gamma", p.gamma}, {"r", p.r}}) {
    if (value) out[key] = number(*value);
  }
  return out;
}

void write_manifest(const fs::path& path, const std::string& command, const json& config,
                    const std::vector<fs::path>& outputs, const json& extra = json::object()) {
  json doc{{"tool", "gradlens"}, {"version", GRADLENS_VERSION}, {"command", command}, {"config", config}};
  json files = json::array();
  for (const auto& p : outputs) files.push_back(p.string());
  doc["outputs"] = files;
  for (const auto& [k, v] : extra.items()) doc[k] = v;
  write_atomic(path, doc.dump(2) + '\n');
}

fs::path sibling(const fs::path& path, const std::string& suffix) {
  fs::path out = path;
  out.replace_extension();
  out += suffix;
  return out;
}

// Loss parameter flags shared by several commands: --tau, --m, --nu-b, ...
struct ParamFlags {
  std::map<std::string, std::string> values;

  void add_to(CLI::App& app) {
    for (const auto& key : param_keys()) {
      app.add_option("--" + dashed(key), values[key], "loss parameter " + key);
    }
  }

  LossParams resolve() const {
    LossParams p = LossParams::defaults();
    for (const auto& [key, value] : values) {
      if (!value.empty()) apply_param(p, key, value);
    }
    return p;
  }
};

LossKind kind_arg(const std::string& text) {
  const auto kind = parse_loss_kind(text);
  if (!kind) throw UsageError("unknown loss kind '" + text + "'");
  return *kind;
}

// ---------------------------------------------------------------- gradcheck

struct GradcheckArgs {
  std::string kind;
  std::size_t trials = 100;
  std::size_t n = 8;
  std::size_t d = 16;
  std::uint64_t seed = 0;
  double tol = 1e-5;
  double epsilon = 1e-6;
  std::string out;
  ParamFlags params;
};

int cmd_gradcheck(const GradcheckArgs& a, std::ostream& out) {
  std::vector<LossKind> kinds;
  if (a.kind == "all") {
    kinds.assign(kAllLossKinds.begin(), kAllLossKinds.end());
  } else {
    kinds.push_back(kind_arg(a.kind));
  }
  if (a.trials < 1 || a.n < 2 || a.d < 2) throw UsageError("need trials >= 1, n >= 2 and d >= 2");
  if (!(a.tol > 0.0)) throw UsageError("--tol must be positive");
  const LossParams params = a.params.resolve();
  for (auto k : kinds) params.validate_for(k);

  GradCheckOptions options;
  options.epsilon = a.epsilon;
  options.tolerance = a.tol;
  bool all_ok = true;
  json results = json::array();
  for (auto k : kinds) {
    const auto report = check(k, a.trials, static_cast<Eigen::Index>(a.n), static_cast<Eigen::Index>(a.d),
                              params, a.seed, options);
    const bool ok = report.n_checked > 0 && report.max_rel_error < a.tol;
    all_ok = all_ok && ok;
    json obj{{"kind", std::string(name(k))},
             {"max_rel_error", report.max_rel_error},
             {"mean_rel_error", report.mean_rel_error},
             {"n_checked", report.n_checked},
             {"n_rows", report.n_rows},
             {"n_boundary_skipped", report.n_boundary_skipped},
             {"n_richardson", report.n_richardson},
             {"epsilon", report.epsilon},
             {"tolerance", a.tol},
             {"passed", ok}};
    out << obj.dump() << '\n';
    results.push_back(obj);
  }
  if (!a.out.empty()) {
    const fs::path path(a.out);
    write_atomic(path, json{{"results", results}, {"passed", all_ok}}.dump(2) + '\n');
    json config{{"kind", a.kind}, {"trials", a.trials}, {"n", a.n}, {"d", a.d}, {"seed", a.seed},
                {"tol", a.tol}, {"epsilon", a.epsilon}, {"params", params_json(params)}};
    write_manifest(sibling(path, ".manifest.json"), "gradcheck", config, {path});
  }
  return all_ok ? kExitOk : kExitFailure;
}

// ---------------------------------------------------------------- simulate

struct SimulateArgs {
  std::string kind;
  std::size_t grid = 100;
  std::size_t batches = 1000;
  std::size_t negatives = 127;
  double sigma_pos = 0.05;
  double sigma_neg = 0.10;
  std::uint64_t seed = 0;
  std::string taus;
  double mu_pos = std::numbers::pi / 6.0;
  std::string out;
  ParamFlags params;
};

int cmd_simulate(const std::string& target, const SimulateArgs& a, std::ostream& out) {
  const LossKind kind = kind_arg(a.kind);
  SweepProtocol protocol;
  protocol.n_grid = a.grid;
  protocol.n_batches = a.batches;
  protocol.n_negatives = a.negatives;
  protocol.sigma_pos = a.sigma_pos;
  protocol.sigma_neg = a.sigma_neg;
  protocol.seed = a.seed;
  protocol.validate();
  const LossParams params = a.params.resolve();

  const fs::path path = a.out.empty() ? fs::path(target + "_" + std::string(name(kind)) + ".csv") : fs::path(a.out);
  json config{{"target", target},
              {"kind", std::string(name(kind))},
              {"grid", a.grid},
              {"batches", a.batches},
              {"negatives", a.negatives},
              {"sigma_pos", a.sigma_pos},
              {"sigma_neg", a.sigma_neg},
              {"seed", a.seed},
              {"params", params_json(params)}};

  std::string csv;
  std::size_t rows = 0;
  if (target == "weight") {
    if (a.taus.empty()) throw UsageError("simulate weight needs --taus");
    const auto taus = parse_list(a.taus, "--taus");
    const auto curves = weight_fraction_curve(kind, a.mu_pos, taus, protocol);
    csv = curves_csv(curves);
    rows = taus.size() * curves.mu_neg_axis.size();
    config["taus"] = taus;
    config["mu_pos"] = a.mu_pos;
  } else {
    params.validate_for(kind);
    const SweepGrid grid = target == "gd" ? gd_heatmap(kind, protocol, params) : ratio_heatmap(kind, protocol, params);
    csv = grid_csv(grid);
    rows = grid.mu_pos_axis.size() * grid.mu_neg_axis.size();
  }
  write_atomic(path, csv);
  write_manifest(sibling(path, ".manifest.json"), "simulate " + target, config, {path});
  out << "wrote " << rows << " rows to " << path.string() << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------- lemma

struct LemmaArgs {
  std::size_t configs = 0;
  std::uint64_t seed = 0;
  double tol = 1e-6;
  std::string embeddings;
  double lambda = 1.0;
  std::size_t bins = 50;
  std::size_t batch_size = 0;
  std::string out;
};

int cmd_lemma_verify(const LemmaArgs& a, std::ostream& out) {
  if (a.configs < 1) throw UsageError("--configs must be at least 1");
  const LemmaSweep sweep = verify_closed_form(a.configs, a.seed, a.tol);
  json report{{"configs", sweep.configs},
              {"mismatches", sweep.mismatches},
              {"max_abs_diff", sweep.max_abs_diff},
              {"tolerance", sweep.tolerance},
              {"passed", sweep.mismatches == 0}};
  out << report.dump() << '\n';
  if (!a.out.empty()) {
    const fs::path path(a.out);
    write_atomic(path, report.dump(2) + '\n');
    write_manifest(sibling(path, ".manifest.json"), "lemma verify",
                   json{{"configs", a.configs}, {"seed", a.seed}, {"tol", a.tol}}, {path});
  }
  return sweep.mismatches == 0 ? kExitOk : kExitFailure;
}

int cmd_lemma_distribution(const LemmaArgs& a, std::ostream& out) {
  if (!(a.lambda > 0.0)) throw UsageError("--lambda must be positive");
  if (a.bins < 1) throw UsageError("--bins must be at least 1");
  const EmbeddingBatch all = decode_embeddings(read_file(a.embeddings));
  std::vector<EmbeddingBatch> batches;
  const auto n = static_cast<std::size_t>(all.size());
  const std::size_t size = a.batch_size == 0 ? n : a.batch_size;
  if (size < 2 || size > n) throw UsageError("--batch-size must lie in [2, N] (0 for one batch)");
  for (std::size_t start = 0; start + size <= n; start += size) {
    const auto s = static_cast<Eigen::Index>(start);
    const auto len = static_cast<Eigen::Index>(size);
    batches.emplace_back(all.anchors().middleRows(s, len), all.positives().middleRows(s, len));
  }
  const auto hist = min_ratio_distribution(batches, a.lambda, a.bins);

  const fs::path path = a.out.empty() ? fs::path("min_ratio.csv") : fs::path(a.out);
  write_atomic(path, histogram_csv(hist));
  const fs::path side = sibling(path, ".json");
  json sidecar{{"skipped", hist.skipped},
               {"infeasible", hist.infeasible},
               {"lambda", hist.lambda},
               {"values", hist.values.size()},
               {"fraction_above_1", hist.fraction_above(1.0)}};
  write_atomic(side, sidecar.dump(2) + '\n');
  write_manifest(sibling(path, ".manifest.json"), "lemma distribution",
                 json{{"embeddings", a.embeddings}, {"lambda", a.lambda}, {"bins", a.bins},
                      {"batch_size", a.batch_size}},
                 {path, side});
  out << "wrote " << hist.counts.size() << " bins to " << path.string() << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  std::string config;
  std::uint64_t seed = 0;
  std::string ablate;
  std::string out_dir = "train_out";
  std::string dump;
  std::vector<std::string> sets;
  std::map<std::string, std::string> flags;
};

struct Variant {
  std::string label;
  LabeledTrace labeled;
  TrainerConfig config;
  bool has_axis = false;
};

std::vector<Variant> plan_variants(const TrainerConfig& base, const std::string& ablate) {
  if (ablate.empty()) {
    Variant v;
    v.label = "baseline";
    v.config = base;
    v.labeled.baseline = true;
    return {v};
  }
  const auto colon = ablate.find(':');
  if (colon == std::string::npos) throw UsageError("--ablate expects axis:v1,v2,...");
  const std::string axis = ablate.substr(0, colon);
  auto values = parse_list(ablate.substr(colon + 1), "--ablate");

  AblationAxis kind;
  std::optional<double> base_value;
  if (axis == "gd") {
    kind = AblationAxis::kGd;
    base_value = base.params.m;
    if (std::find_if(values.begin(), values.end(), [](double v) { return std::isinf(v) && v > 0; }) ==
        values.end()) {
      values.push_back(std::numeric_limits<double>::infinity());
    }
  } else if (axis == "weight") {
    kind = AblationAxis::kWeight;
    base_value = base.params.tau;
  } else if (axis == "ratio") {
    kind = AblationAxis::kRatio;
    base_value = base.params.r;
  } else {
    throw UsageError("unknown ablation axis '" + axis + "' (gd, weight or ratio)");
  }

  std::vector<Variant> out;
  for (double value : values) {
    Variant v;
    v.config = base;
    v.has_axis = true;
    if (kind == AblationAxis::kGd) v.config.params.m = value;
    if (kind == AblationAxis::kWeight) v.config.params.tau = value;
    if (kind == AblationAxis::kRatio) v.config.params.r = value;
    v.label = axis + "_" + format_double(value);
    v.labeled.axis = kind;
    v.labeled.value = value;
    v.labeled.baseline = base_value && *base_value == value;
    out.push_back(std::move(v));
  }
  return out;
}

int cmd_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  TrainerConfig base;
  if (!a.config.empty()) {
    for (const auto& [key, value] : load_config(a.config)) apply_setting(base, key, value);
  }
  for (const auto& [key, value] : a.flags) {
    if (!value.empty()) apply_setting(base, key, value);
  }
  for (const auto& s : a.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw UsageError("--set expects key=value");
    apply_setting(base, s.substr(0, eq), s.substr(eq + 1));
  }
  base.seed = a.seed;
  base.validate();

  auto variants = plan_variants(base, a.ablate);
  for (const auto& v : variants) v.config.validate();

  std::vector<std::optional<TrainResult>> results(variants.size());
  std::vector<std::string> failures(variants.size());
  parallel_for(variants.size(), [&](std::size_t i) {
    try {
      results[i] = train(variants[i].config);
    } catch (const DivergenceDetected& e) {
      failures[i] = e.what();
      variants[i].labeled.trace = e.partial_trace();
    }
  });

  const fs::path dir(a.out_dir);
  std::vector<fs::path> outputs;
  json digests = json::object();
  bool diverged = false;
  for (std::size_t i = 0; i < variants.size(); ++i) {
    auto& v = variants[i];
    if (results[i]) v.labeled.trace = results[i]->trace;
    const fs::path path = dir / ("trace_" + v.label + ".csv");
    write_atomic(path, trace_csv(v.labeled.trace));
    outputs.push_back(path);
    digests[v.label] = v.labeled.trace.digest;
    if (!failures[i].empty()) {
      diverged = true;
      err << v.label << ": " << failures[i] << '\n';
    }
  }

  json extra{{"digests", digests}};
  int code = diverged ? kExitFailure : kExitOk;
  if (!diverged && variants.front().has_axis) {
    std::vector<LabeledTrace> labeled;
    for (const auto& v : variants) labeled.push_back(v.labeled);
    json checks = json::array();
    bool passed = false;
    try {
      const auto report = evaluate_conjectures(labeled);
      passed = report.all_passed();
      for (const auto& c : report.checks) {
        json numbers = json::object();
        for (const auto& [k, value] : c.numbers) numbers[k] = number(value);
        checks.push_back({{"id", c.id}, {"passed", c.passed}, {"detail", c.detail}, {"numbers", numbers}});
        out << c.id << ": " << (c.passed ? "pass" : "fail") << '\n';
      }
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kMissingVariant) throw;
      checks.push_back({{"id", "missing_variant"}, {"passed", false}, {"detail", e.what()}});
    }
    const fs::path report_path = dir / "conjectures.json";
    write_atomic(report_path, json{{"checks", checks}, {"passed", passed}}.dump(2) + '\n');
    outputs.push_back(report_path);
    if (!passed) code = kExitFailure;
  }

  if (!a.dump.empty()) {
    std::size_t pick = 0;
    for (std::size_t i = 0; i < variants.size(); ++i) {
      if (variants[i].labeled.baseline) pick = i;
    }
    if (results[pick]) {
      const Dataset data = make_dataset(variants[pick].config);
      const fs::path path(a.dump);
      write_atomic(path, encode_embeddings(results[pick]->encoder.embed(data.holdout_view_a),
                                           results[pick]->encoder.embed(data.holdout_view_b)));
      outputs.push_back(path);
    }
  }

  json config = json::object();
  for (const auto& [key, value] : describe(base)) config[key] = value;
  if (!a.ablate.empty()) extra["ablate"] = a.ablate;
  write_atomic(dir / "resolved.toml", to_config_text(base));
  write_manifest(dir / "manifest.json", "train", config, outputs, extra);
  out << "wrote " << variants.size() << " trace(s) to " << dir.string() << '\n';
  return code;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"gradlens: gradient paradigm analysis for sentence-embedding losses"};
  app.name("gradlens");
  app.require_subcommand(1);
  app.set_version_flag("--version", GRADLENS_VERSION);

  GradcheckArgs gc;
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of analytic gradients");
  gradcheck->add_option("--kind", gc.kind, "loss kind or 'all'")->required();
  gradcheck->add_option("--trials", gc.trials, "random batches per kind");
  gradcheck->add_option("--n", gc.n, "batch size");
  gradcheck->add_option("--d", gc.d, "embedding dimension");
  gradcheck->add_option("--seed", gc.seed)->required();
  gradcheck->add_option("--tol", gc.tol, "max relative error allowed");
  gradcheck->add_option("--epsilon", gc.epsilon, "central-difference step");
  gradcheck->add_option("--out", gc.out, "JSON report path");
  gc.params.add_to(*gradcheck);

  SimulateArgs sim;
  auto* simulate = app.add_subcommand("simulate", "Monte-Carlo angle sweeps");
  simulate->require_subcommand(1);
  std::string sim_target;
  for (const std::string target : {"gd", "weight", "ratio"}) {
    auto* sub = simulate->add_subcommand(target);
    sub->add_option("--kind", sim.kind)->required();
    sub->add_option("--grid", sim.grid, "points per axis");
    sub->add_option("--batches", sim.batches, "batches per cell");
    sub->add_option("--negatives", sim.negatives, "negatives per batch");
    sub->add_option("--sigma-pos", sim.sigma_pos);
    sub->add_option("--sigma-neg", sim.sigma_neg);
    sub->add_option("--seed", sim.seed)->required();
    sub->add_option("--out", sim.out, "CSV path");
    if (target == "weight") {
      sub->add_option("--taus", sim.taus, "comma-separated temperatures")->required();
      sub->add_option("--mu-pos", sim.mu_pos, "positive mean angle (radians)");
    }
    sim.params.add_to(*sub);
    sub->callback([&sim_target, target] { sim_target = target; });
  }

  LemmaArgs lem;
  auto* lemma = app.add_subcommand("lemma", "ratio condition for moving toward the positive");
  lemma->require_subcommand(1);
  auto* verify = lemma->add_subcommand("verify", "closed form against the brute-force oracle");
  verify->add_option("--configs", lem.configs)->required();
  verify->add_option("--seed", lem.seed)->required();
  verify->add_option("--tol", lem.tol);
  verify->add_option("--out", lem.out, "JSON report path");
  auto* distribution = lemma->add_subcommand("distribution", "minimum-ratio histogram of an embedding dump");
  distribution->add_option("--embeddings", lem.embeddings)->required();
  distribution->add_option("--lambda", lem.lambda)->required();
  distribution->add_option("--bins", lem.bins);
  distribution->add_option("--batch-size", lem.batch_size, "split the dump into batches (0: one batch)");
  distribution->add_option("--out", lem.out, "CSV path");

  TrainArgs tr;
  auto* trainer = app.add_subcommand("train", "toy encoder training with optional ablation");
  trainer->add_option("--config", tr.config, "key = value config file or run manifest");
  trainer->add_option("--seed", tr.seed)->required();
  trainer->add_option("--ablate", tr.ablate, "gd:m-list | weight:tau-list | ratio:r-list");
  trainer->add_option("--out-dir", tr.out_dir);
  trainer->add_option("--dump-embeddings", tr.dump, "write holdout embeddings (.embs)");
  trainer->add_option("--set", tr.sets, "key=value override (repeatable)");
  for (const auto& key : trainer_keys()) {
    if (key != "seed") trainer->add_option("--" + dashed(key), tr.flags[key]);
  }

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (gradcheck->parsed()) return cmd_gradcheck(gc, out);
    if (simulate->parsed()) return cmd_simulate(sim_target, sim, out);
    if (verify->parsed()) return cmd_lemma_verify(lem, out);
    if (distribution->parsed()) return cmd_lemma_distribution(lem, out);
    if (trainer->parsed()) return cmd_train(tr, out, err);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const FileError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const DivergenceDetected& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return e.code() == ErrorCode::kNoSolution ? kExitFailure : kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace gradlens::cli
