#include "gradlens/cli/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <json.hpp>
#include <limits>
#include <sstream>

#include "gradlens/cli/io.hpp"

namespace gradlens::cli {

namespace {

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  s = s.substr(first, last - first + 1);
  if (s.size() >= 2 && (s.front() == '"' || s.front() == '\'') && s.back() == s.front()) {
    s = s.substr(1, s.size() - 2);
  }
  return s;
}

[[noreturn]] void bad(const std::string& what, const std::string& text) {
  throw Error(ErrorCode::kInvalidConfig, "bad value for " + what + ": '" + text + "'");
}

std::size_t parse_size(const std::string& text, const std::string& what) {
  return static_cast<std::size_t>(parse_unsigned(text, what));
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

}  // namespace

double parse_double(const std::string& raw, const std::string& what) {
  const std::string text = lower(trim(raw));
  if (text == "inf" || text == "+inf" || text == "infinity") return std::numeric_limits<double>::infinity();
  if (text == "-inf" || text == "-infinity") return -std::numeric_limits<double>::infinity();
  double value = 0.0;
  const char* begin = text.data() + (text.starts_with('+') ? 1 : 0);
  const auto res = std::from_chars(begin, text.data() + text.size(), value);
  if (text.empty() || res.ec != std::errc{} || res.ptr != text.data() + text.size() || std::isnan(value)) {
    bad(what, raw);
  }
  return value;
}

std::uint64_t parse_unsigned(const std::string& raw, const std::string& what) {
  const std::string text = trim(raw);
  std::uint64_t value = 0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), value);
  if (text.empty() || res.ec != std::errc{} || res.ptr != text.data() + text.size()) bad(what, raw);
  return value;
}

std::vector<double> parse_list(const std::string& text, const std::string& what) {
  std::vector<double> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) out.push_back(parse_double(item, what));
  if (out.empty()) bad(what, text);
  return out;
}

KeyValues parse_config_text(const std::string& text) {
  KeyValues out;
  std::stringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty() || line.front() == '[') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorCode::kInvalidConfig, "line " + std::to_string(lineno) + ": expected key = value");
    }
    out.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return out;
}

KeyValues load_config(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  const auto start = text.find_first_not_of(" \t\r\n");
  if (start != std::string::npos && text[start] == '{') {
    const auto doc = nlohmann::json::parse(text, nullptr, false);
    if (doc.is_discarded() || !doc.contains("config") || !doc["config"].is_object()) {
      throw Error(ErrorCode::kInvalidConfig, path.string() + ": manifest without a config object");
    }
    KeyValues out;
    for (const auto& [key, value] : doc["config"].items()) {
      out.emplace_back(key, value.is_string() ? value.get<std::string>() : value.dump());
    }
    return out;
  }
  return parse_config_text(text);
}

const std::vector<std::string>& param_keys() {
  static const std::vector<std::string> keys{"tau", "u", "m", "nu_u", "nu_B", "nu_V1", "nu_V2", "gamma", "r"};
  return keys;
}

const std::vector<std::string>& trainer_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k{"n_items",       "latent_dim",    "content_rank", "n_clusters",
                               "cluster_spread", "within_sigma", "common_offset", "embed_dim",
                               "noise_sigma",   "batch_size",    "steps",        "learning_rate",
                               "loss",          "seed",          "holdout_fraction", "encoder",
                               "encoder_width", "encoder_depth", "eval_interval", "eval_tau"};
    k.insert(k.end(), param_keys().begin(), param_keys().end());
    return k;
  }();
  return keys;
}

void apply_param(LossParams& p, const std::string& key, const std::string& value) {
  const double v = parse_double(value, key);
  if (key == "tau") p.tau = v;
  else if (key == "u") p.u = v;
  else if (key == "m") p.m = v;
  else if (key == "nu_u") p.nu_u = v;
  else if (key == "nu_B") p.nu_B = v;
  else if (key == "nu_V1") p.nu_V1 = v;
  else if (key == "nu_V2") p.nu_V2 = v;
  else if (key == "gamma") p.gamma = v;
  else if (key == "r") p.r = v;
  else throw Error(ErrorCode::kInvalidConfig, "unknown loss parameter '" + key + "'");
}

void apply_setting(TrainerConfig& c, const std::string& key, const std::string& value) {
  if (key == "n_items") c.n_items = parse_size(value, key);
  else if (key == "latent_dim") c.latent_dim = parse_size(value, key);
  else if (key == "content_rank") c.content_rank = parse_size(value, key);
  else if (key == "n_clusters") c.n_clusters = parse_size(value, key);
  else if (key == "cluster_spread") c.cluster_spread = parse_double(value, key);
  else if (key == "within_sigma") c.within_sigma = parse_double(value, key);
  else if (key == "common_offset") c.common_offset = parse_double(value, key);
  else if (key == "embed_dim") c.embed_dim = parse_size(value, key);
  else if (key == "noise_sigma") c.noise_sigma = parse_double(value, key);
  else if (key == "batch_size") c.batch_size = parse_size(value, key);
  else if (key == "steps") c.steps = parse_size(value, key);
  else if (key == "learning_rate") c.learning_rate = parse_double(value, key);
  else if (key == "seed") c.seed = parse_unsigned(value, key);
  else if (key == "holdout_fraction") c.holdout_fraction = parse_double(value, key);
  else if (key == "encoder_width") c.encoder.width = parse_size(value, key);
  else if (key == "encoder_depth") c.encoder.depth = parse_size(value, key);
  else if (key == "eval_interval") c.eval_interval = parse_size(value, key);
  else if (key == "loss") {
    const auto kind = parse_loss_kind(trim(value));
    if (!kind) bad(key, value);
    c.loss = *kind;
  } else if (key == "encoder") {
    const auto v = lower(trim(value));
    if (v == "linear") c.encoder.kind = EncoderKind::kLinear;
    else if (v == "mlp") c.encoder.kind = EncoderKind::kMlp;
    else bad(key, value);
  } else if (key == "eval_tau") {
    const auto v = lower(trim(value));
    if (v == "auto" || v.empty()) c.eval_tau.reset();
    else c.eval_tau = parse_double(value, key);
  } else {
    apply_param(c.params, key, value);
  }
}

KeyValues describe(const TrainerConfig& c) {
  auto opt = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string("unset"); };
  KeyValues out{
      {"n_items", std::to_string(c.n_items)},
      {"latent_dim", std::to_string(c.latent_dim)},
      {"content_rank", std::to_string(c.content_rank)},
      {"n_clusters", std::to_string(c.n_clusters)},
      {"cluster_spread", format_double(c.cluster_spread)},
      {"within_sigma", format_double(c.within_sigma)},
      {"common_offset", format_double(c.common_offset)},
      {"embed_dim", std::to_string(c.embed_dim)},
      {"noise_sigma", format_double(c.noise_sigma)},
      {"batch_size", std::to_string(c.batch_size)},
      {"steps", std::to_string(c.steps)},
      {"learning_rate", format_double(c.learning_rate)},
      {"loss", std::string(name(c.loss))},
      {"seed", std::to_string(c.seed)},
      {"holdout_fraction", format_double(c.holdout_fraction)},
      {"encoder", c.encoder.kind == EncoderKind::kMlp ? "mlp" : "linear"},
      {"encoder_width", std::to_string(c.encoder.width)},
      {"encoder_depth", std::to_string(c.encoder.depth)},
      {"eval_interval", std::to_string(c.eval_interval)},
      {"eval_tau", c.eval_tau ? format_double(*c.eval_tau) : std::string("auto")},
  };
  const auto& p = c.params;
  for (const auto& [key, value] : {std::pair{"tau", p.tau}, {"u", p.u}, {"m", p.m}, {"nu_u", p.nu_u},
                                   {"nu_B", p.nu_B}, {"nu_V1", p.nu_V1}, {"nu_V2", p.nu_V2},
                                   {"gamma", p.gamma}, {"r", p.r}}) {
    if (value) out.emplace_back(key, opt(value));
  }
  return out;
}

std::string to_config_text(const TrainerConfig& config) {
  std::string out;
  for (const auto& [key, value] : describe(config)) out += key + " = " + value + '\n';
  return out;
}

}  // namespace gradlens::cli
