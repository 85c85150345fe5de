#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>

#include "cotsched/error.hpp"
#include "cotsched/pipeline.hpp"

namespace cotsched {

namespace {

std::string trim(std::string_view s) {
  auto first = std::find_if_not(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
  auto last = std::find_if_not(s.rbegin(), s.rend(), [](unsigned char c) { return std::isspace(c); }).base();
  return first < last ? std::string(first, last) : std::string();
}

std::string unquote(const std::string& s) {
  if (s.size() >= 2 && (s.front() == '"' || s.front() == '\'') && s.back() == s.front())
    return s.substr(1, s.size() - 2);
  return s;
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double x = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw UsageError("config key \"" + key + "\": expected a number, got \"" + v + "\"");
  }
}

std::uint64_t to_uint(const std::string& key, const std::string& v) {
  std::uint64_t x = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc() || ptr != v.data() + v.size())
    throw UsageError("config key \"" + key + "\": expected a nonnegative integer, got \"" + v + "\"");
  return x;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw UsageError("config key \"" + key + "\": expected true or false, got \"" + v + "\"");
}

}  // namespace

void apply_config_entry(PipelineConfig& c, const std::string& key, const std::string& raw) {
  const std::string v = unquote(trim(raw));
  if (key == "corpus") c.corpus = v;
  else if (key == "out") c.out = v;
  else if (key == "lenient") c.lenient = to_bool(key, v);
  else if (key == "synthetic_logprobs") c.synthetic_logprobs = to_uint(key, v);
  else if (key == "seed") { c.seed = to_uint(key, v); c.seed_set = true; }
  else if (key == "embedding_dim") c.embedding_dim = to_uint(key, v);
  else if (key == "alpha") c.alpha = to_double(key, v);
  else if (key == "tau") c.tau = to_double(key, v);
  else if (key == "weigh_learning_rate") c.weigh_learning_rate = to_double(key, v);
  else if (key == "prefix_samples") c.prefix_samples = to_uint(key, v);
  else if (key == "weigh_epochs") c.weigh_epochs = to_uint(key, v);
  else if (key == "batch_size") c.batch_size = to_uint(key, v);
  else if (key == "embed_dim") c.embed_dim = to_uint(key, v);
  else if (key == "hidden_dim") c.hidden_dim = to_uint(key, v);
  else if (key == "gradient_clip") c.gradient_clip = to_double(key, v);
  else if (key == "predictor_warmup") c.predictor_warmup = to_uint(key, v);
  else if (key == "epochs") c.epochs = to_uint(key, v);
  else if (key == "T") c.terminal_stage = to_uint(key, v);
  else if (key == "p") c.p = to_double(key, v);
  else if (key == "c0_fraction") c.c0_fraction = to_double(key, v);
  else if (key == "delta_s") c.step_reduction = to_uint(key, v);
  else if (key == "K") c.clusters = to_uint(key, v);
  else if (key == "beta") c.beta = to_double(key, v);
  else if (key == "epsilon") c.epsilon = to_double(key, v);
  else if (key == "simulate") c.simulate = to_bool(key, v);
  else if (key == "student_learning_rate") c.student_learning_rate = to_double(key, v);
  else throw UsageError("unknown config key \"" + key + "\"");
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("config not found: " + path.string());
  PipelineConfig config;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string t = trim(line);
    if (t.empty() || t.front() == '[') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw UsageError(path.string() + ":" + std::to_string(lineno) + ": expected key = value");
    apply_config_entry(config, trim(std::string_view(t).substr(0, eq)), t.substr(eq + 1));
  }
  // Relative paths resolve against the config file's directory.
  const auto base = path.parent_path();
  if (!config.corpus.empty() && config.corpus.is_relative()) config.corpus = base / config.corpus;
  if (config.out.is_relative()) config.out = base / config.out;
  return config;
}

std::size_t PipelineConfig::resolved_terminal_stage() const {
  return terminal_stage ? terminal_stage : std::max<std::size_t>(1, epochs / 2);
}

void PipelineConfig::validate() const {
  if (!seed_set) throw UsageError("a seed is required (config key \"seed\" or --seed)");
  if (!(alpha >= 0.0)) throw UsageError("alpha must be nonnegative");
  if (!(tau > 0.0)) throw UsageError("tau must be positive");
  if (!(weigh_learning_rate > 0.0)) throw UsageError("weigh_learning_rate must be positive");
  if (batch_size == 0) throw UsageError("batch_size must be positive");
  if (embed_dim == 0 || hidden_dim == 0 || embedding_dim == 0) throw UsageError("dimensions must be positive");
  if (!(gradient_clip >= 0.0)) throw UsageError("gradient_clip must be nonnegative");
  if (predictor_warmup > weigh_epochs) throw UsageError("predictor_warmup must not exceed weigh_epochs");
  if (epochs == 0) throw UsageError("epochs must be positive");
  if (resolved_terminal_stage() > epochs) throw UsageError("T must not exceed epochs");
  if (!(p > 0.0)) throw UsageError("p must be positive");
  if (!(c0_fraction >= 0.0 && c0_fraction <= 1.0)) throw UsageError("c0_fraction must lie in [0,1]");
  if (step_reduction == 0) throw UsageError("delta_s must be positive");
  if (clusters == 0) throw UsageError("K must be positive");
  if (!(beta >= 0.0)) throw UsageError("beta must be nonnegative");
  if (!(epsilon > 0.0 && epsilon < 0.5)) throw UsageError("epsilon must lie in (0, 1/2)");
  if (!(student_learning_rate > 0.0)) throw UsageError("student_learning_rate must be positive");
}

}  // namespace cotsched
