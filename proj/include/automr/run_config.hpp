#ifndef AUTOMR_RUN_CONFIG_HPP
#define AUTOMR_RUN_CONFIG_HPP

#include "automr/backend.hpp"
#include "automr/dataset.hpp"
#include "automr/http_backend.hpp"
#include "automr/reinforce.hpp"

#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace automr {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class BackendKind { mock, scripted, http };

inline BackendKind parse_backend_kind(std::string_view name) {
  if (name == "mock") return BackendKind::mock;
  if (name == "scripted") return BackendKind::scripted;
  if (name == "http") return BackendKind::http;
  throw ConfigError("unknown backend '" + std::string(name) + "' (expected mock, scripted or http)");
}

struct RunConfig {
  SearchConfig search;
  BackendKind backend = BackendKind::mock;
  std::size_t d_c = 64;
  HttpBackendConfig http;
  ScriptedEnvSpec scripted;
  std::size_t scripted_queries = 32;
  std::string train_path;
  std::string eval_path;
  std::string catalog_path;
  std::string out_dir = "automr-out";
  std::shared_ptr<const StrategyCatalog> catalog;

  RunConfig() { search.sampler.budget = kDefaultBudget; }
};

/// Flat `section.key=value` lines; `#` starts a comment. Unknown keys are errors.
using KeyValues = std::map<std::string, std::string>;

inline KeyValues parse_key_values(std::istream& in, const std::string& origin = "config") {
  KeyValues out;
  std::string line;
  std::size_t line_no = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return std::string{};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": expected key=value");
    auto key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError(origin + ":" + std::to_string(line_no) + ": empty key");
    out[key] = trim(line.substr(eq + 1));
  }
  return out;
}

namespace detail {
template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  std::istringstream in(value);
  T v{};
  if (!(in >> v) || !(in >> std::ws).eof()) throw ConfigError("config key " + key + ": cannot parse '" + value + "'");
  return v;
}

inline bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "on") return true;
  if (value == "false" || value == "0" || value == "off") return false;
  throw ConfigError("config key " + key + ": expected true/false, got '" + value + "'");
}
}  // namespace detail

/// Applies `kv` on top of `cfg`. Relative data paths resolve against `base_dir`.
inline void apply_key_values(RunConfig& cfg, const KeyValues& kv, const std::filesystem::path& base_dir = {}) {
  using detail::parse_bool;
  using detail::parse_number;
  auto path_of = [&](const std::string& v) {
    std::filesystem::path p(v);
    if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
    return p.string();
  };
  for (const auto& [key, value] : kv) {
    try {
      if (key == "seed") cfg.search.seed = parse_number<std::uint64_t>(key, value);
      else if (key == "search.N") cfg.search.N = parse_number<std::size_t>(key, value);
      else if (key == "search.M") cfg.search.M = parse_number<std::size_t>(key, value);
      else if (key == "search.eta") cfg.search.eta = parse_number<double>(key, value);
      else if (key == "search.clip_norm") cfg.search.clip_norm = parse_number<double>(key, value);
      else if (key == "search.iterations") cfg.search.iterations = parse_number<std::size_t>(key, value);
      else if (key == "search.checkpoint_interval") cfg.search.checkpoint_interval = parse_number<std::size_t>(key, value);
      else if (key == "search.optimizer") cfg.search.optimizer = parse_optimizer(value);
      else if (key == "search.baseline") cfg.search.baseline = parse_number<double>(key, value);
      else if (key == "search.threads") cfg.search.threads = parse_number<std::size_t>(key, value);
      else if (key == "sampler.budget") cfg.search.sampler.budget = parse_number<std::size_t>(key, value);
      else if (key == "sampler.max_nodes") cfg.search.sampler.max_nodes = parse_number<std::size_t>(key, value);
      else if (key == "sampler.include_termination") cfg.search.sampler.include_termination_in_logprob = parse_bool(key, value);
      else if (key == "sampler.condition_on_zero") cfg.search.sampler.condition_on_zero = parse_bool(key, value);
      else if (key == "sampler.selection") {
        if (value == "sampled") cfg.search.sampler.selection = Selection::sampled;
        else if (value == "greedy") cfg.search.sampler.selection = Selection::greedy;
        else throw ConfigError("config key sampler.selection: expected sampled or greedy");
      }
      else if (key == "sampler.max_step_tokens") cfg.search.sampler.max_step_tokens = parse_number<std::size_t>(key, value);
      else if (key == "sampler.answer_max_tokens") cfg.search.sampler.answer_max_tokens = parse_number<std::size_t>(key, value);
      else if (key == "policy.d_s") cfg.search.dims.d_s = parse_number<std::size_t>(key, value);
      else if (key == "policy.h") cfg.search.dims.h = parse_number<std::size_t>(key, value);
      else if (key == "backend.kind") cfg.backend = parse_backend_kind(value);
      else if (key == "backend.d_c") cfg.d_c = parse_number<std::size_t>(key, value);
      else if (key == "backend.base_url") cfg.http.base_url = value;
      else if (key == "backend.model") cfg.http.model = value;
      else if (key == "backend.embedding_model") cfg.http.embedding_model = value;
      else if (key == "backend.temperature") cfg.http.temperature = parse_number<double>(key, value);
      else if (key == "backend.system_prompt") cfg.http.system_prompt = value;
      else if (key == "backend.max_in_flight") cfg.http.max_in_flight = parse_number<std::size_t>(key, value);
      else if (key == "backend.timeout_s") cfg.http.timeout = std::chrono::seconds(parse_number<long>(key, value));
      else if (key == "scripted.target") cfg.scripted.target_strategy = parse_strategy(value);
      else if (key == "scripted.gold") cfg.scripted.gold_answer = value;
      else if (key == "scripted.step_tokens") cfg.scripted.step_tokens = parse_number<std::size_t>(key, value);
      else if (key == "scripted.queries") cfg.scripted_queries = parse_number<std::size_t>(key, value);
      else if (key == "data.train") cfg.train_path = path_of(value);
      else if (key == "data.eval") cfg.eval_path = path_of(value);
      else if (key == "data.catalog") cfg.catalog_path = path_of(value);
      else if (key == "out.dir") cfg.out_dir = value;
      else throw ConfigError("unknown config key '" + key + "'");
    } catch (const std::invalid_argument& ex) {
      throw ConfigError("config key " + key + ": " + ex.what());
    }
  }
}

/// Checks referenced paths and loads the catalog override, if any.
inline void finalize(RunConfig& cfg) {
  for (const auto* p : {&cfg.train_path, &cfg.eval_path, &cfg.catalog_path}) {
    if (!p->empty() && !std::filesystem::exists(*p)) throw ConfigError("path does not exist: " + *p);
  }
  if (!cfg.catalog_path.empty()) {
    cfg.catalog = std::make_shared<const StrategyCatalog>(StrategyCatalog::from_file(cfg.catalog_path));
  }
  cfg.search.sampler.catalog = cfg.catalog.get();
  cfg.scripted.d_c = cfg.d_c;
  cfg.http.d_c = cfg.d_c;
  cfg.search.dims.d_c = cfg.d_c;
  cfg.search.check();
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  RunConfig cfg;
  apply_key_values(cfg, parse_key_values(in, path), std::filesystem::path(path).parent_path());
  return cfg;
}

inline std::unique_ptr<ReasoningBackend> make_backend(const RunConfig& cfg) {
  switch (cfg.backend) {
    case BackendKind::mock: return std::make_unique<MockBackend>(cfg.d_c);
    case BackendKind::scripted:
      return std::make_unique<ScriptedBackend>(cfg.scripted, cfg.catalog ? *cfg.catalog : StrategyCatalog::builtin());
    case BackendKind::http: return std::make_unique<HttpBackend>(cfg.http);
  }
  throw ConfigError("unsupported backend");
}

/// Query/answer pairs for the scripted environment.
inline std::vector<DatasetRecord> scripted_dataset(const ScriptedBackend& env, std::size_t count) {
  std::vector<DatasetRecord> out;
  for (std::size_t k = 0; k < count; ++k) out.push_back({env.query(k), env.spec().gold_answer, TaskKind::generic});
  return out;
}

/// Dataset at `path`, or the scripted environment's own queries when no
/// path is set and the scripted backend is selected.
inline std::vector<DatasetRecord> resolve_dataset(const RunConfig& cfg, const std::string& path,
                                                  const ReasoningBackend& backend) {
  if (!path.empty()) return load_dataset(path);
  if (const auto* env = dynamic_cast<const ScriptedBackend*>(&backend)) return scripted_dataset(*env, cfg.scripted_queries);
  throw ConfigError("no dataset configured (set data.train / data.eval)");
}

}  // namespace automr

#endif  // AUTOMR_RUN_CONFIG_HPP
