// Command-line front end: train | eval | sample | replay | gradcheck | export-dot | rs-baseline.

#include "automr/automr.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

namespace fs = std::filesystem;
using namespace automr;

namespace {

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> backend;
  std::optional<std::size_t> budget;
  std::optional<std::size_t> iterations;
  std::optional<std::string> out;
};

RunConfig resolve(const CommonFlags& flags) {
  RunConfig cfg = flags.config.empty() ? RunConfig{} : load_run_config(flags.config);
  if (flags.seed) cfg.search.seed = *flags.seed;
  if (flags.backend) cfg.backend = parse_backend_kind(*flags.backend);
  if (flags.budget) cfg.search.sampler.budget = *flags.budget;
  if (flags.iterations) cfg.search.iterations = *flags.iterations;
  if (flags.out) cfg.out_dir = *flags.out;
  finalize(cfg);
  return cfg;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

PolicyParameters load_or_init(const std::string& checkpoint, const RunConfig& cfg) {
  if (checkpoint.empty()) return init_params(cfg.search.dims, cfg.search.seed);
  auto params = deserialize_checkpoint(read_file(checkpoint));
  if (params.dims.d_c != cfg.d_c)
    throw ConfigError("checkpoint d_c " + std::to_string(params.dims.d_c) + " does not match backend d_c " +
                      std::to_string(cfg.d_c));
  return params;
}

Skeleton load_structure(const std::string& path) {
  return skeleton_from_json(nlohmann::json::parse(read_file(path)));
}

int cmd_train(const RunConfig& cfg) {
  auto backend = make_backend(cfg);
  const auto data = resolve_dataset(cfg, cfg.train_path, *backend);
  const fs::path out(cfg.out_dir);
  fs::create_directories(out);
  auto sink = [&](std::size_t it, const PolicyParameters& p) {
    write_file(out / ("checkpoint_" + std::to_string(it) + ".json"), serialize_checkpoint(p));
  };
  auto result = train(data, cfg.search, *backend, sink);
  write_file(out / "final.ckpt.json", serialize_checkpoint(result.params));
  write_file(out / "learning_curve.jsonl", curve_jsonl(result.curve));
  std::cout << "iterations: " << result.curve.size() << "\n"
            << "final_20_iteration_mean_reward: " << trailing_mean_reward(result.curve, 20) << "\n"
            << "checkpoint: " << (out / "final.ckpt.json").string() << "\n";
  return 0;
}

int cmd_eval(const RunConfig& cfg, const std::string& checkpoint) {
  auto backend = make_backend(cfg);
  const auto data = resolve_dataset(cfg, cfg.eval_path.empty() ? cfg.train_path : cfg.eval_path, *backend);
  const auto params = load_or_init(checkpoint, cfg);
  auto result = evaluate(data, params, *backend, cfg.search);
  const fs::path dir = fs::path(cfg.out_dir) / "eval";
  for (std::size_t k = 0; k < result.traces.size(); ++k) {
    auto doc = to_json(result.traces[k]);
    doc["reward"] = result.rewards[k];
    write_file(dir / ("trace_" + std::to_string(k) + ".json"), doc.dump(2) + "\n");
  }
  std::cout << "accuracy: " << result.accuracy << "\n";
  return 0;
}

int cmd_sample(const RunConfig& cfg, const std::string& query, const std::string& checkpoint) {
  auto backend = make_backend(cfg);
  const auto params = load_or_init(checkpoint, cfg);
  SamplerConfig sc = cfg.search.sampler;
  Rng rng = Rng(cfg.search.seed).split("sample");
  const auto trace = sample_skeleton(query, params, *backend, sc, rng);
  std::cout << to_json(trace).dump(2) << "\n";
  return 0;
}

int cmd_replay(const RunConfig& cfg, const std::string& structure_path, const std::string& query,
               const std::string& checkpoint) {
  auto backend = make_backend(cfg);
  const auto params = load_or_init(checkpoint, cfg);
  const auto structure = load_structure(structure_path);
  ReplayOptions opts;
  opts.seed = cfg.search.seed;
  opts.catalog = cfg.catalog.get();
  opts.condition_on_zero = cfg.search.sampler.condition_on_zero;
  const auto replay = forced_replay(structure, query, *backend, params, opts);
  auto doc = to_json(replay.trace);
  doc["mlp_call_count"] = replay.mlp_call_count;
  doc["structure_reproduced"] = same_structure(structure, replay.trace.skeleton);
  std::cout << doc.dump(2) << "\n";
  return same_structure(structure, replay.trace.skeleton) ? 0 : 1;
}

int cmd_gradcheck(const RunConfig& cfg, std::size_t coords, double threshold) {
  Rng rng = Rng(cfg.search.seed).split("gradcheck");
  const auto params = random_params(cfg.search.dims, rng);
  const auto features = random_features(params, rng);
  const Strategy chosen = label_at(rng.index(kNumLabels));
  const auto report = gradient_check(params, features, chosen, coords, rng);
  std::cout << "coordinates: " << report.coordinates << "\n"
            << "max_relative_error: " << report.max_relative_error << "\n"
            << "max_abs_error: " << report.max_abs_error << "\n"
            << "worst: " << report.worst << "\n";
  if (report.max_relative_error > threshold) {
    std::cerr << "gradcheck failed: " << report.max_relative_error << " > " << threshold << "\n";
    return 1;
  }
  return 0;
}

int cmd_export_dot(const std::string& input, const std::string& output) {
  const auto dot = export_dot(load_structure(input));
  if (output.empty()) {
    std::cout << dot;
  } else {
    write_file(output, dot);
  }
  return 0;
}

int cmd_rs_baseline(const RunConfig& cfg, std::size_t candidates) {
  auto backend = make_backend(cfg);
  const auto data = resolve_dataset(cfg, cfg.train_path, *backend);
  Rng rng = Rng(cfg.search.seed).split("random-search");
  const auto result = random_search_baseline(data, *backend, candidates, cfg.search, rng);
  nlohmann::json doc = {{"candidates", candidates},
                        {"best_index", result.best_index},
                        {"best_accuracy", result.best_accuracy},
                        {"best_mean_reward", result.mean_rewards[result.best_index]},
                        {"structure", to_json(result.best)}};
  write_file(fs::path(cfg.out_dir) / "rs_best.json", doc.dump(2) + "\n");
  std::cout << doc.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Query-aware meta-reasoning skeleton search"};
  app.fallthrough();
  app.require_subcommand(1);

  CommonFlags flags;
  app.add_option("--config", flags.config, "key=value run configuration file");
  app.add_option("--seed", flags.seed, "master seed");
  app.add_option("--backend", flags.backend, "mock | scripted | http")->check(CLI::IsMember({"mock", "scripted", "http"}));
  app.add_option("--budget", flags.budget, "token budget per skeleton");
  app.add_option("--iterations", flags.iterations, "training iterations");
  app.add_option("--out", flags.out, "output directory");

  std::string checkpoint, query = "What is 6 times 7?", structure, input, output;
  std::size_t coords = 200, candidates = kDefaultRandomCandidates;
  double threshold = 1e-4;

  auto* train_cmd = app.add_subcommand("train", "run the REINFORCE search");
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  eval_cmd->add_option("--checkpoint", checkpoint, "checkpoint file");
  auto* sample_cmd = app.add_subcommand("sample", "sample one skeleton and print its trace");
  sample_cmd->add_option("--query", query, "query text");
  sample_cmd->add_option("--checkpoint", checkpoint, "checkpoint file");
  auto* replay_cmd = app.add_subcommand("replay", "forced replay of a structure file");
  replay_cmd->add_option("--structure", structure, "trace or skeleton document")->required()->check(CLI::ExistingFile);
  replay_cmd->add_option("--query", query, "query text");
  replay_cmd->add_option("--checkpoint", checkpoint, "checkpoint file");
  auto* grad_cmd = app.add_subcommand("gradcheck", "finite-difference check of policy gradients");
  grad_cmd->add_option("--coords", coords, "coordinates to probe");
  grad_cmd->add_option("--threshold", threshold, "maximum tolerated relative error");
  auto* dot_cmd = app.add_subcommand("export-dot", "DOT rendering of a trace or skeleton document");
  dot_cmd->add_option("--input", input, "trace or skeleton document")->required()->check(CLI::ExistingFile);
  dot_cmd->add_option("--dot", output, "write DOT here instead of stdout");
  auto* rs_cmd = app.add_subcommand("rs-baseline", "random search over structures");
  rs_cmd->add_option("--candidates", candidates, "structures to sample");

  CLI11_PARSE(app, argc, argv);

  try {
    if (dot_cmd->parsed()) return cmd_export_dot(input, output);
    const RunConfig cfg = resolve(flags);
    if (train_cmd->parsed()) return cmd_train(cfg);
    if (eval_cmd->parsed()) return cmd_eval(cfg, checkpoint);
    if (sample_cmd->parsed()) return cmd_sample(cfg, query, checkpoint);
    if (replay_cmd->parsed()) return cmd_replay(cfg, structure, query, checkpoint);
    if (grad_cmd->parsed()) return cmd_gradcheck(cfg, coords, threshold);
    if (rs_cmd->parsed()) return cmd_rs_baseline(cfg, candidates);
  } catch (const std::exception& ex) {
    std::cerr << "automr: " << ex.what() << "\n";
    return 2;
  }
  return 1;
}
