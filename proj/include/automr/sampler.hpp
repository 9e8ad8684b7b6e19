#ifndef AUTOMR_SAMPLER_HPP
#define AUTOMR_SAMPLER_HPP

#include "automr/backend.hpp"
#include "automr/policy_net.hpp"
#include "automr/rng.hpp"
#include "automr/skeleton.hpp"
#include "automr/strategy_catalog.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace automr {

enum class Termination { all_zero, budget, node_cap };

constexpr std::string_view to_string(Termination t) noexcept {
  switch (t) {
    case Termination::all_zero: return "all_zero";
    case Termination::budget: return "budget";
    case Termination::node_cap: return "node_cap";
  }
  return "?";
}

enum class Selection { sampled, greedy };

struct SamplerConfig {
  std::size_t budget = kDefaultBudget;
  std::size_t max_nodes = 64;  ///< cap on |V|, source included
  /// Whether the final all-zero round enters the training log-probability.
  bool include_termination_in_logprob = true;
  /// Whether Zero outcomes join the strategies a later decision conditions on.
  bool condition_on_zero = true;
  Selection selection = Selection::sampled;
  std::size_t max_step_tokens = 0;  ///< 0: a step is capped only by the remaining budget
  std::size_t answer_max_tokens = 256;
  TaskKind task = TaskKind::generic;
  std::uint64_t seed = 0;
  const StrategyCatalog* catalog = nullptr;  ///< nullptr: built-in catalog

  const StrategyCatalog& prompts() const { return catalog ? *catalog : StrategyCatalog::builtin(); }
};

struct DecisionRecord {
  std::size_t node_i = 0;
  std::size_t node_j = 0;
  DecisionFeatures features;
  Strategy chosen = Strategy::Zero;
  double log_prob = 0.0;
};

struct EpisodeTrace {
  Skeleton skeleton;
  std::vector<DecisionRecord> decisions;              ///< rounds that added a node
  std::vector<DecisionRecord> termination_decisions;  ///< the final all-zero round, if any
  Termination terminated_by = Termination::budget;
  std::string final_answer;
  double core_log_prob = 0.0;
  double termination_log_prob = 0.0;
  std::size_t mlp_calls = 0;

  double total_log_prob(bool include_termination) const {
    return core_log_prob + (include_termination ? termination_log_prob : 0.0);
  }
};

namespace detail {
inline Strategy draw(const StrategyDistribution& dist, Rng& rng) {
  const double u = rng.uniform();
  double cum = 0.0;
  for (std::size_t k = 0; k < kNumLabels; ++k) {
    cum += dist.probs[k];
    if (u < cum) return label_at(k);
  }
  for (std::size_t k = kNumLabels; k-- > 0;)
    if (dist.probs[k] > 0.0) return label_at(k);
  return Strategy::Zero;
}

inline Strategy argmax(const StrategyDistribution& dist) {
  return label_at(static_cast<std::size_t>(std::max_element(dist.probs.begin(), dist.probs.end()) - dist.probs.begin()));
}

inline std::vector<std::string_view> content_views(const Skeleton& sk) {
  std::vector<std::string_view> out;
  out.reserve(sk.nodes.size());
  for (const auto& n : sk.nodes) out.emplace_back(n.content);
  return out;
}

inline void check_result(const GenerationResult& gen, std::size_t cap, std::size_t d_c, std::size_t node) {
  const std::string at = "node " + std::to_string(node) + ": ";
  if (gen.token_count == 0) throw BackendError(at + "backend returned zero tokens");
  if (gen.token_count > cap)
    throw BackendError(at + "backend returned " + std::to_string(gen.token_count) + " tokens, cap was " + std::to_string(cap));
  if (gen.embedding.size() != d_c)
    throw BackendError(at + "embedding width " + std::to_string(gen.embedding.size()) + ", expected " + std::to_string(d_c));
}
}  // namespace detail

/// Answer prompt appended to the full ordered context.
inline std::string final_answer(std::span<const StepNode> context, const ReasoningBackend& backend,
                                const StrategyCatalog& catalog, TaskKind task, std::size_t max_tokens = 256) {
  if (context.empty()) throw std::invalid_argument("final_answer: empty context");
  std::vector<std::string_view> views;
  views.reserve(context.size());
  for (const auto& n : context) views.emplace_back(n.content);
  Rng unused(0);
  const auto& prompt = catalog.prompt_for(Strategy::Answer, task, unused);
  try {
    return backend.generate_answer(views, prompt, max_tokens).text;
  } catch (const BackendError& ex) {
    throw BackendError(std::string("final answer: ") + ex.what());
  }
}

/// Node-by-node expansion. `decide(i, j, dist, rng)` picks the label for
/// potential edge (j, i) given the policy's distribution.
template <typename Decide>
EpisodeTrace run_episode(std::string_view query, const PolicyParameters& params, const ReasoningBackend& backend,
                         const SamplerConfig& config, Rng& rng, Decide&& decide) {
  const auto caps = backend.capabilities();
  if (caps.d_c != params.dims.d_c)
    throw std::invalid_argument("backend embedding width " + std::to_string(caps.d_c) + " does not match policy d_c " +
                                std::to_string(params.dims.d_c));
  if (config.max_nodes == 0) throw std::invalid_argument("sampler: max_nodes must be at least 1");
  const StrategyCatalog& catalog = config.prompts();

  EpisodeTrace trace;
  Skeleton& sk = trace.skeleton;
  sk.budget = config.budget;
  std::vector<std::vector<double>> embeddings;

  StepNode source;
  source.index = 0;
  source.content = std::string(query);
  source.token_count = count_tokens(query);
  try {
    source.content_embedding = backend.embed_only(query);
  } catch (const BackendError& ex) {
    throw BackendError(std::string("node 0: ") + ex.what());
  }
  if (source.content_embedding.size() != params.dims.d_c)
    throw BackendError("node 0: embedding width " + std::to_string(source.content_embedding.size()) + ", expected " +
                       std::to_string(params.dims.d_c));
  embeddings.push_back(source.content_embedding);
  sk.nodes.push_back(std::move(source));

  for (std::size_t i = 1;; ++i) {
    if (sk.nodes.size() >= config.max_nodes) {
      trace.terminated_by = Termination::node_cap;
      break;
    }
    if (sk.budget_used >= config.budget) {
      trace.terminated_by = Termination::budget;
      break;
    }

    std::vector<DecisionRecord> round;
    std::vector<Strategy> conditioning;
    round.reserve(i);
    for (std::size_t j = i; j-- > 0;) {
      DecisionRecord rec;
      rec.node_i = i;
      rec.node_j = j;
      rec.features = encode_decision_input(embeddings[j], conditioning, embeddings, params);
      const auto dist = forward(params, rec.features.input);
      ++trace.mlp_calls;
      rec.chosen = decide(i, j, dist, rng);
      rec.log_prob = std::log(dist.prob(rec.chosen));
      if (rec.chosen != Strategy::Zero || config.condition_on_zero) conditioning.push_back(rec.chosen);
      round.push_back(std::move(rec));
    }

    const bool all_zero =
        std::all_of(round.begin(), round.end(), [](const DecisionRecord& r) { return r.chosen == Strategy::Zero; });
    if (all_zero) {
      for (const auto& r : round) trace.termination_log_prob += r.log_prob;
      trace.termination_decisions = std::move(round);
      trace.terminated_by = Termination::all_zero;
      break;
    }

    std::vector<Strategy> guiding;
    std::vector<LabeledContent> predecessors;
    std::vector<SkeletonEdge> new_edges;
    for (const auto& r : round) {
      trace.core_log_prob += r.log_prob;
      if (r.chosen == Strategy::Zero) continue;
      guiding.push_back(r.chosen);
      predecessors.push_back({r.node_j, sk.nodes[r.node_j].content});
      new_edges.push_back({r.node_j, i, r.chosen});
    }
    const std::string guidance = catalog.guidance_text(guiding, predecessors, config.task, rng);
    std::size_t cap = config.budget - sk.budget_used;
    if (config.max_step_tokens > 0) cap = std::min(cap, config.max_step_tokens);
    const std::uint64_t step_seed = rng.next();

    GenerationResult gen;
    try {
      const auto views = detail::content_views(sk);
      gen = backend.generate_step(views, guidance, cap, step_seed);
    } catch (const BackendError& ex) {
      throw BackendError("node " + std::to_string(i) + ": " + ex.what());
    }
    detail::check_result(gen, cap, params.dims.d_c, i);

    for (auto& r : round) trace.decisions.push_back(std::move(r));
    std::sort(new_edges.begin(), new_edges.end());
    sk.edges.insert(sk.edges.end(), new_edges.begin(), new_edges.end());
    sk.budget_used += gen.token_count;
    embeddings.push_back(gen.embedding);
    sk.nodes.push_back({i, std::move(gen.text), gen.token_count, std::move(gen.embedding)});
  }

  trace.final_answer = final_answer(sk.nodes, backend, catalog, config.task, config.answer_max_tokens);
  return trace;
}

/// Samples a skeleton for `query` while reasoning, one node at a time.
inline EpisodeTrace sample_skeleton(std::string_view query, const PolicyParameters& params,
                                    const ReasoningBackend& backend, const SamplerConfig& config, Rng& rng) {
  const bool greedy = config.selection == Selection::greedy;
  return run_episode(query, params, backend, config, rng,
                     [greedy](std::size_t, std::size_t, const StrategyDistribution& dist, Rng& r) {
                       return greedy ? detail::argmax(dist) : detail::draw(dist, r);
                     });
}

inline EpisodeTrace sample_skeleton(std::string_view query, const PolicyParameters& params,
                                    const ReasoningBackend& backend, const SamplerConfig& config) {
  Rng rng(config.seed);
  return sample_skeleton(query, params, backend, config, rng);
}

struct ReplayOptions {
  TaskKind task = TaskKind::generic;
  std::uint64_t seed = 0;
  std::size_t max_step_tokens = 256;
  std::size_t answer_max_tokens = 256;
  bool condition_on_zero = true;
  const StrategyCatalog* catalog = nullptr;
};

struct ReplayResult {
  EpisodeTrace trace;
  std::size_t mlp_call_count = 0;
};

/// Runs the sampler with every decision dictated by `structure`: a present
/// edge forces its label, an absent one forces Zero, and the round after the
/// last node is all Zero. Contents are regenerated by `backend`. Replay is
/// not budget-limited; the returned skeleton keeps the structure's budget,
/// raised to what the replay actually used.
inline ReplayResult forced_replay(const Skeleton& structure, std::string_view query, const ReasoningBackend& backend,
                                  const PolicyParameters& params, const ReplayOptions& options = {}) {
  if (auto report = validate(structure); !report.ok())
    throw std::invalid_argument("forced_replay: invalid structure: " + report.to_string());
  std::map<std::pair<std::size_t, std::size_t>, Strategy> labels;
  for (const auto& e : structure.edges) labels[{e.from, e.to}] = e.strategy;

  SamplerConfig config;
  config.budget = std::numeric_limits<std::size_t>::max();
  config.max_nodes = structure.size() + 1;
  config.max_step_tokens = options.max_step_tokens;
  config.answer_max_tokens = options.answer_max_tokens;
  config.condition_on_zero = options.condition_on_zero;
  config.task = options.task;
  config.catalog = options.catalog;
  Rng rng(options.seed);

  ReplayResult out;
  out.trace = run_episode(query, params, backend, config, rng,
                          [&](std::size_t i, std::size_t j, const StrategyDistribution&, Rng&) {
                            auto it = labels.find({j, i});
                            return it == labels.end() ? Strategy::Zero : it->second;
                          });
  out.trace.skeleton.budget = std::max(structure.budget, out.trace.skeleton.budget_used);
  out.mlp_call_count = out.trace.mlp_calls;
  return out;
}

/// Recomputes log P(skeleton) from the recorded decisions under `params`.
inline double skeleton_log_prob(const PolicyParameters& params, const EpisodeTrace& trace, bool include_termination) {
  double total = 0.0;
  for (const auto& d : trace.decisions) total += log_prob(params, d.features, d.chosen);
  if (include_termination)
    for (const auto& d : trace.termination_decisions) total += log_prob(params, d.features, d.chosen);
  return total;
}

inline nlohmann::json to_json(const EpisodeTrace& trace) {
  auto doc = to_json(trace.skeleton);
  auto records = [](const std::vector<DecisionRecord>& list) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& d : list)
      arr.push_back({{"i", d.node_i}, {"j", d.node_j}, {"chosen", std::string(to_string(d.chosen))}, {"log_prob", d.log_prob}});
    return arr;
  };
  doc["decisions"] = records(trace.decisions);
  doc["termination_decisions"] = records(trace.termination_decisions);
  doc["terminated_by"] = std::string(to_string(trace.terminated_by));
  doc["final_answer"] = trace.final_answer;
  return doc;
}

}  // namespace automr

#endif  // AUTOMR_SAMPLER_HPP
