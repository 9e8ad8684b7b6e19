#ifndef AUTOMR_REINFORCE_HPP
#define AUTOMR_REINFORCE_HPP

#include "automr/backend.hpp"
#include "automr/dataset.hpp"
#include "automr/policy_net.hpp"
#include "automr/sampler.hpp"

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <regex>
#include <string>
#include <thread>
#include <vector>

namespace automr {

// ---------------------------------------------------------------------------
// Answer matching and reward

class AnswerMatcher {
 public:
  virtual ~AnswerMatcher() = default;
  virtual std::string normalize(std::string_view answer) const = 0;

  bool matches(std::string_view gold, std::string_view predicted) const {
    return normalize(gold) == normalize(predicted);
  }
};

/// Trim whitespace, strip trailing punctuation, ASCII case-fold.
class NormalizingMatcher : public AnswerMatcher {
 public:
  std::string normalize(std::string_view answer) const override {
    std::string s(answer);
    auto is_space = [](unsigned char c) { return std::isspace(c) != 0; };
    auto is_trailing = [&](unsigned char c) { return is_space(c) || std::ispunct(c) != 0; };
    while (!s.empty() && is_trailing(static_cast<unsigned char>(s.back()))) s.pop_back();
    std::size_t start = 0;
    while (start < s.size() && is_space(static_cast<unsigned char>(s[start]))) ++start;
    s.erase(0, start);
    for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
  }
};

/// Pulls the final answer out of free-form text before normalizing: the last
/// \boxed{...}, else the last "answer is X", else the last non-empty line.
class ExtractingMatcher : public AnswerMatcher {
 public:
  std::string normalize(std::string_view answer) const override { return base_.normalize(extract(answer)); }

  static std::string extract(std::string_view text) {
    const std::string s(text);
    if (auto pos = s.rfind("\\boxed{"); pos != std::string::npos) {
      int depth = 1;
      std::size_t k = pos + 7;
      std::string inner;
      for (; k < s.size() && depth > 0; ++k) {
        if (s[k] == '{') ++depth;
        if (s[k] == '}' && --depth == 0) break;
        inner += s[k];
      }
      if (depth == 0) return inner;
    }
    static const std::regex kAnswerIs(R"((?:answer is|Answer:)\s*\(?([^\n\)]+)\)?)", std::regex::icase);
    std::string last;
    for (std::sregex_iterator it(s.begin(), s.end(), kAnswerIs), end; it != end; ++it) last = (*it)[1];
    if (!last.empty()) return last;
    std::size_t end = s.find_last_not_of(" \t\r\n");
    if (end == std::string::npos) return {};
    std::size_t begin = s.rfind('\n', end);
    return s.substr(begin == std::string::npos ? 0 : begin + 1, end + 1 - (begin == std::string::npos ? 0 : begin + 1));
  }

 private:
  NormalizingMatcher base_;
};

/// +1 on a normalized exact match, -1 otherwise.
inline int reward(std::string_view gold, std::string_view predicted, const AnswerMatcher& matcher) {
  return matcher.matches(gold, predicted) ? 1 : -1;
}

using RewardFn = std::function<double(const DatasetRecord&, const std::string& predicted)>;

inline RewardFn matcher_reward(std::shared_ptr<const AnswerMatcher> matcher) {
  return [matcher = std::move(matcher)](const DatasetRecord& rec, const std::string& predicted) {
    return static_cast<double>(reward(rec.answer, predicted, *matcher));
  };
}

inline RewardFn default_reward() { return matcher_reward(std::make_shared<NormalizingMatcher>()); }

// ---------------------------------------------------------------------------
// Search configuration and batch update

/// sgd applies params + eta * g exactly. adam feeds the same clipped
/// estimate into Adam (ascent direction) with step size eta.
enum class Optimizer { sgd, adam };

constexpr std::string_view to_string(Optimizer o) noexcept { return o == Optimizer::sgd ? "sgd" : "adam"; }

inline Optimizer parse_optimizer(std::string_view name) {
  if (name == "sgd") return Optimizer::sgd;
  if (name == "adam") return Optimizer::adam;
  throw std::invalid_argument("unknown optimizer '" + std::string(name) + "'");
}

struct SearchConfig {
  std::size_t N = 8;   ///< queries per batch
  std::size_t M = 16;  ///< skeletons per query
  double eta = 5e-4;
  double clip_norm = 1.0;
  std::size_t iterations = 300;
  std::size_t checkpoint_interval = 0;  ///< 0: no intermediate checkpoints
  std::optional<double> baseline;       ///< constant subtracted from rewards; off by default
  std::size_t threads = 1;
  Optimizer optimizer = Optimizer::adam;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  PolicyDims dims;
  SamplerConfig sampler;
  std::uint64_t seed = 0;

  void check() const {
    if (N < 1 || M < 1) throw std::invalid_argument("search config: N and M must be at least 1");
    if (!(eta > 0.0)) throw std::invalid_argument("search config: eta must be positive");
    if (!(clip_norm > 0.0)) throw std::invalid_argument("search config: clip_norm must be positive");
    dims.check();
  }
};

struct RewardRecord {
  std::size_t query_index = 0;
  std::size_t episode_index = 0;
  double reward = 0.0;
  double core_log_prob = 0.0;
  double total_log_prob = 0.0;
  std::size_t nodes = 0;
  std::size_t tokens = 0;
};

struct BatchStats {
  std::vector<RewardRecord> rewards;
  double mean_reward = 0.0;
  double mean_nodes = 0.0;
  double mean_tokens = 0.0;
  double grad_norm_pre = 0.0;
  double grad_norm_post = 0.0;
};

/// Moment estimates carried between Adam steps.
struct AdamState {
  std::size_t step = 0;
  std::optional<PolicyParameters> m;
  std::optional<PolicyParameters> v;
};

struct BatchResult {
  PolicyParameters params;
  PolicyParameters applied_gradient;  ///< clipped estimate, before scaling by eta
  BatchStats stats;
};

/// Rescales `g` in place to global L2 norm `clip_norm` if it is longer.
/// Returns the norm before clipping.
inline double clip_global_norm(PolicyParameters& g, double clip_norm) {
  const double norm = g.norm();
  if (norm > clip_norm) g *= clip_norm / norm;
  return norm;
}

/// Adds weight * grad log P(trace) to `grad`; returns log P(trace).
inline double accumulate_episode_grad(const PolicyParameters& params, const EpisodeTrace& trace, bool include_termination,
                                      double weight, PolicyParameters& grad) {
  double lp = 0.0;
  for (const auto& d : trace.decisions) lp += accumulate_logprob_grad(params, d.features, d.chosen, weight, grad);
  if (include_termination)
    for (const auto& d : trace.termination_decisions)
      lp += accumulate_logprob_grad(params, d.features, d.chosen, weight, grad);
  return lp;
}

/// In-place Adam ascent step on `params` with gradient estimate `g`.
inline void apply_adam(PolicyParameters& params, const PolicyParameters& g, const SearchConfig& config, AdamState& state) {
  if (!state.m) state.m = PolicyParameters::zeros(params.dims);
  if (!state.v) state.v = PolicyParameters::zeros(params.dims);
  ++state.step;
  const double b1 = config.adam_beta1, b2 = config.adam_beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  auto blocks = [&](auto& p, auto& m, auto& v, const auto& grad) {
    m = b1 * m + (1.0 - b1) * grad;
    v = b2 * v + (1.0 - b2) * grad.cwiseProduct(grad);
    p.array() += config.eta * (m.array() / c1) / ((v.array() / c2).sqrt() + config.adam_epsilon);
  };
  blocks(params.strategy_embeddings, state.m->strategy_embeddings, state.v->strategy_embeddings, g.strategy_embeddings);
  blocks(params.W1, state.m->W1, state.v->W1, g.W1);
  blocks(params.b1, state.m->b1, state.v->b1, g.b1);
  blocks(params.W2, state.m->W2, state.v->W2, g.W2);
  blocks(params.b2, state.m->b2, state.v->b2, g.b2);
}

namespace detail {
/// Runs fn(k) for k in [0, count), spread over `threads` workers.
template <typename Fn>
void parallel_for(std::size_t count, std::size_t threads, Fn&& fn) {
  threads = std::max<std::size_t>(1, std::min(threads, count));
  if (threads == 1) {
    for (std::size_t k = 0; k < count; ++k) fn(k);
    return;
  }
  std::vector<std::exception_ptr> errors(threads);
  {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) {
      pool.emplace_back([&, t] {
        try {
          for (std::size_t k = t; k < count; k += threads) fn(k);
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}
}  // namespace detail

/// One REINFORCE step: M episodes per query, g = (1/MN) sum r * grad log P,
/// clipped to clip_norm, then applied by the configured optimizer (sgd:
/// params + eta * g). Episode streams are derived
/// from one draw of `rng`, and gradients are reduced in (query, episode)
/// order, so the result does not depend on thread scheduling.
inline BatchResult batch_update(const PolicyParameters& params, std::span<const DatasetRecord> batch,
                                const ReasoningBackend& backend, const SearchConfig& config, Rng& rng,
                                const RewardFn& reward_fn = default_reward(), AdamState* adam = nullptr) {
  config.check();
  if (config.optimizer == Optimizer::adam && adam == nullptr)
    throw std::invalid_argument("batch_update: the adam optimizer needs an AdamState");
  if (batch.empty()) throw std::invalid_argument("batch_update: empty batch");
  const std::size_t M = config.M;
  const std::size_t total = batch.size() * M;
  const Rng streams(rng.next());

  std::vector<EpisodeTrace> traces(total);
  std::vector<double> rewards(total, 0.0);
  detail::parallel_for(total, config.threads, [&](std::size_t k) {
    const std::size_t q = k / M;
    SamplerConfig sc = config.sampler;
    sc.task = batch[q].task;
    Rng episode_rng = streams.split("episode", k);
    try {
      traces[k] = sample_skeleton(batch[q].query, params, backend, sc, episode_rng);
    } catch (const BackendError& ex) {
      throw BackendError("query " + std::to_string(q) + ", episode " + std::to_string(k % M) + ": " + ex.what());
    }
    rewards[k] = reward_fn(batch[q], traces[k].final_answer);
  });

  BatchResult out{params, PolicyParameters::zeros(params.dims), {}};
  const bool with_termination = config.sampler.include_termination_in_logprob;
  const double scale = 1.0 / static_cast<double>(total);
  const double base = config.baseline.value_or(0.0);
  for (std::size_t k = 0; k < total; ++k) {
    const auto& t = traces[k];
    const double weight = (rewards[k] - base) * scale;
    accumulate_episode_grad(params, t, with_termination, weight, out.applied_gradient);
    out.stats.rewards.push_back({k / M, k % M, rewards[k], t.core_log_prob, t.total_log_prob(with_termination),
                                 t.skeleton.size(), t.skeleton.budget_used});
    out.stats.mean_reward += rewards[k] * scale;
    out.stats.mean_nodes += static_cast<double>(t.skeleton.size()) * scale;
    out.stats.mean_tokens += static_cast<double>(t.skeleton.budget_used) * scale;
  }
  out.stats.grad_norm_pre = clip_global_norm(out.applied_gradient, config.clip_norm);
  out.stats.grad_norm_post = out.applied_gradient.norm();
  if (config.optimizer == Optimizer::sgd) {
    out.params.add_scaled(out.applied_gradient, config.eta);
  } else {
    apply_adam(out.params, out.applied_gradient, config, *adam);
  }
  if (!out.params.all_finite()) throw std::runtime_error("batch_update produced non-finite parameters");
  return out;
}

// ---------------------------------------------------------------------------
// Training loop

struct CurvePoint {
  std::size_t iteration = 0;
  double mean_reward = 0.0;
  double mean_nodes = 0.0;
  double mean_tokens = 0.0;
  double grad_norm_pre = 0.0;
  double grad_norm_post = 0.0;
};

using LearningCurve = std::vector<CurvePoint>;

inline nlohmann::json to_json(const CurvePoint& p) {
  return {{"iteration", p.iteration},     {"mean_reward", p.mean_reward},     {"mean_nodes", p.mean_nodes},
          {"mean_tokens", p.mean_tokens}, {"grad_norm_pre", p.grad_norm_pre}, {"grad_norm_post", p.grad_norm_post}};
}

/// One JSON record per line.
inline std::string curve_jsonl(const LearningCurve& curve) {
  std::string out;
  for (const auto& p : curve) out += to_json(p).dump() + "\n";
  return out;
}

/// Mean of mean_reward over the last `window` points (fewer if the curve is shorter).
inline double trailing_mean_reward(const LearningCurve& curve, std::size_t window) {
  if (curve.empty()) return 0.0;
  const std::size_t n = std::min(window, curve.size());
  double s = 0.0;
  for (std::size_t k = curve.size() - n; k < curve.size(); ++k) s += curve[k].mean_reward;
  return s / static_cast<double>(n);
}

/// Called with (iteration, params) every checkpoint_interval iterations and
/// after the last one. Throwing aborts training.
using CheckpointSink = std::function<void(std::size_t, const PolicyParameters&)>;

struct TrainResult {
  PolicyParameters params;
  LearningCurve curve;
};

inline TrainResult train(std::span<const DatasetRecord> dataset, const SearchConfig& config,
                         const ReasoningBackend& backend, PolicyParameters params, const CheckpointSink& sink = {},
                         const RewardFn& reward_fn = default_reward()) {
  config.check();
  if (dataset.empty()) throw std::invalid_argument("train: empty dataset");
  const Rng master(config.seed);
  Rng batch_rng = master.split("batch");
  TrainResult out{std::move(params), {}};
  std::vector<DatasetRecord> batch(config.N);
  AdamState adam;
  for (std::size_t it = 1; it <= config.iterations; ++it) {
    for (auto& rec : batch) rec = dataset[batch_rng.index(dataset.size())];
    Rng episode_rng = master.split("episodes", it);
    auto step = batch_update(out.params, batch, backend, config, episode_rng, reward_fn, &adam);
    out.params = std::move(step.params);
    out.curve.push_back({it, step.stats.mean_reward, step.stats.mean_nodes, step.stats.mean_tokens,
                         step.stats.grad_norm_pre, step.stats.grad_norm_post});
    const bool due = (config.checkpoint_interval > 0 && it % config.checkpoint_interval == 0) || it == config.iterations;
    if (sink && due) {
      try {
        sink(it, out.params);
      } catch (const std::exception& ex) {
        throw std::runtime_error("checkpoint at iteration " + std::to_string(it) + " failed: " + ex.what());
      }
    }
  }
  return out;
}

/// Trains from init_params(config.dims, seed).
inline TrainResult train(std::span<const DatasetRecord> dataset, const SearchConfig& config,
                         const ReasoningBackend& backend, const CheckpointSink& sink = {},
                         const RewardFn& reward_fn = default_reward()) {
  return train(dataset, config, backend, init_params(config.dims, config.seed), sink, reward_fn);
}

// ---------------------------------------------------------------------------
// Evaluation and the random-search baseline

struct EvalResult {
  double accuracy = 0.0;
  std::vector<EpisodeTrace> traces;
  std::vector<double> rewards;
};

/// One episode per query; accuracy is the fraction rewarded +1.
inline EvalResult evaluate(std::span<const DatasetRecord> dataset, const PolicyParameters& params,
                           const ReasoningBackend& backend, const SearchConfig& config,
                           const RewardFn& reward_fn = default_reward()) {
  EvalResult out;
  out.traces.resize(dataset.size());
  out.rewards.resize(dataset.size());
  const Rng master = Rng(config.seed).split("eval");
  detail::parallel_for(dataset.size(), config.threads, [&](std::size_t k) {
    SamplerConfig sc = config.sampler;
    sc.task = dataset[k].task;
    Rng rng = master.split("query", k);
    out.traces[k] = sample_skeleton(dataset[k].query, params, backend, sc, rng);
    out.rewards[k] = reward_fn(dataset[k], out.traces[k].final_answer);
  });
  if (dataset.empty()) return out;
  const auto hits = std::count_if(out.rewards.begin(), out.rewards.end(), [](double r) { return r > 0.0; });
  out.accuracy = static_cast<double>(hits) / static_cast<double>(dataset.size());
  return out;
}

inline constexpr std::size_t kDefaultRandomCandidates = 48;

struct RandomSearchResult {
  Skeleton best;
  std::size_t best_index = 0;
  double best_accuracy = 0.0;
  std::vector<Skeleton> candidates;
  std::vector<double> mean_rewards;
  std::vector<double> accuracies;
};

/// Samples candidate structures under the uniform policy, applies each to
/// every training query by forced replay, and keeps the best mean reward
/// (lowest index on ties).
inline RandomSearchResult random_search_baseline(std::span<const DatasetRecord> dataset, const ReasoningBackend& backend,
                                                 std::size_t n_candidates, const SearchConfig& config, Rng& rng,
                                                 const RewardFn& reward_fn = default_reward()) {
  if (n_candidates == 0) throw std::invalid_argument("random_search_baseline: need at least one candidate");
  if (dataset.empty()) throw std::invalid_argument("random_search_baseline: empty dataset");
  PolicyDims dims = config.dims;
  dims.d_c = backend.capabilities().d_c;
  const PolicyParameters uniform = PolicyParameters::zeros(dims);

  RandomSearchResult out;
  for (std::size_t c = 0; c < n_candidates; ++c) {
    const auto& rec = dataset[rng.index(dataset.size())];
    SamplerConfig sc = config.sampler;
    sc.task = rec.task;
    sc.selection = Selection::sampled;
    Rng episode_rng(rng.next());
    out.candidates.push_back(sample_skeleton(rec.query, uniform, backend, sc, episode_rng).skeleton);
  }

  for (std::size_t c = 0; c < n_candidates; ++c) {
    double total = 0.0;
    std::size_t hits = 0;
    for (std::size_t k = 0; k < dataset.size(); ++k) {
      ReplayOptions opts;
      opts.task = dataset[k].task;
      opts.seed = rng.next();
      opts.condition_on_zero = config.sampler.condition_on_zero;
      opts.answer_max_tokens = config.sampler.answer_max_tokens;
      opts.catalog = config.sampler.catalog;
      if (config.sampler.max_step_tokens > 0) opts.max_step_tokens = config.sampler.max_step_tokens;
      const auto replay = forced_replay(out.candidates[c], dataset[k].query, backend, uniform, opts);
      const double r = reward_fn(dataset[k], replay.trace.final_answer);
      total += r;
      if (r > 0.0) ++hits;
    }
    out.mean_rewards.push_back(total / static_cast<double>(dataset.size()));
    out.accuracies.push_back(static_cast<double>(hits) / static_cast<double>(dataset.size()));
  }
  out.best_index = static_cast<std::size_t>(std::max_element(out.mean_rewards.begin(), out.mean_rewards.end()) -
                                            out.mean_rewards.begin());
  out.best = out.candidates[out.best_index];
  out.best_accuracy = out.accuracies[out.best_index];
  return out;
}

}  // namespace automr

#endif  // AUTOMR_REINFORCE_HPP
