#ifndef AUTOMR_STRATEGY_CATALOG_HPP
#define AUTOMR_STRATEGY_CATALOG_HPP

#include "automr/rng.hpp"
#include "automr/strategy.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <fstream>
#include <set>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace automr {

enum class TaskKind { generic, math_qa, multi_choice };

/// Which tasks a prompt variant may be drawn for.
enum class PromptScope { any, math_qa, multi_choice };

constexpr std::string_view to_string(TaskKind t) noexcept {
  switch (t) {
    case TaskKind::generic: return "generic";
    case TaskKind::math_qa: return "math_qa";
    case TaskKind::multi_choice: return "multi_choice";
  }
  return "?";
}

constexpr std::string_view to_string(PromptScope s) noexcept {
  switch (s) {
    case PromptScope::any: return "any";
    case PromptScope::math_qa: return "math_qa";
    case PromptScope::multi_choice: return "multi_choice";
  }
  return "?";
}

inline TaskKind parse_task_kind(std::string_view name) {
  for (auto t : {TaskKind::generic, TaskKind::math_qa, TaskKind::multi_choice})
    if (to_string(t) == name) return t;
  throw std::invalid_argument("unknown task kind '" + std::string(name) + "'");
}

inline PromptScope parse_prompt_scope(std::string_view name) {
  for (auto s : {PromptScope::any, PromptScope::math_qa, PromptScope::multi_choice})
    if (to_string(s) == name) return s;
  throw std::invalid_argument("unknown prompt scope '" + std::string(name) + "'");
}

constexpr bool scope_matches(PromptScope scope, TaskKind task) noexcept {
  switch (scope) {
    case PromptScope::any: return true;
    case PromptScope::math_qa: return task == TaskKind::math_qa;
    case PromptScope::multi_choice: return task == TaskKind::multi_choice;
  }
  return false;
}

struct PromptVariant {
  Strategy strategy = Strategy::Next;
  std::string text;
  PromptScope scope = PromptScope::any;

  friend bool operator==(const PromptVariant&, const PromptVariant&) = default;
};

/// A predecessor's content tagged with its node index.
struct LabeledContent {
  std::size_t index = 0;
  std::string_view text;
};

/// Marks the start of the strategy-prompt section in an assembled guidance
/// text. Each prompt follows on its own line.
inline constexpr std::string_view kGuidanceHeader = "[Guidance]";

/// Prompt inventory for every strategy. Immutable once constructed, so a
/// single instance can be shared between threads; randomness always comes
/// from a caller-owned Rng.
class StrategyCatalog {
 public:
  explicit StrategyCatalog(std::vector<PromptVariant> variants) : variants_(std::move(variants)) {
    check_invariants();
  }

  static const StrategyCatalog& builtin() {
    static const StrategyCatalog catalog(builtin_variants());
    return catalog;
  }

  static std::vector<PromptVariant> builtin_variants() {
    using S = Strategy;
    using P = PromptScope;
    return {
        {S::Next, "Next,", P::any},
        {S::Next, "Then,", P::any},
        {S::Next, "Now, let me move on to the next step.", P::any},
        {S::Reflect, "Let me consider what part of the reasoning feels least certain, and how can it be examined.", P::any},
        {S::Reflect, "Wait, let me think if there anything missing in the current reasoning.", P::any},
        {S::Reflect, "Let me think does the current line of thought have any error.", P::any},
        {S::Explore, "Let me consider which direction of thinking I should explore.", P::any},
        {S::Explore, "Let me think what potential strategy has not yet been considered that could be the next solution path.", P::any},
        {S::Explore, "Let me think what possible solution could be tried next.", P::any},
        {S::Decompose, "This question is a bit complex, let me think how to decompose it into sub-questions that I can solve.", P::any},
        {S::Decompose, "The question feels too broad, let me think what smaller version could I tackle first.", P::any},
        {S::Decompose, "Let me think if I can express the problem in terms of simpler components or modules.", P::any},
        {S::Decompose, "Let me consider the options one by one.", P::multi_choice},
        {S::Summarize, "Let me summarize what have I established so far.", P::any},
        {S::Summarize, "Let me summarize the current state of reasoning process, what\xE2\x80\x99s known, unknown, and assumed?", P::any},
        {S::Summarize, "Let me consider if I can captures the essence of the reasoning so far with single sentence.", P::any},
        {S::Recall, "Let me think if I have encountered similar problems or if learned knowledge and previous intermediate step can be used here.", P::any},
        {S::Recall, "Let me think what prior reasoning steps are directly relevant here or this question connect to earlier results.", P::math_qa},
        {S::Recall, "Let me recall which theorems, rules, or principles from earlier knowledge is related to this question.", P::multi_choice},
        {S::Answer, "Let me give the answer according to current reasoning context.", P::any},
    };
  }

  /// Loads a JSON array of {strategy, text, scope}. `scope` defaults to "any".
  static StrategyCatalog from_json(const nlohmann::json& doc) {
    if (!doc.is_array()) throw std::invalid_argument("catalog document must be a JSON array");
    std::vector<PromptVariant> variants;
    std::size_t k = 0;
    for (const auto& item : doc) {
      try {
        variants.push_back({parse_strategy(item.at("strategy").get<std::string>()),
                            item.at("text").get<std::string>(),
                            parse_prompt_scope(item.value("scope", std::string("any")))});
      } catch (const nlohmann::json::exception& ex) {
        throw std::invalid_argument("catalog entry " + std::to_string(k) + ": " + ex.what());
      }
      ++k;
    }
    return StrategyCatalog(std::move(variants));
  }

  static StrategyCatalog from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open catalog file " + path);
    nlohmann::json doc;
    try {
      in >> doc;
    } catch (const nlohmann::json::exception& ex) {
      throw std::invalid_argument("catalog file " + path + ": " + ex.what());
    }
    return from_json(doc);
  }

  nlohmann::json to_json() const {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& v : variants_)
      out.push_back({{"strategy", std::string(automr::to_string(v.strategy))}, {"text", v.text},
                     {"scope", std::string(automr::to_string(v.scope))}});
    return out;
  }

  std::span<const PromptVariant> listing() const noexcept { return variants_; }

  std::vector<const PromptVariant*> pool(Strategy strategy, TaskKind task) const {
    std::vector<const PromptVariant*> out;
    for (const auto& v : variants_)
      if (v.strategy == strategy && scope_matches(v.scope, task)) out.push_back(&v);
    return out;
  }

  /// One variant drawn uniformly from those matching the task.
  const std::string& prompt_for(Strategy strategy, TaskKind task, Rng& rng) const {
    if (strategy == Strategy::Zero) throw std::invalid_argument("prompt_for: Zero has no prompt");
    auto candidates = pool(strategy, task);
    return candidates[rng.index(candidates.size())]->text;
  }

  const std::string& answer_prompt() const { return pool(Strategy::Answer, TaskKind::generic).front()->text; }

  /// Predecessor contents in ascending index order, then one prompt per
  /// distinct strategy in enum order, one per line after kGuidanceHeader.
  std::string guidance_text(std::span<const Strategy> strategies, std::span<const LabeledContent> predecessors,
                            TaskKind task, Rng& rng) const {
    std::set<Strategy> distinct;
    for (Strategy s : strategies) {
      if (s == Strategy::Zero) throw std::invalid_argument("guidance_text: Zero is not a guiding strategy");
      distinct.insert(s);
    }
    if (distinct.empty()) throw std::invalid_argument("guidance_text: empty strategy set");
    if (predecessors.empty()) throw std::invalid_argument("guidance_text: no predecessor contents");

    std::vector<LabeledContent> ordered(predecessors.begin(), predecessors.end());
    std::stable_sort(ordered.begin(), ordered.end(),
                     [](const LabeledContent& a, const LabeledContent& b) { return a.index < b.index; });

    std::string out;
    for (const auto& p : ordered) {
      out += "[Step " + std::to_string(p.index) + "]\n";
      out += p.text;
      out += "\n\n";
    }
    out += kGuidanceHeader;
    for (Strategy s : distinct) {
      out += '\n';
      out += prompt_for(s, task, rng);
    }
    return out;
  }

  /// Strategies whose prompts appear as lines of the guidance section.
  std::vector<Strategy> strategies_in_guidance(std::string_view guidance) const {
    std::vector<Strategy> found;
    const auto header = guidance.rfind(kGuidanceHeader);
    if (header == std::string_view::npos) return found;
    std::string_view rest = guidance.substr(header + kGuidanceHeader.size());
    while (!rest.empty()) {
      const auto nl = rest.find('\n');
      std::string_view line = rest.substr(0, nl);
      for (const auto& v : variants_) {
        if (line == v.text && std::find(found.begin(), found.end(), v.strategy) == found.end()) {
          found.push_back(v.strategy);
          break;
        }
      }
      if (nl == std::string_view::npos) break;
      rest.remove_prefix(nl + 1);
    }
    return found;
  }

 private:
  void check_invariants() const {
    for (const auto& v : variants_) {
      if (v.strategy == Strategy::Zero) throw std::invalid_argument("catalog: Zero cannot carry a prompt");
      if (v.text.empty()) throw std::invalid_argument("catalog: empty prompt text for " + std::string(automr::to_string(v.strategy)));
      if (v.text.find('\n') != std::string::npos)
        throw std::invalid_argument("catalog: prompt text must be a single line");
    }
    for (Strategy s : kStrategies) {
      for (TaskKind t : {TaskKind::generic, TaskKind::math_qa, TaskKind::multi_choice}) {
        if (pool(s, t).empty())
          throw std::invalid_argument("catalog: no prompt for " + std::string(automr::to_string(s)) + " in task " +
                                      std::string(automr::to_string(t)));
      }
    }
    const auto answers = std::count_if(variants_.begin(), variants_.end(),
                                       [](const PromptVariant& v) { return v.strategy == Strategy::Answer; });
    if (answers != 1) throw std::invalid_argument("catalog: Answer must have exactly one variant");
  }

  std::vector<PromptVariant> variants_;
};

}  // namespace automr

#endif  // AUTOMR_STRATEGY_CATALOG_HPP
