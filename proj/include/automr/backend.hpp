#ifndef AUTOMR_BACKEND_HPP
#define AUTOMR_BACKEND_HPP

#include "automr/rng.hpp"
#include "automr/strategy.hpp"
#include "automr/strategy_catalog.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace automr {

class BackendError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GenerationResult {
  std::string text;
  std::size_t token_count = 0;
  std::vector<double> embedding;
};

struct BackendCapabilities {
  std::size_t d_c = 64;
  std::size_t max_tokens_supported = 1u << 20;
  bool deterministic = true;
};

/// Text generation behind the search engine. Implementations must tolerate
/// concurrent calls from independent episodes.
class ReasoningBackend {
 public:
  virtual ~ReasoningBackend() = default;

  virtual BackendCapabilities capabilities() const = 0;

  /// Produces the next reasoning step. `context` is c_0..c_{i-1} in index
  /// order; `guidance` is the assembled guidance text.
  virtual GenerationResult generate_step(std::span<const std::string_view> context, std::string_view guidance,
                                         std::size_t max_tokens, std::uint64_t seed) const = 0;

  virtual GenerationResult generate_answer(std::span<const std::string_view> context, std::string_view answer_prompt,
                                           std::size_t max_tokens) const = 0;

  /// Embedding for text the backend never generated (the query).
  virtual std::vector<double> embed_only(std::string_view text) const = 0;
};

/// Whitespace-delimited words, minimum 1.
inline std::size_t count_tokens(std::string_view text) {
  std::size_t words = 0;
  bool in_word = false;
  for (unsigned char c : text) {
    const bool space = std::isspace(c) != 0;
    if (!space && !in_word) ++words;
    in_word = !space;
  }
  return std::max<std::size_t>(words, 1);
}

/// Keeps the first `max_tokens` whitespace-delimited words.
inline std::string truncate_tokens(std::string_view text, std::size_t max_tokens) {
  std::istringstream in{std::string(text)};
  std::string word, out;
  for (std::size_t k = 0; k < max_tokens && in >> word; ++k) {
    if (!out.empty()) out += ' ';
    out += word;
  }
  return out;
}

/// Unit-norm pseudo-random vector keyed by a 64-bit digest of `text`.
inline std::vector<double> digest_embedding(std::string_view text, std::size_t dim) {
  std::uint64_t state = fnv1a64(text);
  std::vector<double> v(dim);
  double norm2 = 0.0;
  for (auto& x : v) {
    state = splitmix64(state);
    x = static_cast<double>(state >> 11) * 0x1.0p-52 - 1.0;
    norm2 += x * x;
  }
  if (norm2 == 0.0) {
    v[0] = 1.0;
    return v;
  }
  const double inv = 1.0 / std::sqrt(norm2);
  for (auto& x : v) x *= inv;
  return v;
}

namespace detail {
inline std::uint64_t digest_request(std::span<const std::string_view> context, std::string_view tail,
                                    std::uint64_t seed) {
  std::uint64_t h = fnv1a64("automr");
  for (auto piece : context) {
    h = fnv1a64(piece, h);
    h = fnv1a64(std::string_view("\x1f", 1), h);
  }
  h = fnv1a64(tail, h);
  return splitmix64(h ^ splitmix64(seed));
}

inline std::string digest_words(std::uint64_t digest, std::size_t words) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  std::uint64_t state = digest;
  for (std::size_t k = 0; k < words; ++k) {
    state = splitmix64(state);
    if (k) out += ' ';
    out += 'w';
    for (int nib = 0; nib < 6; ++nib) out += kHex[(state >> (4 * nib)) & 0xF];
  }
  return out;
}
}  // namespace detail

/// Deterministic stand-in for a model: text is a digest of the request.
class MockBackend final : public ReasoningBackend {
 public:
  static constexpr std::size_t kMaxStepTokens = 24;

  explicit MockBackend(std::size_t d_c = 64) : d_c_(d_c) {
    if (d_c_ == 0) throw std::invalid_argument("mock backend: d_c must be positive");
  }

  BackendCapabilities capabilities() const override { return {d_c_, 1u << 20, true}; }

  GenerationResult generate_step(std::span<const std::string_view> context, std::string_view guidance,
                                 std::size_t max_tokens, std::uint64_t seed) const override {
    if (max_tokens == 0) throw std::invalid_argument("generate_step: max_tokens must be at least 1");
    const auto digest = detail::digest_request(context, guidance, seed);
    const std::size_t words = std::min<std::size_t>(1 + digest % kMaxStepTokens, max_tokens);
    return make(detail::digest_words(digest, words), words);
  }

  GenerationResult generate_answer(std::span<const std::string_view> context, std::string_view answer_prompt,
                                   std::size_t max_tokens) const override {
    if (context.empty()) throw std::invalid_argument("generate_answer: empty context");
    if (max_tokens == 0) throw std::invalid_argument("generate_answer: max_tokens must be at least 1");
    const auto digest = detail::digest_request(context, answer_prompt, 0);
    const std::size_t words = std::min<std::size_t>(1 + digest % 4, max_tokens);
    return make(detail::digest_words(digest, words), words);
  }

  std::vector<double> embed_only(std::string_view text) const override { return digest_embedding(text, d_c_); }

 private:
  GenerationResult make(std::string text, std::size_t tokens) const {
    auto emb = digest_embedding(text, d_c_);
    return {std::move(text), tokens, std::move(emb)};
  }

  std::size_t d_c_;
};

/// Reward environment with a known optimum: the gold answer comes back iff
/// the first strategy marker in the generated steps names `target_strategy`.
struct ScriptedEnvSpec {
  Strategy target_strategy = Strategy::Recall;
  std::string gold_answer = "42";
  std::string wrong_answer = "unknown";
  std::size_t step_tokens = 16;
  std::size_t d_c = 64;
};

inline constexpr std::string_view kStrategyMarker = "strategy:";

class ScriptedBackend final : public ReasoningBackend {
 public:
  explicit ScriptedBackend(ScriptedEnvSpec spec, StrategyCatalog catalog = StrategyCatalog::builtin())
      : spec_(std::move(spec)), catalog_(std::move(catalog)) {
    if (spec_.target_strategy == Strategy::Zero) throw std::invalid_argument("scripted env: target cannot be Zero");
    if (spec_.step_tokens == 0 || spec_.d_c == 0) throw std::invalid_argument("scripted env: sizes must be positive");
  }

  const ScriptedEnvSpec& spec() const noexcept { return spec_; }

  /// Query text for training item `k`.
  std::string query(std::size_t k) const {
    return "Scripted task " + std::to_string(k) + ": produce the answer. target=" +
           std::string(to_string(spec_.target_strategy));
  }

  BackendCapabilities capabilities() const override { return {spec_.d_c, 1u << 20, true}; }

  /// Text: one "strategy:<Name>" marker per guiding strategy (enum order),
  /// padded with filler words to step_tokens, cut at max_tokens.
  GenerationResult generate_step(std::span<const std::string_view>, std::string_view guidance, std::size_t max_tokens,
                                 std::uint64_t) const override {
    if (max_tokens == 0) throw std::invalid_argument("generate_step: max_tokens must be at least 1");
    auto strategies = catalog_.strategies_in_guidance(guidance);
    std::sort(strategies.begin(), strategies.end());
    std::vector<std::string> words;
    for (Strategy s : strategies) words.push_back(std::string(kStrategyMarker) + std::string(to_string(s)));
    while (words.size() < spec_.step_tokens) words.push_back("step");
    words.resize(std::min(words.size(), max_tokens));
    std::string text;
    for (const auto& w : words) {
      if (!text.empty()) text += ' ';
      text += w;
    }
    return make(std::move(text));
  }

  GenerationResult generate_answer(std::span<const std::string_view> context, std::string_view,
                                   std::size_t max_tokens) const override {
    if (context.empty()) throw std::invalid_argument("generate_answer: empty context");
    if (max_tokens == 0) throw std::invalid_argument("generate_answer: max_tokens must be at least 1");
    const auto marker = first_marker(context);
    const bool correct = marker && *marker == spec_.target_strategy;
    return make(truncate_tokens(correct ? spec_.gold_answer : spec_.wrong_answer, max_tokens));
  }

  std::vector<double> embed_only(std::string_view text) const override { return digest_embedding(text, spec_.d_c); }

  /// First strategy marker in the step contents (node 0, the query, is skipped).
  static std::optional<Strategy> first_marker(std::span<const std::string_view> context) {
    for (std::size_t k = 1; k < context.size(); ++k) {
      std::istringstream in{std::string(context[k])};
      std::string word;
      while (in >> word) {
        if (word.rfind(kStrategyMarker, 0) == 0) {
          if (auto s = try_parse_strategy(std::string_view(word).substr(kStrategyMarker.size()))) return s;
        }
      }
    }
    return std::nullopt;
  }

 private:
  GenerationResult make(std::string text) const {
    const std::size_t tokens = count_tokens(text);
    auto emb = digest_embedding(text, spec_.d_c);
    return {std::move(text), tokens, std::move(emb)};
  }

  ScriptedEnvSpec spec_;
  StrategyCatalog catalog_;
};

}  // namespace automr

#endif  // AUTOMR_BACKEND_HPP
