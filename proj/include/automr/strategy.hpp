#ifndef AUTOMR_STRATEGY_HPP
#define AUTOMR_STRATEGY_HPP

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace automr {

/// Edge label. The seven meta-reasoning strategies plus Zero, the sampling
/// outcome meaning "no edge". Zero is never stored on a skeleton edge.
enum class Strategy : std::uint8_t {
  Next = 0,
  Reflect,
  Explore,
  Decompose,
  Summarize,
  Recall,
  Answer,
  Zero,
};

inline constexpr std::size_t kNumLabels = 8;

inline constexpr std::array<Strategy, kNumLabels> kAllLabels = {
    Strategy::Next,      Strategy::Reflect, Strategy::Explore, Strategy::Decompose,
    Strategy::Summarize, Strategy::Recall,  Strategy::Answer,  Strategy::Zero};

inline constexpr std::array<Strategy, kNumLabels - 1> kStrategies = {
    Strategy::Next,      Strategy::Reflect, Strategy::Explore, Strategy::Decompose,
    Strategy::Summarize, Strategy::Recall,  Strategy::Answer};

constexpr std::size_t label_index(Strategy s) noexcept { return static_cast<std::size_t>(s); }

constexpr Strategy label_at(std::size_t i) { return kAllLabels.at(i); }

constexpr std::string_view to_string(Strategy s) noexcept {
  switch (s) {
    case Strategy::Next: return "Next";
    case Strategy::Reflect: return "Reflect";
    case Strategy::Explore: return "Explore";
    case Strategy::Decompose: return "Decompose";
    case Strategy::Summarize: return "Summarize";
    case Strategy::Recall: return "Recall";
    case Strategy::Answer: return "Answer";
    case Strategy::Zero: return "Zero";
  }
  return "?";
}

inline std::optional<Strategy> try_parse_strategy(std::string_view name) noexcept {
  for (Strategy s : kAllLabels) {
    if (to_string(s) == name) return s;
  }
  return std::nullopt;
}

inline Strategy parse_strategy(std::string_view name) {
  if (auto s = try_parse_strategy(name)) return *s;
  throw std::invalid_argument("unknown strategy '" + std::string(name) + "'");
}

}  // namespace automr

#endif  // AUTOMR_STRATEGY_HPP
