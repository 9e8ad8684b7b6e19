#include "automr/rng.hpp"
#include "automr/strategy_catalog.hpp"

#include <gtest/gtest.h>

#include <map>

using namespace automr;

namespace {

std::size_t count_for(const StrategyCatalog& c, Strategy s) {
  std::size_t n = 0;
  for (const auto& v : c.listing())
    if (v.strategy == s) ++n;
  return n;
}

}  // namespace

TEST(Catalog, BuiltinInventory) {
  const auto& c = StrategyCatalog::builtin();
  EXPECT_EQ(c.listing().size(), 20u);
  const std::map<Strategy, std::size_t> expected{{Strategy::Next, 3},      {Strategy::Reflect, 3},
                                                 {Strategy::Explore, 3},   {Strategy::Decompose, 4},
                                                 {Strategy::Summarize, 3}, {Strategy::Recall, 3},
                                                 {Strategy::Answer, 1}};
  for (const auto& [s, n] : expected) EXPECT_EQ(count_for(c, s), n) << to_string(s);
  EXPECT_EQ(count_for(c, Strategy::Zero), 0u);
  EXPECT_EQ(c.answer_prompt(), "Let me give the answer according to current reasoning context.");
}

TEST(Catalog, ScopedPools) {
  const auto& c = StrategyCatalog::builtin();
  EXPECT_EQ(c.pool(Strategy::Decompose, TaskKind::generic).size(), 3u);
  EXPECT_EQ(c.pool(Strategy::Decompose, TaskKind::multi_choice).size(), 4u);
  EXPECT_EQ(c.pool(Strategy::Recall, TaskKind::generic).size(), 1u);
  EXPECT_EQ(c.pool(Strategy::Recall, TaskKind::math_qa).size(), 2u);
  EXPECT_EQ(c.pool(Strategy::Recall, TaskKind::multi_choice).size(), 2u);
  for (const auto* v : c.pool(Strategy::Decompose, TaskKind::math_qa))
    EXPECT_EQ(v->text.find("options one by one"), std::string::npos);
}

TEST(Catalog, PromptForRejectsZero) {
  Rng rng(1);
  EXPECT_THROW(StrategyCatalog::builtin().prompt_for(Strategy::Zero, TaskKind::generic, rng), std::invalid_argument);
}

TEST(Catalog, PromptDrawIsUniform) {
  const auto& c = StrategyCatalog::builtin();
  Rng rng(2024);
  const int draws = 10000;
  std::map<std::string, int> hits;
  for (int k = 0; k < draws; ++k) ++hits[c.prompt_for(Strategy::Next, TaskKind::generic, rng)];
  ASSERT_EQ(hits.size(), 3u);
  for (const auto& [text, n] : hits) EXPECT_NEAR(static_cast<double>(n) / draws, 1.0 / 3.0, 0.05) << text;
}

TEST(Catalog, PromptDrawDeterministicPerSeed) {
  const auto& c = StrategyCatalog::builtin();
  Rng a(9), b(9);
  for (int k = 0; k < 50; ++k)
    EXPECT_EQ(c.prompt_for(Strategy::Explore, TaskKind::generic, a), c.prompt_for(Strategy::Explore, TaskKind::generic, b));
}

TEST(Guidance, LayoutAndOrdering) {
  const auto& c = StrategyCatalog::builtin();
  Rng rng(5);
  const std::vector<Strategy> chosen{Strategy::Summarize, Strategy::Next, Strategy::Summarize};
  const std::vector<LabeledContent> preds{{2, "second"}, {0, "query text"}};
  const auto g = c.guidance_text(chosen, preds, TaskKind::generic, rng);
  ASSERT_EQ(g.rfind("[Step 0]\nquery text\n\n[Step 2]\nsecond\n\n[Guidance]\n", 0), 0u) << g;
  EXPECT_EQ(c.strategies_in_guidance(g), (std::vector<Strategy>{Strategy::Next, Strategy::Summarize}));
  std::size_t lines = 0;
  for (std::size_t p = g.find(kGuidanceHeader); p != std::string::npos; p = g.find('\n', p + 1)) ++lines;
  EXPECT_EQ(lines, 3u);  // header line plus one per distinct strategy
}

TEST(Guidance, DeterministicForSeed) {
  const auto& c = StrategyCatalog::builtin();
  const std::vector<Strategy> chosen{Strategy::Reflect, Strategy::Explore, Strategy::Recall};
  const std::vector<LabeledContent> preds{{0, "q"}, {1, "a"}};
  Rng a(77), b(77);
  EXPECT_EQ(c.guidance_text(chosen, preds, TaskKind::math_qa, a), c.guidance_text(chosen, preds, TaskKind::math_qa, b));
}

TEST(Guidance, EveryNonEmptySubsetRoundTrips) {
  const auto& c = StrategyCatalog::builtin();
  Rng rng(3);
  const std::vector<LabeledContent> preds{{0, "q"}};
  for (unsigned mask = 1; mask < (1u << kStrategies.size()); ++mask) {
    std::vector<Strategy> chosen;
    for (std::size_t k = 0; k < kStrategies.size(); ++k)
      if (mask & (1u << k)) chosen.push_back(kStrategies[k]);
    for (TaskKind t : {TaskKind::generic, TaskKind::math_qa, TaskKind::multi_choice}) {
      const auto g = c.guidance_text(chosen, preds, t, rng);
      ASSERT_EQ(c.strategies_in_guidance(g), chosen) << g;
    }
  }
}

TEST(Guidance, RejectsZeroAndEmptyInputs) {
  const auto& c = StrategyCatalog::builtin();
  Rng rng(1);
  const std::vector<LabeledContent> preds{{0, "q"}};
  const std::vector<Strategy> with_zero{Strategy::Next, Strategy::Zero};
  EXPECT_THROW(c.guidance_text(with_zero, preds, TaskKind::generic, rng), std::invalid_argument);
  EXPECT_THROW(c.guidance_text(std::vector<Strategy>{}, preds, TaskKind::generic, rng), std::invalid_argument);
  const std::vector<Strategy> next{Strategy::Next};
  EXPECT_THROW(c.guidance_text(next, std::vector<LabeledContent>{}, TaskKind::generic, rng), std::invalid_argument);
}

TEST(Catalog, JsonRoundTripAndOverride) {
  const auto& c = StrategyCatalog::builtin();
  const auto copy = StrategyCatalog::from_json(c.to_json());
  ASSERT_EQ(copy.listing().size(), c.listing().size());
  for (std::size_t k = 0; k < c.listing().size(); ++k) EXPECT_EQ(copy.listing()[k], c.listing()[k]);

  auto doc = c.to_json();
  doc.push_back({{"strategy", "Next"}, {"text", "Carry on."}});
  const auto extended = StrategyCatalog::from_json(doc);
  EXPECT_EQ(extended.pool(Strategy::Next, TaskKind::generic).size(), 4u);
}

TEST(Catalog, OverrideInvariants) {
  auto doc = StrategyCatalog::builtin().to_json();
  auto without_answer = nlohmann::json::array();
  for (const auto& item : doc)
    if (item["strategy"] != "Answer") without_answer.push_back(item);
  EXPECT_THROW(StrategyCatalog::from_json(without_answer), std::invalid_argument);

  auto with_zero = doc;
  with_zero.push_back({{"strategy", "Zero"}, {"text", "stop"}});
  EXPECT_THROW(StrategyCatalog::from_json(with_zero), std::invalid_argument);

  auto multiline = doc;
  multiline.push_back({{"strategy", "Next"}, {"text", "a\nb"}});
  EXPECT_THROW(StrategyCatalog::from_json(multiline), std::invalid_argument);

  EXPECT_THROW(StrategyCatalog::from_json(nlohmann::json::object()), std::invalid_argument);
  EXPECT_THROW(StrategyCatalog::from_json(nlohmann::json::array({{{"text", "x"}}})), std::invalid_argument);
}
