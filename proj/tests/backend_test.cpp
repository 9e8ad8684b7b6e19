#include "automr/backend.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <set>

using namespace automr;

namespace {

double norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

std::string guidance_for(std::vector<Strategy> strategies) {
  Rng rng(1);
  const std::vector<LabeledContent> preds{{0, "query"}};
  return StrategyCatalog::builtin().guidance_text(strategies, preds, TaskKind::generic, rng);
}

}  // namespace

TEST(Tokens, CountAndTruncate) {
  EXPECT_EQ(count_tokens("a  b\tc\n"), 3u);
  EXPECT_EQ(count_tokens(""), 1u);
  EXPECT_EQ(truncate_tokens("one two three four", 2), "one two");
  EXPECT_EQ(truncate_tokens("one", 5), "one");
}

TEST(DigestEmbedding, UnitNormAndDeterministic) {
  const auto a = digest_embedding("hello", 64);
  EXPECT_EQ(a.size(), 64u);
  EXPECT_NEAR(norm(a), 1.0, 1e-12);
  EXPECT_EQ(a, digest_embedding("hello", 64));
  EXPECT_NE(a, digest_embedding("hello!", 64));
}

TEST(MockBackend, DeterministicStepsWithinCap) {
  MockBackend backend(16);
  const std::vector<std::string_view> ctx{"What is 2+2?", "first step"};
  const auto a = backend.generate_step(ctx, "guide", 100, 7);
  const auto b = backend.generate_step(ctx, "guide", 100, 7);
  EXPECT_EQ(a.text, b.text);
  EXPECT_EQ(a.embedding, b.embedding);
  EXPECT_GE(a.token_count, 1u);
  EXPECT_LE(a.token_count, MockBackend::kMaxStepTokens);
  EXPECT_EQ(a.token_count, count_tokens(a.text));
  EXPECT_EQ(a.embedding.size(), 16u);
  EXPECT_NEAR(norm(a.embedding), 1.0, 1e-12);

  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const auto capped = backend.generate_step(ctx, "guide", 3, seed);
    EXPECT_LE(capped.token_count, 3u);
  }
  EXPECT_THROW(backend.generate_step(ctx, "guide", 0, 1), std::invalid_argument);
}

TEST(MockBackend, SeedAndContextChangeOutput) {
  MockBackend backend;
  const std::vector<std::string_view> ctx{"q"};
  std::set<std::string> texts;
  for (std::uint64_t seed = 0; seed < 50; ++seed) texts.insert(backend.generate_step(ctx, "g", 64, seed).text);
  EXPECT_GT(texts.size(), 45u);
  const std::vector<std::string_view> other{"q2"};
  EXPECT_NE(backend.generate_step(ctx, "g", 64, 1).text, backend.generate_step(other, "g", 64, 1).text);
}

TEST(MockBackend, ThousandDistinctEmbeddings) {
  MockBackend backend;
  std::set<std::vector<double>> seen;
  for (int k = 0; k < 1000; ++k) seen.insert(backend.embed_only("text " + std::to_string(k)));
  EXPECT_EQ(seen.size(), 1000u);
}

TEST(MockBackend, AnswersAreShortAndStable) {
  MockBackend backend;
  const std::vector<std::string_view> ctx{"q", "s1"};
  const auto a = backend.generate_answer(ctx, "answer now", 256);
  EXPECT_EQ(a.text, backend.generate_answer(ctx, "answer now", 256).text);
  EXPECT_LE(a.token_count, 4u);
  EXPECT_THROW(backend.generate_answer(std::span<const std::string_view>{}, "x", 5), std::invalid_argument);
}

TEST(ScriptedBackend, StepsCarryMarkersInEnumOrder) {
  ScriptedBackend env(ScriptedEnvSpec{});
  const std::vector<std::string_view> ctx{"q"};
  const auto step = env.generate_step(ctx, guidance_for({Strategy::Recall, Strategy::Next}), 256, 0);
  EXPECT_EQ(step.text.rfind("strategy:Next strategy:Recall step", 0), 0u) << step.text;
  EXPECT_EQ(step.token_count, 16u);
  EXPECT_EQ(env.generate_step(ctx, guidance_for({Strategy::Next}), 5, 0).token_count, 5u);
}

TEST(ScriptedBackend, AnswerDependsOnFirstMarker) {
  ScriptedBackend env(ScriptedEnvSpec{});
  const std::vector<std::string_view> good{"query mentions strategy:Next", "strategy:Recall step", "strategy:Next step"};
  const std::vector<std::string_view> bad{"q", "strategy:Next step", "strategy:Recall step"};
  const std::vector<std::string_view> none{"q"};
  EXPECT_EQ(env.generate_answer(good, "", 256).text, "42");
  EXPECT_EQ(env.generate_answer(bad, "", 256).text, "unknown");
  EXPECT_EQ(env.generate_answer(none, "", 256).text, "unknown");
  EXPECT_NE(env.query(3).find("target=Recall"), std::string::npos);
}

TEST(ScriptedBackend, RejectsBadSpec) {
  ScriptedEnvSpec zero;
  zero.target_strategy = Strategy::Zero;
  EXPECT_THROW(ScriptedBackend{zero}, std::invalid_argument);
  ScriptedEnvSpec empty;
  empty.step_tokens = 0;
  EXPECT_THROW(ScriptedBackend{empty}, std::invalid_argument);
}
