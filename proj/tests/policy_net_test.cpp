#include "automr/gradcheck.hpp"
#include "automr/policy_net.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

using namespace automr;

namespace {

// Reference forward pass with plain loops in long double, built only from
// the raw parameter arrays and the raw decision inputs.
struct Oracle {
  static std::vector<long double> input(const PolicyParameters& p, const DecisionFeatures& f) {
    const std::size_t dc = p.dims.d_c, ds = p.dims.d_s;
    std::vector<long double> x(2 * dc + ds, 0.0L);
    for (std::size_t k = 0; k < dc; ++k) x[k] = f.predecessor[static_cast<Eigen::Index>(k)];
    for (Strategy s : f.conditioning)
      for (std::size_t k = 0; k < ds; ++k)
        x[dc + k] += p.strategy_embeddings(label_index(s), static_cast<Eigen::Index>(k)) /
                     static_cast<long double>(f.conditioning.size());
    for (std::size_t k = 0; k < dc; ++k) x[dc + ds + k] = f.context_mean[static_cast<Eigen::Index>(k)];
    return x;
  }

  static std::vector<long double> probs(const PolicyParameters& p, const DecisionFeatures& f) {
    const auto x = input(p, f);
    std::vector<long double> hidden(p.dims.h);
    for (std::size_t r = 0; r < p.dims.h; ++r) {
      long double a = p.b1[static_cast<Eigen::Index>(r)];
      for (std::size_t c = 0; c < x.size(); ++c) a += p.W1(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) * x[c];
      hidden[r] = std::tanh(a);
    }
    std::vector<long double> z(kNumLabels);
    for (std::size_t r = 0; r < kNumLabels; ++r) {
      long double a = p.b2[static_cast<Eigen::Index>(r)];
      for (std::size_t c = 0; c < p.dims.h; ++c) a += p.W2(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) * hidden[c];
      z[r] = a;
    }
    long double total = 0.0L;
    for (auto& v : z) {
      v = std::exp(v);
      total += v;
    }
    for (auto& v : z) v /= total;
    return z;
  }

  static long double log_prob(const PolicyParameters& p, const DecisionFeatures& f, Strategy s) {
    return std::log(probs(p, f)[label_index(s)]);
  }
};

PolicyDims small_dims() {
  PolicyDims d;
  d.d_c = 6;
  d.d_s = 4;
  d.h = 10;
  return d;
}

DecisionFeatures features_with(const PolicyParameters& p, std::vector<Strategy> conditioning, std::uint64_t seed) {
  Rng rng(seed);
  auto f = random_features(p, rng);
  f.conditioning = std::move(conditioning);
  f.input = f.assemble(p);
  return f;
}

}  // namespace

TEST(PolicyInit, ShapesAndDeterminism) {
  const PolicyDims dims;
  const auto a = init_params(dims, 7);
  EXPECT_EQ(a.W1.rows(), 256);
  EXPECT_EQ(a.W1.cols(), 160);
  EXPECT_EQ(a.W2.rows(), 8);
  EXPECT_EQ(a.W2.cols(), 256);
  EXPECT_EQ(a.strategy_embeddings.rows(), 8);
  EXPECT_EQ(a.strategy_embeddings.cols(), 32);
  EXPECT_TRUE(a.b1.isZero());
  EXPECT_TRUE(a.b2.isZero());
  EXPECT_EQ(a.parameter_count(), 8u * 32 + 256u * 160 + 256 + 8u * 256 + 8);
  EXPECT_TRUE(a == init_params(dims, 7));
  EXPECT_FALSE(a == init_params(dims, 8));
  const double bound = std::sqrt(6.0 / (256 + 160));
  EXPECT_LE(a.W1.cwiseAbs().maxCoeff(), bound);
  EXPECT_GT(a.W1.cwiseAbs().maxCoeff(), 0.9 * bound);
}

TEST(PolicyForward, ZeroParametersAreUniform) {
  const auto p = PolicyParameters::zeros(PolicyDims{});
  const auto f = features_with(p, {Strategy::Next, Strategy::Recall}, 1);
  const auto d = forward(p, f);
  for (double q : d.probs) EXPECT_DOUBLE_EQ(q, 0.125);
  EXPECT_NEAR(log_prob(p, f, Strategy::Zero), -2.0794415416798357, 1e-12);
}

TEST(PolicyForward, MatchesLoopOracle) {
  Rng rng(99);
  for (int trial = 0; trial < 20; ++trial) {
    const auto p = random_params(PolicyDims{}, rng);
    const auto f = random_features(p, rng);
    const auto d = forward(p, f);
    const auto ref = Oracle::probs(p, f);
    double total = 0.0;
    for (std::size_t k = 0; k < kNumLabels; ++k) {
      EXPECT_NEAR(d.probs[k], static_cast<double>(ref[k]), 1e-12);
      total += d.probs[k];
    }
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
}

TEST(PolicyForward, EmptyConditioningGivesZeroMiddleBlock) {
  const auto p = init_params(small_dims(), 3);
  const auto f = features_with(p, {}, 4);
  EXPECT_TRUE(f.input.segment(6, 4).isZero());
  EXPECT_TRUE(f.input.head(6).isApprox(f.predecessor));
  EXPECT_TRUE(f.input.tail(6).isApprox(f.context_mean));
}

TEST(PolicyForward, EncodeMeansContext) {
  const auto p = init_params(small_dims(), 3);
  const std::vector<double> pred{1, 0, 0, 0, 0, 0};
  const std::vector<std::vector<double>> ctx{{1, 2, 3, 4, 5, 6}, {3, 2, 1, 0, -1, -2}};
  const std::vector<Strategy> chosen{Strategy::Reflect, Strategy::Explore};
  const auto f = encode_decision_input(pred, chosen, ctx, p);
  for (Eigen::Index k = 0; k < 6; ++k) EXPECT_DOUBLE_EQ(f.context_mean[k], (ctx[0][k] + ctx[1][k]) / 2.0);
  const Eigen::VectorXd mid = (p.strategy_embeddings.row(1) + p.strategy_embeddings.row(2)).transpose() / 2.0;
  EXPECT_TRUE(f.input.segment(6, 4).isApprox(mid, 1e-15));
  const std::vector<double> narrow{1, 2};
  EXPECT_THROW(encode_decision_input(narrow, chosen, ctx, p), std::invalid_argument);
  EXPECT_THROW(encode_decision_input(pred, chosen, std::span<const std::vector<double>>{}, p), std::invalid_argument);
}

TEST(PolicyForward, ShiftInvariantSoftmax) {
  Rng rng(12);
  auto p = random_params(small_dims(), rng);
  const auto f = random_features(p, rng);
  const auto before = forward(p, f);
  p.b2.array() += 1000.0;
  const auto after = forward(p, f);
  for (std::size_t k = 0; k < kNumLabels; ++k) EXPECT_NEAR(before.probs[k], after.probs[k], 1e-12);
  EXPECT_TRUE(std::isfinite(after.probs[0]));
}

TEST(PolicyForward, ConditioningOrderDoesNotMatter) {
  Rng rng(21);
  const auto p = random_params(small_dims(), rng);
  const auto a = features_with(p, {Strategy::Next, Strategy::Decompose, Strategy::Answer}, 5);
  const auto b = features_with(p, {Strategy::Answer, Strategy::Next, Strategy::Decompose}, 5);
  const auto da = forward(p, a), db = forward(p, b);
  for (std::size_t k = 0; k < kNumLabels; ++k) EXPECT_NEAR(da.probs[k], db.probs[k], 1e-14);
}

TEST(PolicyGradient, MatchesCentralDifferencesOfOracle) {
  Rng rng(2025);
  const auto params = random_params(PolicyDims{}, rng);
  const auto f = random_features(params, rng);
  const Strategy chosen = Strategy::Summarize;
  const auto analytic = logprob_and_grad(params, f, chosen);
  EXPECT_NEAR(analytic.log_prob, static_cast<double>(Oracle::log_prob(params, f, chosen)), 1e-12);

  PolicyParameters probe = params;
  const long double h = 1e-6L;
  double worst = 0.0;
  int coords = 0;
  auto check = [&](Eigen::MatrixXd& m, const Eigen::MatrixXd& g, Eigen::Index r, Eigen::Index c) {
    const double saved = m(r, c);
    m(r, c) = saved + static_cast<double>(h);
    const long double up = Oracle::log_prob(probe, f, chosen);
    m(r, c) = saved - static_cast<double>(h);
    const long double down = Oracle::log_prob(probe, f, chosen);
    m(r, c) = saved;
    const double numeric = static_cast<double>((up - down) / (2 * h));
    worst = std::max(worst, relative_error(g(r, c), numeric));
    ++coords;
  };
  auto check_vec = [&](Eigen::VectorXd& v, const Eigen::VectorXd& g, Eigen::Index r) {
    const double saved = v[r];
    v[r] = saved + static_cast<double>(h);
    const long double up = Oracle::log_prob(probe, f, chosen);
    v[r] = saved - static_cast<double>(h);
    const long double down = Oracle::log_prob(probe, f, chosen);
    v[r] = saved;
    const double numeric = static_cast<double>((up - down) / (2 * h));
    worst = std::max(worst, relative_error(g[r], numeric));
    ++coords;
  };
  for (int n = 0; n < 40; ++n) {
    const auto row = static_cast<Eigen::Index>(label_index(f.conditioning[rng.index(f.conditioning.size())]));
    check(probe.strategy_embeddings, analytic.grad.strategy_embeddings, row, static_cast<Eigen::Index>(rng.index(32)));
    check(probe.W1, analytic.grad.W1, static_cast<Eigen::Index>(rng.index(256)), static_cast<Eigen::Index>(rng.index(160)));
    check_vec(probe.b1, analytic.grad.b1, static_cast<Eigen::Index>(rng.index(256)));
    check(probe.W2, analytic.grad.W2, static_cast<Eigen::Index>(rng.index(8)), static_cast<Eigen::Index>(rng.index(256)));
    check_vec(probe.b2, analytic.grad.b2, static_cast<Eigen::Index>(rng.index(8)));
  }
  EXPECT_EQ(coords, 200);
  EXPECT_LE(worst, 1e-4);
}

TEST(PolicyGradient, UnusedEmbeddingRowsHaveZeroGradient) {
  Rng rng(8);
  const auto p = random_params(small_dims(), rng);
  const auto f = features_with(p, {Strategy::Next, Strategy::Next, Strategy::Recall}, 9);
  const auto g = logprob_and_grad(p, f, Strategy::Answer).grad;
  for (Strategy s : kAllLabels) {
    const bool used = s == Strategy::Next || s == Strategy::Recall;
    EXPECT_EQ(g.strategy_embeddings.row(label_index(s)).isZero(), !used) << to_string(s);
  }
}

TEST(PolicyGradient, BiasGradientIsOneHotMinusProbs) {
  Rng rng(17);
  const auto p = random_params(small_dims(), rng);
  const auto f = random_features(p, rng);
  const auto d = forward(p, f);
  const auto g = logprob_and_grad(p, f, Strategy::Explore).grad;
  for (std::size_t k = 0; k < kNumLabels; ++k) {
    const double expected = (k == label_index(Strategy::Explore) ? 1.0 : 0.0) - d.probs[k];
    EXPECT_NEAR(g.b2[static_cast<Eigen::Index>(k)], expected, 1e-14);
  }
}

TEST(PolicyGradient, LibraryCheckerAgrees) {
  Rng rng(31);
  const auto p = random_params(PolicyDims{}, rng);
  const auto f = random_features(p, rng);
  const auto report = gradient_check(p, f, Strategy::Next, 200, rng);
  EXPECT_EQ(report.coordinates, 200u);
  EXPECT_LE(report.max_relative_error, 1e-4) << report.worst;
}

TEST(Checkpoint, RoundTripIsExact) {
  Rng rng(4);
  const auto p = random_params(PolicyDims{}, rng);
  const auto text = serialize_checkpoint(p);
  const auto back = deserialize_checkpoint(text);
  EXPECT_TRUE(back == p);
  EXPECT_EQ(back.dims, p.dims);
  EXPECT_EQ(serialize_checkpoint(back), text);
  const auto doc = nlohmann::json::parse(text);
  EXPECT_EQ(doc["version"], "automr-ckpt-v1");
  EXPECT_EQ(doc["W1"].size(), 256u * 160u);
  EXPECT_EQ(doc["W1"][1].get<double>(), p.W1(0, 1));
}

TEST(Checkpoint, TruncatedInputNamesEndOfInput) {
  const auto text = serialize_checkpoint(init_params(small_dims(), 1));
  try {
    deserialize_checkpoint(std::string_view(text).substr(0, text.size() / 2));
    FAIL() << "expected CheckpointError";
  } catch (const CheckpointError& ex) {
    EXPECT_NE(std::string(ex.what()).find("unexpected end of checkpoint"), std::string::npos) << ex.what();
  }
  auto doc = checkpoint_json(init_params(small_dims(), 1));
  doc["W2"].erase(doc["W2"].size() - 1);
  EXPECT_THROW(
      {
        try {
          deserialize_checkpoint(doc.dump());
        } catch (const CheckpointError& ex) {
          EXPECT_NE(std::string(ex.what()).find("unexpected end of checkpoint"), std::string::npos);
          throw;
        }
      },
      CheckpointError);
}

TEST(Checkpoint, VersionMismatchNamesBothVersions) {
  auto doc = checkpoint_json(init_params(small_dims(), 1));
  doc["version"] = "automr-ckpt-v0";
  try {
    deserialize_checkpoint(doc.dump());
    FAIL() << "expected CheckpointError";
  } catch (const CheckpointError& ex) {
    EXPECT_STREQ(ex.what(), "checkpoint version mismatch: expected automr-ckpt-v1, found automr-ckpt-v0");
  }
}

TEST(Checkpoint, RejectsMalformedDocuments) {
  const auto good = checkpoint_json(init_params(small_dims(), 1));
  auto missing = good;
  missing.erase("b1");
  EXPECT_THROW(deserialize_checkpoint(missing.dump()), CheckpointError);
  auto bad_dims = good;
  bad_dims["dims"]["out"] = 7;
  EXPECT_THROW(deserialize_checkpoint(bad_dims.dump()), CheckpointError);
  auto extra = good;
  extra["b2"].push_back(0.0);
  EXPECT_THROW(deserialize_checkpoint(extra.dump()), CheckpointError);
  auto text = good;
  text["b2"][0] = "x";
  EXPECT_THROW(deserialize_checkpoint(text.dump()), CheckpointError);
  EXPECT_THROW(deserialize_checkpoint("[1,2]"), CheckpointError);
  EXPECT_THROW(deserialize_checkpoint("{\"version\": tru}"), CheckpointError);
}

TEST(ParameterAlgebra, DotNormAndScale) {
  Rng rng(6);
  const auto a = random_params(small_dims(), rng);
  auto b = a;
  b *= 2.0;
  EXPECT_NEAR(a.dot(b), 2.0 * a.squared_norm(), 1e-9);
  b.add_scaled(a, -2.0);
  EXPECT_NEAR(b.norm(), 0.0, 1e-15);
  b += a;
  EXPECT_TRUE(b == a);
}
