#ifndef AUTOMR_POLICY_NET_HPP
#define AUTOMR_POLICY_NET_HPP

#include "automr/rng.hpp"
#include "automr/strategy.hpp"

#include <Eigen/Dense>
#include <json.hpp>

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace automr {

inline constexpr std::string_view kCheckpointVersion = "automr-ckpt-v1";

struct PolicyDims {
  std::size_t d_c = 64;   ///< content embedding width
  std::size_t d_s = 32;   ///< strategy embedding width
  std::size_t h = 256;    ///< hidden width
  std::size_t out = kNumLabels;

  std::size_t input() const noexcept { return 2 * d_c + d_s; }

  void check() const {
    if (d_c == 0 || d_s == 0 || h == 0) throw std::invalid_argument("policy dims must be positive");
    if (out != kNumLabels) throw std::invalid_argument("policy output width must be " + std::to_string(kNumLabels));
  }

  friend bool operator==(const PolicyDims&, const PolicyDims&) = default;
};

/// All trainable state: one embedding row per label (Zero included) and a
/// one-hidden-layer tanh MLP. Gradients use the same type.
struct PolicyParameters {
  PolicyDims dims;
  Eigen::MatrixXd strategy_embeddings;  // kNumLabels x d_s
  Eigen::MatrixXd W1;                   // h x (2 d_c + d_s)
  Eigen::VectorXd b1;                   // h
  Eigen::MatrixXd W2;                   // kNumLabels x h
  Eigen::VectorXd b2;                   // kNumLabels

  static PolicyParameters zeros(const PolicyDims& dims) {
    dims.check();
    PolicyParameters p;
    p.dims = dims;
    p.strategy_embeddings = Eigen::MatrixXd::Zero(kNumLabels, dims.d_s);
    p.W1 = Eigen::MatrixXd::Zero(dims.h, dims.input());
    p.b1 = Eigen::VectorXd::Zero(dims.h);
    p.W2 = Eigen::MatrixXd::Zero(kNumLabels, dims.h);
    p.b2 = Eigen::VectorXd::Zero(kNumLabels);
    return p;
  }

  /// Visits each block with a stable name, in checkpoint order.
  template <typename Self, typename Fn>
  static void for_each_block(Self& self, Fn&& fn) {
    fn("strategy_embeddings", self.strategy_embeddings);
    fn("W1", self.W1);
    fn("b1", self.b1);
    fn("W2", self.W2);
    fn("b2", self.b2);
  }
  template <typename Fn> void for_each_block(Fn&& fn) { for_each_block(*this, fn); }
  template <typename Fn> void for_each_block(Fn&& fn) const { for_each_block(*this, fn); }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for_each_block([&](const char*, const auto& m) { n += static_cast<std::size_t>(m.size()); });
    return n;
  }

  bool all_finite() const {
    bool ok = true;
    for_each_block([&](const char*, const auto& m) { ok = ok && m.allFinite(); });
    return ok;
  }

  double squared_norm() const {
    double s = 0.0;
    for_each_block([&](const char*, const auto& m) { s += m.squaredNorm(); });
    return s;
  }

  double norm() const { return std::sqrt(squared_norm()); }

  PolicyParameters& operator+=(const PolicyParameters& o) {
    strategy_embeddings += o.strategy_embeddings;
    W1 += o.W1;
    b1 += o.b1;
    W2 += o.W2;
    b2 += o.b2;
    return *this;
  }

  PolicyParameters& operator*=(double k) {
    strategy_embeddings *= k;
    W1 *= k;
    b1 *= k;
    W2 *= k;
    b2 *= k;
    return *this;
  }

  /// this += k * o
  void add_scaled(const PolicyParameters& o, double k) {
    strategy_embeddings += k * o.strategy_embeddings;
    W1 += k * o.W1;
    b1 += k * o.b1;
    W2 += k * o.W2;
    b2 += k * o.b2;
  }

  double dot(const PolicyParameters& o) const {
    return (strategy_embeddings.array() * o.strategy_embeddings.array()).sum() + (W1.array() * o.W1.array()).sum() +
           b1.dot(o.b1) + (W2.array() * o.W2.array()).sum() + b2.dot(o.b2);
  }

  friend bool operator==(const PolicyParameters& a, const PolicyParameters& b) {
    return a.dims == b.dims && a.strategy_embeddings == b.strategy_embeddings && a.W1 == b.W1 && a.b1 == b.b1 &&
           a.W2 == b.W2 && a.b2 == b.b2;
  }
};

/// Uniform in +/- sqrt(6 / (fan_in + fan_out)) per matrix, biases zero.
inline PolicyParameters init_params(const PolicyDims& dims, std::uint64_t seed) {
  PolicyParameters p = PolicyParameters::zeros(dims);
  Rng rng = Rng(seed).split("init");
  auto fill = [&](Eigen::MatrixXd& m) {
    const double bound = std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = rng.uniform(-bound, bound);
  };
  fill(p.strategy_embeddings);
  fill(p.W1);
  fill(p.W2);
  return p;
}

/// Input to one edge decision. Keeps the pieces the concatenated vector was
/// built from, so the middle block can be re-derived under other parameters
/// (and differentiated through the mean of embedding rows).
struct DecisionFeatures {
  Eigen::VectorXd predecessor;          // e(c_j)
  std::vector<Strategy> conditioning;   // strategies already chosen for this target node
  Eigen::VectorXd context_mean;         // Mean(e(c_0..c_{i-1}))
  Eigen::VectorXd input;                // Concat of the three blocks under the encoding parameters

  /// Rebuilds the concatenated input under `params`.
  Eigen::VectorXd assemble(const PolicyParameters& params) const {
    const auto dc = static_cast<Eigen::Index>(params.dims.d_c);
    const auto ds = static_cast<Eigen::Index>(params.dims.d_s);
    if (predecessor.size() != dc || context_mean.size() != dc)
      throw std::invalid_argument("decision features: content embedding width " + std::to_string(predecessor.size()) +
                                  " does not match d_c " + std::to_string(dc));
    Eigen::VectorXd x(2 * dc + ds);
    x.head(dc) = predecessor;
    x.segment(dc, ds) = Eigen::VectorXd::Zero(ds);
    for (Strategy s : conditioning) x.segment(dc, ds) += params.strategy_embeddings.row(label_index(s)).transpose();
    if (!conditioning.empty()) x.segment(dc, ds) /= static_cast<double>(conditioning.size());
    x.tail(dc) = context_mean;
    return x;
  }
};

inline Eigen::VectorXd to_eigen(std::span<const double> v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

/// Concat(e(c_j), Mean(e(chosen)), Mean(context)). An empty `chosen` gives a
/// zero middle block.
inline DecisionFeatures encode_decision_input(std::span<const double> predecessor_embedding,
                                              std::span<const Strategy> chosen,
                                              std::span<const std::vector<double>> context_embeddings,
                                              const PolicyParameters& params) {
  if (context_embeddings.empty()) throw std::invalid_argument("encode_decision_input: empty context");
  const std::size_t dc = params.dims.d_c;
  if (predecessor_embedding.size() != dc)
    throw std::invalid_argument("encode_decision_input: predecessor embedding has width " +
                                std::to_string(predecessor_embedding.size()) + ", expected " + std::to_string(dc));
  DecisionFeatures f;
  f.predecessor = to_eigen(predecessor_embedding);
  f.conditioning.assign(chosen.begin(), chosen.end());
  f.context_mean = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dc));
  for (const auto& e : context_embeddings) {
    if (e.size() != dc)
      throw std::invalid_argument("encode_decision_input: context embedding has width " + std::to_string(e.size()) +
                                  ", expected " + std::to_string(dc));
    f.context_mean += to_eigen(e);
  }
  f.context_mean /= static_cast<double>(context_embeddings.size());
  f.input = f.assemble(params);
  return f;
}

struct StrategyDistribution {
  std::array<double, kNumLabels> logits{};
  std::array<double, kNumLabels> probs{};

  double prob(Strategy s) const { return probs[label_index(s)]; }
};

namespace detail {
struct ForwardCache {
  Eigen::VectorXd x;
  Eigen::VectorXd hidden;  // tanh activations
  Eigen::VectorXd logits;
};

inline ForwardCache forward_pass(const PolicyParameters& params, Eigen::VectorXd x) {
  if (static_cast<std::size_t>(x.size()) != params.dims.input())
    throw std::invalid_argument("policy input has width " + std::to_string(x.size()) + ", expected " +
                                std::to_string(params.dims.input()));
  ForwardCache c;
  c.hidden = (params.W1 * x + params.b1).array().tanh().matrix();
  c.logits = params.W2 * c.hidden + params.b2;
  c.x = std::move(x);
  return c;
}

inline StrategyDistribution normalize(const Eigen::VectorXd& logits) {
  StrategyDistribution d;
  const double mx = logits.maxCoeff();
  double z = 0.0;
  for (std::size_t k = 0; k < kNumLabels; ++k) {
    d.logits[k] = logits[static_cast<Eigen::Index>(k)];
    d.probs[k] = std::exp(d.logits[k] - mx);
    z += d.probs[k];
  }
  for (auto& p : d.probs) p /= z;
  for (double p : d.probs)
    if (!std::isfinite(p)) throw std::runtime_error("policy produced a non-finite probability; parameters are corrupt");
  return d;
}
}  // namespace detail

/// probs = softmax(W2 tanh(W1 x + b1) + b2), max-subtracted.
inline StrategyDistribution forward(const PolicyParameters& params, const Eigen::VectorXd& x) {
  return detail::normalize(detail::forward_pass(params, x).logits);
}

inline StrategyDistribution forward(const PolicyParameters& params, const DecisionFeatures& features) {
  return forward(params, features.assemble(params));
}

struct LogProbGrad {
  double log_prob = 0.0;
  PolicyParameters grad;
};

/// log p(chosen) and its exact gradient, accumulated into `grad` scaled by
/// `weight`. Returns the log-probability.
inline double accumulate_logprob_grad(const PolicyParameters& params, const DecisionFeatures& features, Strategy chosen,
                                      double weight, PolicyParameters& grad) {
  const auto cache = detail::forward_pass(params, features.assemble(params));
  const auto dist = detail::normalize(cache.logits);
  const std::size_t c = label_index(chosen);
  const double mx = cache.logits.maxCoeff();
  double z = 0.0;
  for (Eigen::Index k = 0; k < cache.logits.size(); ++k) z += std::exp(cache.logits[k] - mx);
  const double log_prob = cache.logits[static_cast<Eigen::Index>(c)] - mx - std::log(z);
  if (weight == 0.0) return log_prob;

  // d log p_c / d logits = onehot(c) - p
  Eigen::VectorXd g_logits(static_cast<Eigen::Index>(kNumLabels));
  for (std::size_t k = 0; k < kNumLabels; ++k) g_logits[static_cast<Eigen::Index>(k)] = -dist.probs[k];
  g_logits[static_cast<Eigen::Index>(c)] += 1.0;
  g_logits *= weight;

  grad.W2.noalias() += g_logits * cache.hidden.transpose();
  grad.b2 += g_logits;
  const Eigen::VectorXd g_pre =
      ((params.W2.transpose() * g_logits).array() * (1.0 - cache.hidden.array().square())).matrix();
  grad.W1.noalias() += g_pre * cache.x.transpose();
  grad.b1 += g_pre;

  if (!features.conditioning.empty()) {
    const auto dc = static_cast<Eigen::Index>(params.dims.d_c);
    const auto ds = static_cast<Eigen::Index>(params.dims.d_s);
    const Eigen::VectorXd g_mid =
        params.W1.middleCols(dc, ds).transpose() * g_pre / static_cast<double>(features.conditioning.size());
    for (Strategy s : features.conditioning) grad.strategy_embeddings.row(label_index(s)) += g_mid.transpose();
  }
  return log_prob;
}

inline LogProbGrad logprob_and_grad(const PolicyParameters& params, const DecisionFeatures& features, Strategy chosen) {
  LogProbGrad out{0.0, PolicyParameters::zeros(params.dims)};
  out.log_prob = accumulate_logprob_grad(params, features, chosen, 1.0, out.grad);
  return out;
}

inline double log_prob(const PolicyParameters& params, const DecisionFeatures& features, Strategy chosen) {
  return std::log(forward(params, features).prob(chosen));
}

// ---------------------------------------------------------------------------
// Checkpoints: JSON with a version tag, a dims header and row-major arrays.

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline nlohmann::json checkpoint_json(const PolicyParameters& params) {
  nlohmann::json doc;
  doc["version"] = kCheckpointVersion;
  doc["dims"] = {{"d_c", params.dims.d_c}, {"d_s", params.dims.d_s}, {"h", params.dims.h}, {"out", params.dims.out}};
  params.for_each_block([&](const char* name, const auto& m) {
    std::vector<double> flat;
    flat.reserve(static_cast<std::size_t>(m.size()));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) flat.push_back(m(r, c));
    doc[name] = std::move(flat);
  });
  return doc;
}

inline std::string serialize_checkpoint(const PolicyParameters& params) { return checkpoint_json(params).dump() + "\n"; }

inline PolicyParameters deserialize_checkpoint(std::string_view bytes) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(bytes);
  } catch (const nlohmann::json::parse_error& ex) {
    if (std::string_view(ex.what()).find("unexpected end of input") != std::string_view::npos)
      throw CheckpointError("unexpected end of checkpoint");
    throw CheckpointError(std::string("malformed checkpoint: ") + ex.what());
  }
  if (!doc.is_object()) throw CheckpointError("malformed checkpoint: top level must be an object");
  if (!doc.contains("version")) throw CheckpointError("malformed checkpoint: missing field version");
  const auto found = doc["version"].is_string() ? doc["version"].get<std::string>() : doc["version"].dump();
  if (found != kCheckpointVersion)
    throw CheckpointError("checkpoint version mismatch: expected " + std::string(kCheckpointVersion) + ", found " + found);

  PolicyDims dims;
  try {
    const auto& d = doc.at("dims");
    dims.d_c = d.at("d_c").get<std::size_t>();
    dims.d_s = d.at("d_s").get<std::size_t>();
    dims.h = d.at("h").get<std::size_t>();
    dims.out = d.at("out").get<std::size_t>();
    dims.check();
  } catch (const nlohmann::json::exception& ex) {
    throw CheckpointError(std::string("malformed checkpoint dims: ") + ex.what());
  } catch (const std::invalid_argument& ex) {
    throw CheckpointError(std::string("malformed checkpoint dims: ") + ex.what());
  }

  PolicyParameters params = PolicyParameters::zeros(dims);
  params.for_each_block([&](const char* name, auto& m) {
    if (!doc.contains(name)) throw CheckpointError(std::string("malformed checkpoint: missing field ") + name);
    const auto& arr = doc[name];
    if (!arr.is_array()) throw CheckpointError(std::string("malformed checkpoint: ") + name + " is not an array");
    const auto expected = static_cast<std::size_t>(m.size());
    if (arr.size() < expected)
      throw CheckpointError("unexpected end of checkpoint: " + std::string(name) + " has " + std::to_string(arr.size()) +
                            " of " + std::to_string(expected) + " values");
    if (arr.size() > expected)
      throw CheckpointError("malformed checkpoint: " + std::string(name) + " has " + std::to_string(arr.size()) +
                            " values, expected " + std::to_string(expected));
    std::size_t k = 0;
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c, ++k) {
        if (!arr[k].is_number())
          throw CheckpointError("malformed checkpoint: " + std::string(name) + "[" + std::to_string(k) + "] is not a number");
        m(r, c) = arr[k].get<double>();
      }
    }
  });
  if (!params.all_finite()) throw CheckpointError("malformed checkpoint: non-finite weight");
  return params;
}

}  // namespace automr

#endif  // AUTOMR_POLICY_NET_HPP
