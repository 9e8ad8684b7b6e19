#ifndef AUTOMR_GRADCHECK_HPP
#define AUTOMR_GRADCHECK_HPP

#include "automr/policy_net.hpp"
#include "automr/rng.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace automr {

/// |a - n| / max(|a|, |n|, floor). The floor keeps near-zero gradients from
/// turning finite-difference roundoff into large relative errors.
inline double relative_error(double analytic, double numeric, double floor = 1e-3) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// Random parameters with nonzero biases, for checks that must exercise every block.
inline PolicyParameters random_params(const PolicyDims& dims, Rng& rng) {
  PolicyParameters p = init_params(dims, rng.next());
  for (Eigen::Index k = 0; k < p.b1.size(); ++k) p.b1[k] = rng.uniform(-0.5, 0.5);
  for (Eigen::Index k = 0; k < p.b2.size(); ++k) p.b2[k] = rng.uniform(-0.5, 0.5);
  return p;
}

/// Random decision input: unit-scale content blocks and 1..4 conditioning labels.
inline DecisionFeatures random_features(const PolicyParameters& params, Rng& rng) {
  const auto dc = static_cast<Eigen::Index>(params.dims.d_c);
  DecisionFeatures f;
  f.predecessor = Eigen::VectorXd(dc);
  f.context_mean = Eigen::VectorXd(dc);
  for (Eigen::Index k = 0; k < dc; ++k) {
    f.predecessor[k] = rng.uniform(-1.0, 1.0);
    f.context_mean[k] = rng.uniform(-1.0, 1.0);
  }
  const std::size_t n = 1 + rng.index(4);
  for (std::size_t k = 0; k < n; ++k) f.conditioning.push_back(label_at(rng.index(kNumLabels)));
  f.input = f.assemble(params);
  return f;
}

struct GradCheckReport {
  std::size_t coordinates = 0;
  double max_relative_error = 0.0;
  double max_abs_error = 0.0;
  std::string worst;  ///< block[row,col] of the largest relative error
};

/// Central differences on `coordinates` coordinates spread evenly over the
/// five parameter blocks. Embedding rows are drawn from the labels the
/// features condition on, since the others have zero gradient.
inline GradCheckReport gradient_check(const PolicyParameters& params, const DecisionFeatures& features, Strategy chosen,
                                      std::size_t coordinates, Rng& rng, double step = 1e-5) {
  const auto analytic = logprob_and_grad(params, features, chosen);
  PolicyParameters probe = params;
  GradCheckReport report;

  const std::size_t per_block = std::max<std::size_t>(1, coordinates / 5);
  for (std::size_t b = 0; b < 5; ++b) {
    const std::size_t count = b == 4 ? coordinates - per_block * 4 : per_block;
    for (std::size_t n = 0; n < count; ++n) {
      double* slot = nullptr;
      double grad = 0.0;
      std::string where;
      auto pick = [&](const char* name, auto& m, const auto& g, bool embedding_rows) {
        Eigen::Index r = static_cast<Eigen::Index>(rng.index(static_cast<std::size_t>(m.rows())));
        if (embedding_rows && !features.conditioning.empty())
          r = static_cast<Eigen::Index>(label_index(features.conditioning[rng.index(features.conditioning.size())]));
        const Eigen::Index c = static_cast<Eigen::Index>(rng.index(static_cast<std::size_t>(m.cols())));
        slot = &m(r, c);
        grad = g(r, c);
        where = std::string(name) + "[" + std::to_string(r) + "," + std::to_string(c) + "]";
      };
      switch (b) {
        case 0: pick("strategy_embeddings", probe.strategy_embeddings, analytic.grad.strategy_embeddings, true); break;
        case 1: pick("W1", probe.W1, analytic.grad.W1, false); break;
        case 2: pick("b1", probe.b1, analytic.grad.b1, false); break;
        case 3: pick("W2", probe.W2, analytic.grad.W2, false); break;
        default: pick("b2", probe.b2, analytic.grad.b2, false); break;
      }
      const double saved = *slot;
      *slot = saved + step;
      const double up = log_prob(probe, features, chosen);
      *slot = saved - step;
      const double down = log_prob(probe, features, chosen);
      *slot = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double rel = relative_error(grad, numeric);
      report.max_abs_error = std::max(report.max_abs_error, std::abs(grad - numeric));
      if (rel >= report.max_relative_error) {
        report.max_relative_error = rel;
        report.worst = where;
      }
      ++report.coordinates;
    }
  }
  return report;
}

}  // namespace automr

#endif  // AUTOMR_GRADCHECK_HPP
