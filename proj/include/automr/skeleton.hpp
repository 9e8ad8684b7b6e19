#ifndef AUTOMR_SKELETON_HPP
#define AUTOMR_SKELETON_HPP

#include "automr/strategy.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstddef>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

namespace automr {

inline constexpr std::size_t kDefaultBudget = 1024;

/// One reasoning step. Node 0 holds the query and never counts toward the
/// token budget.
struct StepNode {
  std::size_t index = 0;
  std::string content;
  std::size_t token_count = 0;
  std::vector<double> content_embedding;
};

struct SkeletonEdge {
  std::size_t from = 0;
  std::size_t to = 0;
  Strategy strategy = Strategy::Next;

  friend bool operator==(const SkeletonEdge&, const SkeletonEdge&) = default;
  friend auto operator<=>(const SkeletonEdge& a, const SkeletonEdge& b) {
    return std::tuple(a.from, a.to, label_index(a.strategy)) <=>
           std::tuple(b.from, b.to, label_index(b.strategy));
  }
};

/// Single-source, edge-labelled DAG of reasoning steps. Index order is the
/// topological order: every edge points from a lower to a higher index.
struct Skeleton {
  std::vector<StepNode> nodes;
  std::vector<SkeletonEdge> edges;
  std::size_t budget = kDefaultBudget;
  std::size_t budget_used = 0;

  std::size_t size() const noexcept { return nodes.size(); }

  std::vector<SkeletonEdge> incoming(std::size_t node) const {
    std::vector<SkeletonEdge> out;
    for (const auto& e : edges)
      if (e.to == node) out.push_back(e);
    std::sort(out.begin(), out.end());
    return out;
  }

  /// Labelled edge set in canonical order.
  std::vector<SkeletonEdge> sorted_edges() const {
    auto out = edges;
    std::sort(out.begin(), out.end());
    return out;
  }

  std::size_t recompute_budget_used() const {
    std::size_t used = 0;
    for (const auto& n : nodes)
      if (n.index >= 1) used += n.token_count;
    return used;
  }
};

/// Same node count and same labelled edge set. Contents are ignored.
inline bool same_structure(const Skeleton& a, const Skeleton& b) {
  return a.size() == b.size() && a.sorted_edges() == b.sorted_edges();
}

struct Violation {
  std::string message;
};

struct ValidationReport {
  std::vector<Violation> violations;

  bool ok() const noexcept { return violations.empty(); }

  bool mentions(std::string_view needle) const {
    return std::any_of(violations.begin(), violations.end(),
                       [&](const Violation& v) { return v.message.find(needle) != std::string::npos; });
  }

  std::string to_string() const {
    std::string out;
    for (const auto& v : violations) {
      if (!out.empty()) out += "; ";
      out += v.message;
    }
    return out.empty() ? "ok" : out;
  }
};

namespace detail {
inline std::string pair_text(std::size_t a, std::size_t b) {
  return "(" + std::to_string(a) + "," + std::to_string(b) + ")";
}
}  // namespace detail

/// Reports every violated structural invariant. Never throws.
inline ValidationReport validate(const Skeleton& sk) {
  ValidationReport report;
  auto add = [&](std::string msg) { report.violations.push_back({std::move(msg)}); };

  const std::size_t n = sk.nodes.size();
  if (n == 0) {
    add("missing source node");
    return report;
  }
  for (std::size_t k = 0; k < n; ++k) {
    if (sk.nodes[k].index != k)
      add("index gap at position " + std::to_string(k) + " (found index " +
          std::to_string(sk.nodes[k].index) + ")");
  }

  std::vector<std::size_t> in_degree(n, 0);
  std::set<std::pair<std::size_t, std::size_t>> seen;
  for (const auto& e : sk.edges) {
    const auto at = detail::pair_text(e.from, e.to);
    if (e.from >= n || e.to >= n) {
      add("edge endpoint out of range at " + at);
      continue;
    }
    if (e.from >= e.to) add("forward-edge order at " + at);
    if (e.strategy == Strategy::Zero) add("zero edge stored at " + at);
    if (!seen.insert({e.from, e.to}).second) add("duplicate edge at " + at);
    ++in_degree[e.to];
  }
  if (in_degree[0] != 0) add("source node 0 has incoming edges");
  for (std::size_t i = 1; i < n; ++i) {
    if (in_degree[i] == 0) add("unreachable node " + std::to_string(i));
  }

  const std::size_t used = sk.recompute_budget_used();
  if (used != sk.budget_used)
    add("budget_used " + std::to_string(sk.budget_used) + " differs from node token sum " +
        std::to_string(used));
  if (sk.budget_used > sk.budget)
    add("budget exceeded: " + std::to_string(sk.budget_used) + " > " + std::to_string(sk.budget));
  return report;
}

namespace detail {
inline Skeleton placeholder_nodes(std::size_t count, std::size_t budget) {
  Skeleton sk;
  sk.budget = budget;
  sk.nodes.resize(count);
  for (std::size_t k = 0; k < count; ++k) sk.nodes[k].index = k;
  return sk;
}

inline void require_label(Strategy s) {
  if (s == Strategy::Zero) throw std::invalid_argument("Zero cannot label a skeleton edge");
}
}  // namespace detail

/// Chain 0 -> 1 -> ... -> k with every edge labelled `strategy`.
inline Skeleton build_sequential(std::size_t k, Strategy strategy, std::size_t budget = kDefaultBudget) {
  if (k == 0) throw std::invalid_argument("build_sequential: step count must be at least 1");
  detail::require_label(strategy);
  Skeleton sk = detail::placeholder_nodes(k + 1, budget);
  for (std::size_t i = 0; i < k; ++i) sk.edges.push_back({i, i + 1, strategy});
  return sk;
}

/// Source fans out to one chain per entry of `branch_lengths`. Branches are
/// laid out consecutively in index order.
inline Skeleton build_parallel(const std::vector<std::size_t>& branch_lengths, Strategy strategy,
                               std::size_t budget = kDefaultBudget) {
  if (branch_lengths.empty()) throw std::invalid_argument("build_parallel: no branches");
  detail::require_label(strategy);
  for (auto len : branch_lengths)
    if (len == 0) throw std::invalid_argument("build_parallel: branch length must be positive");
  const std::size_t total = std::accumulate(branch_lengths.begin(), branch_lengths.end(), std::size_t{0});
  Skeleton sk = detail::placeholder_nodes(total + 1, budget);
  std::size_t next = 1;
  for (auto len : branch_lengths) {
    std::size_t prev = 0;
    for (std::size_t step = 0; step < len; ++step, ++next) {
      sk.edges.push_back({prev, next, strategy});
      prev = next;
    }
  }
  return sk;
}

/// Rooted tree over 0..k. `parent_of[v]` is the parent of node v for v >= 1
/// (entry 0 is ignored); `strategies[v]` labels the edge into v. Parents must
/// precede their children in index order, which is what makes index order
/// topological; any other parent map is either cyclic or needs relabelling.
inline Skeleton build_tree(const std::vector<std::size_t>& parent_of, const std::vector<Strategy>& strategies,
                           std::size_t budget = kDefaultBudget) {
  if (parent_of.size() < 2) throw std::invalid_argument("build_tree: need at least one non-root node");
  if (strategies.size() != parent_of.size())
    throw std::invalid_argument("build_tree: one label per node expected (entry 0 unused)");
  Skeleton sk = detail::placeholder_nodes(parent_of.size(), budget);
  for (std::size_t v = 1; v < parent_of.size(); ++v) {
    const std::size_t p = parent_of[v];
    if (p >= parent_of.size()) throw std::invalid_argument("build_tree: parent out of range for node " + std::to_string(v));
    if (p >= v)
      throw std::invalid_argument("build_tree: parent of node " + std::to_string(v) +
                                  " does not precede it (cycle or non-topological labelling)");
    detail::require_label(strategies[v]);
    sk.edges.push_back({p, v, strategies[v]});
  }
  return sk;
}

/// Multi-parent input cannot be expressed in `parent_of` form; this overload
/// takes an explicit edge list and rejects anything that is not a tree.
inline Skeleton build_tree(std::size_t node_count, const std::vector<SkeletonEdge>& edges,
                           std::size_t budget = kDefaultBudget) {
  if (node_count < 2) throw std::invalid_argument("build_tree: need at least one non-root node");
  std::vector<std::size_t> parent(node_count, node_count);
  std::vector<Strategy> labels(node_count, Strategy::Next);
  for (const auto& e : edges) {
    if (e.to == 0 || e.to >= node_count || e.from >= node_count)
      throw std::invalid_argument("build_tree: edge " + detail::pair_text(e.from, e.to) + " out of range");
    if (parent[e.to] != node_count)
      throw std::invalid_argument("build_tree: node " + std::to_string(e.to) + " has multiple parents");
    parent[e.to] = e.from;
    labels[e.to] = e.strategy;
  }
  for (std::size_t v = 1; v < node_count; ++v)
    if (parent[v] == node_count) throw std::invalid_argument("build_tree: node " + std::to_string(v) + " has no parent");
  return build_tree(parent, labels, budget);
}

namespace detail {
inline std::string dot_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\r': break;
      default: out += c;
    }
  }
  return out;
}
}  // namespace detail

inline constexpr std::size_t kDotLabelChars = 40;

inline std::string export_dot(const Skeleton& sk) {
  if (auto report = validate(sk); !report.ok())
    throw std::invalid_argument("export_dot: invalid skeleton: " + report.to_string());
  std::ostringstream out;
  out << "digraph skeleton {\n";
  out << "  rankdir=TB;\n";
  for (const auto& node : sk.nodes) {
    std::string label = std::to_string(node.index);
    if (!node.content.empty()) {
      std::string text = node.content.substr(0, kDotLabelChars);
      if (node.content.size() > kDotLabelChars) text += "...";
      label += ": " + text;
    }
    out << "  n" << node.index << " [label=\"" << detail::dot_escape(label) << "\"];\n";
  }
  for (const auto& e : sk.sorted_edges()) {
    out << "  n" << e.from << " -> n" << e.to << " [label=\"" << to_string(e.strategy) << "\"];\n";
  }
  out << "}\n";
  return out.str();
}

/// Trace document: {nodes:[{index,content,token_count}], edges:[{from,to,strategy}], budget, budget_used}.
inline nlohmann::json to_json(const Skeleton& sk) {
  nlohmann::json nodes = nlohmann::json::array();
  for (const auto& n : sk.nodes)
    nodes.push_back({{"index", n.index}, {"content", n.content}, {"token_count", n.token_count}});
  nlohmann::json edges = nlohmann::json::array();
  for (const auto& e : sk.sorted_edges())
    edges.push_back({{"from", e.from}, {"to", e.to}, {"strategy", std::string(to_string(e.strategy))}});
  return {{"nodes", std::move(nodes)}, {"edges", std::move(edges)}, {"budget", sk.budget}, {"budget_used", sk.budget_used}};
}

/// Reads the structure back from a trace document. Embeddings are not part
/// of the document and come back empty.
inline Skeleton skeleton_from_json(const nlohmann::json& doc) {
  try {
    Skeleton sk;
    sk.budget = doc.value("budget", kDefaultBudget);
    for (const auto& n : doc.at("nodes")) {
      StepNode node;
      node.index = n.at("index").get<std::size_t>();
      node.content = n.value("content", std::string{});
      node.token_count = n.value("token_count", std::size_t{0});
      sk.nodes.push_back(std::move(node));
    }
    for (const auto& e : doc.at("edges")) {
      sk.edges.push_back({e.at("from").get<std::size_t>(), e.at("to").get<std::size_t>(),
                          parse_strategy(e.at("strategy").get<std::string>())});
    }
    sk.budget_used = doc.contains("budget_used") ? doc.at("budget_used").get<std::size_t>() : sk.recompute_budget_used();
    return sk;
  } catch (const nlohmann::json::exception& ex) {
    throw std::invalid_argument(std::string("malformed skeleton document: ") + ex.what());
  }
}

}  // namespace automr

#endif  // AUTOMR_SKELETON_HPP
