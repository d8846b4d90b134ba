#pragma once

#include <cmath>
#include <vector>

#include "fedcirc/circuit.hpp"
#include "fedcirc/common.hpp"

namespace fedcirc {

/// Upward pass: per-node log value under the evidence. Marginalized leaves
/// contribute log 1 = 0, so partial evidence yields marginal densities.
/// Sum reduction follows child index order so results are reproducible
/// bit for bit across runs and transports.
inline std::vector<double> node_log_values(const Circuit& c, const Evidence& e) {
  if (e.size() != c.num_variables())
    throw std::invalid_argument("evidence size does not match circuit variables");
  std::vector<double> log_val(c.num_nodes(), 0.0);
  std::vector<double> buf;
  for (NodeId id : c.topo_order()) {
    const Node& node = c.node(id);
    if (const auto* leaf = std::get_if<LeafNode>(&node)) {
      log_val[id] = e.is_observed(leaf->var)
                        ? leaf_log_density(leaf->dist, e.value(leaf->var))
                        : 0.0;
    } else if (const auto* prod = std::get_if<ProductNode>(&node)) {
      double acc = 0.0;
      for (NodeId child : prod->children) acc += log_val[child];
      log_val[id] = acc;
    } else {
      const auto& sum = std::get<SumNode>(node);
      buf.clear();
      for (std::size_t i = 0; i < sum.children.size(); ++i)
        buf.push_back(sum.log_weights[i] + log_val[sum.children[i]]);
      log_val[id] = log_sum_exp(buf);
    }
  }
  return log_val;
}

/// log p(evidence), marginalizing unobserved variables.
inline double log_density(const Circuit& c, const Evidence& e) {
  return node_log_values(c, e)[c.root()];
}

/// log p(query | given) = log p(query, given) - log p(given).
/// Throws ZeroEvidence when the conditioning event has zero density.
inline double log_conditional(const Circuit& c, const Evidence& query, const Evidence& given) {
  const double log_given = log_density(c, given);
  if (std::isinf(log_given) && log_given < 0.0)
    throw ZeroEvidence("conditioning evidence has zero probability");
  const double log_joint = log_density(c, Evidence::merge(query, given));
  return log_joint - log_given;
}

/// Most probable value of a categorical variable given the rest of the row.
/// Ties break toward the smallest value.
inline std::uint32_t classify(const Circuit& c, VarId label, const Evidence& features) {
  const Variable& var = c.variable(label);
  if (var.kind != VarKind::Categorical || var.arity == 0)
    throw std::invalid_argument("classify target must be categorical");
  if (features.is_observed(label))
    throw std::invalid_argument("classify target must not be observed");
  std::uint32_t best = 0;
  double best_log = kNegInf;
  Evidence joint = features;
  for (std::uint32_t v = 0; v < var.arity; ++v) {
    joint.observe(label, static_cast<double>(v));
    const double l = log_density(c, joint);
    if (l > best_log) {
      best_log = l;
      best = v;
    }
  }
  return best;
}

}  // namespace fedcirc
