#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "fedcirc/circuit.hpp"
#include "fedcirc/common.hpp"
#include "fedcirc/inference.hpp"

namespace fedcirc {

inline constexpr double kMaxInducedTrees = 1e5;
inline constexpr std::uint32_t kMaxJointStates = 12;  // sum of scope arities

/// One selection per Def.: the root, exactly one child edge per sum, every
/// child edge per product. log_weight accumulates the chosen sum weights.
struct InducedTree {
  std::vector<NodeId> nodes;
  std::vector<std::pair<NodeId, NodeId>> edges;
  std::vector<NodeId> leaves;
  double log_weight = 0.0;
};

/// Number of induced trees without materializing them.
inline double count_induced_trees(const Circuit& c) {
  std::vector<double> count(c.num_nodes(), 0.0);
  for (NodeId id : c.topo_order()) {
    const Node& node = c.node(id);
    if (std::holds_alternative<LeafNode>(node)) {
      count[id] = 1.0;
    } else if (const auto* p = std::get_if<ProductNode>(&node)) {
      double acc = 1.0;
      for (NodeId child : p->children) acc *= count[child];
      count[id] = acc;
    } else {
      double acc = 0.0;
      for (NodeId child : std::get<SumNode>(node).children) acc += count[child];
      count[id] = acc;
    }
  }
  return count[c.root()];
}

namespace detail {

inline std::vector<InducedTree> induced_trees_below(const Circuit& c, NodeId id) {
  const Node& node = c.node(id);
  std::vector<InducedTree> out;
  if (std::holds_alternative<LeafNode>(node)) {
    InducedTree t;
    t.nodes.push_back(id);
    t.leaves.push_back(id);
    out.push_back(std::move(t));
    return out;
  }
  if (const auto* p = std::get_if<ProductNode>(&node)) {
    InducedTree base;
    base.nodes.push_back(id);
    out.push_back(std::move(base));
    for (NodeId child : p->children) {
      const auto child_trees = induced_trees_below(c, child);
      std::vector<InducedTree> next;
      next.reserve(out.size() * child_trees.size());
      for (const auto& partial : out) {
        for (const auto& ct : child_trees) {
          InducedTree merged = partial;
          merged.nodes.insert(merged.nodes.end(), ct.nodes.begin(), ct.nodes.end());
          merged.edges.insert(merged.edges.end(), ct.edges.begin(), ct.edges.end());
          merged.edges.emplace_back(id, child);
          merged.leaves.insert(merged.leaves.end(), ct.leaves.begin(), ct.leaves.end());
          merged.log_weight += ct.log_weight;
          next.push_back(std::move(merged));
        }
      }
      out = std::move(next);
    }
    return out;
  }
  const auto& sum = std::get<SumNode>(node);
  for (std::size_t i = 0; i < sum.children.size(); ++i) {
    for (auto& ct : induced_trees_below(c, sum.children[i])) {
      InducedTree t = std::move(ct);
      t.nodes.push_back(id);
      t.edges.emplace_back(id, sum.children[i]);
      t.log_weight += sum.log_weights[i];
      out.push_back(std::move(t));
    }
  }
  return out;
}

}  // namespace detail

/// Exhaustive induced-tree enumeration in depth-first child-index order.
/// Guarded at 1e5 trees.
inline std::vector<InducedTree> enumerate_induced_trees(const Circuit& c) {
  if (!validate(c).ok())
    throw std::invalid_argument("enumerate_induced_trees: circuit does not validate");
  const double count = count_induced_trees(c);
  if (count > kMaxInducedTrees)
    throw std::invalid_argument("circuit has " + std::to_string(count) +
                                " induced trees; the oracle is limited to 1e5 (use a smaller "
                                "circuit)");
  auto trees = detail::induced_trees_below(c, c.root());
  for (auto& t : trees) {
    std::sort(t.nodes.begin(), t.nodes.end());
    std::sort(t.leaves.begin(), t.leaves.end());
  }
  return trees;
}

/// The mixture-over-trees reading of the circuit: log-sum-exp over trees of
/// tree weight plus leaf log-densities. Agrees with log_density to 1e-9
/// relative in probability space.
inline double collapsed_log_density(const Circuit& c, const std::vector<InducedTree>& trees,
                                    const Evidence& e) {
  std::vector<double> terms;
  terms.reserve(trees.size());
  for (const auto& t : trees) {
    double term = t.log_weight;
    for (NodeId leaf_id : t.leaves) {
      const auto& leaf = std::get<LeafNode>(c.node(leaf_id));
      if (e.is_observed(leaf.var)) term += leaf_log_density(leaf.dist, e.value(leaf.var));
    }
    terms.push_back(term);
  }
  return log_sum_exp(terms);
}

/// Exhaustive joint over an all-Categorical circuit's root scope.
struct JointTable {
  std::vector<VarId> vars;             // ascending
  std::vector<std::uint32_t> arities;  // aligned with vars
  std::vector<double> probs;           // mixed radix, last variable fastest

  std::size_t index_of(const std::vector<std::uint32_t>& assignment) const {
    std::size_t idx = 0;
    for (std::size_t i = 0; i < vars.size(); ++i) idx = idx * arities[i] + assignment[i];
    return idx;
  }

  double sum() const {
    double acc = 0.0;
    for (double p : probs) acc += p;
    return acc;
  }

  /// Marginal probability of one variable value, summing out the rest.
  double marginal(VarId v, std::uint32_t value) const {
    const std::size_t pos =
        static_cast<std::size_t>(std::find(vars.begin(), vars.end(), v) - vars.begin());
    if (pos == vars.size()) throw std::invalid_argument("variable not in table");
    double acc = 0.0;
    std::vector<std::uint32_t> assignment(vars.size(), 0);
    for (std::size_t idx = 0; idx < probs.size(); ++idx) {
      if (assignment[pos] == value) acc += probs[idx];
      for (std::size_t i = vars.size(); i-- > 0;) {
        if (++assignment[i] < arities[i]) break;
        assignment[i] = 0;
      }
    }
    return acc;
  }
};

/// Ground-truth joint by full enumeration. Requires every reachable leaf to
/// be Categorical and the scope's total arity to stay within the guard.
inline JointTable brute_force_joint(const Circuit& c) {
  JointTable table;
  table.vars = c.root_scope().vars();
  std::uint32_t arity_total = 0;
  for (VarId v : table.vars) {
    const Variable& var = c.variable(v);
    if (var.kind != VarKind::Categorical || var.arity < 2)
      throw std::invalid_argument("brute_force_joint: variable " + var.name +
                                  " is not categorical");
    table.arities.push_back(var.arity);
    arity_total += var.arity;
  }
  if (arity_total > kMaxJointStates)
    throw std::invalid_argument("brute_force_joint: total arity " + std::to_string(arity_total) +
                                " exceeds the guard of " + std::to_string(kMaxJointStates));
  for (NodeId id : c.topo_order())
    if (const auto* leaf = std::get_if<LeafNode>(&c.node(id)))
      if (!std::holds_alternative<Categorical>(leaf->dist))
        throw std::invalid_argument("brute_force_joint: non-categorical leaf present");
  std::size_t cells = 1;
  for (std::uint32_t a : table.arities) cells *= a;
  table.probs.resize(cells);
  std::vector<std::uint32_t> assignment(table.vars.size(), 0);
  for (std::size_t idx = 0; idx < cells; ++idx) {
    Evidence e(c.num_variables());
    for (std::size_t i = 0; i < table.vars.size(); ++i)
      e.observe(table.vars[i], static_cast<double>(assignment[i]));
    table.probs[idx] = std::exp(log_density(c, e));
    for (std::size_t i = table.vars.size(); i-- > 0;) {
      if (++assignment[i] < table.arities[i]) break;
      assignment[i] = 0;
    }
  }
  return table;
}

namespace detail {

inline double coupling_entropy(const std::vector<double>& q) {
  double h = 0.0;
  for (double p : q)
    if (p > 0.0) h -= p * std::log(p);
  return h;
}

struct CouplingSearch {
  const std::vector<double>& px;
  const std::vector<double>& py;
  int grid;
  std::vector<double> q;         // nx * ny, row-major
  std::vector<double> row_left;  // remaining mass per row
  std::vector<double> col_left;  // remaining mass per column
  double best_entropy = -1.0;

  void finish() {
    const std::size_t nx = px.size();
    const std::size_t ny = py.size();
    // Derived cells: last column from row remainders, last row from column
    // remainders; any negative remainder is an infeasible branch.
    for (std::size_t i = 0; i + 1 < nx; ++i) {
      const double v = row_left[i];
      if (v < -1e-12) return;
      q[i * ny + ny - 1] = std::max(0.0, v);
    }
    double corner = py[ny - 1];
    for (std::size_t i = 0; i + 1 < nx; ++i) corner -= q[i * ny + ny - 1];
    for (std::size_t j = 0; j + 1 < ny; ++j) {
      const double v = col_left[j];
      if (v < -1e-12) return;
      q[(nx - 1) * ny + j] = std::max(0.0, v);
    }
    if (corner < -1e-12) return;
    q[(nx - 1) * ny + ny - 1] = std::max(0.0, corner);
    best_entropy = std::max(best_entropy, coupling_entropy(q));
  }

  void fill(std::size_t cell) {
    const std::size_t nx = px.size();
    const std::size_t ny = py.size();
    const std::size_t free_cols = ny - 1;
    if (cell == (nx - 1) * free_cols) {
      finish();
      return;
    }
    const std::size_t i = cell / free_cols;
    const std::size_t j = cell % free_cols;
    const double hi = std::min(row_left[i], col_left[j]);
    if (hi < -1e-12) return;
    for (int g = 0; g < grid; ++g) {
      const double v = std::max(0.0, hi) * static_cast<double>(g) / static_cast<double>(grid - 1);
      q[i * ny + j] = v;
      row_left[i] -= v;
      col_left[j] -= v;
      if (row_left[i] > -1e-12 && col_left[j] > -1e-12) fill(cell + 1);
      row_left[i] += v;
      col_left[j] += v;
    }
  }
};

}  // namespace detail

/// App-style discrete check that the independent coupling maximizes entropy
/// among all couplings with the given marginals. The free cells are swept on
/// a grid over their feasible intervals; derived cells keep the marginal
/// constraints exact. True iff the product coupling's entropy is within 1e-9
/// of the grid maximum from above.
inline bool max_entropy_check(const std::vector<double>& marginal_x,
                              const std::vector<double>& marginal_y, int grid) {
  auto check_marginal = [](const std::vector<double>& m, const char* name) {
    if (m.size() < 2 || m.size() > 4)
      throw std::invalid_argument(std::string(name) + ": support must have 2..4 states");
    double total = 0.0;
    for (double p : m) {
      if (p < 0.0) throw std::invalid_argument(std::string(name) + ": negative probability");
      total += p;
    }
    if (std::abs(total - 1.0) > 1e-9)
      throw std::invalid_argument(std::string(name) + ": does not sum to 1");
  };
  check_marginal(marginal_x, "marginal_x");
  check_marginal(marginal_y, "marginal_y");
  if (grid < 2) throw std::invalid_argument("grid must be >= 2");

  const std::size_t nx = marginal_x.size();
  const std::size_t ny = marginal_y.size();
  std::vector<double> product(nx * ny);
  for (std::size_t i = 0; i < nx; ++i)
    for (std::size_t j = 0; j < ny; ++j) product[i * ny + j] = marginal_x[i] * marginal_y[j];
  const double product_entropy = detail::coupling_entropy(product);

  detail::CouplingSearch search{marginal_x, marginal_y, grid,
                                std::vector<double>(nx * ny, 0.0), marginal_x, marginal_y, -1.0};
  search.fill(0);
  if (search.best_entropy < 0.0) throw std::invalid_argument("marginals admit no coupling");
  return product_entropy >= search.best_entropy - 1e-9;
}

}  // namespace fedcirc
