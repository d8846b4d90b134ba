#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include "fedcirc/common.hpp"
#include "fedcirc/leaf.hpp"

namespace fedcirc {

using VarId = std::uint32_t;
using NodeId = std::uint32_t;

enum class VarKind { Continuous, Categorical };

struct Variable {
  VarId id = 0;           // dense index 0..d-1
  std::string name;       // globally unique feature identifier
  VarKind kind = VarKind::Continuous;
  std::uint32_t arity = 0;  // categorical only
};

/// Sorted set of variable ids. Scopes are small at desk scale; a sorted
/// vector keeps comparisons and unions deterministic and cache-friendly.
class Scope {
 public:
  Scope() = default;
  explicit Scope(std::vector<VarId> vars) : vars_(std::move(vars)) {
    std::sort(vars_.begin(), vars_.end());
    vars_.erase(std::unique(vars_.begin(), vars_.end()), vars_.end());
  }

  static Scope single(VarId v) { return Scope(std::vector<VarId>{v}); }

  bool empty() const { return vars_.empty(); }
  std::size_t size() const { return vars_.size(); }
  const std::vector<VarId>& vars() const { return vars_; }
  bool contains(VarId v) const { return std::binary_search(vars_.begin(), vars_.end(), v); }

  bool operator==(const Scope& o) const { return vars_ == o.vars_; }
  bool operator!=(const Scope& o) const { return vars_ != o.vars_; }

  bool disjoint_with(const Scope& o) const {
    auto a = vars_.begin();
    auto b = o.vars_.begin();
    while (a != vars_.end() && b != o.vars_.end()) {
      if (*a == *b) return false;
      (*a < *b) ? ++a : ++b;
    }
    return true;
  }

  void unite_with(const Scope& o) {
    std::vector<VarId> merged;
    merged.reserve(vars_.size() + o.vars_.size());
    std::merge(vars_.begin(), vars_.end(), o.vars_.begin(), o.vars_.end(),
               std::back_inserter(merged));
    merged.erase(std::unique(merged.begin(), merged.end()), merged.end());
    vars_ = std::move(merged);
  }

 private:
  std::vector<VarId> vars_;
};

struct SumNode {
  std::vector<NodeId> children;
  std::vector<double> log_weights;
};

struct ProductNode {
  std::vector<NodeId> children;
};

struct LeafNode {
  VarId var = 0;
  LeafDistribution dist;
};

using Node = std::variant<SumNode, ProductNode, LeafNode>;

/// log-space normalization of non-negative weights (e.g. cluster sizes).
inline std::vector<double> log_normalize(std::span<const double> weights) {
  double total = 0.0;
  for (double w : weights) {
    if (w < 0.0) throw std::invalid_argument("negative weight");
    total += w;
  }
  if (total <= 0.0) throw std::invalid_argument("weights sum to zero");
  std::vector<double> out;
  out.reserve(weights.size());
  for (double w : weights) out.push_back(w > 0.0 ? std::log(w / total) : kNegInf);
  return out;
}

/// Append-only arena of sum/product/leaf nodes plus the variable table the
/// leaves refer to. Circuits are immutable once built; evaluation is
/// read-only and safe to run from many threads.
class Circuit {
 public:
  VarId add_variable(std::string name, VarKind kind, std::uint32_t arity = 0) {
    const VarId id = static_cast<VarId>(variables_.size());
    variables_.push_back(Variable{id, std::move(name), kind, arity});
    return id;
  }

  NodeId add_leaf(VarId var, LeafDistribution dist) {
    if (var >= variables_.size()) throw std::invalid_argument("leaf variable out of range");
    nodes_.emplace_back(LeafNode{var, std::move(dist)});
    dirty_ = true;
    return static_cast<NodeId>(nodes_.size() - 1);
  }

  /// Single-child sums collapse to the child (canonical form).
  NodeId add_sum(std::vector<NodeId> children, std::vector<double> log_weights) {
    check_children(children);
    if (children.size() != log_weights.size())
      throw std::invalid_argument("sum children/weights size mismatch");
    if (children.empty()) throw std::invalid_argument("sum needs at least one child");
    if (children.size() == 1) return children[0];
    nodes_.emplace_back(SumNode{std::move(children), std::move(log_weights)});
    dirty_ = true;
    return static_cast<NodeId>(nodes_.size() - 1);
  }

  /// Single-child products collapse to the child (canonical form).
  NodeId add_product(std::vector<NodeId> children) {
    check_children(children);
    if (children.empty()) throw std::invalid_argument("product needs at least one child");
    if (children.size() == 1) return children[0];
    nodes_.emplace_back(ProductNode{std::move(children)});
    dirty_ = true;
    return static_cast<NodeId>(nodes_.size() - 1);
  }

  void set_root(NodeId root) {
    if (root >= nodes_.size()) throw std::invalid_argument("root out of range");
    root_ = root;
    dirty_ = true;
  }

  NodeId root() const { return root_; }
  std::size_t num_nodes() const { return nodes_.size(); }
  std::size_t num_variables() const { return variables_.size(); }
  const Node& node(NodeId id) const { return nodes_.at(id); }
  const std::vector<Node>& nodes() const { return nodes_; }
  const Variable& variable(VarId id) const { return variables_.at(id); }
  const std::vector<Variable>& variables() const { return variables_; }

  std::optional<VarId> find_variable(std::string_view name) const {
    for (const auto& v : variables_)
      if (v.name == name) return v.id;
    return std::nullopt;
  }

  /// Direct node access for tooling and fault-injection tests. Invalidates
  /// cached scopes/orders.
  Node& mutate_node(NodeId id) {
    dirty_ = true;
    return nodes_.at(id);
  }

  /// Nodes reachable from the root in evaluation order (children before
  /// parents). Throws if the graph has a cycle; use validate() to probe.
  const std::vector<NodeId>& topo_order() const {
    refresh();
    if (!topo_valid_) throw std::logic_error("circuit graph has a cycle");
    return topo_;
  }

  const Scope& scope(NodeId id) const {
    refresh();
    if (!topo_valid_) throw std::logic_error("circuit graph has a cycle");
    return scopes_[id];
  }

  const Scope& root_scope() const { return scope(root_); }

  /// True if the rooted graph is acyclic; cheap probe used by validate().
  bool acyclic() const {
    refresh();
    return topo_valid_;
  }

  /// Node ids whose child edges close a cycle (empty when acyclic).
  const std::vector<NodeId>& cycle_nodes() const {
    refresh();
    return cycle_nodes_;
  }

  /// Free real parameters: sum weights plus leaf parameters. Drives the
  /// ModelUpload scalar accounting.
  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& node : nodes_) {
      if (const auto* s = std::get_if<SumNode>(&node)) n += s->log_weights.size();
      else if (const auto* l = std::get_if<LeafNode>(&node)) n += leaf_parameter_count(l->dist);
    }
    return n;
  }

 private:
  void check_children(const std::vector<NodeId>& children) const {
    for (NodeId c : children)
      if (c >= nodes_.size()) throw std::invalid_argument("child node id out of range");
  }

  // Iterative DFS from the root: topological order, per-node scopes, cycle
  // detection. Cached until the arena changes.
  void refresh() const {
    if (!dirty_) return;
    topo_.clear();
    cycle_nodes_.clear();
    scopes_.assign(nodes_.size(), Scope{});
    std::vector<std::uint8_t> color(nodes_.size(), 0);  // 0 white, 1 gray, 2 black
    topo_valid_ = true;
    if (nodes_.empty()) {
      dirty_ = false;
      return;
    }
    struct Frame {
      NodeId id;
      std::size_t next_child = 0;
    };
    std::vector<Frame> stack{{root_, 0}};
    color[root_] = 1;
    while (!stack.empty()) {
      Frame& f = stack.back();
      const auto* children = children_of(nodes_[f.id]);
      if (children != nullptr && f.next_child < children->size()) {
        const NodeId c = (*children)[f.next_child++];
        if (color[c] == 0) {
          color[c] = 1;
          stack.push_back({c, 0});
        } else if (color[c] == 1) {
          topo_valid_ = false;
          cycle_nodes_.push_back(f.id);
        }
      } else {
        color[f.id] = 2;
        topo_.push_back(f.id);
        if (topo_valid_) {
          if (const auto* leaf = std::get_if<LeafNode>(&nodes_[f.id])) {
            scopes_[f.id] = Scope::single(leaf->var);
          } else if (children != nullptr) {
            Scope s;
            for (NodeId c : *children) s.unite_with(scopes_[c]);
            scopes_[f.id] = std::move(s);
          }
        }
        stack.pop_back();
      }
    }
    std::sort(cycle_nodes_.begin(), cycle_nodes_.end());
    cycle_nodes_.erase(std::unique(cycle_nodes_.begin(), cycle_nodes_.end()), cycle_nodes_.end());
    dirty_ = false;
  }

  static const std::vector<NodeId>* children_of(const Node& n) {
    if (const auto* s = std::get_if<SumNode>(&n)) return &s->children;
    if (const auto* p = std::get_if<ProductNode>(&n)) return &p->children;
    return nullptr;
  }

  std::vector<Node> nodes_;
  std::vector<Variable> variables_;
  NodeId root_ = 0;

  mutable bool dirty_ = true;
  mutable bool topo_valid_ = false;
  mutable std::vector<NodeId> topo_;
  mutable std::vector<Scope> scopes_;
  mutable std::vector<NodeId> cycle_nodes_;
};

/// Per-variable evidence state: observed at a value or marginalized out.
class Evidence {
 public:
  Evidence() = default;
  explicit Evidence(std::size_t num_vars)
      : values_(num_vars, 0.0), observed_(num_vars, 0) {}

  static Evidence all_marginalized(const Circuit& c) { return Evidence(c.num_variables()); }

  Evidence& observe(VarId v, double value) {
    values_.at(v) = value;
    observed_.at(v) = 1;
    return *this;
  }

  Evidence& marginalize(VarId v) {
    observed_.at(v) = 0;
    return *this;
  }

  bool is_observed(VarId v) const { return observed_.at(v) != 0; }
  double value(VarId v) const { return values_.at(v); }
  std::size_t size() const { return values_.size(); }

  /// Union of two evidences over disjoint observed sets.
  static Evidence merge(const Evidence& a, const Evidence& b) {
    if (a.size() != b.size()) throw std::invalid_argument("evidence size mismatch");
    Evidence out(a.size());
    for (VarId v = 0; v < a.size(); ++v) {
      if (a.is_observed(v) && b.is_observed(v))
        throw std::invalid_argument("evidences observe overlapping variables");
      if (a.is_observed(v)) out.observe(v, a.value(v));
      if (b.is_observed(v)) out.observe(v, b.value(v));
    }
    return out;
  }

 private:
  std::vector<double> values_;
  std::vector<std::uint8_t> observed_;
};

enum class ViolationKind {
  Cycle,
  NonSmoothSum,
  NonDecomposableProduct,
  UnnormalizedWeights,
  EmptyScope,
};

struct Violation {
  ViolationKind kind;
  NodeId node;
  bool operator==(const Violation&) const = default;
};

struct ValidationReport {
  std::vector<Violation> violations;
  bool ok() const { return violations.empty(); }

  bool has(ViolationKind kind, NodeId node) const {
    for (const auto& v : violations)
      if (v.kind == kind && v.node == node) return true;
    return false;
  }
};

/// Structural validation of the reachable circuit: acyclicity, smoothness of
/// sums, decomposability of products, weight/mass normalization (1e-12) and
/// non-empty scopes. Violations are data; only a malformed arena (child id
/// out of range) throws.
inline ValidationReport validate(const Circuit& c) {
  ValidationReport report;
  if (c.num_nodes() == 0) return report;
  if (!c.acyclic()) {
    for (NodeId id : c.cycle_nodes()) report.violations.push_back({ViolationKind::Cycle, id});
    return report;  // scopes undefined under cycles
  }
  constexpr double kWeightTol = 1e-12;
  for (NodeId id : c.topo_order()) {
    const Node& node = c.node(id);
    if (const auto* s = std::get_if<SumNode>(&node)) {
      if (s->children.empty()) {
        report.violations.push_back({ViolationKind::EmptyScope, id});
        continue;
      }
      if (s->log_weights.size() != s->children.size()) {
        report.violations.push_back({ViolationKind::UnnormalizedWeights, id});
      } else {
        double total = 0.0;
        for (double lw : s->log_weights) total += std::exp(lw);
        if (std::abs(total - 1.0) > kWeightTol)
          report.violations.push_back({ViolationKind::UnnormalizedWeights, id});
      }
      const Scope& first = c.scope(s->children[0]);
      for (std::size_t i = 1; i < s->children.size(); ++i) {
        if (c.scope(s->children[i]) != first) {
          report.violations.push_back({ViolationKind::NonSmoothSum, id});
          break;
        }
      }
    } else if (const auto* p = std::get_if<ProductNode>(&node)) {
      if (p->children.empty()) {
        report.violations.push_back({ViolationKind::EmptyScope, id});
        continue;
      }
      Scope seen;
      for (NodeId child : p->children) {
        const Scope& cs = c.scope(child);
        if (!seen.disjoint_with(cs)) {
          report.violations.push_back({ViolationKind::NonDecomposableProduct, id});
          break;
        }
        seen.unite_with(cs);
      }
    } else if (const auto* l = std::get_if<LeafNode>(&node)) {
      // Categorical mass must normalize like sum weights do.
      if (const auto* cat = std::get_if<Categorical>(&l->dist)) {
        double total = 0.0;
        for (double lp : cat->log_probs) total += std::exp(lp);
        if (cat->log_probs.empty() || std::abs(total - 1.0) > 1e-12)
          report.violations.push_back({ViolationKind::UnnormalizedWeights, id});
      }
    }
    if (c.scope(id).empty()) report.violations.push_back({ViolationKind::EmptyScope, id});
  }
  return report;
}

}  // namespace fedcirc
