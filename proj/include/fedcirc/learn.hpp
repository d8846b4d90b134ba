#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <vector>

#include "fedcirc/circuit.hpp"
#include "fedcirc/common.hpp"
#include "fedcirc/dataset.hpp"
#include "fedcirc/inference.hpp"
#include "fedcirc/leaf.hpp"

namespace fedcirc {

enum class LeafKind { Gaussian, DiscretizedGaussian };

struct LearnConfig {
  double threshold = 0.3;            // independence split threshold, in (0,1)
  std::size_t min_num_instances = 50;
  std::size_t k_clusters = 2;
  std::uint64_t seed = 0;
  LeafKind leaf_kind = LeafKind::Gaussian;  // continuous columns only
  double min_var = kMinVar;
  double max_var = kMaxVar;

  void check() const {
    if (!(threshold > 0.0 && threshold < 1.0)) throw ConfigError("threshold must be in (0,1)");
    if (min_num_instances < 1) throw ConfigError("min_num_instances must be >= 1");
    if (k_clusters < 1) throw ConfigError("k_clusters must be >= 1");
    if (!(min_var > 0.0 && max_var >= min_var)) throw ConfigError("bad variance clamp");
  }
};

namespace detail {

inline double next_uniform(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

struct WeightedMoments {
  double w = 0.0, wx = 0.0, wxx = 0.0;

  void add(double weight, double x) {
    w += weight;
    wx += weight * x;
    wxx += weight * x * x;
  }

  double mean() const { return wx / w; }
  double variance() const {
    const double m = mean();
    return std::max(0.0, wxx / w - m * m);
  }
};

inline Gaussian fit_gaussian(const WeightedMoments& m, double min_var, double max_var) {
  const double var = std::clamp(m.variance(), min_var, max_var);
  return Gaussian{m.mean(), std::sqrt(var)};
}

inline Categorical fit_categorical(const std::vector<double>& weighted_counts) {
  const std::size_t arity = weighted_counts.size();
  double total = 0.0;
  for (double c : weighted_counts) total += c;
  std::vector<double> log_probs(arity);
  const double denom = total + kCategoricalAlpha * static_cast<double>(arity);
  for (std::size_t i = 0; i < arity; ++i)
    log_probs[i] = std::log((weighted_counts[i] + kCategoricalAlpha) / denom);
  return Categorical{std::move(log_probs)};
}

inline std::uint32_t categorical_code(double x, std::uint32_t arity, const std::string& name) {
  if (std::isnan(x) || std::nearbyint(x) != x || x < 0.0 || x >= static_cast<double>(arity))
    throw std::domain_error("column " + name + ": value " + std::to_string(x) +
                            " is not a category code");
  return static_cast<std::uint32_t>(x);
}

}  // namespace detail

/// Maximum-likelihood leaf fit with optional per-sample weights.
/// Continuous: mean and variance clamped to [min_var, max_var]; discretized
/// fits operate on bucket-index/255 values so parameters live on the grid
/// scale. Categorical: additively smoothed relative frequencies.
inline LeafDistribution fit_leaf_weighted(std::span<const double> values,
                                          std::span<const double> weights, const Column& col,
                                          const LearnConfig& cfg) {
  if (values.empty()) throw std::invalid_argument("fit_leaf: no data");
  if (!weights.empty() && weights.size() != values.size())
    throw std::invalid_argument("fit_leaf: weights size mismatch");
  auto weight_at = [&](std::size_t i) { return weights.empty() ? 1.0 : weights[i]; };
  if (col.kind == VarKind::Categorical) {
    if (col.arity < 2) throw std::invalid_argument("categorical column needs arity >= 2");
    std::vector<double> counts(col.arity, 0.0);
    for (std::size_t i = 0; i < values.size(); ++i)
      counts[detail::categorical_code(values[i], col.arity, col.name)] += weight_at(i);
    return detail::fit_categorical(counts);
  }
  detail::WeightedMoments m;
  const double scale = cfg.leaf_kind == LeafKind::DiscretizedGaussian ? kBucketStep : 1.0;
  for (std::size_t i = 0; i < values.size(); ++i) m.add(weight_at(i), values[i] * scale);
  if (m.w <= 0.0) throw std::invalid_argument("fit_leaf: zero total weight");
  const Gaussian g = detail::fit_gaussian(m, cfg.min_var, cfg.max_var);
  if (cfg.leaf_kind == LeafKind::DiscretizedGaussian)
    return DiscretizedGaussian{g.mu, g.sigma, kDefaultNumBuckets};
  return Gaussian{g.mu, g.sigma};
}

inline LeafDistribution fit_leaf(std::span<const double> values, const Column& col,
                                 const LearnConfig& cfg = {}) {
  return fit_leaf_weighted(values, {}, col, cfg);
}

/// Seeded k-means++ over the selected rows/columns. Deterministic: ties in
/// assignment go to the smallest center index; empty clusters steal the point
/// farthest from its center (from donors with >= 2 points, ties to the
/// smallest row position). Stops after 100 iterations or when inertia is
/// stable to 1e-6 relative.
inline std::vector<std::uint32_t> kmeans_on(const Dataset& data,
                                            const std::vector<std::size_t>& rows,
                                            const std::vector<std::size_t>& cols, std::size_t k,
                                            SeedStream stream) {
  const std::size_t n = rows.size();
  const std::size_t d = cols.size();
  if (k < 1) throw std::invalid_argument("kmeans: k must be >= 1");
  if (k > n) throw std::invalid_argument("kmeans: k exceeds number of rows");
  std::vector<std::uint32_t> labels(n, 0);
  if (k == 1) return labels;

  std::vector<double> points(n * d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) points[i * d + j] = data.at(rows[i], cols[j]);
  auto dist2 = [&](std::size_t i, const double* center) {
    double acc = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double diff = points[i * d + j] - center[j];
      acc += diff * diff;
    }
    return acc;
  };

  auto rng = stream.rng();
  std::vector<double> centers(k * d);
  std::vector<double> best(n, 0.0);
  {
    const std::size_t first = static_cast<std::size_t>(detail::next_uniform(rng) * n) % n;
    std::copy_n(&points[first * d], d, &centers[0]);
    for (std::size_t i = 0; i < n; ++i) best[i] = dist2(i, &centers[0]);
    for (std::size_t c = 1; c < k; ++c) {
      double total = 0.0;
      for (double b : best) total += b;
      std::size_t pick = 0;
      if (total > 0.0) {
        const double u = detail::next_uniform(rng) * total;
        double acc = 0.0;
        pick = n - 1;
        for (std::size_t i = 0; i < n; ++i) {
          acc += best[i];
          if (u < acc) { pick = i; break; }
        }
      } else {
        pick = static_cast<std::size_t>(detail::next_uniform(rng) * n) % n;
      }
      std::copy_n(&points[pick * d], d, &centers[c * d]);
      for (std::size_t i = 0; i < n; ++i) best[i] = std::min(best[i], dist2(i, &centers[c * d]));
    }
  }

  std::vector<std::size_t> sizes(k, 0);
  double prev_inertia = -1.0;
  for (int iter = 0; iter < 100; ++iter) {
    std::fill(sizes.begin(), sizes.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      std::uint32_t arg = 0;
      double bestd = dist2(i, &centers[0]);
      for (std::size_t c = 1; c < k; ++c) {
        const double dd = dist2(i, &centers[c * d]);
        if (dd < bestd) { bestd = dd; arg = static_cast<std::uint32_t>(c); }
      }
      labels[i] = arg;
      best[i] = bestd;
    }
    for (std::size_t i = 0; i < n; ++i) ++sizes[labels[i]];
    for (std::size_t c = 0; c < k; ++c) {
      if (sizes[c] > 0) continue;
      std::size_t steal = n;
      double far = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (sizes[labels[i]] < 2) continue;
        if (best[i] > far) { far = best[i]; steal = i; }
      }
      if (steal == n) throw std::logic_error("kmeans: cannot repair empty cluster");
      --sizes[labels[steal]];
      labels[steal] = static_cast<std::uint32_t>(c);
      ++sizes[c];
      std::copy_n(&points[steal * d], d, &centers[c * d]);
      best[steal] = 0.0;
    }
    std::fill(centers.begin(), centers.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) centers[labels[i] * d + j] += points[i * d + j];
    for (std::size_t c = 0; c < k; ++c)
      for (std::size_t j = 0; j < d; ++j) centers[c * d + j] /= static_cast<double>(sizes[c]);
    double inertia = 0.0;
    for (std::size_t i = 0; i < n; ++i) inertia += dist2(i, &centers[labels[i] * d]);
    if (prev_inertia >= 0.0 &&
        std::abs(prev_inertia - inertia) <= 1e-6 * std::max(prev_inertia, 1e-12))
      break;
    prev_inertia = inertia;
  }
  return labels;
}

inline std::vector<std::uint32_t> kmeans(const Dataset& data, std::size_t k, std::uint64_t seed) {
  std::vector<std::size_t> rows(data.num_rows()), cols(data.num_cols());
  std::iota(rows.begin(), rows.end(), 0);
  std::iota(cols.begin(), cols.end(), 0);
  return kmeans_on(data, rows, cols, k, SeedStream::derive(seed, "kmeans"));
}

namespace detail {

inline std::vector<double> average_ranks(const Dataset& data, const std::vector<std::size_t>& rows,
                                         std::size_t col) {
  const std::size_t n = rows.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return data.at(rows[a], col) < data.at(rows[b], col);
  });
  std::vector<double> ranks(n, 0.0);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && data.at(rows[order[j + 1]], col) == data.at(rows[order[i]], col)) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = avg;
    i = j + 1;
  }
  return ranks;
}

inline double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) { mx += x[i]; my += y[i]; }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx <= 0.0 || syy <= 0.0) return 0.0;  // constant column: independent by convention
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace detail

/// Splits columns into groups that look mutually independent: an edge joins
/// two columns when the rank correlation magnitude exceeds the threshold,
/// and the groups are the connected components of that graph.
inline std::vector<std::vector<std::size_t>> independence_partition_on(
    const Dataset& data, const std::vector<std::size_t>& rows,
    const std::vector<std::size_t>& cols, double threshold) {
  const std::size_t d = cols.size();
  std::vector<std::vector<double>> ranks(d);
  for (std::size_t j = 0; j < d; ++j) ranks[j] = detail::average_ranks(data, rows, cols[j]);
  std::vector<std::size_t> parent(d);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t a) {
    while (parent[a] != a) a = parent[a] = parent[parent[a]];
    return a;
  };
  for (std::size_t a = 0; a < d; ++a)
    for (std::size_t b = a + 1; b < d; ++b)
      if (std::abs(detail::pearson(ranks[a], ranks[b])) > threshold) parent[find(a)] = find(b);
  std::map<std::size_t, std::vector<std::size_t>> groups;
  for (std::size_t j = 0; j < d; ++j) groups[find(j)].push_back(j);
  std::vector<std::vector<std::size_t>> by_min;
  by_min.reserve(groups.size());
  for (auto& [root, members] : groups) {
    std::vector<std::size_t> g;
    g.reserve(members.size());
    for (std::size_t j : members) g.push_back(cols[j]);
    by_min.push_back(std::move(g));
  }
  std::sort(by_min.begin(), by_min.end(),
            [](const auto& a, const auto& b) { return a.front() < b.front(); });
  return by_min;
}

inline std::vector<std::vector<std::size_t>> independence_partition(const Dataset& data,
                                                                    double threshold) {
  std::vector<std::size_t> rows(data.num_rows()), cols(data.num_cols());
  std::iota(rows.begin(), rows.end(), 0);
  std::iota(cols.begin(), cols.end(), 0);
  return independence_partition_on(data, rows, cols, threshold);
}

namespace detail {

struct StructureBuilder {
  const Dataset& data;
  const LearnConfig& cfg;
  Circuit& circuit;
  const std::vector<VarId>& col_vars;  // dataset column -> circuit variable
  std::uint64_t kmeans_calls = 0;

  NodeId leaf_for(const std::vector<std::size_t>& rows, std::size_t col) {
    std::vector<double> values;
    values.reserve(rows.size());
    for (std::size_t r : rows) values.push_back(data.at(r, col));
    return circuit.add_leaf(col_vars[col], fit_leaf(values, data.column(col), cfg));
  }

  NodeId factorized(const std::vector<std::size_t>& rows, const std::vector<std::size_t>& cols) {
    std::vector<NodeId> children;
    children.reserve(cols.size());
    for (std::size_t c : cols) children.push_back(leaf_for(rows, c));
    return circuit.add_product(std::move(children));
  }

  NodeId build(const std::vector<std::size_t>& rows, const std::vector<std::size_t>& cols) {
    if (rows.empty()) throw std::invalid_argument("learn_structure: no rows");
    if (cols.size() == 1) return leaf_for(rows, cols[0]);
    if (rows.size() < std::max<std::size_t>(cfg.min_num_instances, 2)) return factorized(rows, cols);
    auto groups = independence_partition_on(data, rows, cols, cfg.threshold);
    if (groups.size() > 1) {
      std::vector<NodeId> children;
      children.reserve(groups.size());
      for (const auto& g : groups) children.push_back(build(rows, g));
      return circuit.add_product(std::move(children));
    }
    const std::size_t k = std::min(cfg.k_clusters, rows.size());
    if (k < 2) return factorized(rows, cols);
    const auto labels = kmeans_on(data, rows, cols, k,
                                  SeedStream::derive(cfg.seed, "learn.kmeans", kmeans_calls++));
    std::vector<std::vector<std::size_t>> clusters(k);
    for (std::size_t i = 0; i < rows.size(); ++i) clusters[labels[i]].push_back(rows[i]);
    std::vector<NodeId> children;
    std::vector<double> sizes;
    children.reserve(k);
    sizes.reserve(k);
    for (const auto& cluster : clusters) {
      children.push_back(build(cluster, cols));
      sizes.push_back(static_cast<double>(cluster.size()));
    }
    return circuit.add_sum(std::move(children), log_normalize(sizes));
  }
};

}  // namespace detail

/// Recursive structure learning into an existing circuit; `col_vars` maps the
/// dataset's columns to the circuit's variable table. Returns the subtree
/// root. Sum weights are exact cluster-size proportions.
inline NodeId learn_structure_into(Circuit& circuit, const std::vector<VarId>& col_vars,
                                   const Dataset& data, const LearnConfig& cfg) {
  cfg.check();
  if (data.empty()) throw std::invalid_argument("learn_structure: empty dataset");
  if (col_vars.size() != data.num_cols())
    throw std::invalid_argument("learn_structure: column/variable map size mismatch");
  detail::StructureBuilder builder{data, cfg, circuit, col_vars};
  std::vector<std::size_t> rows(data.num_rows()), cols(data.num_cols());
  std::iota(rows.begin(), rows.end(), 0);
  std::iota(cols.begin(), cols.end(), 0);
  return builder.build(rows, cols);
}

inline Circuit learn_structure(const Dataset& data, const LearnConfig& cfg) {
  Circuit c;
  data.declare_variables(c);
  std::vector<VarId> col_vars(data.num_cols());
  std::iota(col_vars.begin(), col_vars.end(), 0);
  c.set_root(learn_structure_into(c, col_vars, data, cfg));
  return c;
}

struct EmResult {
  Circuit circuit;
  std::vector<double> ll_trace;  // mean train LL after 0..epochs update steps
};

/// Batch EM on a fixed structure: E-step responsibilities from an upward and
/// a downward pass, M-step refits sum weights and leaf parameters from
/// weighted sufficient statistics. Weights are floored at 1e-12 and
/// renormalized so no component dies.
inline EmResult em_fit(const Circuit& input, const Dataset& data, std::size_t epochs,
                       std::uint64_t seed, const LearnConfig& cfg = {}) {
  (void)seed;  // batch EM is deterministic; kept for interface symmetry
  if (!validate(input).ok()) throw std::invalid_argument("em_fit: circuit does not validate");
  if (data.empty()) throw std::invalid_argument("em_fit: empty dataset");
  Circuit circuit = input;
  std::vector<std::size_t> var_col(circuit.num_variables(), SIZE_MAX);
  for (VarId v : circuit.root_scope().vars()) {
    auto col = data.find_column(circuit.variable(v).name);
    if (!col) throw std::invalid_argument("em_fit: dataset lacks column for variable " +
                                          circuit.variable(v).name);
    var_col[v] = *col;
  }

  const auto& topo = circuit.topo_order();
  std::vector<NodeId> reverse_topo(topo.rbegin(), topo.rend());

  auto row_evidence = [&](std::size_t r) {
    Evidence e(circuit.num_variables());
    for (VarId v : circuit.root_scope().vars()) e.observe(v, data.at(r, var_col[v]));
    return e;
  };

  struct LeafStats {
    detail::WeightedMoments moments;
    std::vector<double> counts;
  };

  std::vector<double> ll_trace;
  constexpr double kWeightFloor = 1e-12;
  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    std::vector<std::vector<double>> edge_counts(circuit.num_nodes());
    std::vector<LeafStats> leaf_stats(circuit.num_nodes());
    for (NodeId id = 0; id < circuit.num_nodes(); ++id) {
      if (const auto* s = std::get_if<SumNode>(&circuit.node(id)))
        edge_counts[id].assign(s->children.size(), 0.0);
      else if (const auto* l = std::get_if<LeafNode>(&circuit.node(id))) {
        const Variable& var = circuit.variable(l->var);
        if (var.kind == VarKind::Categorical) leaf_stats[id].counts.assign(var.arity, 0.0);
      }
    }
    double ll = 0.0;
    std::vector<double> resp(circuit.num_nodes());
    for (std::size_t r = 0; r < data.num_rows(); ++r) {
      const Evidence e = row_evidence(r);
      const auto log_val = node_log_values(circuit, e);
      const double row_ll = log_val[circuit.root()];
      if (!std::isfinite(row_ll))
        throw std::domain_error("em_fit: training row " + std::to_string(r) +
                                " has zero likelihood");
      ll += row_ll;
      std::fill(resp.begin(), resp.end(), 0.0);
      resp[circuit.root()] = 1.0;
      for (NodeId id : reverse_topo) {
        const double r_node = resp[id];
        if (r_node <= 0.0) continue;
        if (const auto* s = std::get_if<SumNode>(&circuit.node(id))) {
          for (std::size_t i = 0; i < s->children.size(); ++i) {
            const double r_edge =
                r_node * std::exp(s->log_weights[i] + log_val[s->children[i]] - log_val[id]);
            edge_counts[id][i] += r_edge;
            resp[s->children[i]] += r_edge;
          }
        } else if (const auto* p = std::get_if<ProductNode>(&circuit.node(id))) {
          for (NodeId child : p->children) resp[child] += r_node;
        } else {
          const auto& leaf = std::get<LeafNode>(circuit.node(id));
          const Variable& var = circuit.variable(leaf.var);
          const double x = e.value(leaf.var);
          auto& stats = leaf_stats[id];
          if (var.kind == VarKind::Categorical) {
            stats.counts[detail::categorical_code(x, var.arity, var.name)] += r_node;
          } else {
            const double scale =
                std::holds_alternative<DiscretizedGaussian>(leaf.dist) ? kBucketStep : 1.0;
            stats.moments.add(r_node, x * scale);
          }
        }
      }
    }
    ll_trace.push_back(ll / static_cast<double>(data.num_rows()));
    for (NodeId id = 0; id < circuit.num_nodes(); ++id) {
      Node& node = circuit.mutate_node(id);
      if (auto* s = std::get_if<SumNode>(&node)) {
        double total = 0.0;
        for (double c : edge_counts[id]) total += c;
        if (total <= 0.0) continue;  // unreachable component: keep old weights
        std::vector<double> probs(s->children.size());
        double renorm = 0.0;
        for (std::size_t i = 0; i < probs.size(); ++i) {
          probs[i] = std::max(edge_counts[id][i] / total, kWeightFloor);
          renorm += probs[i];
        }
        for (std::size_t i = 0; i < probs.size(); ++i)
          s->log_weights[i] = std::log(probs[i] / renorm);
      } else if (auto* l = std::get_if<LeafNode>(&node)) {
        const auto& stats = leaf_stats[id];
        if (!stats.counts.empty()) {
          double seen = 0.0;
          for (double c : stats.counts) seen += c;
          if (seen > 0.0) l->dist = detail::fit_categorical(stats.counts);
        } else if (stats.moments.w > 0.0) {
          const Gaussian g = detail::fit_gaussian(stats.moments, cfg.min_var, cfg.max_var);
          if (auto* dg = std::get_if<DiscretizedGaussian>(&l->dist))
            l->dist = DiscretizedGaussian{g.mu, g.sigma, dg->num_buckets};
          else
            l->dist = g;
        }
      }
    }
  }
  double final_ll = 0.0;
  for (std::size_t r = 0; r < data.num_rows(); ++r)
    final_ll += log_density(circuit, row_evidence(r));
  ll_trace.push_back(final_ll / static_cast<double>(data.num_rows()));
  return EmResult{std::move(circuit), std::move(ll_trace)};
}

}  // namespace fedcirc
