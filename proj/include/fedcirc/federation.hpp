#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <map>
#include <mutex>
#include <numeric>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "fedcirc/circuit.hpp"
#include "fedcirc/common.hpp"
#include "fedcirc/dataset.hpp"
#include "fedcirc/inference.hpp"
#include "fedcirc/learn.hpp"
#include "fedcirc/transport.hpp"

namespace fedcirc {

using ClientId = MachineId;  // >= 0; kServer = -1

struct ClientSite {
  ClientId id = 0;
  Dataset data;
};

struct FeatureIndicatorMatrix {
  std::vector<std::string> feature_order;        // lexicographic by name
  std::vector<Column> feature_columns;           // merged column metadata per feature
  std::vector<std::vector<std::uint8_t>> m;      // |C| x |X|, m[i][j] = client i holds feature j
};

struct Subspace {
  std::vector<std::size_t> features;  // indices into feature_order, ascending
  std::vector<ClientId> owners;       // ascending
};

struct SubspaceMap {
  std::vector<Subspace> entries;  // ordered by first feature index
};

/// Assembled federated circuit: the global graph, a node-to-machine
/// assignment, and the training-row count of every client-trained subtree
/// root (the rho inputs for weight inference).
struct FedStructure {
  Circuit circuit;
  std::vector<MachineId> assignment;        // per node id
  std::map<NodeId, std::size_t> client_rows;  // client subtree root -> rows
};

enum class Wiring { Aligned, RandomCoverage };

/// Feature indicator matrix M over the union of announced features, ordered
/// lexicographically by name. Records one FeatureAnnounce per client when a
/// ledger is given. A feature announced with conflicting kinds is an
/// ingestion error.
inline FeatureIndicatorMatrix build_indicator_matrix(const std::vector<ClientSite>& clients,
                                                     CommLedger* ledger = nullptr) {
  if (clients.empty()) throw ConfigError("no clients");
  std::map<std::string, Column> features;
  for (const auto& client : clients) {
    for (const auto& col : client.data.columns()) {
      auto [it, inserted] = features.emplace(col.name, col);
      if (!inserted && (it->second.kind != col.kind || it->second.arity != col.arity))
        throw std::invalid_argument("feature " + col.name + " announced with conflicting kinds");
    }
  }
  FeatureIndicatorMatrix out;
  out.feature_order.reserve(features.size());
  for (const auto& [name, col] : features) {
    out.feature_order.push_back(name);
    out.feature_columns.push_back(col);
  }
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t j = 0; j < out.feature_order.size(); ++j) index[out.feature_order[j]] = j;
  out.m.assign(clients.size(), std::vector<std::uint8_t>(out.feature_order.size(), 0));
  for (std::size_t i = 0; i < clients.size(); ++i) {
    for (const auto& col : clients[i].data.columns()) out.m[i][index[col.name]] = 1;
    if (ledger)
      ledger->record(Message::make(MessageKind::FeatureAnnounce, clients[i].id, kServer,
                                   clients[i].data.num_cols()));
  }
  return out;
}

/// Groups features with identical indicator columns into disjoint subspaces.
inline SubspaceMap derive_subspaces(const FeatureIndicatorMatrix& m) {
  const std::size_t num_features = m.feature_order.size();
  const std::size_t num_clients = m.m.size();
  SubspaceMap out;
  std::map<std::vector<std::uint8_t>, std::size_t> seen;
  for (std::size_t j = 0; j < num_features; ++j) {
    std::vector<std::uint8_t> column(num_clients);
    bool any = false;
    for (std::size_t i = 0; i < num_clients; ++i) {
      column[i] = m.m[i][j];
      any = any || column[i];
    }
    if (!any) throw std::invalid_argument("feature " + m.feature_order[j] + " has no owner");
    auto [it, inserted] = seen.emplace(std::move(column), out.entries.size());
    if (inserted) {
      Subspace s;
      for (std::size_t i = 0; i < num_clients; ++i)
        if (m.m[i][j]) s.owners.push_back(static_cast<ClientId>(i));
      out.entries.push_back(std::move(s));
    }
    out.entries[it->second].features.push_back(j);
  }
  std::sort(out.entries.begin(), out.entries.end(),
            [](const Subspace& a, const Subspace& b) { return a.features.front() < b.features.front(); });
  return out;
}

/// Copies the reachable part of `src` into `dst`, mapping variables by name.
/// Returns the id of the copied root.
inline NodeId graft(Circuit& dst, const Circuit& src) {
  std::vector<VarId> var_map(src.num_variables(), 0);
  for (const auto& v : src.variables()) {
    auto dv = dst.find_variable(v.name);
    if (!dv) throw std::invalid_argument("graft: destination lacks variable " + v.name);
    var_map[v.id] = *dv;
  }
  std::unordered_map<NodeId, NodeId> node_map;
  for (NodeId id : src.topo_order()) {
    const Node& n = src.node(id);
    NodeId copied;
    if (const auto* leaf = std::get_if<LeafNode>(&n)) {
      copied = dst.add_leaf(var_map[leaf->var], leaf->dist);
    } else if (const auto* prod = std::get_if<ProductNode>(&n)) {
      std::vector<NodeId> children;
      children.reserve(prod->children.size());
      for (NodeId c : prod->children) children.push_back(node_map.at(c));
      copied = dst.add_product(std::move(children));
    } else {
      const auto& sum = std::get<SumNode>(n);
      std::vector<NodeId> children;
      children.reserve(sum.children.size());
      for (NodeId c : sum.children) children.push_back(node_map.at(c));
      copied = dst.add_sum(std::move(children), sum.log_weights);
    }
    node_map[id] = copied;
  }
  return node_map.at(src.root());
}

/// Training-row mass beneath a node: sums client_rows over the client
/// subtree roots reachable from `n`, not descending past them.
inline std::size_t rho(const FedStructure& fs, NodeId n) {
  std::size_t total = 0;
  std::vector<NodeId> stack{n};
  std::vector<std::uint8_t> seen(fs.circuit.num_nodes(), 0);
  while (!stack.empty()) {
    const NodeId id = stack.back();
    stack.pop_back();
    if (seen[id]) continue;
    seen[id] = 1;
    auto it = fs.client_rows.find(id);
    if (it != fs.client_rows.end()) {
      total += it->second;
      continue;
    }
    const Node& node = fs.circuit.node(id);
    if (const auto* s = std::get_if<SumNode>(&node))
      stack.insert(stack.end(), s->children.begin(), s->children.end());
    else if (const auto* p = std::get_if<ProductNode>(&node))
      stack.insert(stack.end(), p->children.begin(), p->children.end());
  }
  return total;
}

/// Sets every server-side sum's weights to rho(child) / sum(rho): mixture
/// weights come from training-set sizes alone, with no forward pass.
inline void infer_weights(FedStructure& fs) {
  for (NodeId id : fs.circuit.topo_order()) {
    if (fs.assignment.at(id) != kServer) continue;
    if (!std::holds_alternative<SumNode>(fs.circuit.node(id))) continue;
    std::vector<double> rhos;
    const auto& children = std::get<SumNode>(fs.circuit.node(id)).children;
    rhos.reserve(children.size());
    for (NodeId c : children) rhos.push_back(static_cast<double>(rho(fs, c)));
    double total = 0.0;
    for (double r : rhos) total += r;
    if (total <= 0.0) throw std::invalid_argument("infer_weights: zero total row mass");
    auto& sum = std::get<SumNode>(fs.circuit.mutate_node(id));
    sum.log_weights = log_normalize(rhos);
  }
}

struct FedTrainOptions {
  LearnConfig learn;          // seed drives every stream below
  std::size_t products = 1;   // P
  Wiring wiring = Wiring::Aligned;
  std::size_t workers = 1;
};

struct FedTrainResult {
  FedStructure structure;
  CommLedger ledger;
};

namespace detail {

struct PieceSpec {
  std::size_t subspace = 0;
  std::int32_t cluster = -1;            // -1: shared-subspace piece over all rows
  std::vector<std::size_t> cols;        // client-local column indices
  std::vector<std::size_t> rows;        // empty + cluster >= 0: cluster locally
};

struct PieceResult {
  Circuit circuit;
  std::size_t rows = 0;
  std::size_t params = 0;
};

struct ClientPlan {
  std::vector<PieceSpec> pieces;
  bool cluster_locally = false;  // random_coverage singleton owner
};

inline PieceResult train_piece(const ClientSite& client, const PieceSpec& spec,
                               const std::vector<std::size_t>& rows, const LearnConfig& learn) {
  Dataset local = client.data.select_columns(spec.cols).select_rows(rows);
  PieceResult out;
  out.circuit = learn_structure(local, learn);
  out.rows = rows.size();
  out.params = out.circuit.parameter_count();
  return out;
}

inline void run_client(const ClientSite& client, const ClientPlan& plan, const LearnConfig& learn,
                       std::size_t k_clusters, std::vector<PieceResult>& results) {
  std::vector<std::vector<std::size_t>> local_clusters;
  if (plan.cluster_locally) {
    std::vector<std::size_t> rows(client.data.num_rows()), cols(client.data.num_cols());
    std::iota(rows.begin(), rows.end(), 0);
    std::iota(cols.begin(), cols.end(), 0);
    const auto labels =
        kmeans_on(client.data, rows, cols, k_clusters,
                  SeedStream::derive(learn.seed, "onepass.cluster",
                                     static_cast<std::uint64_t>(client.id)));
    local_clusters.resize(k_clusters);
    for (std::size_t i = 0; i < labels.size(); ++i) local_clusters[labels[i]].push_back(i);
  }
  results.resize(plan.pieces.size());
  std::vector<std::size_t> all_rows(client.data.num_rows());
  std::iota(all_rows.begin(), all_rows.end(), 0);
  for (std::size_t i = 0; i < plan.pieces.size(); ++i) {
    const PieceSpec& spec = plan.pieces[i];
    const std::vector<std::size_t>* rows = &spec.rows;
    if (spec.cluster < 0 && spec.rows.empty()) rows = &all_rows;
    if (spec.cluster >= 0 && spec.rows.empty()) {
      rows = &local_clusters.at(static_cast<std::size_t>(spec.cluster));
      if (rows->empty())
        throw std::runtime_error("client " + std::to_string(client.id) + ": cluster " +
                                 std::to_string(spec.cluster) + " is empty");
    }
    results[i] = train_piece(client, spec, *rows, learn);
  }
}

}  // namespace detail

/// Algorithm: one pass over the clients. Feature announcement fixes the
/// indicator matrix; identical columns collapse into subspaces. Shared
/// subspaces become server sums over per-owner circuits; singleton subspaces
/// are clustered into K parts per owner and wired into P server products
/// (aligned: label broadcast pairs cluster t across owners and P must equal
/// K; random_coverage: seeded wiring that covers every cluster). Server sum
/// weights come from row counts alone. Client training runs on `workers`
/// threads; the ledger is written at the server in deterministic order.
inline FedTrainResult one_pass_train(const std::vector<ClientSite>& clients,
                                     const FedTrainOptions& opts) {
  opts.learn.check();
  if (clients.empty()) throw ConfigError("one_pass_train: no clients");
  for (std::size_t i = 0; i < clients.size(); ++i)
    if (clients[i].id != static_cast<ClientId>(i))
      throw ConfigError("one_pass_train: client ids must be dense 0..n-1");
  if (opts.products < 1) throw ConfigError("one_pass_train: products must be >= 1");
  const std::size_t K = opts.learn.k_clusters;
  const std::size_t P = opts.products;

  FedTrainResult result;
  CommLedger& ledger = result.ledger;
  const FeatureIndicatorMatrix matrix = build_indicator_matrix(clients, &ledger);
  const SubspaceMap subspaces = derive_subspaces(matrix);

  std::vector<std::size_t> singleton_entries;
  std::vector<std::size_t> shared_entries;
  for (std::size_t s = 0; s < subspaces.entries.size(); ++s) {
    (subspaces.entries[s].owners.size() == 1 ? singleton_entries : shared_entries).push_back(s);
  }

  // Aligned clustering: the coordinator (most singleton features, ties to the
  // smallest id) clusters its own rows; labels are shared by row id in a
  // single broadcast message.
  std::unordered_map<std::int64_t, std::uint32_t> label_of_row;
  ClientId coordinator = -1;
  if (!singleton_entries.empty() && opts.wiring == Wiring::Aligned) {
    if (P != K) throw ConfigError("aligned wiring requires products == k_clusters");
    std::map<ClientId, std::size_t> singleton_features;
    for (std::size_t s : singleton_entries) {
      const Subspace& sub = subspaces.entries[s];
      singleton_features[sub.owners[0]] += sub.features.size();
    }
    std::size_t best = 0;
    for (const auto& [client, count] : singleton_features) {
      if (count > best) {
        best = count;
        coordinator = client;
      }
    }
    const Dataset& cd = clients[static_cast<std::size_t>(coordinator)].data;
    if (!cd.has_row_ids()) throw ConfigError("aligned wiring requires row ids");
    if (cd.num_rows() < K) throw ConfigError("aligned wiring: fewer rows than clusters");
    std::vector<std::size_t> rows(cd.num_rows()), cols(cd.num_cols());
    std::iota(rows.begin(), rows.end(), 0);
    std::iota(cols.begin(), cols.end(), 0);
    const auto labels = kmeans_on(cd, rows, cols, K,
                                  SeedStream::derive(opts.learn.seed, "onepass.cluster",
                                                     static_cast<std::uint64_t>(coordinator)));
    for (std::size_t i = 0; i < labels.size(); ++i) label_of_row[cd.row_ids()[i]] = labels[i];
    ledger.record(Message::make(MessageKind::ClusterAssignment, coordinator, kServer,
                                labels.size()));
  }
  if (!singleton_entries.empty() && opts.wiring == Wiring::RandomCoverage && P < K)
    throw ConfigError("random_coverage wiring requires products >= k_clusters");

  // Per-client training plans.
  std::vector<detail::ClientPlan> plans(clients.size());
  auto local_cols = [&](ClientId c, const Subspace& sub) {
    std::vector<std::size_t> cols;
    cols.reserve(sub.features.size());
    for (std::size_t f : sub.features)
      cols.push_back(clients[static_cast<std::size_t>(c)].data.column_index(matrix.feature_order[f]));
    return cols;
  };
  for (std::size_t s : shared_entries) {
    const Subspace& sub = subspaces.entries[s];
    for (ClientId owner : sub.owners)
      plans[static_cast<std::size_t>(owner)].pieces.push_back(
          detail::PieceSpec{s, -1, local_cols(owner, sub), {}});
  }
  for (std::size_t s : singleton_entries) {
    const Subspace& sub = subspaces.entries[s];
    const ClientId owner = sub.owners[0];
    const Dataset& od = clients[static_cast<std::size_t>(owner)].data;
    auto cols = local_cols(owner, sub);
    if (opts.wiring == Wiring::Aligned) {
      if (!od.has_row_ids()) throw ConfigError("aligned wiring requires row ids on every owner");
      std::vector<std::vector<std::size_t>> per_cluster(K);
      for (std::size_t r = 0; r < od.num_rows(); ++r) {
        auto it = label_of_row.find(od.row_ids()[r]);
        if (it == label_of_row.end())
          throw ConfigError("aligned wiring: client " + std::to_string(owner) +
                            " holds row id " + std::to_string(od.row_ids()[r]) +
                            " unknown to the coordinator");
        per_cluster[it->second].push_back(r);
      }
      for (std::size_t t = 0; t < K; ++t) {
        if (per_cluster[t].empty())
          throw ConfigError("aligned wiring: cluster " + std::to_string(t) +
                            " has no rows on client " + std::to_string(owner));
        plans[static_cast<std::size_t>(owner)].pieces.push_back(
            detail::PieceSpec{s, static_cast<std::int32_t>(t), cols, std::move(per_cluster[t])});
      }
    } else {
      plans[static_cast<std::size_t>(owner)].cluster_locally = true;
      if (od.num_rows() < K) throw ConfigError("random_coverage: fewer rows than clusters");
      for (std::size_t t = 0; t < K; ++t)
        plans[static_cast<std::size_t>(owner)].pieces.push_back(
            detail::PieceSpec{s, static_cast<std::int32_t>(t), cols, {}});
    }
  }

  // Client work, one logical worker per client.
  std::vector<std::vector<detail::PieceResult>> outputs(clients.size());
  {
    const std::size_t workers = std::max<std::size_t>(1, opts.workers);
    if (workers == 1) {
      for (std::size_t c = 0; c < clients.size(); ++c)
        detail::run_client(clients[c], plans[c], opts.learn, K, outputs[c]);
    } else {
      std::atomic<std::size_t> next{0};
      std::exception_ptr failure;
      std::mutex failure_mutex;
      auto worker = [&]() {
        while (true) {
          const std::size_t c = next.fetch_add(1);
          if (c >= clients.size()) return;
          try {
            detail::run_client(clients[c], plans[c], opts.learn, K, outputs[c]);
          } catch (...) {
            std::lock_guard<std::mutex> lock(failure_mutex);
            if (!failure) failure = std::current_exception();
          }
        }
      };
      std::vector<std::thread> pool;
      const std::size_t nthreads = std::min(workers, clients.size());
      pool.reserve(nthreads);
      for (std::size_t t = 0; t < nthreads; ++t) pool.emplace_back(worker);
      for (auto& t : pool) t.join();
      if (failure) std::rethrow_exception(failure);
    }
  }

  // Server-side assembly; ledger order is fixed by subspace then owner then
  // cluster, independent of worker completion order.
  FedStructure& fs = result.structure;
  for (std::size_t f = 0; f < matrix.feature_order.size(); ++f) {
    const Column& col = matrix.feature_columns[f];
    fs.circuit.add_variable(col.name, col.kind, col.arity);
  }
  auto assign_new_nodes = [&](MachineId machine) {
    fs.assignment.resize(fs.circuit.num_nodes(), machine);
  };
  auto graft_piece = [&](ClientId owner, const detail::PieceResult& piece) {
    const NodeId root = graft(fs.circuit, piece.circuit);
    assign_new_nodes(owner);
    fs.client_rows[root] = piece.rows;
    ledger.record(Message::make(MessageKind::ModelUpload, owner, kServer, piece.params));
    return root;
  };
  auto piece_result = [&](ClientId owner, std::size_t subspace,
                          std::int32_t cluster) -> const detail::PieceResult& {
    const auto& plan = plans[static_cast<std::size_t>(owner)].pieces;
    for (std::size_t i = 0; i < plan.size(); ++i)
      if (plan[i].subspace == subspace && plan[i].cluster == cluster)
        return outputs[static_cast<std::size_t>(owner)][i];
    throw std::logic_error("missing trained piece");
  };

  std::map<std::size_t, NodeId> shared_sum_of;              // subspace -> server sum
  std::map<std::size_t, std::vector<NodeId>> cluster_roots;  // subspace -> K roots
  std::vector<Message> weight_messages;
  for (std::size_t s : shared_entries) {
    const Subspace& sub = subspaces.entries[s];
    std::vector<NodeId> children;
    std::vector<double> sizes;
    for (ClientId owner : sub.owners) {
      const auto& piece = piece_result(owner, s, -1);
      children.push_back(graft_piece(owner, piece));
      sizes.push_back(static_cast<double>(piece.rows));
      weight_messages.push_back(Message::make(MessageKind::WeightInfo, owner, kServer, 1));
    }
    const NodeId sum = fs.circuit.add_sum(std::move(children), log_normalize(sizes));
    assign_new_nodes(kServer);
    shared_sum_of[s] = sum;
  }
  for (std::size_t s : singleton_entries) {
    const Subspace& sub = subspaces.entries[s];
    const ClientId owner = sub.owners[0];
    auto& roots = cluster_roots[s];
    for (std::size_t t = 0; t < K; ++t) {
      const auto& piece = piece_result(owner, s, static_cast<std::int32_t>(t));
      roots.push_back(graft_piece(owner, piece));
      if (opts.wiring == Wiring::RandomCoverage)
        weight_messages.push_back(Message::make(MessageKind::WeightInfo, owner, kServer, 1));
    }
  }

  NodeId root;
  if (singleton_entries.empty()) {
    std::vector<NodeId> tops;
    for (std::size_t s : shared_entries) tops.push_back(shared_sum_of[s]);
    root = tops.size() == 1 ? tops[0] : fs.circuit.add_product(std::move(tops));
    assign_new_nodes(kServer);
  } else {
    // Per singleton subspace: which cluster circuit joins product p. Aligned
    // pairs cluster p everywhere; random_coverage uses a seeded surjection
    // (a shuffled permutation fills the first K products, the rest draw
    // uniformly) so every cluster lands in at least one product.
    std::vector<std::vector<std::size_t>> wire(singleton_entries.size());
    for (std::size_t idx = 0; idx < singleton_entries.size(); ++idx) {
      auto& choice = wire[idx];
      choice.resize(P);
      if (opts.wiring == Wiring::Aligned) {
        std::iota(choice.begin(), choice.end(), 0);  // P == K
      } else {
        auto rng = SeedStream::derive(opts.learn.seed, "onepass.wire", idx).rng();
        std::vector<std::size_t> perm(K);
        std::iota(perm.begin(), perm.end(), 0);
        for (std::size_t i = K; i > 1; --i) std::swap(perm[i - 1], perm[rng() % i]);
        for (std::size_t q = 0; q < P; ++q)
          choice[q] = q < K ? perm[q] : static_cast<std::size_t>(rng() % K);
      }
      std::vector<std::uint8_t> covered(K, 0);
      for (std::size_t c : choice) covered[c] = 1;
      if (std::find(covered.begin(), covered.end(), 0) != covered.end())
        throw std::logic_error("cluster coverage violated");
    }
    std::vector<NodeId> products;
    products.reserve(P);
    for (std::size_t p = 0; p < P; ++p) {
      std::vector<NodeId> children;
      for (std::size_t s : shared_entries) children.push_back(shared_sum_of[s]);
      for (std::size_t idx = 0; idx < singleton_entries.size(); ++idx)
        children.push_back(cluster_roots[singleton_entries[idx]][wire[idx][p]]);
      products.push_back(fs.circuit.add_product(std::move(children)));
      assign_new_nodes(kServer);
    }
    std::vector<double> unit(P, 1.0);
    root = fs.circuit.add_sum(products, log_normalize(unit));
    assign_new_nodes(kServer);
    if (opts.wiring == Wiring::Aligned) {
      const ClientId sender = coordinator >= 0 ? coordinator : 0;
      for (std::size_t p = 0; p < P; ++p)
        weight_messages.push_back(Message::make(MessageKind::WeightInfo, sender, kServer, 1));
    }
  }
  fs.circuit.set_root(root);
  for (const Message& m : weight_messages) ledger.record(m);
  infer_weights(fs);
  return result;
}

/// Evaluation with the assembled circuit; bit-identical to log_density. Each
/// edge whose endpoints live on different machines records one forwarded
/// scalar.
inline double federated_log_density(const FedStructure& fs, const Evidence& e,
                                    CommLedger& ledger) {
  const double value = log_density(fs.circuit, e);
  for (NodeId id : fs.circuit.topo_order()) {
    const Node& node = fs.circuit.node(id);
    const std::vector<NodeId>* children = nullptr;
    if (const auto* s = std::get_if<SumNode>(&node)) children = &s->children;
    else if (const auto* p = std::get_if<ProductNode>(&node)) children = &p->children;
    if (!children) continue;
    for (NodeId c : *children) {
      if (fs.assignment.at(c) != fs.assignment.at(id))
        ledger.record(Message::make(MessageKind::LikelihoodForward, fs.assignment.at(c),
                                    fs.assignment.at(id), 1));
    }
  }
  return value;
}

}  // namespace fedcirc
