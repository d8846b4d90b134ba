#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "fedcirc/common.hpp"
#include "fedcirc/dataset.hpp"
#include "fedcirc/federation.hpp"

namespace fedcirc {

enum class PartitionMode { Horizontal, Vertical, Hybrid };

inline const char* partition_mode_name(PartitionMode m) {
  switch (m) {
    case PartitionMode::Horizontal: return "horizontal";
    case PartitionMode::Vertical: return "vertical";
    case PartitionMode::Hybrid: return "hybrid";
  }
  return "?";
}

inline PartitionMode partition_mode_from(const std::string& s) {
  if (s == "horizontal") return PartitionMode::Horizontal;
  if (s == "vertical") return PartitionMode::Vertical;
  if (s == "hybrid") return PartitionMode::Hybrid;
  throw std::invalid_argument("unknown partition mode: " + s);
}

struct ClientSlice {
  ClientId id = 0;
  std::vector<std::string> features;
  std::vector<std::int64_t> row_ids;
};

struct PartitionManifest {
  PartitionMode mode = PartitionMode::Horizontal;
  std::uint64_t seed = 0;
  std::string source_checksum;  // FNV-1a of the source file, hex
  std::vector<ClientSlice> clients;
};

namespace detail {

inline std::vector<std::int64_t> effective_row_ids(const Dataset& data) {
  if (data.has_row_ids()) return data.row_ids();
  std::vector<std::int64_t> ids(data.num_rows());
  std::iota(ids.begin(), ids.end(), 0);
  return ids;
}

inline std::vector<std::string> all_feature_names(const Dataset& data) {
  std::vector<std::string> names;
  names.reserve(data.num_cols());
  for (const auto& col : data.columns()) names.push_back(col.name);
  return names;
}

inline void seeded_shuffle(std::vector<std::size_t>& xs, SeedStream stream) {
  auto rng = stream.rng();
  for (std::size_t i = xs.size(); i > 1; --i) std::swap(xs[i - 1], xs[rng() % i]);
}

}  // namespace detail

/// Checks the per-mode manifest invariants; throws on violation.
inline void validate_manifest(const PartitionManifest& m) {
  if (m.clients.empty()) throw std::invalid_argument("manifest has no clients");
  for (std::size_t i = 0; i < m.clients.size(); ++i)
    if (m.clients[i].id != static_cast<ClientId>(i))
      throw std::invalid_argument("manifest client ids must be dense 0..n-1");
  if (m.mode == PartitionMode::Horizontal) {
    std::set<std::int64_t> seen;
    for (const auto& c : m.clients) {
      if (c.features != m.clients[0].features)
        throw std::invalid_argument("horizontal manifest: feature lists differ");
      for (std::int64_t id : c.row_ids)
        if (!seen.insert(id).second)
          throw std::invalid_argument("horizontal manifest: row id " + std::to_string(id) +
                                      " appears twice");
    }
  } else if (m.mode == PartitionMode::Vertical) {
    std::set<std::string> seen;
    for (const auto& c : m.clients) {
      if (c.row_ids != m.clients[0].row_ids)
        throw std::invalid_argument("vertical manifest: row-id lists differ");
      for (const auto& f : c.features)
        if (!seen.insert(f).second)
          throw std::invalid_argument("vertical manifest: feature " + f + " appears twice");
    }
  } else {
    bool share = false;
    for (std::size_t a = 0; a < m.clients.size() && !share; ++a) {
      std::set<std::string> fa(m.clients[a].features.begin(), m.clients[a].features.end());
      for (std::size_t b = a + 1; b < m.clients.size() && !share; ++b)
        for (const auto& f : m.clients[b].features)
          if (fa.count(f)) { share = true; break; }
    }
    if (!share) throw std::invalid_argument("hybrid manifest: no shared feature");
    for (std::size_t a = 0; a < m.clients.size(); ++a)
      for (std::size_t b = a + 1; b < m.clients.size(); ++b)
        if (m.clients[a].features == m.clients[b].features &&
            m.clients[a].row_ids == m.clients[b].row_ids)
          throw std::invalid_argument("hybrid manifest: clients " + std::to_string(a) + " and " +
                                      std::to_string(b) + " fully overlap");
  }
}

enum class HorizontalStrategy { Random, ByLabel };

/// Disjoint row blocks over identical features. Random: a seeded shuffle cut
/// into near-equal blocks (the first n mod c clients get the larger size).
/// ByLabel: distinct labels round-robined ascending; a client takes every
/// row of its labels.
inline PartitionManifest horizontal_split(const Dataset& data, std::size_t clients,
                                          HorizontalStrategy strategy, std::uint64_t seed,
                                          const std::string& class_var = "") {
  if (clients < 1) throw std::invalid_argument("need at least one client");
  if (clients > data.num_rows()) throw std::invalid_argument("more clients than rows");
  PartitionManifest out;
  out.mode = PartitionMode::Horizontal;
  out.seed = seed;
  const auto ids = detail::effective_row_ids(data);
  const auto features = detail::all_feature_names(data);
  out.clients.resize(clients);
  for (std::size_t c = 0; c < clients; ++c) {
    out.clients[c].id = static_cast<ClientId>(c);
    out.clients[c].features = features;
  }
  if (strategy == HorizontalStrategy::Random) {
    std::vector<std::size_t> order(data.num_rows());
    std::iota(order.begin(), order.end(), 0);
    detail::seeded_shuffle(order, SeedStream::derive(seed, "partition.horizontal"));
    const std::size_t base = data.num_rows() / clients;
    const std::size_t extra = data.num_rows() % clients;
    std::size_t cursor = 0;
    for (std::size_t c = 0; c < clients; ++c) {
      const std::size_t take = base + (c < extra ? 1 : 0);
      for (std::size_t i = 0; i < take; ++i) out.clients[c].row_ids.push_back(ids[order[cursor++]]);
    }
  } else {
    const std::size_t col = data.column_index(class_var);
    std::map<double, std::vector<std::size_t>> by_label;
    for (std::size_t r = 0; r < data.num_rows(); ++r) by_label[data.at(r, col)].push_back(r);
    if (by_label.size() < clients)
      throw std::invalid_argument("by_label split needs at least as many labels as clients");
    std::size_t c = 0;
    for (const auto& [label, rows] : by_label) {
      for (std::size_t r : rows) out.clients[c].row_ids.push_back(ids[r]);
      c = (c + 1) % clients;
    }
    for (auto& client : out.clients) std::sort(client.row_ids.begin(), client.row_ids.end());
  }
  validate_manifest(out);
  return out;
}

/// All rows everywhere; features shuffled by seed and dealt round-robin.
inline PartitionManifest vertical_split(const Dataset& data, std::size_t clients,
                                        std::uint64_t seed) {
  if (clients < 1) throw std::invalid_argument("need at least one client");
  if (clients > data.num_cols()) throw std::invalid_argument("more clients than features");
  PartitionManifest out;
  out.mode = PartitionMode::Vertical;
  out.seed = seed;
  const auto ids = detail::effective_row_ids(data);
  std::vector<std::size_t> order(data.num_cols());
  std::iota(order.begin(), order.end(), 0);
  detail::seeded_shuffle(order, SeedStream::derive(seed, "partition.vertical"));
  out.clients.resize(clients);
  for (std::size_t c = 0; c < clients; ++c) {
    out.clients[c].id = static_cast<ClientId>(c);
    out.clients[c].row_ids = ids;
  }
  for (std::size_t i = 0; i < order.size(); ++i)
    out.clients[i % clients].features.push_back(data.column(order[i]).name);
  validate_manifest(out);
  return out;
}

/// Seeded overlap split: `overlap_features` features go to every client, the
/// rest are dealt disjointly; each client samples ceil(row_fraction * rows)
/// row ids without replacement.
inline PartitionManifest hybrid_split(const Dataset& data, std::size_t clients,
                                      std::size_t overlap_features, double row_fraction,
                                      std::uint64_t seed) {
  if (clients < 2) throw std::invalid_argument("hybrid split needs at least two clients");
  if (overlap_features < 1 || overlap_features > data.num_cols())
    throw std::invalid_argument("overlap_features out of range");
  if (!(row_fraction > 0.0 && row_fraction <= 1.0))
    throw std::invalid_argument("row_fraction must be in (0,1]");
  PartitionManifest out;
  out.mode = PartitionMode::Hybrid;
  out.seed = seed;
  const auto ids = detail::effective_row_ids(data);
  std::vector<std::size_t> order(data.num_cols());
  std::iota(order.begin(), order.end(), 0);
  detail::seeded_shuffle(order, SeedStream::derive(seed, "partition.hybrid.features"));
  out.clients.resize(clients);
  const std::size_t rows_per_client =
      static_cast<std::size_t>(std::ceil(row_fraction * static_cast<double>(data.num_rows())));
  if (rows_per_client == 0) throw std::invalid_argument("row_fraction selects no rows");
  for (std::size_t c = 0; c < clients; ++c) {
    out.clients[c].id = static_cast<ClientId>(c);
    for (std::size_t i = 0; i < overlap_features; ++i)
      out.clients[c].features.push_back(data.column(order[i]).name);
    std::vector<std::size_t> rows(data.num_rows());
    std::iota(rows.begin(), rows.end(), 0);
    detail::seeded_shuffle(rows, SeedStream::derive(seed, "partition.hybrid.rows", c));
    out.clients[c].row_ids.reserve(rows_per_client);
    for (std::size_t i = 0; i < rows_per_client; ++i) out.clients[c].row_ids.push_back(ids[rows[i]]);
    std::sort(out.clients[c].row_ids.begin(), out.clients[c].row_ids.end());
  }
  for (std::size_t i = overlap_features; i < order.size(); ++i)
    out.clients[(i - overlap_features) % clients].features.push_back(data.column(order[i]).name);
  validate_manifest(out);
  return out;
}

inline nlohmann::json manifest_to_json(const PartitionManifest& m) {
  nlohmann::json j;
  j["format_version"] = 1;
  j["mode"] = partition_mode_name(m.mode);
  j["seed"] = m.seed;
  j["source_checksum"] = m.source_checksum;
  nlohmann::json clients = nlohmann::json::array();
  for (const auto& c : m.clients) {
    nlohmann::json jc;
    jc["id"] = c.id;
    jc["features"] = c.features;
    jc["row_ids"] = c.row_ids;
    clients.push_back(std::move(jc));
  }
  j["clients"] = std::move(clients);
  return j;
}

inline PartitionManifest manifest_from_json(const nlohmann::json& j) {
  if (j.at("format_version").get<int>() != 1)
    throw std::invalid_argument("unsupported manifest format_version");
  PartitionManifest m;
  m.mode = partition_mode_from(j.at("mode").get<std::string>());
  m.seed = j.at("seed").get<std::uint64_t>();
  m.source_checksum = j.at("source_checksum").get<std::string>();
  for (const auto& jc : j.at("clients")) {
    ClientSlice c;
    c.id = jc.at("id").get<ClientId>();
    c.features = jc.at("features").get<std::vector<std::string>>();
    c.row_ids = jc.at("row_ids").get<std::vector<std::int64_t>>();
    m.clients.push_back(std::move(c));
  }
  return m;
}

inline void save_manifest(const PartitionManifest& m, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << manifest_to_json(m).dump(2) << '\n';
}

inline PartitionManifest load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  nlohmann::json j;
  in >> j;
  return manifest_from_json(j);
}

/// Client-local datasets per the manifest's feature and row selections.
inline std::vector<ClientSite> materialize_clients(const Dataset& data,
                                                   const PartitionManifest& m) {
  Dataset indexed = data;
  if (!indexed.has_row_ids()) indexed.assign_row_ids(detail::effective_row_ids(data));
  std::vector<ClientSite> out;
  out.reserve(m.clients.size());
  for (const auto& c : m.clients) {
    ClientSite site;
    site.id = c.id;
    site.data = indexed.select_columns_by_name(c.features).select_rows_by_id(c.row_ids);
    out.push_back(std::move(site));
  }
  return out;
}

/// Writes client_<id>.csv per client (with a __row_id column) plus
/// manifest.json into `out_dir`. Returns the manifest path.
inline std::string emit_partition(const Dataset& data, const PartitionManifest& m,
                                  const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  const auto sites = materialize_clients(data, m);
  for (const auto& site : sites) {
    const std::string path =
        (std::filesystem::path(out_dir) / ("client_" + std::to_string(site.id) + ".csv")).string();
    write_csv(site.data, path);
  }
  const std::string manifest_path = (std::filesystem::path(out_dir) / "manifest.json").string();
  save_manifest(m, manifest_path);
  return manifest_path;
}

}  // namespace fedcirc
