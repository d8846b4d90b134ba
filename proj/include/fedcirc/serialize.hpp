#pragma once

#include <cmath>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

#include "fedcirc/circuit.hpp"

namespace fedcirc {

inline constexpr int kModelFormatVersion = 1;

namespace detail {

// JSON has no literal for infinities, so nonfinite reals travel as strings.
// Finite doubles rely on the shortest round-trip representation of the JSON
// writer, which reparses to the identical bit pattern.
inline nlohmann::json real_to_json(double x) {
  if (std::isfinite(x)) return x;
  if (std::isnan(x)) throw std::invalid_argument("cannot serialize NaN parameter");
  return x > 0 ? "inf" : "-inf";
}

inline double real_from_json(const nlohmann::json& j) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    const auto& s = j.get_ref<const std::string&>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
  }
  throw std::invalid_argument("expected a real number");
}

inline nlohmann::json reals_to_json(const std::vector<double>& xs) {
  nlohmann::json arr = nlohmann::json::array();
  for (double x : xs) arr.push_back(real_to_json(x));
  return arr;
}

inline std::vector<double> reals_from_json(const nlohmann::json& j) {
  std::vector<double> out;
  out.reserve(j.size());
  for (const auto& e : j) out.push_back(real_from_json(e));
  return out;
}

inline nlohmann::json dist_to_json(const LeafDistribution& dist) {
  nlohmann::json d;
  if (const auto* g = std::get_if<Gaussian>(&dist)) {
    d["type"] = "gaussian";
    d["mu"] = real_to_json(g->mu);
    d["sigma"] = real_to_json(g->sigma);
  } else if (const auto* c = std::get_if<Categorical>(&dist)) {
    d["type"] = "categorical";
    d["log_probs"] = reals_to_json(c->log_probs);
  } else {
    const auto& dg = std::get<DiscretizedGaussian>(dist);
    d["type"] = "discretized_gaussian";
    d["mu"] = real_to_json(dg.mu);
    d["sigma"] = real_to_json(dg.sigma);
    d["num_buckets"] = dg.num_buckets;
  }
  return d;
}

inline LeafDistribution dist_from_json(const nlohmann::json& d) {
  const std::string type = d.at("type").get<std::string>();
  if (type == "gaussian")
    return Gaussian{real_from_json(d.at("mu")), real_from_json(d.at("sigma"))};
  if (type == "categorical") return Categorical{reals_from_json(d.at("log_probs"))};
  if (type == "discretized_gaussian")
    return DiscretizedGaussian{real_from_json(d.at("mu")), real_from_json(d.at("sigma")),
                               d.at("num_buckets").get<std::uint32_t>()};
  throw std::invalid_argument("unknown leaf distribution type: " + type);
}

}  // namespace detail

inline nlohmann::json circuit_to_json(const Circuit& c) {
  nlohmann::json j;
  j["format_version"] = kModelFormatVersion;
  nlohmann::json vars = nlohmann::json::array();
  for (const auto& v : c.variables()) {
    nlohmann::json jv;
    jv["id"] = v.id;
    jv["name"] = v.name;
    jv["kind"] = v.kind == VarKind::Continuous ? "continuous" : "categorical";
    if (v.kind == VarKind::Categorical) jv["arity"] = v.arity;
    vars.push_back(std::move(jv));
  }
  j["variables"] = std::move(vars);
  nlohmann::json nodes = nlohmann::json::array();
  for (NodeId id = 0; id < c.num_nodes(); ++id) {
    nlohmann::json jn;
    jn["id"] = id;
    const Node& node = c.node(id);
    if (const auto* s = std::get_if<SumNode>(&node)) {
      jn["kind"] = "sum";
      jn["children"] = s->children;
      jn["log_weights"] = detail::reals_to_json(s->log_weights);
    } else if (const auto* p = std::get_if<ProductNode>(&node)) {
      jn["kind"] = "product";
      jn["children"] = p->children;
    } else {
      const auto& leaf = std::get<LeafNode>(node);
      jn["kind"] = "leaf";
      jn["var"] = leaf.var;
      jn["dist"] = detail::dist_to_json(leaf.dist);
    }
    nodes.push_back(std::move(jn));
  }
  j["nodes"] = std::move(nodes);
  j["root"] = c.root();
  return j;
}

inline Circuit circuit_from_json(const nlohmann::json& j) {
  const int version = j.at("format_version").get<int>();
  if (version != kModelFormatVersion)
    throw std::invalid_argument("unsupported model format_version " + std::to_string(version));
  Circuit c;
  const auto& vars = j.at("variables");
  for (std::size_t i = 0; i < vars.size(); ++i) {
    const auto& jv = vars.at(i);
    if (jv.at("id").get<std::size_t>() != i)
      throw std::invalid_argument("variables must be listed in id order");
    const std::string kind = jv.at("kind").get<std::string>();
    if (kind == "continuous") {
      c.add_variable(jv.at("name").get<std::string>(), VarKind::Continuous);
    } else if (kind == "categorical") {
      c.add_variable(jv.at("name").get<std::string>(), VarKind::Categorical,
                     jv.at("arity").get<std::uint32_t>());
    } else {
      throw std::invalid_argument("unknown variable kind: " + kind);
    }
  }
  const auto& nodes = j.at("nodes");
  // The arena is append-only with children-before-parent ids, so rebuild in
  // listed order. add_sum/add_product collapse is bypassed: stored models may
  // carry single-child nodes only if some tool wrote them, and ids must match.
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const auto& jn = nodes.at(i);
    if (jn.at("id").get<std::size_t>() != i)
      throw std::invalid_argument("nodes must be listed in id order");
    const std::string kind = jn.at("kind").get<std::string>();
    NodeId built = 0;
    if (kind == "sum") {
      built = c.add_sum(jn.at("children").get<std::vector<NodeId>>(),
                        detail::reals_from_json(jn.at("log_weights")));
    } else if (kind == "product") {
      built = c.add_product(jn.at("children").get<std::vector<NodeId>>());
    } else if (kind == "leaf") {
      built = c.add_leaf(jn.at("var").get<VarId>(), detail::dist_from_json(jn.at("dist")));
    } else {
      throw std::invalid_argument("unknown node kind: " + kind);
    }
    if (built != i) throw std::invalid_argument("node " + std::to_string(i) + " has one child");
  }
  c.set_root(j.at("root").get<NodeId>());
  return c;
}

inline std::string circuit_to_string(const Circuit& c) { return circuit_to_json(c).dump(2); }

inline Circuit circuit_from_string(const std::string& text) {
  return circuit_from_json(nlohmann::json::parse(text));
}

inline void save_circuit(const Circuit& c, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << circuit_to_string(c) << '\n';
}

inline Circuit load_circuit(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  nlohmann::json j;
  in >> j;
  return circuit_from_json(j);
}

}  // namespace fedcirc
