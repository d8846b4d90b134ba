#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "fedcirc/circuit.hpp"
#include "fedcirc/common.hpp"
#include "fedcirc/dataset.hpp"
#include "fedcirc/inference.hpp"
#include "fedcirc/leaf.hpp"
#include "fedcirc/metrics.hpp"
#include "fedcirc/serialize.hpp"

using namespace fedcirc;

namespace {

// Two-class naive-Bayes circuit: p(y) uniform, x | y=0 ~ N(0,1), x | y=1 ~ N(4,1).
Circuit nb_circuit() {
  Circuit c;
  const VarId x = c.add_variable("x", VarKind::Continuous);
  const VarId y = c.add_variable("y", VarKind::Categorical, 2);
  const NodeId x0 = c.add_leaf(x, Gaussian{0.0, 1.0});
  const NodeId x1 = c.add_leaf(x, Gaussian{4.0, 1.0});
  const NodeId y0 = c.add_leaf(y, Categorical{{0.0, kNegInf}});
  const NodeId y1 = c.add_leaf(y, Categorical{{kNegInf, 0.0}});
  const NodeId p0 = c.add_product({y0, x0});
  const NodeId p1 = c.add_product({y1, x1});
  c.set_root(c.add_sum({p0, p1}, {std::log(0.5), std::log(0.5)}));
  return c;
}

Circuit mixture_circuit() {
  Circuit c;
  const VarId x = c.add_variable("x", VarKind::Continuous);
  const NodeId a = c.add_leaf(x, Gaussian{-1.0, 0.5});
  const NodeId b = c.add_leaf(x, Gaussian{2.0, 1.5});
  c.set_root(c.add_sum({a, b}, {std::log(0.3), std::log(0.7)}));
  return c;
}

}  // namespace

TEST(Common, LogSumExp) {
  EXPECT_NEAR(log_sum_exp(std::log(0.25), std::log(0.75)), 0.0, 1e-15);
  EXPECT_EQ(log_sum_exp(kNegInf, kNegInf), kNegInf);
  const std::vector<double> xs{std::log(0.1), std::log(0.2), std::log(0.3)};
  EXPECT_NEAR(log_sum_exp(xs), std::log(0.6), 1e-15);
  EXPECT_EQ(log_sum_exp(std::span<const double>{}), kNegInf);
  EXPECT_NEAR(log_sum_exp(0.0, kNegInf), 0.0, 1e-15);
}

TEST(Common, NormalFunctions) {
  EXPECT_DOUBLE_EQ(normal_cdf(0.0), 0.5);
  EXPECT_NEAR(normal_cdf(1.0), 0.8413447460685429, 1e-15);
  EXPECT_NEAR(normal_cdf(-1.0), 1.0 - 0.8413447460685429, 1e-15);
  EXPECT_NEAR(normal_log_pdf(0.0, 0.0, 1.0), -0.9189385332046728, 1e-15);
  EXPECT_NEAR(normal_log_pdf(1.3, 0.4, 0.9), -1.3135780175468463, 1e-15);
}

TEST(Common, SplitMix64KnownVector) {
  // Reference splitmix64 sequence for seed 0.
  EXPECT_EQ(splitmix64(0), 0xe220a8397b1dcdafULL);
  EXPECT_EQ(splitmix64(1), 0x910a2dec89025cc1ULL);
}

TEST(Common, Fnv1a64KnownVectors) {
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
}

TEST(Common, SeedStreams) {
  auto a = SeedStream::derive(7, "kmeans", 0).rng();
  auto b = SeedStream::derive(7, "kmeans", 0).rng();
  EXPECT_EQ(a(), b());
  EXPECT_EQ(a(), b());
  auto c = SeedStream::derive(7, "kmeans", 1).rng();
  auto d = SeedStream::derive(7, "partition.horizontal", 0).rng();
  EXPECT_NE(a(), c());
  EXPECT_NE(b(), d());
}

TEST(Leaf, GaussianDensity) {
  const Gaussian g{0.0, 1.0};
  EXPECT_NEAR(g.log_density(0.0), -0.9189385332046728, 1e-15);
  const LeafDistribution dist = Gaussian{0.4, 0.9};
  EXPECT_NEAR(leaf_log_density(dist, 1.3), -1.3135780175468463, 1e-15);
  EXPECT_THROW(leaf_log_density(dist, std::nan("")), std::domain_error);
}

TEST(Leaf, CategoricalMass) {
  const Categorical cat{{std::log(2.0 / 6.0), std::log(4.0 / 6.0)}};
  EXPECT_EQ(cat.arity(), 2u);
  EXPECT_NEAR(cat.log_mass(0.0), -1.0986122886681098, 1e-15);
  EXPECT_NEAR(cat.log_mass(1.0), -0.4054651081081644, 1e-15);
  EXPECT_THROW(cat.log_mass(0.5), std::domain_error);
  EXPECT_THROW(cat.log_mass(2.0), std::domain_error);
  EXPECT_THROW(cat.log_mass(-1.0), std::domain_error);
  EXPECT_THROW(cat.log_mass(std::nan("")), std::domain_error);
}

TEST(Leaf, DiscretizedGaussianOracle) {
  // Raw CDF difference for the first bucket of a standard normal on the
  // 1/255 grid.
  EXPECT_NEAR(discretized_gaussian_log_mass(0.0, 1.0, 0, 255, false),
              -6.460204641477221, 1e-12);
  // With tail absorption the first bucket takes the whole left tail.
  EXPECT_NEAR(discretized_gaussian_log_mass(0.0, 1.0, 0, 255, true),
              -0.6900231144978977, 1e-12);
}

TEST(Leaf, DiscretizedGaussianNormalizes) {
  for (const auto& [mu, sigma] : std::vector<std::pair<double, double>>{
           {0.5, 0.1}, {0.0, 1.0}, {1.2, 0.03}, {-0.3, 0.5}}) {
    double total = 0.0;
    for (int x = 0; x < 255; ++x)
      total += std::exp(discretized_gaussian_log_mass(mu, sigma, x, 255, true));
    EXPECT_NEAR(total, 1.0, 1e-9) << "mu=" << mu << " sigma=" << sigma;
  }
}

TEST(Leaf, DiscretizedGaussianGuards) {
  EXPECT_THROW(discretized_gaussian_log_mass(0.0, 0.0, 0), std::domain_error);
  EXPECT_THROW(discretized_gaussian_log_mass(0.0, -1.0, 0), std::domain_error);
  EXPECT_THROW(discretized_gaussian_log_mass(0.0, 1.0, -1), std::domain_error);
  EXPECT_THROW(discretized_gaussian_log_mass(0.0, 1.0, 255), std::domain_error);
  EXPECT_THROW(discretized_gaussian_log_mass(0.0, 1.0, 0, 1), std::domain_error);
  const DiscretizedGaussian d{0.5, 0.1, 255};
  EXPECT_THROW(d.log_mass(3.5), std::domain_error);
  EXPECT_EQ(d.log_mass(10.0), discretized_gaussian_log_mass(0.5, 0.1, 10, 255));
}

TEST(Leaf, ParameterCounts) {
  EXPECT_EQ(leaf_parameter_count(Gaussian{}), 2u);
  EXPECT_EQ(leaf_parameter_count(DiscretizedGaussian{}), 2u);
  EXPECT_EQ(leaf_parameter_count(Categorical{{std::log(0.5), std::log(0.25), std::log(0.25)}}), 3u);
}

TEST(Circuit, ArenaBasics) {
  Circuit c = nb_circuit();
  EXPECT_EQ(c.num_nodes(), 7u);
  EXPECT_EQ(c.num_variables(), 2u);
  EXPECT_EQ(c.root(), 6u);
  EXPECT_EQ(c.find_variable("y"), std::optional<VarId>(1));
  EXPECT_EQ(c.find_variable("z"), std::nullopt);
  EXPECT_EQ(c.parameter_count(), 2u + 2u + 2u + 2u + 2u);  // 4 leaves + root weights
}

TEST(Circuit, SingleChildCollapses) {
  Circuit c;
  const VarId x = c.add_variable("x", VarKind::Continuous);
  const NodeId leaf = c.add_leaf(x, Gaussian{});
  EXPECT_EQ(c.add_sum({leaf}, {0.0}), leaf);
  EXPECT_EQ(c.add_product({leaf}), leaf);
  EXPECT_EQ(c.num_nodes(), 1u);
}

TEST(Circuit, ConstructionGuards) {
  Circuit c;
  const VarId x = c.add_variable("x", VarKind::Continuous);
  EXPECT_THROW(c.add_leaf(5, Gaussian{}), std::invalid_argument);
  const NodeId leaf = c.add_leaf(x, Gaussian{});
  EXPECT_THROW(c.add_sum({leaf}, {0.0, 0.0}), std::invalid_argument);
  EXPECT_THROW(c.add_sum({}, {}), std::invalid_argument);
  EXPECT_THROW(c.add_product({}), std::invalid_argument);
  EXPECT_THROW(c.add_product({leaf, 99}), std::invalid_argument);
  EXPECT_THROW(c.set_root(99), std::invalid_argument);
}

TEST(Circuit, TopoOrderAndScopes) {
  Circuit c = nb_circuit();
  const auto& topo = c.topo_order();
  EXPECT_EQ(topo.size(), 7u);
  std::vector<std::size_t> pos(c.num_nodes());
  for (std::size_t i = 0; i < topo.size(); ++i) pos[topo[i]] = i;
  for (NodeId id = 0; id < c.num_nodes(); ++id) {
    const Node& n = c.node(id);
    const std::vector<NodeId>* children = nullptr;
    if (const auto* s = std::get_if<SumNode>(&n)) children = &s->children;
    if (const auto* p = std::get_if<ProductNode>(&n)) children = &p->children;
    if (!children) continue;
    for (NodeId child : *children) EXPECT_LT(pos[child], pos[id]);
  }
  EXPECT_EQ(c.scope(0).vars(), std::vector<VarId>{0});
  EXPECT_EQ(c.root_scope().vars(), (std::vector<VarId>{0, 1}));
  EXPECT_TRUE(c.scope(0).disjoint_with(c.scope(2)));
  EXPECT_FALSE(c.scope(4).disjoint_with(c.scope(5)));
}

TEST(Circuit, LogNormalize) {
  const auto w = log_normalize(std::vector<double>{1.0, 3.0});
  EXPECT_DOUBLE_EQ(w[0], std::log(0.25));
  EXPECT_DOUBLE_EQ(w[1], std::log(0.75));
  const auto z = log_normalize(std::vector<double>{0.0, 2.0});
  EXPECT_EQ(z[0], kNegInf);
  EXPECT_DOUBLE_EQ(z[1], 0.0);
  EXPECT_THROW(log_normalize(std::vector<double>{-1.0, 2.0}), std::invalid_argument);
  EXPECT_THROW(log_normalize(std::vector<double>{0.0, 0.0}), std::invalid_argument);
}

TEST(Circuit, ValidateCleanCircuit) {
  EXPECT_TRUE(validate(nb_circuit()).ok());
  EXPECT_TRUE(validate(mixture_circuit()).ok());
}

TEST(Circuit, ValidateFlagsUnnormalizedSum) {
  Circuit c = nb_circuit();
  auto& sum = std::get<SumNode>(c.mutate_node(6));
  sum.log_weights[0] = std::log(0.7);
  sum.log_weights[1] = std::log(0.7);
  const auto report = validate(c);
  EXPECT_FALSE(report.ok());
  EXPECT_TRUE(report.has(ViolationKind::UnnormalizedWeights, 6));
  EXPECT_EQ(report.violations.size(), 1u);
}

TEST(Circuit, ValidateFlagsNonSmoothSum) {
  Circuit c = nb_circuit();
  // Replace one mixture arm by an x-only leaf: children scopes now differ.
  auto& sum = std::get<SumNode>(c.mutate_node(6));
  sum.children[1] = 0;
  const auto report = validate(c);
  EXPECT_TRUE(report.has(ViolationKind::NonSmoothSum, 6));
}

TEST(Circuit, ValidateFlagsNonDecomposableProduct) {
  Circuit c = nb_circuit();
  // Duplicate the x variable under product node 4.
  auto& prod = std::get<ProductNode>(c.mutate_node(4));
  prod.children[0] = 1;  // was the y leaf; now a second x leaf
  const auto report = validate(c);
  EXPECT_TRUE(report.has(ViolationKind::NonDecomposableProduct, 4));
  // The root sum also turns non-smooth: child scopes {x} vs {x,y}.
  EXPECT_TRUE(report.has(ViolationKind::NonSmoothSum, 6));
}

TEST(Circuit, ValidateFlagsCycle) {
  Circuit c = nb_circuit();
  auto& prod = std::get<ProductNode>(c.mutate_node(4));
  prod.children[0] = 6;  // product points at the root
  const auto report = validate(c);
  EXPECT_FALSE(report.ok());
  EXPECT_FALSE(c.acyclic());
  for (const auto& v : report.violations) EXPECT_EQ(v.kind, ViolationKind::Cycle);
  EXPECT_THROW(c.topo_order(), std::logic_error);
}

TEST(Circuit, ValidateFlagsBadCategoricalMass) {
  Circuit c = nb_circuit();
  auto& leaf = std::get<LeafNode>(c.mutate_node(2));
  std::get<Categorical>(leaf.dist).log_probs = {std::log(0.5), std::log(0.4)};
  const auto report = validate(c);
  EXPECT_TRUE(report.has(ViolationKind::UnnormalizedWeights, 2));
}

TEST(Circuit, EvidenceBasics) {
  Evidence e(3);
  EXPECT_FALSE(e.is_observed(0));
  e.observe(1, 2.5).observe(2, -1.0);
  EXPECT_TRUE(e.is_observed(1));
  EXPECT_DOUBLE_EQ(e.value(1), 2.5);
  e.marginalize(1);
  EXPECT_FALSE(e.is_observed(1));
  Evidence a(2), b(2);
  a.observe(0, 1.0);
  b.observe(1, 2.0);
  const Evidence m = Evidence::merge(a, b);
  EXPECT_TRUE(m.is_observed(0));
  EXPECT_TRUE(m.is_observed(1));
  b.observe(0, 3.0);
  EXPECT_THROW(Evidence::merge(a, b), std::invalid_argument);
  EXPECT_THROW(Evidence::merge(a, Evidence(3)), std::invalid_argument);
}

TEST(Inference, MixtureOracle) {
  Circuit c = mixture_circuit();
  Evidence e(1);
  e.observe(0, 0.7);
  EXPECT_NEAR(log_density(c, e), -2.050869507404664, 1e-12);
}

TEST(Inference, MarginalizationYieldsOne) {
  Circuit c = nb_circuit();
  EXPECT_NEAR(log_density(c, Evidence::all_marginalized(c)), 0.0, 1e-12);
  Evidence only_y(2);
  only_y.observe(1, 1.0);
  EXPECT_NEAR(log_density(c, only_y), std::log(0.5), 1e-12);
}

TEST(Inference, JointOracle) {
  Circuit c = nb_circuit();
  Evidence e(2);
  e.observe(0, 4.0).observe(1, 0.0);
  EXPECT_NEAR(log_density(c, e), -9.612085713764618, 1e-12);
  e.observe(1, 1.0);
  EXPECT_NEAR(log_density(c, e), -1.612085713764618, 1e-12);
}

TEST(Inference, Conditional) {
  Circuit c = nb_circuit();
  Evidence query(2), given(2);
  query.observe(1, 1.0);
  given.observe(0, 4.0);
  const double lp = log_conditional(c, query, given);
  Evidence joint(2), x_only(2);
  joint.observe(0, 4.0).observe(1, 1.0);
  x_only.observe(0, 4.0);
  EXPECT_NEAR(lp, log_density(c, joint) - log_density(c, x_only), 1e-15);
  EXPECT_LT(lp, 0.0);
}

TEST(Inference, ZeroEvidenceThrows) {
  Circuit c;
  const VarId y = c.add_variable("y", VarKind::Categorical, 2);
  const NodeId a = c.add_leaf(y, Categorical{{0.0, kNegInf}});
  const NodeId b = c.add_leaf(y, Categorical{{0.0, kNegInf}});
  c.set_root(c.add_sum({a, b}, {std::log(0.5), std::log(0.5)}));
  Evidence given(1);
  given.observe(0, 1.0);  // impossible category
  EXPECT_THROW(log_conditional(c, Evidence(1), given), ZeroEvidence);
}

TEST(Inference, Classify) {
  Circuit c = nb_circuit();
  Evidence features(2);
  features.observe(0, 4.0);
  EXPECT_EQ(classify(c, 1, features), 1u);
  features.observe(0, 0.0);
  EXPECT_EQ(classify(c, 1, features), 0u);
  features.observe(0, 2.0);  // exact tie; smallest class wins
  EXPECT_EQ(classify(c, 1, features), 0u);
  EXPECT_THROW(classify(c, 0, features), std::invalid_argument);  // continuous target
  features.observe(1, 1.0);
  EXPECT_THROW(classify(c, 1, features), std::invalid_argument);  // target observed
}

TEST(Inference, EvidenceSizeChecked) {
  Circuit c = nb_circuit();
  EXPECT_THROW(log_density(c, Evidence(1)), std::invalid_argument);
}

TEST(Serialize, RoundTripBitExact) {
  Circuit c = nb_circuit();
  const std::string text = circuit_to_string(c);
  Circuit back = circuit_from_string(text);
  EXPECT_EQ(back.num_nodes(), c.num_nodes());
  EXPECT_EQ(back.num_variables(), c.num_variables());
  EXPECT_EQ(back.root(), c.root());
  EXPECT_EQ(back.variable(1).kind, VarKind::Categorical);
  EXPECT_EQ(back.variable(1).arity, 2u);
  for (double x : {-3.0, 0.0, 0.31, 2.0, 4.0, 17.5}) {
    for (double y : {0.0, 1.0}) {
      Evidence e(2);
      e.observe(0, x).observe(1, y);
      EXPECT_EQ(log_density(back, e), log_density(c, e));
    }
  }
  // Idempotent: serializing the reload gives the same bytes.
  EXPECT_EQ(circuit_to_string(back), text);
}

TEST(Serialize, FileRoundTrip) {
  const std::string path = (std::filesystem::temp_directory_path() / "fedcirc_model.json").string();
  Circuit c = mixture_circuit();
  save_circuit(c, path);
  Circuit back = load_circuit(path);
  Evidence e(1);
  e.observe(0, 0.7);
  EXPECT_EQ(log_density(back, e), log_density(c, e));
  std::filesystem::remove(path);
}

TEST(Serialize, RejectsNaN) {
  Circuit c;
  const VarId x = c.add_variable("x", VarKind::Continuous);
  c.set_root(c.add_leaf(x, Gaussian{std::nan(""), 1.0}));
  EXPECT_THROW(circuit_to_string(c), std::invalid_argument);
}

TEST(Serialize, RejectsBadDocuments) {
  Circuit c = mixture_circuit();
  auto j = circuit_to_json(c);
  auto wrong_version = j;
  wrong_version["format_version"] = 99;
  EXPECT_THROW(circuit_from_json(wrong_version), std::invalid_argument);
  auto shuffled = j;
  std::swap(shuffled["nodes"][0], shuffled["nodes"][1]);
  EXPECT_THROW(circuit_from_json(shuffled), std::invalid_argument);
  // A stored single-child sum cannot be rebuilt under the collapsing arena.
  const char* single_child = R"({
    "format_version": 1,
    "variables": [{"id": 0, "name": "x", "kind": "continuous"}],
    "nodes": [
      {"id": 0, "kind": "leaf", "var": 0, "dist": {"type": "gaussian", "mu": 0.0, "sigma": 1.0}},
      {"id": 1, "kind": "sum", "children": [0], "log_weights": [0.0]}
    ],
    "root": 1
  })";
  EXPECT_THROW(circuit_from_string(single_child), std::invalid_argument);
}

TEST(Dataset, IngestTypesAndImputation) {
  std::istringstream csv(
      "height,city,score\n"
      "1.8,2,10\n"
      "NA,10,20\n"
      "1.6,2,30\n"
      "2.0,?,40\n");
  IngestOptions opts;
  opts.categorical = {"city"};
  opts.standardize = false;
  const Dataset d = ingest(read_csv_raw(csv), opts);
  EXPECT_EQ(d.num_rows(), 4u);
  EXPECT_EQ(d.num_cols(), 3u);
  EXPECT_EQ(d.column(0).kind, VarKind::Continuous);
  EXPECT_EQ(d.column(1).kind, VarKind::Categorical);
  EXPECT_EQ(d.column(1).arity, 2u);
  // Numeric level tokens sort numerically: 2 -> code 0, 10 -> code 1.
  EXPECT_DOUBLE_EQ(d.at(0, 1), 0.0);
  EXPECT_DOUBLE_EQ(d.at(1, 1), 1.0);
  // Mode of {2,10,2} is 2 -> code 0.
  EXPECT_DOUBLE_EQ(d.at(3, 1), 0.0);
  // Median of {1.8,1.6,2.0} imputes the missing height.
  EXPECT_DOUBLE_EQ(d.at(1, 0), 1.8);
}

TEST(Dataset, IngestStandardizes) {
  std::istringstream csv("a,b\n1,7\n2,7\n3,7\n4,7\n");
  const Dataset d = ingest(read_csv_raw(csv));
  double mean = 0.0, var = 0.0;
  for (std::size_t r = 0; r < 4; ++r) mean += d.at(r, 0);
  mean /= 4.0;
  for (std::size_t r = 0; r < 4; ++r) var += (d.at(r, 0) - mean) * (d.at(r, 0) - mean);
  var /= 4.0;
  EXPECT_NEAR(mean, 0.0, 1e-12);
  EXPECT_NEAR(var, 1.0, 1e-12);
  // Constant columns standardize to zero rather than dividing by zero.
  for (std::size_t r = 0; r < 4; ++r) EXPECT_DOUBLE_EQ(d.at(r, 1), 0.0);
}

TEST(Dataset, IngestLexicographicLevels) {
  std::istringstream csv("color\nred\nblue\nred\ngreen\n");
  IngestOptions opts;
  opts.categorical = {"color"};
  const Dataset d = ingest(read_csv_raw(csv), opts);
  EXPECT_EQ(d.column(0).arity, 3u);
  EXPECT_DOUBLE_EQ(d.at(0, 0), 2.0);  // red
  EXPECT_DOUBLE_EQ(d.at(1, 0), 0.0);  // blue
  EXPECT_DOUBLE_EQ(d.at(3, 0), 1.0);  // green
}

TEST(Dataset, IngestErrors) {
  {
    std::istringstream csv("a\nx\n");
    EXPECT_THROW(ingest(read_csv_raw(csv)), std::runtime_error);  // unparseable number
  }
  {
    std::istringstream csv("a\nNA\n");
    EXPECT_THROW(ingest(read_csv_raw(csv)), std::runtime_error);  // all missing
  }
  {
    std::istringstream csv("a,b\n1\n");
    EXPECT_THROW(read_csv_raw(csv), std::runtime_error);  // ragged row
  }
  {
    std::istringstream csv("a\n1.5\n");
    IngestOptions opts;
    opts.impute = false;
    EXPECT_NO_THROW(ingest(read_csv_raw(csv), opts));
    std::istringstream missing("a\n1.5\nNA\n");
    EXPECT_THROW(ingest(read_csv_raw(missing), opts), std::runtime_error);
  }
}

TEST(Dataset, RowIdsInCsv) {
  std::istringstream csv("__row_id,a\n10,1.5\n11,2.5\n12,3.5\n");
  const RawTable raw = read_csv_raw(csv);
  ASSERT_TRUE(raw.row_ids.has_value());
  EXPECT_EQ(*raw.row_ids, (std::vector<std::int64_t>{10, 11, 12}));
  IngestOptions opts;
  opts.standardize = false;
  const Dataset d = ingest(raw, opts);
  ASSERT_TRUE(d.has_row_ids());
  const Dataset sel = d.select_rows_by_id({12, 10});
  EXPECT_DOUBLE_EQ(sel.at(0, 0), 3.5);
  EXPECT_DOUBLE_EQ(sel.at(1, 0), 1.5);
  EXPECT_THROW(d.select_rows_by_id({99}), std::invalid_argument);
}

TEST(Dataset, WriteReadRoundTrip) {
  std::istringstream csv("__row_id,a,b\n0,1.25,-3\n1,0.5,7\n");
  IngestOptions opts;
  opts.standardize = false;
  const Dataset d = ingest(read_csv_raw(csv), opts);
  std::ostringstream out;
  write_csv(d, out);
  std::istringstream back_in(out.str());
  const Dataset back = ingest(read_csv_raw(back_in), opts);
  EXPECT_EQ(back.num_rows(), d.num_rows());
  EXPECT_EQ(back.row_ids(), d.row_ids());
  for (std::size_t r = 0; r < d.num_rows(); ++r)
    for (std::size_t c = 0; c < d.num_cols(); ++c) EXPECT_EQ(back.at(r, c), d.at(r, c));
}

TEST(Dataset, Selections) {
  std::istringstream csv("a,b,c\n1,2,3\n4,5,6\n7,8,9\n");
  IngestOptions opts;
  opts.standardize = false;
  const Dataset d = ingest(read_csv_raw(csv), opts);
  const Dataset cols = d.select_columns_by_name({"c", "a"});
  EXPECT_EQ(cols.column(0).name, "c");
  EXPECT_DOUBLE_EQ(cols.at(1, 0), 6.0);
  EXPECT_DOUBLE_EQ(cols.at(1, 1), 4.0);
  const Dataset rows = d.select_rows({2, 0});
  EXPECT_DOUBLE_EQ(rows.at(0, 0), 7.0);
  EXPECT_DOUBLE_EQ(rows.at(1, 2), 3.0);
  EXPECT_THROW(d.select_rows({5}), std::out_of_range);
  EXPECT_EQ(d.column_values(1), (std::vector<double>{2.0, 5.0, 8.0}));
  EXPECT_THROW(d.column_index("zz"), std::invalid_argument);
}

TEST(Dataset, FileChecksum) {
  const auto dir = std::filesystem::temp_directory_path();
  const std::string p1 = (dir / "fedcirc_sum_a.csv").string();
  const std::string p2 = (dir / "fedcirc_sum_b.csv").string();
  {
    std::ofstream(p1) << "a,b\n1,2\n";
    std::ofstream(p2) << "a,b\n1,3\n";
  }
  EXPECT_EQ(file_checksum_hex(p1), file_checksum_hex(p1));
  EXPECT_NE(file_checksum_hex(p1), file_checksum_hex(p2));
  EXPECT_EQ(file_checksum_hex(p1).size(), 16u);
  std::filesystem::remove(p1);
  std::filesystem::remove(p2);
}

TEST(Metrics, AccuracyAndF1) {
  const std::vector<std::uint32_t> pred{1, 0, 1, 1, 0, 1};
  const std::vector<std::uint32_t> actual{1, 0, 0, 1, 1, 1};
  EXPECT_NEAR(accuracy(pred, actual), 4.0 / 6.0, 1e-15);
  // Class 1: tp=3, fp=1, fn=1 -> F1 = 6/8.
  EXPECT_NEAR(f1_binary(pred, actual, 1), 0.75, 1e-15);
  // Class 0: tp=1, fp=1, fn=1 -> F1 = 2/4.
  EXPECT_NEAR(f1_binary(pred, actual, 0), 0.5, 1e-15);
  EXPECT_NEAR(f1_macro(pred, actual, 2), 0.625, 1e-15);
  EXPECT_DOUBLE_EQ(f1_binary({0, 0}, {0, 0}, 1), 0.0);
  EXPECT_THROW(accuracy({1}, {1, 0}), std::invalid_argument);
}

TEST(Metrics, PredictOnNaiveBayes) {
  Circuit c = nb_circuit();
  std::istringstream csv("x,y\n-0.5,0\n4.2,1\n3.9,0\n0.1,0\n");
  IngestOptions opts;
  opts.categorical = {"y"};
  opts.standardize = false;
  const Dataset d = ingest(read_csv_raw(csv), opts);
  const auto pred = predict_classes(c, d, "y");
  EXPECT_EQ(pred, (std::vector<std::uint32_t>{0, 1, 1, 0}));
  const auto actual = actual_classes(d, "y");
  EXPECT_EQ(actual, (std::vector<std::uint32_t>{0, 1, 0, 0}));
  EXPECT_NEAR(accuracy(pred, actual), 0.75, 1e-15);
  EXPECT_THROW(actual_classes(d, "x"), std::invalid_argument);
}

TEST(Metrics, MeanLogLikelihood) {
  Circuit c = mixture_circuit();
  std::istringstream csv("x\n0.7\n0.7\n");
  IngestOptions opts;
  opts.standardize = false;
  const Dataset d = ingest(read_csv_raw(csv), opts);
  EXPECT_NEAR(mean_log_likelihood(c, d), -2.050869507404664, 1e-12);
}

TEST(Metrics, TrainTestSplit) {
  std::vector<Column> cols{{"a", VarKind::Continuous, 0}};
  std::vector<double> vals;
  for (int i = 0; i < 20; ++i) vals.push_back(i);
  const Dataset d(cols, vals);
  auto [train, test] = train_test_split(d, 5, 42);
  EXPECT_EQ(train.num_rows(), 15u);
  EXPECT_EQ(test.num_rows(), 5u);
  std::vector<double> all;
  for (std::size_t r = 0; r < train.num_rows(); ++r) all.push_back(train.at(r, 0));
  for (std::size_t r = 0; r < test.num_rows(); ++r) all.push_back(test.at(r, 0));
  std::sort(all.begin(), all.end());
  for (int i = 0; i < 20; ++i) EXPECT_DOUBLE_EQ(all[i], i);
  auto [train2, test2] = train_test_split(d, 5, 42);
  for (std::size_t r = 0; r < test.num_rows(); ++r) EXPECT_EQ(test2.at(r, 0), test.at(r, 0));
  EXPECT_THROW(train_test_split(d, 20, 1), std::invalid_argument);
}
