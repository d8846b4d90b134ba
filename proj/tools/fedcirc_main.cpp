#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fedcirc/fedcirc.hpp"

namespace {

using namespace fedcirc;

const char* violation_name(ViolationKind kind) {
  switch (kind) {
    case ViolationKind::Cycle: return "cycle";
    case ViolationKind::NonSmoothSum: return "non-smooth sum";
    case ViolationKind::NonDecomposableProduct: return "non-decomposable product";
    case ViolationKind::UnnormalizedWeights: return "unnormalized weights";
    case ViolationKind::EmptyScope: return "empty scope";
  }
  return "?";
}

struct CommonArgs {
  std::uint64_t seed = 0;
  std::vector<std::string> categorical;
  bool no_standardize = false;

  IngestOptions source_profile() const {
    IngestOptions opts;
    opts.categorical = std::set<std::string>(categorical.begin(), categorical.end());
    opts.standardize = !no_standardize;
    return opts;
  }

  // Client CSVs and held-out test CSVs are written post-ingestion, so reading
  // them back must not transform the values again.
  IngestOptions processed_profile() const {
    IngestOptions opts = source_profile();
    opts.standardize = false;
    opts.impute = false;
    return opts;
  }
};

std::vector<ClientSite> load_clients(const std::string& dir, const PartitionManifest& manifest,
                                     const IngestOptions& opts) {
  std::vector<ClientSite> clients;
  clients.reserve(manifest.clients.size());
  for (const auto& c : manifest.clients) {
    const std::string path =
        (std::filesystem::path(dir) / ("client_" + std::to_string(c.id) + ".csv")).string();
    ClientSite site;
    site.id = c.id;
    site.data = read_csv(path, opts);
    clients.push_back(std::move(site));
  }
  return clients;
}

/// Union of the client shards as one table: row concatenation for horizontal
/// manifests, feature concatenation (rows aligned by the shared id order) for
/// vertical ones.
Dataset pool_clients(const PartitionManifest& manifest, const std::vector<ClientSite>& clients) {
  if (manifest.mode == PartitionMode::Horizontal) {
    std::vector<Column> columns(clients[0].data.columns().begin(),
                                clients[0].data.columns().end());
    for (const auto& site : clients)
      for (std::size_t j = 0; j < columns.size(); ++j)
        columns[j].arity = std::max(columns[j].arity, site.data.column(j).arity);
    std::vector<double> values;
    std::vector<std::int64_t> ids;
    for (const auto& site : clients) {
      const Dataset& d = site.data;
      for (std::size_t r = 0; r < d.num_rows(); ++r)
        for (std::size_t j = 0; j < d.num_cols(); ++j) values.push_back(d.at(r, j));
      if (d.has_row_ids()) {
        const auto& rid = d.row_ids();
        ids.insert(ids.end(), rid.begin(), rid.end());
      }
    }
    Dataset pooled(std::move(columns), std::move(values));
    if (ids.size() == pooled.num_rows()) pooled.assign_row_ids(ids);
    return pooled;
  }
  if (manifest.mode == PartitionMode::Vertical) {
    std::vector<Column> columns;
    for (const auto& site : clients)
      columns.insert(columns.end(), site.data.columns().begin(), site.data.columns().end());
    const std::size_t rows = clients[0].data.num_rows();
    std::vector<double> values;
    values.reserve(rows * columns.size());
    for (std::size_t r = 0; r < rows; ++r)
      for (const auto& site : clients)
        for (std::size_t j = 0; j < site.data.num_cols(); ++j)
          values.push_back(site.data.at(r, j));
    Dataset pooled(std::move(columns), std::move(values));
    if (clients[0].data.has_row_ids()) pooled.assign_row_ids(clients[0].data.row_ids());
    return pooled;
  }
  throw ConfigError("pooling is defined for horizontal and vertical manifests only");
}

nlohmann::json phase_totals_json(const CommLedger& ledger) {
  nlohmann::json out;
  for (Phase phase : {Phase::Announce, Phase::Train, Phase::Upload, Phase::Weights,
                      Phase::Inference}) {
    const PhaseTotals t = ledger.totals(phase);
    out[phase_name(phase)] = {{"messages", t.messages}, {"scalars", t.scalars},
                              {"bytes", t.bytes}};
  }
  return out;
}

struct PartitionArgs {
  std::string input;
  std::string out_dir;
  std::string mode = "horizontal";
  std::string strategy = "random";
  std::string class_var;
  std::size_t clients = 0;
  std::size_t overlap_features = 1;
  double row_fraction = 0.8;
  std::size_t test_rows = 0;
};

int cmd_partition(const CommonArgs& common, const PartitionArgs& args) {
  const Dataset full = read_csv(args.input, common.source_profile());
  std::filesystem::create_directories(args.out_dir);
  Dataset train = full;
  if (args.test_rows > 0) {
    auto [train_part, test_part] = train_test_split(full, args.test_rows, common.seed);
    train = std::move(train_part);
    const std::string test_path =
        (std::filesystem::path(args.out_dir) / "test.csv").string();
    write_csv(test_part, test_path);
    std::cout << "test.csv: " << test_part.num_rows() << " rows\n";
  }

  PartitionManifest manifest;
  if (args.mode == "horizontal") {
    if (args.strategy == "by-label") {
      if (args.class_var.empty())
        throw ConfigError("--strategy by-label needs --class-var");
      manifest = horizontal_split(train, args.clients, HorizontalStrategy::ByLabel,
                                  common.seed, args.class_var);
    } else if (args.strategy == "random") {
      manifest = horizontal_split(train, args.clients, HorizontalStrategy::Random, common.seed);
    } else {
      throw ConfigError("unknown strategy: " + args.strategy);
    }
  } else if (args.mode == "vertical") {
    manifest = vertical_split(train, args.clients, common.seed);
  } else if (args.mode == "hybrid") {
    manifest = hybrid_split(train, args.clients, args.overlap_features, args.row_fraction,
                            common.seed);
  } else {
    throw ConfigError("unknown mode: " + args.mode);
  }
  manifest.source_checksum = file_checksum_hex(args.input);

  const std::string manifest_path = emit_partition(train, manifest, args.out_dir);
  std::cout << "wrote " << manifest_path << "\n"
            << "mode " << partition_mode_name(manifest.mode) << " clients "
            << manifest.clients.size() << " rows " << train.num_rows() << " features "
            << train.num_cols() << "\n";
  for (const auto& c : manifest.clients)
    std::cout << "client " << c.id << ": " << c.row_ids.size() << " rows, "
              << c.features.size() << " features\n";
  return 0;
}

struct TrainArgs {
  std::string data_dir;
  std::string out_model;
  std::string report_path;
  std::string algo = "onepass";
  std::string leaf = "gaussian";
  std::string wiring = "aligned";
  std::size_t em_epochs = 10;
  bool allow_data_exchange = false;
  std::size_t products = 0;
  bool products_given = false;
  std::size_t clusters = 2;
  double threshold = 0.3;
  std::size_t min_instances = 50;
  std::size_t workers = 1;
};

int cmd_train(const CommonArgs& common, const TrainArgs& args) {
  const PartitionManifest manifest =
      load_manifest((std::filesystem::path(args.data_dir) / "manifest.json").string());
  const std::vector<ClientSite> clients =
      load_clients(args.data_dir, manifest, common.processed_profile());

  FedTrainOptions opts;
  opts.learn.threshold = args.threshold;
  opts.learn.min_num_instances = args.min_instances;
  opts.learn.k_clusters = args.clusters;
  opts.learn.seed = common.seed;
  if (args.leaf == "gaussian") {
    opts.learn.leaf_kind = LeafKind::Gaussian;
  } else if (args.leaf == "discretized") {
    opts.learn.leaf_kind = LeafKind::DiscretizedGaussian;
  } else {
    throw ConfigError("unknown leaf kind: " + args.leaf);
  }
  if (args.wiring == "aligned") {
    opts.wiring = Wiring::Aligned;
  } else if (args.wiring == "random_coverage") {
    opts.wiring = Wiring::RandomCoverage;
  } else {
    throw ConfigError("unknown wiring: " + args.wiring);
  }
  opts.products = args.products_given ? args.products : args.clusters;
  opts.workers = args.workers;

  FedTrainResult result = one_pass_train(clients, opts);
  FedStructure& fs = result.structure;

  std::vector<double> ll_trace;
  if (args.algo == "em") {
    if (!args.allow_data_exchange)
      throw ConfigError("em training pools client rows; pass --allow-data-exchange to permit it");
    const Dataset pooled = pool_clients(manifest, clients);
    EmResult em = em_fit(fs.circuit, pooled, args.em_epochs, common.seed, opts.learn);
    fs.circuit = std::move(em.circuit);
    ll_trace = std::move(em.ll_trace);
  } else if (args.algo != "onepass") {
    throw ConfigError("unknown algorithm: " + args.algo);
  }

  const auto report = validate(fs.circuit);
  if (!report.ok()) throw std::logic_error("trained circuit failed validation");

  nlohmann::json model = circuit_to_json(fs.circuit);
  model["assignment"] = fs.assignment;
  nlohmann::json rows_by_node = nlohmann::json::object();
  for (const auto& [node, rows] : fs.client_rows) rows_by_node[std::to_string(node)] = rows;
  model["client_rows"] = std::move(rows_by_node);
  model["algo"] = args.algo;
  {
    std::ofstream out(args.out_model);
    if (!out) throw std::runtime_error("cannot open " + args.out_model + " for writing");
    out << model.dump(2) << '\n';
  }

  std::cout << "model: " << args.out_model << "\n"
            << "nodes " << fs.circuit.num_nodes() << " params "
            << fs.circuit.parameter_count() << "\n";
  std::cout << std::setprecision(12);
  for (const auto& site : clients)
    std::cout << "client " << site.id
              << " mean marginal ll: " << mean_log_likelihood(fs.circuit, site.data) << "\n";
  if (args.algo == "em" || manifest.mode == PartitionMode::Horizontal) {
    const Dataset pooled = pool_clients(manifest, clients);
    std::cout << "pooled mean ll: " << mean_log_likelihood(fs.circuit, pooled) << "\n";
  }
  if (!ll_trace.empty())
    std::cout << "em ll trace: first " << ll_trace.front() << " last " << ll_trace.back()
              << "\n";
  std::cout << result.ledger.report();

  if (!args.report_path.empty()) {
    nlohmann::json j;
    j["format_version"] = 1;
    j["algo"] = args.algo;
    j["mode"] = partition_mode_name(manifest.mode);
    j["seed"] = common.seed;
    j["clients"] = manifest.clients.size();
    j["clusters"] = args.clusters;
    j["products"] = opts.products;
    j["model_path"] = args.out_model;
    j["ledger"] = phase_totals_json(result.ledger);
    std::ofstream out(args.report_path);
    if (!out) throw std::runtime_error("cannot open " + args.report_path + " for writing");
    out << j.dump(2) << '\n';
    std::cout << "report: " << args.report_path << "\n";
  }
  return 0;
}

struct EvalArgs {
  std::string model;
  std::string data;
  std::string metric;
  std::string class_var;
};

int cmd_eval(const CommonArgs& common, const EvalArgs& args) {
  const Circuit model = load_circuit(args.model);
  const Dataset data = read_csv(args.data, common.processed_profile());
  std::cout << std::setprecision(12);
  if (args.metric == "ll") {
    std::cout << "ll " << mean_log_likelihood(model, data) << "\n";
    return 0;
  }
  if (args.class_var.empty()) throw ConfigError("--metric " + args.metric + " needs --class-var");
  const auto predicted = predict_classes(model, data, args.class_var);
  const auto actual = actual_classes(data, args.class_var);
  if (args.metric == "acc") {
    std::cout << "acc " << accuracy(predicted, actual) << "\n";
    return 0;
  }
  if (args.metric == "f1") {
    const std::uint32_t arity = model.variable(*model.find_variable(args.class_var)).arity;
    const double score =
        arity == 2 ? f1_binary(predicted, actual, 1) : f1_macro(predicted, actual, arity);
    std::cout << "f1 " << score << "\n";
    return 0;
  }
  throw ConfigError("unknown metric: " + args.metric);
}

struct CommReportArgs {
  std::uint64_t clients = 1;
  std::uint64_t params = 1;
  std::uint64_t rounds = 1;
  std::uint64_t epochs = 1;
  std::uint64_t feature_dim = 1;
  std::uint64_t samples = 1;
  std::uint64_t clusters = 1;
  std::uint64_t products = 1;
  std::string train_report;
  std::string shape = "horizontal";
};

int cmd_comm_report(const CommReportArgs& args) {
  CostScenario s;
  s.clients = args.clients;
  s.params_per_model = args.params;
  s.rounds = args.rounds;
  s.epochs = args.epochs;
  s.feature_dim = args.feature_dim;
  s.samples = args.samples;
  s.clusters = args.clusters;
  s.products = args.products;
  std::cout << cost_table_csv({s});

  if (!args.train_report.empty()) {
    std::ifstream in(args.train_report);
    if (!in) throw std::runtime_error("cannot open " + args.train_report);
    nlohmann::json j;
    in >> j;
    CommLedger ledger;
    const auto phases = {std::pair{Phase::Train, MessageKind::ClusterAssignment},
                         std::pair{Phase::Upload, MessageKind::ModelUpload},
                         std::pair{Phase::Weights, MessageKind::WeightInfo}};
    for (const auto& [phase, kind] : phases) {
      const auto& t = j.at("ledger").at(phase_name(phase));
      const std::uint64_t messages = t.at("messages").get<std::uint64_t>();
      const std::uint64_t scalars = t.at("scalars").get<std::uint64_t>();
      for (std::uint64_t m = 1; m < messages; ++m)
        ledger.record(Message::make(kind, 0, kServer, 0));
      if (messages > 0) ledger.record(Message::make(kind, 0, kServer, scalars));
    }
    const TrainingShape shape = args.shape == "vertical" ? TrainingShape::Vertical
                                                         : TrainingShape::Horizontal;
    const ReconcileReport report = reconcile(ledger, s, shape);
    std::cout << report.text();
    std::cout << (report.exact() ? "reconciliation exact\n"
                                 : "reconciliation has itemized surplus\n");
  }
  return 0;
}

struct VerifyArgs {
  std::string model;
  std::size_t trials = 200;
  std::size_t pairs = 5;
  int grid = 20;
};

int cmd_verify(const CommonArgs& common, const VerifyArgs& args) {
  const Circuit model = load_circuit(args.model);
  bool all_ok = true;
  std::cout << std::setprecision(4);

  {
    const auto report = validate(model);
    if (report.ok()) {
      std::cout << "validate: pass nodes=" << model.num_nodes() << "\n";
    } else {
      all_ok = false;
      std::cout << "validate: fail violations=" << report.violations.size() << "\n";
      for (const auto& v : report.violations)
        std::cout << "  node " << v.node << ": " << violation_name(v.kind) << "\n";
    }
  }

  const double tree_count = count_induced_trees(model);
  if (tree_count > kMaxInducedTrees) {
    std::cout << "induced-tree: skip trees=" << tree_count << " exceeds oracle guard\n";
  } else if (!validate(model).ok()) {
    std::cout << "induced-tree: skip circuit does not validate\n";
  } else {
    const auto trees = enumerate_induced_trees(model);
    auto rng = SeedStream::derive(common.seed, "verify.evidence").rng();
    double max_dev = 0.0;
    for (std::size_t trial = 0; trial < args.trials; ++trial) {
      Evidence e(model.num_variables());
      for (VarId v = 0; v < model.num_variables(); ++v) {
        const Variable& var = model.variable(v);
        if (var.kind == VarKind::Categorical) {
          e.observe(v, static_cast<double>(rng() % var.arity));
        } else {
          e.observe(v, ((rng() >> 11) * 0x1.0p-53) * 8.0 - 4.0);
        }
      }
      const double direct = log_density(model, e);
      const double collapsed = collapsed_log_density(model, trees, e);
      max_dev = std::max(max_dev, std::abs(std::exp(collapsed - direct) - 1.0));
    }
    const bool ok = max_dev < 1e-9;
    all_ok = all_ok && ok;
    std::cout << "induced-tree: " << (ok ? "pass" : "fail") << " trees=" << trees.size()
              << " evidences=" << args.trials << " max_rel_dev=" << max_dev << "\n";
  }

  try {
    const JointTable table = brute_force_joint(model);
    const double sum_dev = std::abs(table.sum() - 1.0);
    double marginal_dev = 0.0;
    for (std::size_t i = 0; i < table.vars.size(); ++i) {
      for (std::uint32_t state = 0; state < table.arities[i]; ++state) {
        Evidence e(model.num_variables());
        e.observe(table.vars[i], static_cast<double>(state));
        const double direct = std::exp(log_density(model, e));
        marginal_dev =
            std::max(marginal_dev, std::abs(table.marginal(table.vars[i], state) - direct));
      }
    }
    const bool ok = sum_dev < 1e-9 && marginal_dev < 1e-9;
    all_ok = all_ok && ok;
    std::cout << "joint-table: " << (ok ? "pass" : "fail") << " cells=" << table.probs.size()
              << " sum_dev=" << sum_dev << " max_marginal_dev=" << marginal_dev << "\n";
  } catch (const std::invalid_argument& e) {
    std::cout << "joint-table: skip " << e.what() << "\n";
  }

  {
    auto rng = SeedStream::derive(common.seed, "verify.maxent").rng();
    auto random_marginal = [&](std::size_t n) {
      std::vector<double> m(n);
      double total = 0.0;
      for (double& p : m) {
        p = 0.05 + (rng() >> 11) * 0x1.0p-53;
        total += p;
      }
      for (double& p : m) p /= total;
      return m;
    };
    bool ok = true;
    for (std::size_t pair = 0; pair < args.pairs; ++pair) {
      const std::size_t nx = 2 + rng() % 2;
      const std::size_t ny = 2 + rng() % 2;
      ok = ok && max_entropy_check(random_marginal(nx), random_marginal(ny), args.grid);
    }
    all_ok = all_ok && ok;
    std::cout << "max-entropy: " << (ok ? "pass" : "fail") << " pairs=" << args.pairs
              << " grid=" << args.grid << "\n";
  }

  std::cout << "overall: " << (all_ok ? "pass" : "fail") << "\n";
  return all_ok ? 0 : 1;
}

struct BenchArgs {
  std::string data_dir;
  std::vector<std::size_t> workers{1};
  int reps = 3;
  std::size_t clusters = 2;
  double threshold = 0.3;
  std::size_t min_instances = 50;
};

int cmd_bench(const CommonArgs& common, const BenchArgs& args) {
  const PartitionManifest manifest =
      load_manifest((std::filesystem::path(args.data_dir) / "manifest.json").string());
  if (manifest.mode != PartitionMode::Horizontal)
    throw ConfigError("bench compares against a centralized model; use a horizontal manifest");
  const std::vector<ClientSite> clients =
      load_clients(args.data_dir, manifest, common.processed_profile());
  const Dataset pooled = pool_clients(manifest, clients);

  BenchOptions opts;
  opts.train.learn.threshold = args.threshold;
  opts.train.learn.min_num_instances = args.min_instances;
  opts.train.learn.k_clusters = args.clusters;
  opts.train.learn.seed = common.seed;
  opts.worker_counts = args.workers;
  opts.repetitions = args.reps;
  const BenchReport report = run_bench(clients, pooled, opts);
  std::cout << report.text();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"federated probabilistic circuits"};
  app.fallthrough();
  app.set_config("--config", "", "key=value config file (flags override config entries)");
  app.require_subcommand(1);

  CommonArgs common;
  if (const char* env = std::getenv("FEDCIRC_SEED")) {
    char* end = nullptr;
    const unsigned long long v = std::strtoull(env, &end, 10);
    if (end == env || *end != '\0') {
      std::cerr << "error: FEDCIRC_SEED must be an unsigned integer\n";
      return 2;
    }
    common.seed = v;
  }
  app.add_option("--seed", common.seed, "seed for every derived random stream")
      ->capture_default_str();
  app.add_option("--categorical", common.categorical,
                 "column names treated as categorical (comma separated, repeatable)")
      ->delimiter(',');
  app.add_flag("--no-standardize", common.no_standardize,
               "skip z-scoring continuous columns on source ingestion");

  PartitionArgs partition_args;
  CLI::App* partition = app.add_subcommand("partition", "split a CSV into client shards");
  partition->add_option("--input", partition_args.input, "source CSV")
      ->required()
      ->check(CLI::ExistingFile);
  partition->add_option("--out", partition_args.out_dir, "output directory")->required();
  partition->add_option("--clients", partition_args.clients, "number of clients")->required();
  partition->add_option("--mode", partition_args.mode, "horizontal|vertical|hybrid")
      ->capture_default_str();
  partition->add_option("--strategy", partition_args.strategy,
                        "horizontal row assignment: random|by-label")
      ->capture_default_str();
  partition->add_option("--class-var", partition_args.class_var,
                        "label column for --strategy by-label");
  partition->add_option("--overlap-features", partition_args.overlap_features,
                        "hybrid: features shared by every client")
      ->capture_default_str();
  partition->add_option("--row-fraction", partition_args.row_fraction,
                        "hybrid: fraction of rows sampled per client")
      ->capture_default_str();
  partition->add_option("--test-rows", partition_args.test_rows,
                        "hold out this many rows as test.csv before splitting")
      ->capture_default_str();

  TrainArgs train_args;
  CLI::App* train = app.add_subcommand("train", "one-pass federated training over a partition");
  train->add_option("--data-dir", train_args.data_dir,
                    "directory holding manifest.json and client CSVs")
      ->required()
      ->check(CLI::ExistingDirectory);
  train->add_option("--out", train_args.out_model, "model output path")->required();
  train->add_option("--report", train_args.report_path, "ledger report output path (JSON)");
  train->add_option("--algo", train_args.algo, "onepass|em")->capture_default_str();
  train->add_option("--em-epochs", train_args.em_epochs, "EM update steps for --algo em")
      ->capture_default_str();
  train->add_flag("--allow-data-exchange", train_args.allow_data_exchange,
                  "permit --algo em to pool client rows on the coordinator");
  CLI::Option* products_opt =
      train->add_option("--products", train_args.products,
                        "P server products (default: one per cluster)");
  train->add_option("--clusters", train_args.clusters, "K latent clusters")
      ->capture_default_str();
  train->add_option("--threshold", train_args.threshold, "independence split threshold")
      ->capture_default_str();
  train->add_option("--min-instances", train_args.min_instances,
                    "row count below which a subtree is factorized")
      ->capture_default_str();
  train->add_option("--leaf", train_args.leaf, "gaussian|discretized")->capture_default_str();
  train->add_option("--wiring", train_args.wiring, "aligned|random_coverage")
      ->capture_default_str();
  train->add_option("--workers", train_args.workers, "client training worker pool size")
      ->capture_default_str();

  EvalArgs eval_args;
  CLI::App* eval = app.add_subcommand("eval", "score a model on a CSV");
  eval->add_option("--model", eval_args.model, "model JSON")->required()->check(CLI::ExistingFile);
  eval->add_option("--data", eval_args.data, "evaluation CSV")
      ->required()
      ->check(CLI::ExistingFile);
  eval->add_option("--metric", eval_args.metric, "ll|acc|f1")->required();
  eval->add_option("--class-var", eval_args.class_var, "label column for acc/f1");

  CommReportArgs comm_args;
  CLI::App* comm = app.add_subcommand("comm-report", "analytic communication costs");
  comm->add_option("--clients", comm_args.clients, "|C|")->capture_default_str();
  comm->add_option("--params", comm_args.params, "M scalars per client model")
      ->capture_default_str();
  comm->add_option("--rounds", comm_args.rounds, "FedAvg aggregation rounds")
      ->capture_default_str();
  comm->add_option("--epochs", comm_args.epochs, "SplitNN epochs")->capture_default_str();
  comm->add_option("--feature-dim", comm_args.feature_dim, "SplitNN activations per sample")
      ->capture_default_str();
  comm->add_option("--samples", comm_args.samples, "SplitNN samples")->capture_default_str();
  comm->add_option("--clusters", comm_args.clusters, "K")->capture_default_str();
  comm->add_option("--products", comm_args.products, "P")->capture_default_str();
  comm->add_option("--train-report", comm_args.train_report,
                   "reconcile a train --report JSON against the analytic prediction")
      ->check(CLI::ExistingFile);
  comm->add_option("--shape", comm_args.shape, "horizontal|vertical (for reconciliation)")
      ->capture_default_str();

  VerifyArgs verify_args;
  CLI::App* verify = app.add_subcommand("verify", "run the verification oracles on a model");
  verify->add_option("--model", verify_args.model, "model JSON")
      ->required()
      ->check(CLI::ExistingFile);
  verify->add_option("--trials", verify_args.trials, "random evidences for the tree oracle")
      ->capture_default_str();
  verify->add_option("--pairs", verify_args.pairs, "marginal pairs for the max-entropy check")
      ->capture_default_str();
  verify->add_option("--grid", verify_args.grid, "grid resolution for the max-entropy check")
      ->capture_default_str();

  BenchArgs bench_args;
  CLI::App* bench = app.add_subcommand("bench", "centralized vs federated wall clock");
  bench->add_option("--data-dir", bench_args.data_dir, "partition directory")
      ->required()
      ->check(CLI::ExistingDirectory);
  bench->add_option("--workers", bench_args.workers, "worker counts to sweep (comma separated)")
      ->delimiter(',')
      ->capture_default_str();
  bench->add_option("--reps", bench_args.reps, "repetitions per median")->capture_default_str();
  bench->add_option("--clusters", bench_args.clusters, "K latent clusters")
      ->capture_default_str();
  bench->add_option("--threshold", bench_args.threshold, "independence split threshold")
      ->capture_default_str();
  bench->add_option("--min-instances", bench_args.min_instances,
                    "row count below which a subtree is factorized")
      ->capture_default_str();

  CLI11_PARSE(app, argc, argv);
  train_args.products_given = products_opt->count() > 0;

  try {
    if (app.got_subcommand(partition)) return cmd_partition(common, partition_args);
    if (app.got_subcommand(train)) return cmd_train(common, train_args);
    if (app.got_subcommand(eval)) return cmd_eval(common, eval_args);
    if (app.got_subcommand(comm)) return cmd_comm_report(comm_args);
    if (app.got_subcommand(verify)) return cmd_verify(common, verify_args);
    if (app.got_subcommand(bench)) return cmd_bench(common, bench_args);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
