#pragma once

#include <cstdint>
#include <cstdio>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "fedcirc/common.hpp"
#include "fedcirc/transport.hpp"

namespace fedcirc {

/// Symbol inventory for the analytic cost formulas. All counts are scalars
/// sent; multiply by 8 for bytes. Formulas are instantiated with constant 1,
/// so they are exact predictions, not bounds.
struct CostScenario {
  std::uint64_t clients = 1;          // |C|
  std::uint64_t params_per_model = 1;  // M
  std::uint64_t rounds = 1;           // aggregation rounds (FedAvg)
  std::uint64_t epochs = 1;           // E (SplitNN)
  std::uint64_t feature_dim = 1;      // F (SplitNN activations per sample)
  std::uint64_t samples = 1;          // S
  std::uint64_t clusters = 1;         // K
  std::uint64_t products = 1;         // P

  void check() const {
    if (clients < 1) throw ConfigError("scenario needs at least one client");
  }
};

inline std::uint64_t fedavg_cost(const CostScenario& s) {
  s.check();
  return s.params_per_model * s.clients * s.rounds;
}

inline std::uint64_t fedpc_horizontal_cost(const CostScenario& s) {
  s.check();
  return s.clients * (s.params_per_model + 1);
}

inline std::uint64_t splitnn_cost(const CostScenario& s) {
  s.check();
  return s.epochs * s.clients * s.feature_dim * s.samples;
}

inline std::uint64_t fedpc_vertical_cost(const CostScenario& s) {
  s.check();
  if (s.clusters < 1 || s.products < 1)
    throw ConfigError("vertical cost needs clusters >= 1 and products >= 1");
  return s.clusters * s.params_per_model * s.clients + s.products;
}

/// R_s shared and R_v singleton subspaces, each contributing one pure-mode
/// term.
inline std::uint64_t fedpc_hybrid_cost(std::uint64_t shared_subspaces,
                                       std::uint64_t singleton_subspaces, const CostScenario& s) {
  std::uint64_t total = shared_subspaces * fedpc_horizontal_cost(s);
  if (singleton_subspaces > 0) total += singleton_subspaces * fedpc_vertical_cost(s);
  return total;
}

/// Whether vertical one-pass training sends fewer scalars than SplitNN:
/// (K*M + P/|C|) < E*F*S, i.e. K*M*|C| + P < E*F*S*|C| in exact integers.
inline bool fedpc_vertical_beats_splitnn(const CostScenario& s) {
  return fedpc_vertical_cost(s) < splitnn_cost(s);
}

struct ReconcileLine {
  Phase phase;
  std::uint64_t analytic_scalars = 0;
  std::uint64_t measured_scalars = 0;
  std::uint64_t measured_messages = 0;
  std::uint64_t measured_bytes = 0;

  std::int64_t surplus() const {
    return static_cast<std::int64_t>(measured_scalars) -
           static_cast<std::int64_t>(analytic_scalars);
  }
};

struct ReconcileReport {
  std::vector<ReconcileLine> lines;  // train, upload, weights

  std::uint64_t analytic_total() const {
    std::uint64_t t = 0;
    for (const auto& l : lines) t += l.analytic_scalars;
    return t;
  }
  std::uint64_t measured_total() const {
    std::uint64_t t = 0;
    for (const auto& l : lines) t += l.measured_scalars;
    return t;
  }
  bool exact() const {
    for (const auto& l : lines)
      if (l.surplus() != 0) return false;
    return true;
  }

  void print(std::ostream& out) const {
    out << "phase    analytic   measured   surplus   messages      bytes\n";
    for (const auto& l : lines) {
      out << phase_name(l.phase);
      for (std::size_t i = std::string(phase_name(l.phase)).size(); i < 8; ++i) out << ' ';
      char buf[160];
      std::snprintf(buf, sizeof(buf), " %9llu %10llu %9lld %10llu %10llu\n",
                    static_cast<unsigned long long>(l.analytic_scalars),
                    static_cast<unsigned long long>(l.measured_scalars),
                    static_cast<long long>(l.surplus()),
                    static_cast<unsigned long long>(l.measured_messages),
                    static_cast<unsigned long long>(l.measured_bytes));
      out << buf;
    }
    char buf[160];
    std::snprintf(buf, sizeof(buf), "total    %9llu %10llu %9lld\n",
                  static_cast<unsigned long long>(analytic_total()),
                  static_cast<unsigned long long>(measured_total()),
                  static_cast<long long>(measured_total()) -
                      static_cast<long long>(analytic_total()));
    out << buf;
  }

  std::string text() const {
    std::ostringstream out;
    print(out);
    return out.str();
  }
};

enum class TrainingShape { Horizontal, Vertical };

/// Measured training traffic against the analytic prediction, phase by
/// phase. Horizontal predicts |C|*M uploads and |C| weight scalars; vertical
/// predicts K*M*|C| uploads and P weight scalars, and its single alignment
/// broadcast shows up as an itemized train-phase surplus.
inline ReconcileReport reconcile(const CommLedger& ledger, const CostScenario& s,
                                 TrainingShape shape) {
  ReconcileReport report;
  auto line = [&](Phase phase, std::uint64_t analytic) {
    const PhaseTotals t = ledger.totals(phase);
    report.lines.push_back(ReconcileLine{phase, analytic, t.scalars, t.messages, t.bytes});
  };
  if (shape == TrainingShape::Horizontal) {
    line(Phase::Train, 0);
    line(Phase::Upload, s.clients * s.params_per_model);
    line(Phase::Weights, s.clients);
  } else {
    if (s.clusters < 1 || s.products < 1)
      throw ConfigError("vertical reconciliation needs clusters >= 1 and products >= 1");
    line(Phase::Train, 0);
    line(Phase::Upload, s.clusters * s.params_per_model * s.clients);
    line(Phase::Weights, s.products);
  }
  return report;
}

/// CSV table of all four analytic costs over a scenario grid.
inline std::string cost_table_csv(const std::vector<CostScenario>& grid) {
  std::ostringstream out;
  out << "clients,params_per_model,rounds,epochs,feature_dim,samples,clusters,products,"
         "fedavg,fedpc_horizontal,splitnn,fedpc_vertical\n";
  for (const auto& s : grid) {
    out << s.clients << ',' << s.params_per_model << ',' << s.rounds << ',' << s.epochs << ','
        << s.feature_dim << ',' << s.samples << ',' << s.clusters << ',' << s.products << ','
        << fedavg_cost(s) << ',' << fedpc_horizontal_cost(s) << ',' << splitnn_cost(s) << ','
        << fedpc_vertical_cost(s) << '\n';
  }
  return out.str();
}

}  // namespace fedcirc
