#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "fedcirc/dataset.hpp"
#include "fedcirc/federation.hpp"
#include "fedcirc/learn.hpp"

namespace fedcirc {

struct BenchOptions {
  FedTrainOptions train;
  std::vector<std::size_t> worker_counts{1};
  int repetitions = 3;
};

struct BenchReport {
  double centralized_seconds = 0.0;  // median
  struct Run {
    std::size_t workers = 1;
    double seconds = 0.0;  // median
    double relative = 0.0;  // seconds / centralized_seconds
  };
  std::vector<Run> runs;
  std::vector<double> per_client_seconds;  // one serial training pass per client

  std::string text() const {
    std::ostringstream out;
    out << "centralized train: " << centralized_seconds << " s\n";
    for (const auto& r : runs)
      out << "federated train (workers=" << r.workers << "): " << r.seconds
          << " s  relative=" << r.relative << "\n";
    for (std::size_t c = 0; c < per_client_seconds.size(); ++c)
      out << "client " << c << " local train: " << per_client_seconds[c] << " s\n";
    return out.str();
  }
};

namespace detail {

template <typename F>
inline double time_seconds(F&& fn) {
  const auto start = std::chrono::steady_clock::now();
  fn();
  const auto stop = std::chrono::steady_clock::now();
  return std::chrono::duration<double>(stop - start).count();
}

inline double median(std::vector<double> xs) {
  std::sort(xs.begin(), xs.end());
  const std::size_t n = xs.size();
  return n % 2 == 1 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

}  // namespace detail

/// Centralized-vs-federated wall clock: the centralized run learns one model
/// on the pooled rows; each federated run is a full one-pass training over
/// the clients at the given worker count. Medians over `repetitions`.
inline BenchReport run_bench(const std::vector<ClientSite>& clients, const Dataset& pooled,
                             const BenchOptions& opts) {
  if (opts.repetitions < 1) throw ConfigError("bench needs at least one repetition");
  BenchReport report;
  std::vector<double> central;
  for (int rep = 0; rep < opts.repetitions; ++rep)
    central.push_back(
        detail::time_seconds([&]() { (void)learn_structure(pooled, opts.train.learn); }));
  report.centralized_seconds = detail::median(central);
  for (std::size_t workers : opts.worker_counts) {
    FedTrainOptions train = opts.train;
    train.workers = workers;
    std::vector<double> samples;
    for (int rep = 0; rep < opts.repetitions; ++rep)
      samples.push_back(detail::time_seconds([&]() { (void)one_pass_train(clients, train); }));
    BenchReport::Run run;
    run.workers = workers;
    run.seconds = detail::median(samples);
    run.relative = run.seconds / report.centralized_seconds;
    report.runs.push_back(run);
  }
  for (const auto& client : clients)
    report.per_client_seconds.push_back(
        detail::time_seconds([&]() { (void)learn_structure(client.data, opts.train.learn); }));
  return report;
}

}  // namespace fedcirc
