#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "fedcirc/circuit.hpp"
#include "fedcirc/common.hpp"
#include "fedcirc/dataset.hpp"
#include "fedcirc/inference.hpp"

namespace fedcirc {

/// Evidence for one dataset row against a circuit's variable table, matched
/// by column name. Columns the circuit does not know are ignored; variables
/// the dataset does not carry stay marginalized.
inline Evidence evidence_for_row(const Circuit& c, const Dataset& data, std::size_t row) {
  Evidence e(c.num_variables());
  for (std::size_t col = 0; col < data.num_cols(); ++col) {
    if (auto v = c.find_variable(data.column(col).name)) e.observe(*v, data.at(row, col));
  }
  return e;
}

inline double mean_log_likelihood(const Circuit& c, const Dataset& data) {
  if (data.empty()) throw std::invalid_argument("mean_log_likelihood: empty dataset");
  double total = 0.0;
  for (std::size_t r = 0; r < data.num_rows(); ++r)
    total += log_density(c, evidence_for_row(c, data, r));
  return total / static_cast<double>(data.num_rows());
}

/// Predicted class per row for the named categorical variable; the class
/// column may be present in the data (it is masked) or absent.
inline std::vector<std::uint32_t> predict_classes(const Circuit& c, const Dataset& data,
                                                  const std::string& class_var) {
  auto label = c.find_variable(class_var);
  if (!label) throw std::invalid_argument("circuit has no variable " + class_var);
  std::vector<std::uint32_t> out;
  out.reserve(data.num_rows());
  for (std::size_t r = 0; r < data.num_rows(); ++r) {
    Evidence e = evidence_for_row(c, data, r);
    e.marginalize(*label);
    out.push_back(classify(c, *label, e));
  }
  return out;
}

inline double accuracy(const std::vector<std::uint32_t>& predicted,
                       const std::vector<std::uint32_t>& actual) {
  if (predicted.size() != actual.size() || predicted.empty())
    throw std::invalid_argument("accuracy: size mismatch or empty");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i)
    if (predicted[i] == actual[i]) ++hits;
  return static_cast<double>(hits) / static_cast<double>(predicted.size());
}

/// F1 of one class treated as positive. Degenerate cases (no predicted and no
/// actual positives) score 0.
inline double f1_binary(const std::vector<std::uint32_t>& predicted,
                        const std::vector<std::uint32_t>& actual, std::uint32_t positive) {
  if (predicted.size() != actual.size() || predicted.empty())
    throw std::invalid_argument("f1: size mismatch or empty");
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const bool p = predicted[i] == positive;
    const bool a = actual[i] == positive;
    if (p && a) ++tp;
    else if (p) ++fp;
    else if (a) ++fn;
  }
  const double denom = static_cast<double>(2 * tp + fp + fn);
  return denom > 0.0 ? 2.0 * static_cast<double>(tp) / denom : 0.0;
}

/// Unweighted mean of per-class F1 scores.
inline double f1_macro(const std::vector<std::uint32_t>& predicted,
                       const std::vector<std::uint32_t>& actual, std::uint32_t num_classes) {
  if (num_classes == 0) throw std::invalid_argument("f1_macro: no classes");
  double total = 0.0;
  for (std::uint32_t c = 0; c < num_classes; ++c) total += f1_binary(predicted, actual, c);
  return total / static_cast<double>(num_classes);
}

inline std::vector<std::uint32_t> actual_classes(const Dataset& data, const std::string& class_var) {
  const std::size_t col = data.column_index(class_var);
  const Column& column = data.column(col);
  if (column.kind != VarKind::Categorical)
    throw std::invalid_argument("class column must be categorical");
  std::vector<std::uint32_t> out;
  out.reserve(data.num_rows());
  for (std::size_t r = 0; r < data.num_rows(); ++r)
    out.push_back(static_cast<std::uint32_t>(data.at(r, col)));
  return out;
}

/// Seeded row shuffle split into (train, test) with `test_rows` held out.
inline std::pair<Dataset, Dataset> train_test_split(const Dataset& data, std::size_t test_rows,
                                                    std::uint64_t seed) {
  if (test_rows >= data.num_rows())
    throw std::invalid_argument("train_test_split: test set would consume all rows");
  std::vector<std::size_t> order(data.num_rows());
  std::iota(order.begin(), order.end(), 0);
  auto rng = SeedStream::derive(seed, "train_test_split").rng();
  for (std::size_t i = order.size(); i > 1; --i)
    std::swap(order[i - 1], order[rng() % i]);
  std::vector<std::size_t> test(order.begin(), order.begin() + test_rows);
  std::vector<std::size_t> train(order.begin() + test_rows, order.end());
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());
  return {data.select_rows(train), data.select_rows(test)};
}

}  // namespace fedcirc
