#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "fedcirc/circuit.hpp"
#include "fedcirc/common.hpp"

namespace fedcirc {

struct Column {
  std::string name;
  VarKind kind = VarKind::Continuous;
  std::uint32_t arity = 0;  // categorical only
};

/// Row-major numeric table with named, typed columns. Categorical values are
/// stored as integer-valued reals. Row ids are optional and required only for
/// vertical alignment.
class Dataset {
 public:
  Dataset() = default;
  Dataset(std::vector<Column> columns, std::vector<double> values,
          std::optional<std::vector<std::int64_t>> row_ids = std::nullopt)
      : columns_(std::move(columns)), values_(std::move(values)), row_ids_(std::move(row_ids)) {
    if (columns_.empty()) {
      if (!values_.empty()) throw std::invalid_argument("values without columns");
    } else if (values_.size() % columns_.size() != 0) {
      throw std::invalid_argument("value count is not a multiple of column count");
    }
    if (row_ids_ && row_ids_->size() != num_rows())
      throw std::invalid_argument("row_ids size does not match rows");
  }

  std::size_t num_rows() const { return columns_.empty() ? 0 : values_.size() / columns_.size(); }
  std::size_t num_cols() const { return columns_.size(); }
  bool empty() const { return num_rows() == 0; }

  double at(std::size_t row, std::size_t col) const { return values_[row * num_cols() + col]; }
  double& at(std::size_t row, std::size_t col) { return values_[row * num_cols() + col]; }

  const Column& column(std::size_t c) const { return columns_.at(c); }
  const std::vector<Column>& columns() const { return columns_; }

  std::optional<std::size_t> find_column(std::string_view name) const {
    for (std::size_t c = 0; c < columns_.size(); ++c)
      if (columns_[c].name == name) return c;
    return std::nullopt;
  }

  std::size_t column_index(std::string_view name) const {
    auto c = find_column(name);
    if (!c) throw std::invalid_argument("no column named " + std::string(name));
    return *c;
  }

  bool has_row_ids() const { return row_ids_.has_value(); }
  const std::vector<std::int64_t>& row_ids() const {
    if (!row_ids_) throw std::logic_error("dataset has no row ids");
    return *row_ids_;
  }

  void assign_row_ids(std::vector<std::int64_t> ids) {
    if (ids.size() != num_rows()) throw std::invalid_argument("row_ids size does not match rows");
    row_ids_ = std::move(ids);
  }

  std::vector<double> column_values(std::size_t c) const {
    std::vector<double> out;
    out.reserve(num_rows());
    for (std::size_t r = 0; r < num_rows(); ++r) out.push_back(at(r, c));
    return out;
  }

  Dataset select_columns(const std::vector<std::size_t>& cols) const {
    std::vector<Column> newcols;
    newcols.reserve(cols.size());
    for (std::size_t c : cols) newcols.push_back(columns_.at(c));
    std::vector<double> vals;
    vals.reserve(cols.size() * num_rows());
    for (std::size_t r = 0; r < num_rows(); ++r)
      for (std::size_t c : cols) vals.push_back(at(r, c));
    return Dataset(std::move(newcols), std::move(vals), row_ids_);
  }

  Dataset select_columns_by_name(const std::vector<std::string>& names) const {
    std::vector<std::size_t> cols;
    cols.reserve(names.size());
    for (const auto& n : names) cols.push_back(column_index(n));
    return select_columns(cols);
  }

  Dataset select_rows(const std::vector<std::size_t>& rows) const {
    std::vector<double> vals;
    vals.reserve(rows.size() * num_cols());
    std::optional<std::vector<std::int64_t>> ids;
    if (row_ids_) ids.emplace();
    for (std::size_t r : rows) {
      if (r >= num_rows()) throw std::out_of_range("row index out of range");
      for (std::size_t c = 0; c < num_cols(); ++c) vals.push_back(at(r, c));
      if (ids) ids->push_back((*row_ids_)[r]);
    }
    return Dataset(columns_, std::move(vals), std::move(ids));
  }

  Dataset select_rows_by_id(const std::vector<std::int64_t>& ids) const {
    std::unordered_map<std::int64_t, std::size_t> index;
    const auto& own = row_ids();
    index.reserve(own.size());
    for (std::size_t r = 0; r < own.size(); ++r) index.emplace(own[r], r);
    std::vector<std::size_t> rows;
    rows.reserve(ids.size());
    for (std::int64_t id : ids) {
      auto it = index.find(id);
      if (it == index.end()) throw std::invalid_argument("row id not present: " + std::to_string(id));
      rows.push_back(it->second);
    }
    return select_rows(rows);
  }

  /// Register this table's columns as circuit variables, in column order.
  void declare_variables(Circuit& c) const {
    for (const auto& col : columns_) c.add_variable(col.name, col.kind, col.arity);
  }

  Evidence row_evidence(std::size_t row, std::size_t num_vars) const {
    Evidence e(num_vars);
    for (std::size_t c = 0; c < num_cols(); ++c) e.observe(static_cast<VarId>(c), at(row, c));
    return e;
  }

 private:
  std::vector<Column> columns_;
  std::vector<double> values_;  // row-major
  std::optional<std::vector<std::int64_t>> row_ids_;
};

namespace detail {

inline bool is_missing_token(std::string_view s) {
  return s.empty() || s == "NA" || s == "na" || s == "NaN" || s == "nan" || s == "?";
}

inline std::string trim(std::string s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\t')) s.pop_back();
  std::size_t i = 0;
  while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
  return s.substr(i);
}

inline std::optional<double> parse_double(std::string_view s) {
  double v = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc{} || ptr != last) return std::nullopt;
  return v;
}

inline std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc{}) throw std::runtime_error("number formatting failed");
  return std::string(buf, ptr);
}

inline double median_of(std::vector<double> xs) {
  if (xs.empty()) throw std::invalid_argument("median of empty set");
  std::sort(xs.begin(), xs.end());
  const std::size_t n = xs.size();
  return n % 2 == 1 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

}  // namespace detail

/// Raw CSV cells before typing/imputation. The first column may be
/// `__row_id`; fields are comma-separated without quoting.
struct RawTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> cells;
  std::optional<std::vector<std::int64_t>> row_ids;
};

inline RawTable read_csv_raw(std::istream& in) {
  RawTable t;
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty CSV");
  auto split = [](const std::string& l) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = l.find(',', start);
      if (comma == std::string::npos) {
        out.push_back(detail::trim(l.substr(start)));
        break;
      }
      out.push_back(detail::trim(l.substr(start, comma - start)));
      start = comma + 1;
    }
    return out;
  };
  t.header = split(line);
  bool with_ids = !t.header.empty() && t.header[0] == "__row_id";
  if (with_ids) {
    t.header.erase(t.header.begin());
    t.row_ids.emplace();
  }
  if (t.header.empty()) throw std::runtime_error("CSV has no data columns");
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    auto fields = split(line);
    if (fields.size() != t.header.size() + (with_ids ? 1 : 0))
      throw std::runtime_error("CSV line " + std::to_string(lineno) + " has " +
                               std::to_string(fields.size()) + " fields, expected " +
                               std::to_string(t.header.size() + (with_ids ? 1 : 0)));
    if (with_ids) {
      auto id = detail::parse_double(fields[0]);
      if (!id || *id != std::floor(*id))
        throw std::runtime_error("CSV line " + std::to_string(lineno) + ": bad __row_id");
      t.row_ids->push_back(static_cast<std::int64_t>(*id));
      fields.erase(fields.begin());
    }
    t.cells.push_back(std::move(fields));
  }
  return t;
}

inline RawTable read_csv_raw(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return read_csv_raw(in);
}

struct IngestOptions {
  std::set<std::string> categorical;  // column names treated as categorical
  bool standardize = true;            // z-score continuous columns
  bool impute = true;                 // median (continuous) / mode (categorical)
};

/// Typed ingestion: median imputation for missing numeric cells, mode
/// imputation for missing categorical cells, integer codes for categorical
/// levels (numeric levels sort numerically, otherwise lexicographically),
/// z-standardization of continuous columns. Constant columns standardize
/// to zero.
inline Dataset ingest(const RawTable& raw, const IngestOptions& opts = {}) {
  const std::size_t n = raw.cells.size();
  const std::size_t d = raw.header.size();
  if (n == 0) throw std::runtime_error("CSV has no rows");
  std::vector<Column> columns(d);
  std::vector<double> values(n * d, 0.0);
  for (std::size_t c = 0; c < d; ++c) {
    columns[c].name = raw.header[c];
    const bool categorical = opts.categorical.count(raw.header[c]) > 0;
    if (categorical) {
      columns[c].kind = VarKind::Categorical;
      std::map<std::string, std::size_t> counts;
      for (std::size_t r = 0; r < n; ++r)
        if (!detail::is_missing_token(raw.cells[r][c])) ++counts[raw.cells[r][c]];
      if (counts.empty()) throw std::runtime_error("column " + raw.header[c] + " is all missing");
      std::vector<std::string> levels;
      levels.reserve(counts.size());
      for (const auto& [token, cnt] : counts) levels.push_back(token);
      bool all_numeric = true;
      std::vector<double> numeric(levels.size());
      for (std::size_t i = 0; i < levels.size(); ++i) {
        auto v = detail::parse_double(levels[i]);
        if (!v) { all_numeric = false; break; }
        numeric[i] = *v;
      }
      if (all_numeric) {
        std::vector<std::size_t> order(levels.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::sort(order.begin(), order.end(),
                  [&](std::size_t a, std::size_t b) { return numeric[a] < numeric[b]; });
        std::vector<std::string> sorted;
        sorted.reserve(levels.size());
        for (std::size_t i : order) sorted.push_back(levels[i]);
        levels = std::move(sorted);
      }
      std::unordered_map<std::string, double> code;
      for (std::size_t i = 0; i < levels.size(); ++i) code[levels[i]] = static_cast<double>(i);
      columns[c].arity = static_cast<std::uint32_t>(levels.size());
      std::string mode;
      std::size_t best = 0;
      for (const auto& level : levels) {
        const std::size_t cnt = counts[level];
        if (cnt > best) { best = cnt; mode = level; }
      }
      for (std::size_t r = 0; r < n; ++r) {
        const std::string& cell = raw.cells[r][c];
        if (detail::is_missing_token(cell)) {
          if (!opts.impute) throw std::runtime_error("missing value in " + raw.header[c]);
          values[r * d + c] = code[mode];
        } else {
          values[r * d + c] = code[cell];
        }
      }
    } else {
      columns[c].kind = VarKind::Continuous;
      std::vector<double> present;
      present.reserve(n);
      for (std::size_t r = 0; r < n; ++r) {
        const std::string& cell = raw.cells[r][c];
        if (detail::is_missing_token(cell)) continue;
        auto v = detail::parse_double(cell);
        if (!v) throw std::runtime_error("column " + raw.header[c] + ": cannot parse '" + cell + "'");
        present.push_back(*v);
      }
      if (present.empty()) throw std::runtime_error("column " + raw.header[c] + " is all missing");
      const double med = detail::median_of(present);
      double mean = 0.0;
      for (double v : present) mean += v;
      const double med_weight = static_cast<double>(n - present.size());
      mean = (mean + med * med_weight) / static_cast<double>(n);
      for (std::size_t r = 0; r < n; ++r) {
        const std::string& cell = raw.cells[r][c];
        if (detail::is_missing_token(cell)) {
          if (!opts.impute) throw std::runtime_error("missing value in " + raw.header[c]);
          values[r * d + c] = med;
        } else {
          values[r * d + c] = *detail::parse_double(cell);
        }
      }
      if (opts.standardize) {
        double var = 0.0;
        for (std::size_t r = 0; r < n; ++r) {
          const double diff = values[r * d + c] - mean;
          var += diff * diff;
        }
        var /= static_cast<double>(n);
        const double sd = std::sqrt(var);
        for (std::size_t r = 0; r < n; ++r)
          values[r * d + c] = sd > 0.0 ? (values[r * d + c] - mean) / sd : 0.0;
      }
    }
  }
  Dataset out(std::move(columns), std::move(values), raw.row_ids);
  return out;
}

inline Dataset read_csv(const std::string& path, const IngestOptions& opts = {}) {
  return ingest(read_csv_raw(path), opts);
}

inline void write_csv(const Dataset& data, std::ostream& out) {
  bool first = true;
  if (data.has_row_ids()) {
    out << "__row_id";
    first = false;
  }
  for (const auto& col : data.columns()) {
    if (!first) out << ',';
    out << col.name;
    first = false;
  }
  out << '\n';
  for (std::size_t r = 0; r < data.num_rows(); ++r) {
    first = true;
    if (data.has_row_ids()) {
      out << data.row_ids()[r];
      first = false;
    }
    for (std::size_t c = 0; c < data.num_cols(); ++c) {
      if (!first) out << ',';
      out << detail::format_double(data.at(r, c));
      first = false;
    }
    out << '\n';
  }
}

inline void write_csv(const Dataset& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  write_csv(data, out);
}

/// FNV-1a over the byte content of a file; manifests store it as a hex
/// string so a partition can be tied to its source table.
inline std::string file_checksum_hex(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::uint64_t h = 1469598103934665603ull;
  char buf[4096];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ull;
    }
    if (!in) break;
  }
  std::ostringstream hex;
  hex << std::hex << std::setw(16) << std::setfill('0') << h;
  return hex.str();
}

}  // namespace fedcirc
