#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <numeric>
#include <set>
#include <vector>

#include "fedcirc/dataset.hpp"
#include "fedcirc/partition.hpp"

using namespace fedcirc;

namespace {

Dataset grid_dataset(std::size_t rows, std::size_t cols) {
  std::vector<Column> columns;
  for (std::size_t j = 0; j < cols; ++j)
    columns.push_back({"f" + std::to_string(j), VarKind::Continuous, 0});
  std::vector<double> values(rows * cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j)
      values[i * cols + j] = static_cast<double>(i * cols + j);
  return Dataset(std::move(columns), std::move(values));
}

std::vector<std::int64_t> all_row_ids(const PartitionManifest& manifest) {
  std::vector<std::int64_t> ids;
  for (const auto& c : manifest.clients)
    ids.insert(ids.end(), c.row_ids.begin(), c.row_ids.end());
  std::sort(ids.begin(), ids.end());
  return ids;
}

}  // namespace

TEST(Horizontal, RandomSizesAndDisjointness) {
  const Dataset d = grid_dataset(17, 3);
  const PartitionManifest manifest = horizontal_split(d, 5, HorizontalStrategy::Random, 7);
  EXPECT_EQ(manifest.mode, PartitionMode::Horizontal);
  EXPECT_EQ(manifest.seed, 7u);
  ASSERT_EQ(manifest.clients.size(), 5u);
  // 17 = 5*3 + 2: the first two clients take four rows, the rest three.
  EXPECT_EQ(manifest.clients[0].row_ids.size(), 4u);
  EXPECT_EQ(manifest.clients[1].row_ids.size(), 4u);
  EXPECT_EQ(manifest.clients[2].row_ids.size(), 3u);
  EXPECT_EQ(manifest.clients[4].row_ids.size(), 3u);
  std::vector<std::int64_t> expect(17);
  std::iota(expect.begin(), expect.end(), 0);
  EXPECT_EQ(all_row_ids(manifest), expect);
  for (const auto& c : manifest.clients)
    EXPECT_EQ(c.features, (std::vector<std::string>{"f0", "f1", "f2"}));
  EXPECT_NO_THROW(validate_manifest(manifest));

  const PartitionManifest again = horizontal_split(d, 5, HorizontalStrategy::Random, 7);
  for (std::size_t c = 0; c < 5; ++c)
    EXPECT_EQ(again.clients[c].row_ids, manifest.clients[c].row_ids);
  const PartitionManifest other = horizontal_split(d, 5, HorizontalStrategy::Random, 8);
  bool all_same = true;
  for (std::size_t c = 0; c < 5; ++c)
    all_same = all_same && other.clients[c].row_ids == manifest.clients[c].row_ids;
  EXPECT_FALSE(all_same);

  EXPECT_THROW(horizontal_split(d, 0, HorizontalStrategy::Random, 7), std::invalid_argument);
  EXPECT_THROW(horizontal_split(d, 18, HorizontalStrategy::Random, 7), std::invalid_argument);
}

TEST(Horizontal, ByLabelRoundRobin) {
  // Labels cycle 0..3 over 12 rows: ascending label order dealt round-robin,
  // so client 0 holds the rows of labels {0,2} and client 1 those of {1,3}.
  std::vector<Column> columns{{"x", VarKind::Continuous, 0},
                              {"y", VarKind::Categorical, 4}};
  std::vector<double> values;
  for (std::size_t i = 0; i < 12; ++i) {
    values.push_back(static_cast<double>(i));
    values.push_back(static_cast<double>(i % 4));
  }
  const Dataset d(std::move(columns), std::move(values));
  const PartitionManifest manifest =
      horizontal_split(d, 2, HorizontalStrategy::ByLabel, 0, "y");
  ASSERT_EQ(manifest.clients.size(), 2u);
  EXPECT_EQ(manifest.clients[0].row_ids, (std::vector<std::int64_t>{0, 2, 4, 6, 8, 10}));
  EXPECT_EQ(manifest.clients[1].row_ids, (std::vector<std::int64_t>{1, 3, 5, 7, 9, 11}));
  EXPECT_NO_THROW(validate_manifest(manifest));

  EXPECT_THROW(horizontal_split(d, 5, HorizontalStrategy::ByLabel, 0, "y"),
               std::invalid_argument);
  EXPECT_THROW(horizontal_split(d, 2, HorizontalStrategy::ByLabel, 0, "z"),
               std::invalid_argument);
}

TEST(Horizontal, PreservesExistingRowIds) {
  Dataset d = grid_dataset(6, 2);
  d.assign_row_ids({10, 20, 30, 40, 50, 60});
  const PartitionManifest manifest = horizontal_split(d, 2, HorizontalStrategy::Random, 1);
  const auto ids = all_row_ids(manifest);
  EXPECT_EQ(ids, (std::vector<std::int64_t>{10, 20, 30, 40, 50, 60}));
}

TEST(Vertical, DisjointFeaturesSameRows) {
  const Dataset d = grid_dataset(9, 5);
  const PartitionManifest manifest = vertical_split(d, 2, 3);
  EXPECT_EQ(manifest.mode, PartitionMode::Vertical);
  ASSERT_EQ(manifest.clients.size(), 2u);
  std::set<std::string> seen;
  for (const auto& c : manifest.clients) {
    EXPECT_EQ(c.row_ids.size(), 9u);
    EXPECT_EQ(c.row_ids, manifest.clients[0].row_ids);
    for (const auto& f : c.features) EXPECT_TRUE(seen.insert(f).second);
  }
  EXPECT_EQ(seen.size(), 5u);
  // Round-robin deal: ceil and floor of 5/2.
  EXPECT_EQ(manifest.clients[0].features.size(), 3u);
  EXPECT_EQ(manifest.clients[1].features.size(), 2u);
  EXPECT_NO_THROW(validate_manifest(manifest));
  EXPECT_THROW(vertical_split(d, 6, 3), std::invalid_argument);

  const PartitionManifest again = vertical_split(d, 2, 3);
  EXPECT_EQ(again.clients[0].features, manifest.clients[0].features);
}

TEST(Hybrid, SharedFeaturesAndRowFraction) {
  const Dataset d = grid_dataset(10, 6);
  const PartitionManifest manifest = hybrid_split(d, 3, 2, 0.7, 11);
  EXPECT_EQ(manifest.mode, PartitionMode::Hybrid);
  ASSERT_EQ(manifest.clients.size(), 3u);

  // The first two features of the shuffled order go to every client.
  std::vector<std::string> shared;
  for (const auto& f : manifest.clients[0].features) {
    bool everywhere = true;
    for (const auto& c : manifest.clients) {
      everywhere = everywhere &&
                   std::find(c.features.begin(), c.features.end(), f) != c.features.end();
    }
    if (everywhere) shared.push_back(f);
  }
  EXPECT_EQ(shared.size(), 2u);

  // ceil(0.7 * 10) = 7 rows per client, sorted, drawn independently.
  for (const auto& c : manifest.clients) {
    EXPECT_EQ(c.row_ids.size(), 7u);
    EXPECT_TRUE(std::is_sorted(c.row_ids.begin(), c.row_ids.end()));
    EXPECT_GE(c.features.size(), 3u);
  }
  EXPECT_NO_THROW(validate_manifest(manifest));

  EXPECT_THROW(hybrid_split(d, 1, 2, 0.7, 11), std::invalid_argument);
  EXPECT_THROW(hybrid_split(d, 3, 0, 0.7, 11), std::invalid_argument);
  EXPECT_THROW(hybrid_split(d, 3, 7, 0.7, 11), std::invalid_argument);
  EXPECT_THROW(hybrid_split(d, 3, 2, 0.0, 11), std::invalid_argument);
  EXPECT_THROW(hybrid_split(d, 3, 2, 1.5, 11), std::invalid_argument);
  // All features shared and all rows everywhere: clients fully overlap.
  EXPECT_THROW(hybrid_split(d, 3, 6, 1.0, 11), std::invalid_argument);
}

TEST(Manifest, ValidationCatchesShapeErrors) {
  const Dataset d = grid_dataset(8, 4);
  {
    PartitionManifest m = horizontal_split(d, 2, HorizontalStrategy::Random, 1);
    m.clients[1].row_ids[0] = m.clients[0].row_ids[0];
    EXPECT_THROW(validate_manifest(m), std::invalid_argument);
  }
  {
    PartitionManifest m = horizontal_split(d, 2, HorizontalStrategy::Random, 1);
    m.clients[1].features = {"f0", "f1"};
    EXPECT_THROW(validate_manifest(m), std::invalid_argument);
  }
  {
    PartitionManifest m = vertical_split(d, 2, 1);
    m.clients[1].features.push_back(m.clients[0].features[0]);
    EXPECT_THROW(validate_manifest(m), std::invalid_argument);
  }
  {
    PartitionManifest m = vertical_split(d, 2, 1);
    m.clients[1].row_ids.pop_back();
    EXPECT_THROW(validate_manifest(m), std::invalid_argument);
  }
  {
    PartitionManifest m = hybrid_split(d, 2, 1, 0.8, 3);
    for (auto& c : m.clients) {
      c.features = m.clients[0].features;
      c.row_ids = m.clients[0].row_ids;
    }
    EXPECT_THROW(validate_manifest(m), std::invalid_argument);  // full overlap
  }
  {
    PartitionManifest m = hybrid_split(d, 2, 1, 0.8, 3);
    // Remove the shared feature from client 1.
    auto& f1 = m.clients[1].features;
    for (const auto& f : m.clients[0].features) {
      const auto it = std::find(f1.begin(), f1.end(), f);
      if (it != f1.end()) f1.erase(it);
    }
    EXPECT_THROW(validate_manifest(m), std::invalid_argument);  // nothing shared
  }
  {
    PartitionManifest m = horizontal_split(d, 2, HorizontalStrategy::Random, 1);
    m.clients[1].id = 7;
    EXPECT_THROW(validate_manifest(m), std::invalid_argument);
  }
  {
    PartitionManifest m;
    EXPECT_THROW(validate_manifest(m), std::invalid_argument);
  }
}

TEST(Manifest, JsonRoundTrip) {
  const Dataset d = grid_dataset(10, 4);
  PartitionManifest manifest = hybrid_split(d, 2, 1, 0.5, 9);
  manifest.source_checksum = "deadbeef01234567";
  const nlohmann::json j = manifest_to_json(manifest);
  EXPECT_EQ(j.at("format_version").get<int>(), 1);
  EXPECT_EQ(j.at("mode").get<std::string>(), "hybrid");
  const PartitionManifest back = manifest_from_json(j);
  EXPECT_EQ(back.mode, manifest.mode);
  EXPECT_EQ(back.seed, manifest.seed);
  EXPECT_EQ(back.source_checksum, manifest.source_checksum);
  ASSERT_EQ(back.clients.size(), manifest.clients.size());
  for (std::size_t c = 0; c < back.clients.size(); ++c) {
    EXPECT_EQ(back.clients[c].id, manifest.clients[c].id);
    EXPECT_EQ(back.clients[c].features, manifest.clients[c].features);
    EXPECT_EQ(back.clients[c].row_ids, manifest.clients[c].row_ids);
  }
  EXPECT_EQ(manifest_to_json(back).dump(), j.dump());
  EXPECT_THROW(manifest_from_json(nlohmann::json::object()), std::exception);
  EXPECT_THROW(manifest_from_json(nlohmann::json{{"format_version", 2}}),
               std::invalid_argument);
  EXPECT_THROW(partition_mode_from("diagonal"), std::invalid_argument);
}

TEST(Manifest, MaterializeClients) {
  Dataset d = grid_dataset(6, 3);
  const PartitionManifest manifest = vertical_split(d, 2, 4);
  const auto clients = materialize_clients(d, manifest);
  ASSERT_EQ(clients.size(), 2u);
  for (std::size_t c = 0; c < 2; ++c) {
    EXPECT_EQ(clients[c].id, manifest.clients[c].id);
    EXPECT_EQ(clients[c].data.num_rows(), 6u);
    ASSERT_EQ(clients[c].data.num_cols(), manifest.clients[c].features.size());
    for (std::size_t j = 0; j < clients[c].data.num_cols(); ++j)
      EXPECT_EQ(clients[c].data.column(j).name, manifest.clients[c].features[j]);
    EXPECT_EQ(clients[c].data.row_ids(), manifest.clients[c].row_ids);
  }
  // Cell values survive the projection: feature fk at row i holds i*3+k.
  const auto& c0 = clients[0].data;
  const std::size_t k = static_cast<std::size_t>(c0.column(0).name[1] - '0');
  EXPECT_EQ(c0.at(2, 0), static_cast<double>(2 * 3 + k));

  PartitionManifest stale = manifest;
  for (auto& c : stale.clients) c.row_ids[0] = 999;
  EXPECT_THROW(materialize_clients(d, stale), std::invalid_argument);
}

TEST(Manifest, EmitPartitionWritesFiles) {
  namespace fs = std::filesystem;
  const Dataset d = grid_dataset(8, 3);
  const fs::path dir = fs::temp_directory_path() / "fedcirc_partition_test";
  fs::remove_all(dir);
  const PartitionManifest manifest = horizontal_split(d, 3, HorizontalStrategy::Random, 5);
  const std::string manifest_path = emit_partition(d, manifest, dir.string());
  EXPECT_EQ(manifest_path, (dir / "manifest.json").string());
  EXPECT_TRUE(fs::exists(dir / "manifest.json"));
  for (int c = 0; c < 3; ++c)
    EXPECT_TRUE(fs::exists(dir / ("client_" + std::to_string(c) + ".csv")));

  const Dataset back = read_csv((dir / "client_0.csv").string());
  EXPECT_EQ(back.num_rows(), manifest.clients[0].row_ids.size());
  EXPECT_EQ(back.num_cols(), 3u);
  EXPECT_EQ(back.row_ids(), manifest.clients[0].row_ids);

  const PartitionManifest loaded = load_manifest(manifest_path);
  EXPECT_EQ(loaded.mode, manifest.mode);
  EXPECT_EQ(loaded.clients[0].row_ids, manifest.clients[0].row_ids);
  EXPECT_THROW(load_manifest((dir / "missing.json").string()), std::runtime_error);
  fs::remove_all(dir);
}
