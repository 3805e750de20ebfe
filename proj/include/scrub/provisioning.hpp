#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "scrub/corruption.hpp"
#include "scrub/table.hpp"

namespace scrub {

struct TaskSpec {
  std::string target_column;
  // Columns removed from both splits so the task stays nontrivial.
  std::vector<std::string> dropped_columns;
  // Positive class for binary targets, as text ("1", "yes", ...).
  std::optional<std::string> positive_label;
  double split_fraction = 0.8;
  std::uint64_t split_seed = 0;
  std::string dataset_description;
  // Optional random row subsample applied before indexing.
  std::optional<std::size_t> subsample_rows;
  std::string index_column = std::string(kDefaultIndexColumn);
  std::map<std::string, ColumnKind, std::less<>> kind_overrides;
};

void validate_task(const TaskSpec& task);

struct Provenance {
  std::string source_id;
  std::string checksum;
  std::uint64_t seed = 0;
};

struct DatasetBundle {
  Table train_clean;
  Table test_clean;
  std::optional<Table> train_dirty;
  TaskSpec task;
  Provenance provenance;
};

// Stratified split with the index column injected as 0..n-1 before
// splitting. Rows whose target is missing are discarded first.
DatasetBundle prepare_bundle(const Table& raw, const TaskSpec& task, Provenance provenance = {});

// ---------------------------------------------------------------------------
// Synthetic data

struct CategoricalFeature {
  std::string name;
  std::vector<std::string> categories;
  // Additive contribution to the label score, one per category.
  std::vector<double> offsets;
};

struct NumericFeature {
  std::string name;
  double weight = 0.0;
  double center = 0.0;
  double scale = 1.0;
};

// Label rule: score = bias + sum(weight * (x - center) / scale) + offsets.
// With noise 0 the label is score > 0; otherwise P(label = 1) =
// sigmoid(score / noise).
struct SyntheticSpec {
  std::size_t n_rows = 2000;
  std::vector<NumericFeature> numeric;
  std::vector<CategoricalFeature> categorical;
  double bias = 0.0;
  double noise = 0.0;
  std::uint64_t seed = 0;
  TaskSpec task;
};

SyntheticSpec default_synthetic_spec(std::uint64_t seed = 7);
void validate_synthetic(const SyntheticSpec& spec);
Table generate_synthetic_table(const SyntheticSpec& spec);
DatasetBundle generate_synthetic(const SyntheticSpec& spec);

// ---------------------------------------------------------------------------
// Registry

inline constexpr std::string_view kSyntheticDefault = "synthetic-default";

std::vector<std::string> registered_datasets();
// Throws UnknownDataset.
CorruptionRecipe recipe_for(std::string_view dataset_id);
// Built-in task definitions; meat_consumption has none and must be configured.
std::optional<TaskSpec> default_task_for(std::string_view dataset_id);

// ---------------------------------------------------------------------------
// Acquisition

struct SourceDescriptor {
  std::string id;
  std::string url;
  // Lower-case hex SHA-256; empty disables verification.
  std::string expected_checksum;
  std::filesystem::path cache_dir;
  std::string filename;
};

// SCRUB_CACHE_DIR, else $HOME/.cache/scrub.
std::filesystem::path default_cache_dir();
std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

// Idempotent: a verified cache hit never touches the network.
std::filesystem::path fetch_dataset(const SourceDescriptor& source);

struct DatasetEntry {
  SourceDescriptor source;
  std::optional<TaskSpec> task;
  std::optional<std::filesystem::path> recipe_path;
};

nlohmann::json task_to_json(const TaskSpec& task);
TaskSpec task_from_json(const nlohmann::json& json);
std::map<std::string, DatasetEntry> load_datasets_config(const std::filesystem::path& path);

// Bundle directory: train_clean.csv, test_clean.csv, [train_dirty.csv], bundle.json.
void save_bundle(const DatasetBundle& bundle, const std::filesystem::path& dir);
DatasetBundle load_bundle(const std::filesystem::path& dir);

}  // namespace scrub
