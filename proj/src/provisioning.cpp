#include "scrub/provisioning.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include <httplib.h>

#include "scrub/error.hpp"
#include "scrub/rng.hpp"

namespace scrub {

using nlohmann::json;

void validate_task(const TaskSpec& task) {
  if (task.target_column.empty()) throw Error(ErrorKind::InvalidSpec, "target column is empty");
  if (std::find(task.dropped_columns.begin(), task.dropped_columns.end(), task.target_column) !=
      task.dropped_columns.end()) {
    throw Error(ErrorKind::InvalidSpec, "target column is listed as dropped");
  }
  if (!(task.split_fraction > 0.0 && task.split_fraction < 1.0)) {
    throw Error(ErrorKind::InvalidSpec, "split fraction must lie in (0, 1)");
  }
}

namespace {

std::string label_of(const Cell& cell) { return cell_to_string(cell); }

}  // namespace

DatasetBundle prepare_bundle(const Table& raw, const TaskSpec& task, Provenance provenance) {
  validate_task(task);
  if (!raw.find_column(task.target_column)) {
    throw Error(ErrorKind::MissingTarget, "no target column '" + task.target_column + "'");
  }

  Table table = raw.cast_to(task.kind_overrides);
  if (table.index_column() || table.find_column(task.index_column)) {
    std::vector<std::string> drop{task.index_column};
    table = table.without_columns(drop);
  }
  std::vector<std::string> drops;
  for (const auto& name : task.dropped_columns) {
    if (table.find_column(name)) drops.push_back(name);
  }
  table = table.without_columns(drops);
  if (table.num_columns() < 2) throw Error(ErrorKind::InvalidSpec, "no feature columns remain");

  const auto target = table.column_position(task.target_column);
  std::vector<std::size_t> kept;
  for (std::size_t r = 0; r < table.num_rows(); ++r) {
    if (!is_missing(table.cell(r, target))) kept.push_back(r);
  }
  if (task.subsample_rows && *task.subsample_rows < kept.size()) {
    auto stream = RandomStream::derive(task.split_seed, "provisioning/subsample");
    const auto picks = sample_without_replacement(stream, kept.size(), *task.subsample_rows);
    std::vector<std::size_t> subset;
    for (auto pick : picks) subset.push_back(kept[pick]);
    kept = std::move(subset);
  }
  table = table.take_rows(kept).with_index(task.index_column);
  const auto target_col = table.column_position(task.target_column);

  std::map<std::string, std::vector<std::size_t>> strata;
  for (std::size_t r = 0; r < table.num_rows(); ++r) strata[label_of(table.cell(r, target_col))].push_back(r);
  if (strata.size() < 2) throw Error(ErrorKind::DegenerateTarget, "target has a single class");

  // Largest-remainder allocation keeps the train total at round(f * n) while
  // every class stays within one row of its proportional share.
  const auto n = table.num_rows();
  const auto train_total = static_cast<std::size_t>(std::llround(task.split_fraction * static_cast<double>(n)));
  std::vector<std::pair<std::string, std::size_t>> quotas;
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (const auto& [label, rows] : strata) {
    const double exact = task.split_fraction * static_cast<double>(rows.size());
    const auto base = static_cast<std::size_t>(std::floor(exact));
    remainders.emplace_back(exact - static_cast<double>(base), quotas.size());
    quotas.emplace_back(label, base);
    assigned += base;
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t i = 0; assigned < train_total && i < remainders.size(); ++i, ++assigned) {
    ++quotas[remainders[i].second].second;
  }

  std::vector<std::size_t> train_rows;
  std::vector<std::size_t> test_rows;
  for (const auto& [label, quota] : quotas) {
    const auto& rows = strata.at(label);
    auto stream = RandomStream::derive(task.split_seed, "provisioning/split/" + label);
    const auto picks = sample_without_replacement(stream, rows.size(), quota);
    std::vector<bool> in_train(rows.size(), false);
    for (auto pick : picks) in_train[pick] = true;
    for (std::size_t i = 0; i < rows.size(); ++i) (in_train[i] ? train_rows : test_rows).push_back(rows[i]);
  }
  std::sort(train_rows.begin(), train_rows.end());
  std::sort(test_rows.begin(), test_rows.end());

  DatasetBundle bundle{table.take_rows(train_rows), table.take_rows(test_rows), std::nullopt, task,
                       std::move(provenance)};
  bundle.provenance.seed = task.split_seed;
  return bundle;
}

// ---------------------------------------------------------------------------
// Synthetic data

SyntheticSpec default_synthetic_spec(std::uint64_t seed) {
  SyntheticSpec spec;
  spec.n_rows = 2000;
  spec.seed = seed;
  spec.noise = 0.25;
  spec.bias = -0.2;
  spec.numeric = {{"income", 1.6, 50.0, 15.0},
                  {"tenure", 1.2, 6.0, 3.0},
                  {"age", -0.8, 40.0, 12.0},
                  {"visits", 0.6, 10.0, 4.0}};
  spec.categorical = {{"region", {"north", "south", "east", "west"}, {1.0, -0.3, 0.2, -0.9}},
                      {"channel", {"online", "store", "phone"}, {0.6, -0.4, 0.0}}};
  spec.task.target_column = "target";
  spec.task.positive_label = "1";
  spec.task.split_fraction = 0.8;
  spec.task.split_seed = seed;
  spec.task.dataset_description =
      "Synthetic customer records. income is yearly income in thousands, tenure is years as a customer, age is "
      "in years, visits counts store or site visits last quarter, region and channel describe where and how the "
      "customer buys. target is 1 if the customer converted to the premium plan.";
  return spec;
}

void validate_synthetic(const SyntheticSpec& spec) {
  auto fail = [](const std::string& why) { throw Error(ErrorKind::InvalidSpec, why); };
  if (spec.n_rows < 10) fail("synthetic spec needs at least 10 rows");
  if (spec.numeric.empty() && spec.categorical.empty()) fail("synthetic spec declares no features");
  if (spec.noise < 0.0) fail("noise must be non-negative");
  for (const auto& feature : spec.numeric) {
    if (!(feature.scale > 0.0)) fail("numeric feature '" + feature.name + "' needs a positive scale");
  }
  for (const auto& feature : spec.categorical) {
    if (feature.categories.empty() || feature.categories.size() != feature.offsets.size()) {
      fail("categorical feature '" + feature.name + "' needs one offset per category");
    }
  }
  if (spec.task.target_column.empty()) fail("synthetic spec has no target column");
  validate_task(spec.task);
}

Table generate_synthetic_table(const SyntheticSpec& spec) {
  validate_synthetic(spec);
  auto stream = RandomStream::derive(spec.seed, "synthetic/rows");
  std::vector<ColumnSpec> columns;
  for (const auto& feature : spec.numeric) columns.push_back({feature.name, ColumnKind::Numeric});
  for (const auto& feature : spec.categorical) columns.push_back({feature.name, ColumnKind::Categorical});
  columns.push_back({spec.task.target_column, ColumnKind::Numeric});

  std::vector<std::vector<Cell>> cells(columns.size());
  for (auto& column : cells) column.reserve(spec.n_rows);
  for (std::size_t r = 0; r < spec.n_rows; ++r) {
    double score = spec.bias;
    std::size_t c = 0;
    for (const auto& feature : spec.numeric) {
      // Irwin-Hall(4) centred: bell-shaped, arithmetic only.
      double draw = -2.0;
      for (int k = 0; k < 4; ++k) draw += stream.uniform();
      const double value = std::round((feature.center + feature.scale * draw) * 1000.0) / 1000.0;
      score += feature.weight * (value - feature.center) / feature.scale;
      cells[c++].emplace_back(value);
    }
    for (const auto& feature : spec.categorical) {
      const auto pick = static_cast<std::size_t>(stream.below(feature.categories.size()));
      score += feature.offsets[pick];
      cells[c++].emplace_back(feature.categories[pick]);
    }
    bool positive = score > 0.0;
    if (spec.noise > 0.0) positive = stream.uniform() < 1.0 / (1.0 + std::exp(-score / spec.noise));
    cells[c].emplace_back(positive ? 1.0 : 0.0);
  }
  return Table(std::move(columns), std::move(cells));
}

DatasetBundle generate_synthetic(const SyntheticSpec& spec) {
  const auto raw = generate_synthetic_table(spec);
  return prepare_bundle(raw, spec.task, {std::string(kSyntheticDefault), sha256_hex(to_csv(raw)), spec.seed});
}

// ---------------------------------------------------------------------------
// Acquisition

std::filesystem::path default_cache_dir() {
  if (const char* env = std::getenv("SCRUB_CACHE_DIR"); env != nullptr && *env != '\0') return env;
  if (const char* home = std::getenv("HOME"); home != nullptr && *home != '\0') {
    return std::filesystem::path(home) / ".cache" / "scrub";
  }
  return std::filesystem::temp_directory_path() / "scrub-cache";
}

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &length, EVP_sha256(), nullptr) != 1) {
    throw Error(ErrorKind::IoError, "SHA-256 computation failed");
  }
  std::ostringstream out;
  for (unsigned int i = 0; i < length; ++i) out << std::hex << std::setw(2) << std::setfill('0') << int{digest[i]};
  return out.str();
}

namespace {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::FileNotFound, path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

std::string lower(std::string text) {
  std::transform(text.begin(), text.end(), text.begin(), [](unsigned char ch) { return std::tolower(ch); });
  return text;
}

}  // namespace

std::string sha256_file(const std::filesystem::path& path) { return sha256_hex(read_file(path)); }

std::filesystem::path fetch_dataset(const SourceDescriptor& source) {
  const auto cache_dir = source.cache_dir.empty() ? default_cache_dir() : source.cache_dir;
  std::string filename = source.filename;
  const auto scheme_end = source.url.find("://");
  if (scheme_end == std::string::npos) throw Error(ErrorKind::DownloadFailed, "malformed URL '" + source.url + "'");
  const auto path_start = source.url.find('/', scheme_end + 3);
  const std::string origin = source.url.substr(0, path_start);
  std::string remote_path = path_start == std::string::npos ? "/" : source.url.substr(path_start);
  if (filename.empty()) {
    const auto query = remote_path.find('?');
    const auto base = std::filesystem::path(remote_path.substr(0, query)).filename().string();
    filename = base.empty() ? source.id + ".csv" : base;
  }
  const auto target = cache_dir / filename;
  const auto expected = lower(source.expected_checksum);

  std::error_code ec;
  if (std::filesystem::is_regular_file(target, ec)) {
    if (!expected.empty() && sha256_file(target) != expected) {
      throw Error(ErrorKind::ChecksumMismatch, "cached " + target.string() + " does not match expected checksum");
    }
    return target;
  }

  std::filesystem::create_directories(cache_dir, ec);
  httplib::Client client(origin);
  client.set_follow_location(true);
  client.set_connection_timeout(30);
  client.set_read_timeout(300);
  auto response = client.Get(remote_path);
  if (!response) {
    throw Error(ErrorKind::DownloadFailed, source.url + ": " + httplib::to_string(response.error()));
  }
  if (response->status != 200) {
    throw Error(ErrorKind::DownloadFailed, source.url + ": HTTP " + std::to_string(response->status));
  }
  const auto actual = sha256_hex(response->body);
  if (!expected.empty() && actual != expected) {
    throw Error(ErrorKind::ChecksumMismatch, source.url + ": got " + actual + ", expected " + expected);
  }
  const auto partial = target.string() + ".part";
  {
    std::ofstream out(partial, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::IoError, "cannot write " + partial);
    out.write(response->body.data(), static_cast<std::streamsize>(response->body.size()));
  }
  std::filesystem::rename(partial, target);
  return target;
}

// ---------------------------------------------------------------------------
// Config and bundle persistence

json task_to_json(const TaskSpec& task) {
  json kinds = json::object();
  for (const auto& [name, kind] : task.kind_overrides) kinds[name] = std::string(to_string(kind));
  json j{{"target_column", task.target_column},
         {"dropped_columns", task.dropped_columns},
         {"split_fraction", task.split_fraction},
         {"split_seed", task.split_seed},
         {"dataset_description", task.dataset_description},
         {"index_column", task.index_column},
         {"kind_overrides", kinds}};
  j["positive_label"] = task.positive_label ? json(*task.positive_label) : json(nullptr);
  j["subsample_rows"] = task.subsample_rows ? json(*task.subsample_rows) : json(nullptr);
  return j;
}

TaskSpec task_from_json(const json& j) {
  TaskSpec task;
  try {
    task.target_column = j.at("target_column").get<std::string>();
    task.dropped_columns = j.value("dropped_columns", std::vector<std::string>{});
    if (j.contains("positive_label") && !j.at("positive_label").is_null()) {
      const auto& label = j.at("positive_label");
      task.positive_label = label.is_string() ? label.get<std::string>() : format_number(label.get<double>());
    }
    task.split_fraction = j.value("split_fraction", 0.8);
    task.split_seed = j.value("split_seed", std::uint64_t{0});
    task.dataset_description = j.value("dataset_description", std::string{});
    if (j.contains("subsample_rows") && !j.at("subsample_rows").is_null()) {
      task.subsample_rows = j.at("subsample_rows").get<std::size_t>();
    }
    task.index_column = j.value("index_column", std::string(kDefaultIndexColumn));
    const auto overrides = j.value("kind_overrides", json::object());
    for (const auto& [name, kind] : overrides.items()) {
      task.kind_overrides[name] = column_kind_from_string(kind.get<std::string>());
    }
  } catch (const json::exception& error) {
    throw Error(ErrorKind::InvalidConfig, std::string("task: ") + error.what());
  }
  validate_task(task);
  return task;
}

std::map<std::string, DatasetEntry> load_datasets_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::FileNotFound, path.string());
  json root;
  try {
    root = json::parse(in);
  } catch (const json::parse_error& error) {
    throw Error(ErrorKind::InvalidConfig, path.string() + ": " + error.what());
  }
  std::map<std::string, DatasetEntry> entries;
  const auto base = path.parent_path();
  const auto datasets = root.value("datasets", json::object());
  for (const auto& [id, value] : datasets.items()) {
    DatasetEntry entry;
    entry.source.id = id;
    entry.source.url = value.value("url", std::string{});
    entry.source.expected_checksum = value.value("sha256", std::string{});
    entry.source.filename = value.value("filename", std::string{});
    if (value.contains("cache_dir")) entry.source.cache_dir = value.at("cache_dir").get<std::string>();
    if (value.contains("task")) entry.task = task_from_json(value.at("task"));
    if (value.contains("recipe")) entry.recipe_path = base / value.at("recipe").get<std::string>();
    entries.emplace(id, std::move(entry));
  }
  return entries;
}

namespace {

json schema_to_json(const Schema& schema) {
  json columns = json::array();
  for (const auto& column : schema.columns) {
    columns.push_back({{"name", column.name}, {"kind", std::string(to_string(column.kind))}});
  }
  return columns;
}

LoadOptions options_from_schema(const json& columns, const std::string& index) {
  LoadOptions options;
  options.index_column = index;
  for (const auto& column : columns) {
    options.kind_overrides[column.at("name").get<std::string>()] =
        column_kind_from_string(column.at("kind").get<std::string>());
  }
  return options;
}

}  // namespace

void save_bundle(const DatasetBundle& bundle, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  save_csv(bundle.train_clean, dir / "train_clean.csv");
  save_csv(bundle.test_clean, dir / "test_clean.csv");
  if (bundle.train_dirty) save_csv(*bundle.train_dirty, dir / "train_dirty.csv");
  json meta{{"task", task_to_json(bundle.task)},
            {"provenance",
             {{"source_id", bundle.provenance.source_id},
              {"checksum", bundle.provenance.checksum},
              {"seed", bundle.provenance.seed}}},
            {"columns", schema_to_json(bundle.train_clean.schema())}};
  std::ofstream out(dir / "bundle.json", std::ios::trunc);
  if (!out) throw Error(ErrorKind::IoError, "cannot write bundle metadata in " + dir.string());
  out << meta.dump(2) << '\n';
}

DatasetBundle load_bundle(const std::filesystem::path& dir) {
  std::ifstream in(dir / "bundle.json");
  if (!in) throw Error(ErrorKind::FileNotFound, (dir / "bundle.json").string());
  json meta;
  try {
    meta = json::parse(in);
  } catch (const json::parse_error& error) {
    throw Error(ErrorKind::InvalidConfig, "bundle.json: " + std::string(error.what()));
  }
  auto task = task_from_json(meta.at("task"));
  const auto options = options_from_schema(meta.at("columns"), task.index_column);
  DatasetBundle bundle{load_csv(dir / "train_clean.csv", options), load_csv(dir / "test_clean.csv", options),
                       std::nullopt, std::move(task), {}};
  if (std::filesystem::exists(dir / "train_dirty.csv")) bundle.train_dirty = load_csv(dir / "train_dirty.csv", options);
  const auto& provenance = meta.value("provenance", json::object());
  bundle.provenance.source_id = provenance.value("source_id", std::string{});
  bundle.provenance.checksum = provenance.value("checksum", std::string{});
  bundle.provenance.seed = provenance.value("seed", std::uint64_t{0});
  return bundle;
}

}  // namespace scrub
