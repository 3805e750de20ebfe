#include "scrub/gate.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <system_error>

#include "scrub/error.hpp"

namespace scrub {

using nlohmann::json;

std::string_view to_string(VerdictOutcome outcome) {
  switch (outcome) {
    case VerdictOutcome::Accepted: return "Accepted";
    case VerdictOutcome::ColumnViolation: return "ColumnViolation";
    case VerdictOutcome::DatasetNotFound: return "DatasetNotFound";
    case VerdictOutcome::Other: return "Other";
  }
  return "Other";
}

VerdictOutcome verdict_outcome_from_string(std::string_view text) {
  for (auto outcome : {VerdictOutcome::Accepted, VerdictOutcome::ColumnViolation, VerdictOutcome::DatasetNotFound,
                       VerdictOutcome::Other}) {
    if (to_string(outcome) == text) return outcome;
  }
  throw Error(ErrorKind::TranscriptCorrupt, "unknown verdict '" + std::string(text) + "'");
}

json verdict_to_json(const ValidationVerdict& verdict) {
  return {{"outcome", std::string(to_string(verdict.outcome))},
          {"detail", verdict.detail},
          {"offending", verdict.offending}};
}

ValidationVerdict verdict_from_json(const json& j) {
  try {
    return {verdict_outcome_from_string(j.at("outcome").get<std::string>()), j.at("detail").get<std::string>(),
            j.at("offending").get<std::vector<std::string>>()};
  } catch (const json::exception& error) {
    throw Error(ErrorKind::TranscriptCorrupt, std::string("verdict: ") + error.what());
  }
}

GateReference gate_reference(const Table& train, const TaskSpec& task) {
  GateReference reference;
  reference.schema = train.schema();
  if (!reference.schema.index_column) reference.schema.index_column = task.index_column;
  for (const auto& [value, row] : train.index_positions()) {
    (void)row;
    reference.index_values.insert(value);
  }
  reference.row_count = train.num_rows();
  reference.target_column = task.target_column;
  return reference;
}

namespace {

ValidationVerdict reject(VerdictOutcome outcome, std::string detail, std::vector<std::string> offending = {}) {
  return {outcome, std::move(detail), std::move(offending)};
}

std::optional<std::int64_t> parse_index(const std::string& field) {
  const auto value = parse_number(field);
  if (!value || std::floor(*value) != *value || std::fabs(*value) > 9.0e15) return std::nullopt;
  return static_cast<std::int64_t>(*value);
}

}  // namespace

ValidationVerdict validate_submission(const std::filesystem::path& path, const GateReference& reference) {
  std::error_code ec;
  if (!std::filesystem::is_regular_file(path, ec)) {
    return reject(VerdictOutcome::DatasetNotFound, "the dataset path does not exist: " + path.string(),
                  {path.string()});
  }

  CsvDocument document;
  try {
    document = read_csv(path);
  } catch (const Error& error) {
    return reject(VerdictOutcome::Other, std::string("could not parse the submission as CSV: ") + error.what(),
                  {path.string()});
  }

  std::vector<std::string> added;
  for (const auto& name : document.header) {
    if (!reference.schema.has_column(name)) added.push_back(name);
  }
  if (!added.empty()) {
    std::string detail = "new columns were added:";
    for (const auto& name : added) detail += " " + name;
    return reject(VerdictOutcome::ColumnViolation, detail, added);
  }

  std::vector<std::string> sorted_header = document.header;
  std::sort(sorted_header.begin(), sorted_header.end());
  const auto duplicate = std::adjacent_find(sorted_header.begin(), sorted_header.end());
  if (duplicate != sorted_header.end()) {
    return reject(VerdictOutcome::Other, "duplicate column " + *duplicate, {*duplicate});
  }

  const std::string index_name = reference.schema.index_column.value_or(std::string(kDefaultIndexColumn));
  const auto index_it = std::find(document.header.begin(), document.header.end(), index_name);
  if (index_it == document.header.end()) {
    return reject(VerdictOutcome::Other, "the " + index_name + " column was removed", {index_name});
  }
  if (!reference.target_column.empty() &&
      std::find(document.header.begin(), document.header.end(), reference.target_column) == document.header.end()) {
    return reject(VerdictOutcome::Other, "the target column " + reference.target_column + " was removed",
                  {reference.target_column});
  }

  if (document.records.size() > reference.row_count) {
    return reject(VerdictOutcome::Other,
                  "rows were added: " + std::to_string(document.records.size()) + " rows, the training data has " +
                      std::to_string(reference.row_count));
  }

  const auto index_col = static_cast<std::size_t>(index_it - document.header.begin());
  std::set<std::int64_t> seen;
  for (std::size_t r = 0; r < document.records.size(); ++r) {
    const auto& field = document.records[r][index_col];
    const auto value = parse_index(field);
    if (!value) {
      return reject(VerdictOutcome::Other, "row " + std::to_string(r + 1) + " has an invalid " + index_name +
                                               " value '" + field + "'",
                    {index_name});
    }
    if (reference.index_values.count(*value) == 0) {
      return reject(VerdictOutcome::Other, index_name + " value " + std::to_string(*value) +
                                               " does not exist in the training data (rows were added)",
                    {std::to_string(*value)});
    }
    if (!seen.insert(*value).second) {
      return reject(VerdictOutcome::Other, "duplicate " + index_name + " value " + std::to_string(*value),
                    {std::to_string(*value)});
    }
  }

  return {VerdictOutcome::Accepted, "accepted", {}};
}

namespace {

double percent(std::size_t count, std::size_t total) {
  return total == 0 ? 0.0 : 100.0 * static_cast<double>(count) / static_cast<double>(total);
}

}  // namespace

std::string csv_field(std::string_view text) {
  if (text.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(text);
  std::string out = "\"";
  for (char c : text) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

double FailureTable::column_violation_pct() const { return percent(column_violation, submissions); }
double FailureTable::dataset_not_found_pct() const { return percent(dataset_not_found, submissions); }
double FailureTable::other_pct() const { return percent(other, submissions); }
double FailureTable::total_pct() const { return percent(failures(), submissions); }

FailureTable tally_failures(const std::vector<ValidationVerdict>& verdicts) {
  FailureTable table;
  table.submissions = verdicts.size();
  for (const auto& verdict : verdicts) {
    switch (verdict.outcome) {
      case VerdictOutcome::ColumnViolation: ++table.column_violation; break;
      case VerdictOutcome::DatasetNotFound: ++table.dataset_not_found; break;
      case VerdictOutcome::Other: ++table.other; break;
      case VerdictOutcome::Accepted: break;
    }
  }
  return table;
}

std::string failure_table_csv(const std::vector<std::pair<std::string, FailureTable>>& rows) {
  std::ostringstream out;
  out << "group,submissions,column_violation_pct,dataset_not_found_pct,other_pct,total_failures_pct\n";
  for (const auto& [group, table] : rows) {
    out << csv_field(group) << ',' << table.submissions << ',' << format_number(table.column_violation_pct()) << ','
        << format_number(table.dataset_not_found_pct()) << ',' << format_number(table.other_pct()) << ','
        << format_number(table.total_pct()) << '\n';
  }
  return out.str();
}

}  // namespace scrub
