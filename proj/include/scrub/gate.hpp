#pragma once

#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "scrub/provisioning.hpp"
#include "scrub/table.hpp"

namespace scrub {

enum class VerdictOutcome { Accepted, ColumnViolation, DatasetNotFound, Other };

std::string_view to_string(VerdictOutcome outcome);
VerdictOutcome verdict_outcome_from_string(std::string_view text);

struct ValidationVerdict {
  VerdictOutcome outcome = VerdictOutcome::Accepted;
  std::string detail;
  std::vector<std::string> offending;

  bool accepted() const { return outcome == VerdictOutcome::Accepted; }
  friend bool operator==(const ValidationVerdict&, const ValidationVerdict&) = default;
};

nlohmann::json verdict_to_json(const ValidationVerdict& verdict);
ValidationVerdict verdict_from_json(const nlohmann::json& json);

struct GateReference {
  Schema schema;
  std::set<std::int64_t> index_values;
  std::size_t row_count = 0;
  std::string target_column;
};

// Reference built from the dirty training table handed to the agent.
GateReference gate_reference(const Table& train, const TaskSpec& task);

// Never throws on bad submissions; every problem becomes a verdict.
// Precedence: DatasetNotFound, then ColumnViolation (columns added), then
// Other (unparseable file, missing index or target, foreign or duplicate
// index values, extra rows).
ValidationVerdict validate_submission(const std::filesystem::path& path, const GateReference& reference);

struct FailureTable {
  std::size_t submissions = 0;
  std::size_t column_violation = 0;
  std::size_t dataset_not_found = 0;
  std::size_t other = 0;

  std::size_t failures() const { return column_violation + dataset_not_found + other; }
  double column_violation_pct() const;
  double dataset_not_found_pct() const;
  double other_pct() const;
  // Percentage of all failures; equals the category sum up to rounding.
  double total_pct() const;
};

// Quotes a field when it needs quoting.
std::string csv_field(std::string_view text);

FailureTable tally_failures(const std::vector<ValidationVerdict>& verdicts);

// One row per group: group,submissions,column_violation_pct,dataset_not_found_pct,other_pct,total_failures_pct
std::string failure_table_csv(const std::vector<std::pair<std::string, FailureTable>>& rows);

}  // namespace scrub
