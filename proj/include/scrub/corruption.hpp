#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "scrub/rng.hpp"
#include "scrub/table.hpp"

namespace scrub {

enum class StepKind { NumericalShift, NanCorruption, CategoricalShift };

std::string_view to_string(StepKind kind);

// Numerical shift actions.
struct AddConstant {
  double amount = 0.0;
};
struct MultiplyConstant {
  double factor = 1.0;
};
// Uniform draw in [lo, hi].
struct ResampleRange {
  double lo = 0.0;
  double hi = 1.0;
};
// Uniform draw between two quantiles of the column as it was before the step.
struct ResampleQuantileBand {
  double q_lo = 0.0;
  double q_hi = 1.0;
};
// value * factor^(key - base_key) when compounding, otherwise
// value * (1 + (factor - 1) * (key - base_key)).
struct CompoundByKey {
  std::string key_column;
  double base_key = 0.0;
  double factor = 1.0;
  bool compounding = true;
};
// NaN corruption.
struct SetMissing {};
// Categorical shift.
struct ReplaceCategory {
  std::string replacement;
};

using StepAction = std::variant<AddConstant, MultiplyConstant, ResampleRange, ResampleQuantileBand,
                                CompoundByKey, SetMissing, ReplaceCategory>;

struct CorruptionStep {
  RowPredicate predicate;
  std::string target_column;
  StepAction action;
  // Share of predicate-matching rows mutated: exactly floor(fraction * n).
  double fraction = 1.0;
  std::string stream_label;

  StepKind kind() const;
};

struct CorruptionRecipe {
  std::vector<CorruptionStep> steps;
  std::string weak_hint;
  std::string strong_hint;
  std::uint64_t master_seed = 0;
};

struct LogEntry {
  std::int64_t index = 0;
  std::string column;
  Cell old_value;
  Cell new_value;
  // 1-based position of the step within its recipe.
  std::size_t step = 0;

  friend bool operator==(const LogEntry&, const LogEntry&) = default;
};

struct GroundTruthLog {
  std::vector<LogEntry> entries;

  friend bool operator==(const GroundTruthLog&, const GroundTruthLog&) = default;
};

struct CorruptionOutcome {
  Table table;
  GroundTruthLog log;
};

// Number of rows a fractional step mutates out of `matching` candidates.
std::size_t mutation_count(double fraction, std::size_t matching);

// Type-7 (linear interpolation) quantile over the non-missing cells.
double column_quantile(const Table& table, std::size_t column, double q);

void validate_step(const CorruptionStep& step, const Schema& schema);

// `step_ordinal` is recorded in the emitted log entries.
CorruptionOutcome apply_step(const Table& table, const CorruptionStep& step, RandomStream& stream,
                             std::size_t step_ordinal = 1);
CorruptionOutcome apply_recipe(const Table& table, const CorruptionRecipe& recipe);

// Undoes the log in reverse order. Throws LogMismatch when an entry's index
// value or column is absent, or the cell no longer holds the logged value.
Table invert(const Table& dirty, const GroundTruthLog& log);

// ---------------------------------------------------------------------------
// Serialization

// Conditions as [{"column", "op", "value"} | {"column", "op", "values": [...]}].
nlohmann::json predicate_to_json(const RowPredicate& predicate);
RowPredicate predicate_from_json(const nlohmann::json& atoms);

nlohmann::json recipe_to_json(const CorruptionRecipe& recipe);
CorruptionRecipe recipe_from_json(const nlohmann::json& json);
CorruptionRecipe load_recipe(const std::filesystem::path& path);
void save_recipe(const CorruptionRecipe& recipe, const std::filesystem::path& path);

// CSV with header index,column,old,new,step.
std::string log_to_csv(const GroundTruthLog& log);
void save_log(const GroundTruthLog& log, const std::filesystem::path& path);
// Cells are typed with the kinds in `schema`.
GroundTruthLog log_from_csv(const CsvDocument& document, const Schema& schema);
GroundTruthLog load_log(const std::filesystem::path& path, const Schema& schema);

}  // namespace scrub
