#include "scrub/corruption.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "scrub/error.hpp"

namespace scrub {

using nlohmann::json;

std::string_view to_string(StepKind kind) {
  switch (kind) {
    case StepKind::NumericalShift: return "numerical_shift";
    case StepKind::NanCorruption: return "nan_corruption";
    case StepKind::CategoricalShift: return "categorical_shift";
  }
  return "numerical_shift";
}

StepKind CorruptionStep::kind() const {
  if (std::holds_alternative<SetMissing>(action)) return StepKind::NanCorruption;
  if (std::holds_alternative<ReplaceCategory>(action)) return StepKind::CategoricalShift;
  return StepKind::NumericalShift;
}

std::size_t mutation_count(double fraction, std::size_t matching) {
  if (fraction >= 1.0) return matching;
  // The epsilon absorbs products such as 0.29 * 100 = 28.999999999999996.
  const double exact = fraction * static_cast<double>(matching);
  return std::min(matching, static_cast<std::size_t>(std::floor(exact + 1e-9)));
}

double column_quantile(const Table& table, std::size_t column, double q) {
  std::vector<double> values;
  for (const auto& cell : table.column_cells(column)) {
    if (const auto* number = std::get_if<double>(&cell)) values.push_back(*number);
  }
  if (values.empty()) {
    throw Error(ErrorKind::EmptyColumn, "no values in column '" + table.column(column).name + "'");
  }
  std::sort(values.begin(), values.end());
  const double position = q * static_cast<double>(values.size() - 1);
  const auto lower = static_cast<std::size_t>(std::floor(position));
  const auto upper = std::min(lower + 1, values.size() - 1);
  const double weight = position - static_cast<double>(lower);
  return values[lower] + weight * (values[upper] - values[lower]);
}

void validate_step(const CorruptionStep& step, const Schema& schema) {
  auto fail = [&](const std::string& why) {
    throw Error(ErrorKind::InvalidStep, "step '" + step.stream_label + "': " + why);
  };
  if (!(step.fraction >= 0.0 && step.fraction <= 1.0)) fail("fraction outside [0, 1]");
  const auto kind = schema.kind_of(step.target_column);
  if (!kind) fail("unknown target column '" + step.target_column + "'");
  if (schema.index_column && *schema.index_column == step.target_column) {
    fail("the index column cannot be corrupted");
  }
  try {
    check_predicate(step.predicate, schema);
  } catch (const Error& error) {
    fail(error.what());
  }
  const bool numeric_target = *kind == ColumnKind::Numeric;
  std::visit(
      [&](const auto& action) {
        using T = std::decay_t<decltype(action)>;
        if constexpr (std::is_same_v<T, SetMissing>) {
          return;
        } else if constexpr (std::is_same_v<T, ReplaceCategory>) {
          if (numeric_target) fail("categorical replacement on numeric column");
          if (action.replacement.empty()) fail("empty replacement value");
        } else {
          if (!numeric_target) fail("numerical action on non-numeric column");
          if constexpr (std::is_same_v<T, ResampleRange>) {
            if (!(action.lo <= action.hi)) fail("range lower bound exceeds upper bound");
          } else if constexpr (std::is_same_v<T, ResampleQuantileBand>) {
            if (!(0.0 <= action.q_lo && action.q_lo <= action.q_hi && action.q_hi <= 1.0)) {
              fail("quantile band outside [0, 1]");
            }
          } else if constexpr (std::is_same_v<T, CompoundByKey>) {
            if (schema.kind_of(action.key_column) != ColumnKind::Numeric) {
              fail("key column '" + action.key_column + "' is missing or not numeric");
            }
          }
        }
      },
      step.action);
}

namespace {

double compound_multiplier(const CompoundByKey& action, double key) {
  const double steps = key - action.base_key;
  if (!action.compounding) return 1.0 + (action.factor - 1.0) * steps;
  if (steps >= 0 && steps == std::floor(steps) && steps <= 1000) {
    double multiplier = 1.0;
    for (int i = 0; i < static_cast<int>(steps); ++i) multiplier *= action.factor;
    return multiplier;
  }
  return std::pow(action.factor, steps);
}

}  // namespace

CorruptionOutcome apply_step(const Table& table, const CorruptionStep& step, RandomStream& stream,
                             std::size_t step_ordinal) {
  if (!table.index_column()) throw Error(ErrorKind::InvalidStep, "table has no index column");
  validate_step(step, table.schema());

  auto rows = select_rows(table, step.predicate);
  const auto count = mutation_count(step.fraction, rows.size());
  if (count < rows.size()) {
    const auto picks = sample_without_replacement(stream, rows.size(), count);
    std::vector<std::size_t> chosen;
    chosen.reserve(picks.size());
    for (auto pick : picks) chosen.push_back(rows[pick]);
    rows = std::move(chosen);
  }

  const auto target = table.column_position(step.target_column);
  // Quantiles come from the column as it stood before this step.
  double band_lo = 0.0;
  double band_hi = 0.0;
  if (const auto* band = std::get_if<ResampleQuantileBand>(&step.action)) {
    band_lo = column_quantile(table, target, band->q_lo);
    band_hi = column_quantile(table, target, band->q_hi);
  }
  std::optional<std::size_t> key_column;
  if (const auto* compound = std::get_if<CompoundByKey>(&step.action)) {
    key_column = table.column_position(compound->key_column);
  }

  CorruptionOutcome outcome{table, {}};
  outcome.log.entries.reserve(rows.size());
  for (auto row : rows) {
    const Cell& old_value = table.cell(row, target);
    const auto* number = std::get_if<double>(&old_value);
    Cell new_value = std::visit(
        [&](const auto& action) -> Cell {
          using T = std::decay_t<decltype(action)>;
          if constexpr (std::is_same_v<T, AddConstant>) {
            return number ? Cell{*number + action.amount} : Cell{};
          } else if constexpr (std::is_same_v<T, MultiplyConstant>) {
            return number ? Cell{*number * action.factor} : Cell{};
          } else if constexpr (std::is_same_v<T, ResampleRange>) {
            return stream.uniform(action.lo, action.hi);
          } else if constexpr (std::is_same_v<T, ResampleQuantileBand>) {
            return stream.uniform(band_lo, band_hi);
          } else if constexpr (std::is_same_v<T, CompoundByKey>) {
            const auto* key = std::get_if<double>(&table.cell(row, *key_column));
            if (number == nullptr || key == nullptr) return old_value;
            return *number * compound_multiplier(action, *key);
          } else if constexpr (std::is_same_v<T, SetMissing>) {
            return std::monostate{};
          } else {
            return action.replacement;
          }
        },
        step.action);
    outcome.log.entries.push_back({table.index_value(row), step.target_column, old_value, new_value, step_ordinal});
    outcome.table.set_cell(row, target, std::move(new_value));
  }
  return outcome;
}

CorruptionOutcome apply_recipe(const Table& table, const CorruptionRecipe& recipe) {
  std::set<std::string_view> labels;
  for (const auto& step : recipe.steps) {
    if (!labels.insert(step.stream_label).second) {
      throw Error(ErrorKind::InvalidStep, "duplicate stream label '" + step.stream_label + "'");
    }
  }
  CorruptionOutcome outcome{table, {}};
  for (std::size_t i = 0; i < recipe.steps.size(); ++i) {
    auto stream = RandomStream::derive(recipe.master_seed, recipe.steps[i].stream_label);
    auto step_outcome = apply_step(outcome.table, recipe.steps[i], stream, i + 1);
    outcome.table = std::move(step_outcome.table);
    auto& entries = outcome.log.entries;
    entries.insert(entries.end(), std::make_move_iterator(step_outcome.log.entries.begin()),
                   std::make_move_iterator(step_outcome.log.entries.end()));
  }
  return outcome;
}

Table invert(const Table& dirty, const GroundTruthLog& log) {
  if (log.entries.empty()) return dirty;
  if (!dirty.index_column()) throw Error(ErrorKind::LogMismatch, "table has no index column");
  const auto positions = dirty.index_positions();
  Table restored = dirty;
  for (auto it = log.entries.rbegin(); it != log.entries.rend(); ++it) {
    const auto row = positions.find(it->index);
    if (row == positions.end()) {
      throw Error(ErrorKind::LogMismatch, "index value " + std::to_string(it->index) + " not in table");
    }
    const auto column = restored.find_column(it->column);
    if (!column) throw Error(ErrorKind::LogMismatch, "column '" + it->column + "' not in table");
    if (restored.cell(row->second, *column) != it->new_value) {
      throw Error(ErrorKind::LogMismatch, "cell (" + std::to_string(it->index) + ", " + it->column +
                                              ") does not hold the logged value");
    }
    restored.set_cell(row->second, *column, it->old_value);
  }
  return restored;
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

json cell_to_json(const Cell& cell) {
  if (const auto* number = std::get_if<double>(&cell)) return *number;
  if (const auto* text = std::get_if<std::string>(&cell)) return *text;
  return nullptr;
}

Cell cell_from_json(const json& value) {
  if (value.is_number()) return value.get<double>();
  if (value.is_string()) return value.get<std::string>();
  if (value.is_null()) return std::monostate{};
  throw Error(ErrorKind::InvalidConfig, "literal must be a number, string or null");
}

template <typename T>
T required(const json& object, const char* key) {
  if (!object.contains(key)) throw Error(ErrorKind::InvalidConfig, std::string("missing field '") + key + "'");
  return object.at(key).get<T>();
}

}  // namespace

json predicate_to_json(const RowPredicate& predicate) {
  json atoms = json::array();
  for (const auto& condition : predicate.all_of) {
    json atom{{"column", condition.column}, {"op", std::string(to_string(condition.op))}};
    if (condition.op == Comparator::InSet || condition.op == Comparator::Contains) {
      json values = json::array();
      for (const auto& literal : condition.literals) values.push_back(cell_to_json(literal));
      atom["values"] = std::move(values);
    } else if (condition.op != Comparator::IsMissing) {
      atom["value"] = cell_to_json(condition.literals.at(0));
    }
    atoms.push_back(std::move(atom));
  }
  return atoms;
}

RowPredicate predicate_from_json(const json& atoms) {
  RowPredicate predicate;
  if (atoms.is_null()) return predicate;
  if (!atoms.is_array()) throw Error(ErrorKind::InvalidConfig, "predicate must be an array of conditions");
  for (const auto& atom : atoms) {
    Condition condition;
    condition.column = required<std::string>(atom, "column");
    condition.op = comparator_from_string(required<std::string>(atom, "op"));
    if (atom.contains("values")) {
      for (const auto& value : atom.at("values")) condition.literals.push_back(cell_from_json(value));
    } else if (atom.contains("value")) {
      condition.literals.push_back(cell_from_json(atom.at("value")));
    }
    predicate.all_of.push_back(std::move(condition));
  }
  return predicate;
}

namespace {

json action_to_json(const StepAction& action) {
  return std::visit(
      [](const auto& a) -> json {
        using T = std::decay_t<decltype(a)>;
        if constexpr (std::is_same_v<T, AddConstant>) {
          return {{"type", "add"}, {"amount", a.amount}};
        } else if constexpr (std::is_same_v<T, MultiplyConstant>) {
          return {{"type", "multiply"}, {"factor", a.factor}};
        } else if constexpr (std::is_same_v<T, ResampleRange>) {
          return {{"type", "resample_range"}, {"lo", a.lo}, {"hi", a.hi}};
        } else if constexpr (std::is_same_v<T, ResampleQuantileBand>) {
          return {{"type", "resample_quantile_band"}, {"q_lo", a.q_lo}, {"q_hi", a.q_hi}};
        } else if constexpr (std::is_same_v<T, CompoundByKey>) {
          return {{"type", "compound_by_key"}, {"key_column", a.key_column}, {"base_key", a.base_key},
                  {"factor", a.factor}, {"compounding", a.compounding}};
        } else if constexpr (std::is_same_v<T, SetMissing>) {
          return {{"type", "set_missing"}};
        } else {
          return {{"type", "replace"}, {"replacement", a.replacement}};
        }
      },
      action);
}

StepAction action_from_json(const json& j) {
  const auto type = required<std::string>(j, "type");
  if (type == "add") return AddConstant{required<double>(j, "amount")};
  if (type == "multiply") return MultiplyConstant{required<double>(j, "factor")};
  if (type == "resample_range") return ResampleRange{required<double>(j, "lo"), required<double>(j, "hi")};
  if (type == "resample_quantile_band") {
    return ResampleQuantileBand{required<double>(j, "q_lo"), required<double>(j, "q_hi")};
  }
  if (type == "compound_by_key") {
    return CompoundByKey{required<std::string>(j, "key_column"), required<double>(j, "base_key"),
                         required<double>(j, "factor"), j.value("compounding", true)};
  }
  if (type == "set_missing") return SetMissing{};
  if (type == "replace") return ReplaceCategory{required<std::string>(j, "replacement")};
  throw Error(ErrorKind::InvalidConfig, "unknown action type '" + type + "'");
}

}  // namespace

json recipe_to_json(const CorruptionRecipe& recipe) {
  json steps = json::array();
  for (const auto& step : recipe.steps) {
    steps.push_back({{"kind", std::string(to_string(step.kind()))},
                     {"stream_label", step.stream_label},
                     {"target_column", step.target_column},
                     {"predicate", predicate_to_json(step.predicate)},
                     {"action", action_to_json(step.action)},
                     {"fraction", step.fraction}});
  }
  return {{"master_seed", recipe.master_seed},
          {"weak_hint", recipe.weak_hint},
          {"strong_hint", recipe.strong_hint},
          {"steps", std::move(steps)}};
}

CorruptionRecipe recipe_from_json(const json& j) {
  CorruptionRecipe recipe;
  try {
    recipe.master_seed = j.value("master_seed", std::uint64_t{0});
    recipe.weak_hint = j.value("weak_hint", std::string{});
    recipe.strong_hint = j.value("strong_hint", std::string{});
    for (const auto& s : j.value("steps", json::array())) {
      CorruptionStep step;
      step.stream_label = required<std::string>(s, "stream_label");
      step.target_column = required<std::string>(s, "target_column");
      step.predicate = predicate_from_json(s.value("predicate", json::array()));
      step.action = action_from_json(s.at("action"));
      step.fraction = s.value("fraction", 1.0);
      if (s.contains("kind") && s.at("kind").get<std::string>() != to_string(step.kind())) {
        throw Error(ErrorKind::InvalidStep, "step '" + step.stream_label + "': kind does not match action");
      }
      recipe.steps.push_back(std::move(step));
    }
  } catch (const json::exception& error) {
    throw Error(ErrorKind::InvalidConfig, std::string("recipe: ") + error.what());
  }
  return recipe;
}

CorruptionRecipe load_recipe(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::FileNotFound, path.string());
  try {
    return recipe_from_json(json::parse(in));
  } catch (const json::parse_error& error) {
    throw Error(ErrorKind::InvalidConfig, path.string() + ": " + error.what());
  }
}

void save_recipe(const CorruptionRecipe& recipe, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorKind::IoError, "cannot write " + path.string());
  out << recipe_to_json(recipe).dump(2) << '\n';
}

std::string log_to_csv(const GroundTruthLog& log) {
  std::vector<ColumnSpec> specs{{"index", ColumnKind::Numeric},
                                {"column", ColumnKind::Categorical},
                                {"old", ColumnKind::Categorical},
                                {"new", ColumnKind::Categorical},
                                {"step", ColumnKind::Numeric}};
  std::vector<std::vector<Cell>> cells(specs.size());
  for (const auto& entry : log.entries) {
    cells[0].emplace_back(static_cast<double>(entry.index));
    cells[1].emplace_back(entry.column);
    cells[2].emplace_back(cell_to_string(entry.old_value));
    cells[3].emplace_back(cell_to_string(entry.new_value));
    cells[4].emplace_back(static_cast<double>(entry.step));
  }
  return to_csv(Table(std::move(specs), std::move(cells)));
}

void save_log(const GroundTruthLog& log, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::IoError, "cannot write " + path.string());
  out << log_to_csv(log);
}

GroundTruthLog log_from_csv(const CsvDocument& document, const Schema& schema) {
  const std::vector<std::string> expected{"index", "column", "old", "new", "step"};
  if (document.header != expected) {
    throw Error(ErrorKind::MalformedCsv, "ground-truth log header must be index,column,old,new,step");
  }
  GroundTruthLog log;
  for (const auto& record : document.records) {
    const auto kind = schema.kind_of(record[1]);
    if (!kind) throw Error(ErrorKind::LogMismatch, "log references unknown column '" + record[1] + "'");
    auto typed = [&](const std::string& text) -> Cell {
      if (text.empty()) return std::monostate{};
      if (*kind != ColumnKind::Numeric) return text;
      const auto number = parse_number(text);
      if (!number) throw Error(ErrorKind::MalformedCsv, "non-numeric log value '" + text + "'");
      return *number;
    };
    const auto index = parse_number(record[0]);
    const auto step = parse_number(record[4]);
    if (!index || !step) throw Error(ErrorKind::MalformedCsv, "bad index or step in ground-truth log");
    log.entries.push_back({static_cast<std::int64_t>(*index), record[1], typed(record[2]), typed(record[3]),
                           static_cast<std::size_t>(*step)});
  }
  return log;
}

GroundTruthLog load_log(const std::filesystem::path& path, const Schema& schema) {
  return log_from_csv(read_csv(path), schema);
}

}  // namespace scrub
