#include "scrub/table.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_set>

#include "scrub/error.hpp"

namespace scrub {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::FileNotFound: return "FileNotFound";
    case ErrorKind::MalformedCsv: return "MalformedCsv";
    case ErrorKind::IoError: return "IoError";
    case ErrorKind::UnknownColumn: return "UnknownColumn";
    case ErrorKind::TypeMismatch: return "TypeMismatch";
    case ErrorKind::InvalidTable: return "InvalidTable";
    case ErrorKind::DownloadFailed: return "DownloadFailed";
    case ErrorKind::ChecksumMismatch: return "ChecksumMismatch";
    case ErrorKind::MissingTarget: return "MissingTarget";
    case ErrorKind::DegenerateTarget: return "DegenerateTarget";
    case ErrorKind::InvalidSpec: return "InvalidSpec";
    case ErrorKind::UnknownDataset: return "UnknownDataset";
    case ErrorKind::InvalidStep: return "InvalidStep";
    case ErrorKind::EmptyColumn: return "EmptyColumn";
    case ErrorKind::LogMismatch: return "LogMismatch";
    case ErrorKind::EmptyTrain: return "EmptyTrain";
    case ErrorKind::LengthMismatch: return "LengthMismatch";
    case ErrorKind::WorkerSpawnFailed: return "WorkerSpawnFailed";
    case ErrorKind::HandshakeTimeout: return "HandshakeTimeout";
    case ErrorKind::SessionDead: return "SessionDead";
    case ErrorKind::MissingBaselines: return "MissingBaselines";
    case ErrorKind::AgentTransportError: return "AgentTransportError";
    case ErrorKind::TranscriptCorrupt: return "TranscriptCorrupt";
    case ErrorKind::MissingArtifacts: return "MissingArtifacts";
    case ErrorKind::LineageMismatch: return "LineageMismatch";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
  }
  return "Unknown";
}

std::string_view to_string(ColumnKind kind) {
  switch (kind) {
    case ColumnKind::Numeric: return "numeric";
    case ColumnKind::Categorical: return "categorical";
    case ColumnKind::Text: return "text";
  }
  return "numeric";
}

ColumnKind column_kind_from_string(std::string_view name) {
  if (name == "numeric") return ColumnKind::Numeric;
  if (name == "categorical") return ColumnKind::Categorical;
  if (name == "text") return ColumnKind::Text;
  throw Error(ErrorKind::InvalidConfig, "unknown column kind '" + std::string(name) + "'");
}

std::string format_number(double value) {
  char buffer[64];
  auto [end, ec] = std::to_chars(buffer, buffer + sizeof(buffer), value);
  if (ec != std::errc{}) throw Error(ErrorKind::IoError, "cannot format number");
  return std::string(buffer, end);
}

std::optional<double> parse_number(std::string_view text) {
  if (text.empty()) return std::nullopt;
  double value = 0.0;
  auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || end != text.data() + text.size() || !std::isfinite(value)) {
    return std::nullopt;
  }
  return value;
}

std::string cell_to_string(const Cell& cell) {
  if (const auto* number = std::get_if<double>(&cell)) return format_number(*number);
  if (const auto* text = std::get_if<std::string>(&cell)) return *text;
  return {};
}

// ---------------------------------------------------------------------------
// Schema

bool Schema::has_column(std::string_view name) const { return kind_of(name).has_value(); }

std::optional<ColumnKind> Schema::kind_of(std::string_view name) const {
  for (const auto& spec : columns) {
    if (spec.name == name) return spec.kind;
  }
  return std::nullopt;
}

bool operator==(const Schema& lhs, const Schema& rhs) {
  if (lhs.index_column != rhs.index_column || lhs.columns.size() != rhs.columns.size()) return false;
  return std::all_of(lhs.columns.begin(), lhs.columns.end(), [&](const ColumnSpec& spec) {
    return rhs.kind_of(spec.name) == spec.kind;
  });
}

SchemaDiff compare_schema(const Schema& candidate, const Schema& reference) {
  SchemaDiff diff;
  for (const auto& spec : candidate.columns) {
    if (!reference.has_column(spec.name)) diff.added.push_back(spec.name);
  }
  for (const auto& spec : reference.columns) {
    if (!candidate.has_column(spec.name)) diff.removed.push_back(spec.name);
  }
  const std::string index_name =
      reference.index_column.value_or(std::string(kDefaultIndexColumn));
  diff.index_ok = candidate.has_column(index_name);
  return diff;
}

// ---------------------------------------------------------------------------
// Table

namespace {

std::optional<std::int64_t> as_index(const Cell& cell) {
  const auto* number = std::get_if<double>(&cell);
  if (number == nullptr || std::trunc(*number) != *number || std::abs(*number) > 9.0e15) {
    return std::nullopt;
  }
  return static_cast<std::int64_t>(*number);
}

Cell normalize(Cell cell) {
  if (const auto* text = std::get_if<std::string>(&cell); text != nullptr && text->empty()) {
    return std::monostate{};
  }
  return cell;
}

}  // namespace

Table::Table(std::vector<ColumnSpec> columns, std::vector<std::vector<Cell>> cells,
             std::optional<std::string> index_column)
    : specs_(std::move(columns)), cells_(std::move(cells)), index_(std::move(index_column)) {
  if (specs_.size() != cells_.size()) {
    throw Error(ErrorKind::InvalidTable, "column count does not match cell storage");
  }
  num_rows_ = cells_.empty() ? 0 : cells_.front().size();
  for (auto& column : cells_) {
    for (auto& cell : column) cell = normalize(std::move(cell));
  }
  validate();
}

void Table::check_cell_kind(std::size_t column, const Cell& value) const {
  if (is_missing(value)) return;
  const bool numeric = specs_[column].kind == ColumnKind::Numeric;
  if (numeric != std::holds_alternative<double>(value)) {
    throw Error(ErrorKind::TypeMismatch, "cell kind does not match column '" + specs_[column].name + "'");
  }
  if (const auto* number = std::get_if<double>(&value); number != nullptr && !std::isfinite(*number)) {
    throw Error(ErrorKind::InvalidTable, "non-finite value in column '" + specs_[column].name + "'");
  }
}

void Table::validate() const {
  std::unordered_set<std::string_view> names;
  for (std::size_t c = 0; c < specs_.size(); ++c) {
    if (!names.insert(specs_[c].name).second) {
      throw Error(ErrorKind::InvalidTable, "duplicate column '" + specs_[c].name + "'");
    }
    if (cells_[c].size() != num_rows_) {
      throw Error(ErrorKind::InvalidTable, "ragged column '" + specs_[c].name + "'");
    }
    for (const auto& cell : cells_[c]) check_cell_kind(c, cell);
  }
  if (!index_) return;
  const auto position = find_column(*index_);
  if (!position) throw Error(ErrorKind::InvalidTable, "index column '" + *index_ + "' is absent");
  std::unordered_set<std::int64_t> seen;
  for (const auto& cell : cells_[*position]) {
    const auto value = as_index(cell);
    if (!value) throw Error(ErrorKind::InvalidTable, "index column holds a missing or non-integer value");
    if (!seen.insert(*value).second) {
      throw Error(ErrorKind::InvalidTable, "duplicate index value " + std::to_string(*value));
    }
  }
}

std::optional<std::size_t> Table::find_column(std::string_view name) const {
  for (std::size_t c = 0; c < specs_.size(); ++c) {
    if (specs_[c].name == name) return c;
  }
  return std::nullopt;
}

std::size_t Table::column_position(std::string_view name) const {
  if (auto position = find_column(name)) return *position;
  throw Error(ErrorKind::UnknownColumn, "no column named '" + std::string(name) + "'");
}

std::int64_t Table::index_value(std::size_t row) const {
  if (!index_) throw Error(ErrorKind::InvalidTable, "table has no index column");
  return *as_index(cell(row, column_position(*index_)));
}

std::unordered_map<std::int64_t, std::size_t> Table::index_positions() const {
  if (!index_) throw Error(ErrorKind::InvalidTable, "table has no index column");
  const auto column = column_position(*index_);
  std::unordered_map<std::int64_t, std::size_t> positions;
  positions.reserve(num_rows_);
  for (std::size_t r = 0; r < num_rows_; ++r) positions.emplace(*as_index(cells_[column][r]), r);
  return positions;
}

Schema Table::schema() const { return Schema{specs_, index_}; }

void Table::set_cell(std::size_t row, std::size_t column, Cell value) {
  if (column >= specs_.size() || row >= num_rows_) {
    throw Error(ErrorKind::InvalidTable, "cell position out of range");
  }
  if (index_ && specs_[column].name == *index_) {
    throw Error(ErrorKind::InvalidTable, "the index column is protected");
  }
  value = normalize(std::move(value));
  check_cell_kind(column, value);
  cells_[column][row] = std::move(value);
}

Table Table::without_columns(std::span<const std::string> names) const {
  std::vector<ColumnSpec> specs;
  std::vector<std::vector<Cell>> cells;
  for (std::size_t c = 0; c < specs_.size(); ++c) {
    if (std::find(names.begin(), names.end(), specs_[c].name) != names.end()) continue;
    specs.push_back(specs_[c]);
    cells.push_back(cells_[c]);
  }
  auto index = index_;
  if (index && std::find(names.begin(), names.end(), *index) != names.end()) index.reset();
  return Table(std::move(specs), std::move(cells), std::move(index));
}

Table Table::take_rows(std::span<const std::size_t> positions) const {
  std::vector<std::vector<Cell>> cells(specs_.size());
  for (std::size_t c = 0; c < specs_.size(); ++c) {
    cells[c].reserve(positions.size());
    for (auto row : positions) cells[c].push_back(cells_[c].at(row));
  }
  return Table(specs_, std::move(cells), index_);
}

Table Table::with_index(std::string name) const {
  if (find_column(name)) throw Error(ErrorKind::InvalidTable, "column '" + name + "' already exists");
  std::vector<ColumnSpec> specs{{name, ColumnKind::Numeric}};
  specs.insert(specs.end(), specs_.begin(), specs_.end());
  std::vector<std::vector<Cell>> cells;
  cells.reserve(specs.size());
  std::vector<Cell> index_cells(num_rows_);
  for (std::size_t r = 0; r < num_rows_; ++r) index_cells[r] = static_cast<double>(r);
  cells.push_back(std::move(index_cells));
  cells.insert(cells.end(), cells_.begin(), cells_.end());
  return Table(std::move(specs), std::move(cells), std::move(name));
}

Table Table::cast_to(const std::map<std::string, ColumnKind, std::less<>>& kinds) const {
  auto specs = specs_;
  auto cells = cells_;
  for (std::size_t c = 0; c < specs.size(); ++c) {
    const auto it = kinds.find(specs[c].name);
    if (it == kinds.end() || it->second == specs[c].kind) continue;
    const bool to_numeric = it->second == ColumnKind::Numeric;
    const bool from_numeric = specs[c].kind == ColumnKind::Numeric;
    specs[c].kind = it->second;
    if (to_numeric == from_numeric) continue;
    for (auto& cell : cells[c]) {
      if (is_missing(cell)) continue;
      if (to_numeric) {
        const auto parsed = parse_number(std::get<std::string>(cell));
        cell = parsed ? Cell{*parsed} : Cell{};
      } else {
        cell = format_number(std::get<double>(cell));
      }
    }
  }
  return Table(std::move(specs), std::move(cells), index_);
}

// ---------------------------------------------------------------------------
// CSV

CsvDocument parse_csv(std::string_view text) {
  if (text.size() >= 3 && text.substr(0, 3) == "\xEF\xBB\xBF") text.remove_prefix(3);
  if (text.empty()) throw Error(ErrorKind::MalformedCsv, "empty input");

  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool in_quotes = false;
  bool field_quoted = false;
  bool row_has_content = false;

  auto end_field = [&] {
    row.push_back(std::move(field));
    field.clear();
    field_quoted = false;
  };
  auto end_row = [&] {
    end_field();
    rows.push_back(std::move(row));
    row.clear();
    row_has_content = false;
  };

  for (std::size_t i = 0; i < text.size(); ++i) {
    const char ch = text[i];
    if (in_quotes) {
      if (ch == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        field.push_back(ch);
      }
      continue;
    }
    switch (ch) {
      case '"':
        if (field_quoted) {
          throw Error(ErrorKind::MalformedCsv, "stray quote in record " + std::to_string(rows.size() + 1));
        }
        if (!field.empty()) {
          // Bare quote inside an unquoted field is kept literally.
          field.push_back(ch);
          break;
        }
        in_quotes = true;
        field_quoted = true;
        row_has_content = true;
        break;
      case ',':
        end_field();
        row_has_content = true;
        break;
      case '\r':
        if (i + 1 < text.size() && text[i + 1] == '\n') ++i;
        end_row();
        break;
      case '\n':
        end_row();
        break;
      default:
        if (field_quoted) {
          throw Error(ErrorKind::MalformedCsv, "text after closing quote in record " + std::to_string(rows.size() + 1));
        }
        field.push_back(ch);
        row_has_content = true;
    }
  }
  if (in_quotes) throw Error(ErrorKind::MalformedCsv, "unterminated quoted field");
  if (row_has_content || !field.empty()) end_row();

  if (rows.empty()) throw Error(ErrorKind::MalformedCsv, "no header record");
  CsvDocument document;
  document.header = std::move(rows.front());
  const auto width = document.header.size();
  for (std::size_t r = 1; r < rows.size(); ++r) {
    if (rows[r].size() != width) {
      throw Error(ErrorKind::MalformedCsv, "record " + std::to_string(r) + " has " +
                                               std::to_string(rows[r].size()) + " fields, expected " +
                                               std::to_string(width));
    }
  }
  document.records.assign(std::make_move_iterator(rows.begin() + 1), std::make_move_iterator(rows.end()));
  return document;
}

CsvDocument read_csv(const std::filesystem::path& path) {
  std::error_code ec;
  if (!std::filesystem::is_regular_file(path, ec)) {
    throw Error(ErrorKind::FileNotFound, path.string());
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoError, "cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_csv(buffer.str());
}

Table table_from_csv(const CsvDocument& document, const LoadOptions& options) {
  std::set<std::string_view> seen;
  for (const auto& name : document.header) {
    if (!seen.insert(name).second) throw Error(ErrorKind::MalformedCsv, "duplicate header '" + name + "'");
  }
  const auto width = document.header.size();
  std::vector<ColumnSpec> specs(width);
  std::vector<std::vector<Cell>> cells(width);
  for (std::size_t c = 0; c < width; ++c) {
    specs[c].name = document.header[c];
    auto kind = ColumnKind::Numeric;
    if (auto it = options.kind_overrides.find(specs[c].name); it != options.kind_overrides.end()) {
      kind = it->second;
    } else {
      for (const auto& record : document.records) {
        if (!record[c].empty() && !parse_number(record[c])) {
          kind = ColumnKind::Categorical;
          break;
        }
      }
    }
    specs[c].kind = kind;
    cells[c].reserve(document.records.size());
    for (const auto& record : document.records) {
      const auto& text = record[c];
      if (text.empty()) {
        cells[c].emplace_back();
      } else if (kind == ColumnKind::Numeric) {
        const auto parsed = parse_number(text);
        if (!parsed) {
          throw Error(ErrorKind::MalformedCsv, "non-numeric value '" + text + "' in numeric column '" +
                                                   specs[c].name + "'");
        }
        cells[c].emplace_back(*parsed);
      } else {
        cells[c].emplace_back(text);
      }
    }
  }
  std::optional<std::string> index;
  if (seen.count(options.index_column) != 0) index = options.index_column;
  try {
    return Table(std::move(specs), std::move(cells), std::move(index));
  } catch (const Error& error) {
    throw Error(ErrorKind::MalformedCsv, error.what());
  }
}

Table load_csv(const std::filesystem::path& path, const LoadOptions& options) {
  return table_from_csv(read_csv(path), options);
}

namespace {

void append_field(std::string& out, std::string_view value, bool lone_column) {
  const bool needs_quotes = value.find_first_of(",\"\r\n") != std::string_view::npos ||
                            (lone_column && value.empty());
  if (!needs_quotes) {
    out.append(value);
    return;
  }
  out.push_back('"');
  for (char ch : value) {
    if (ch == '"') out.push_back('"');
    out.push_back(ch);
  }
  out.push_back('"');
}

}  // namespace

std::string to_csv(const Table& table) {
  std::string out;
  // A single-column file writes missing cells as "" so the line is not blank.
  const bool lone = table.num_columns() == 1;
  for (std::size_t c = 0; c < table.num_columns(); ++c) {
    if (c > 0) out.push_back(',');
    append_field(out, table.column(c).name, lone);
  }
  out.push_back('\n');
  for (std::size_t r = 0; r < table.num_rows(); ++r) {
    for (std::size_t c = 0; c < table.num_columns(); ++c) {
      if (c > 0) out.push_back(',');
      append_field(out, cell_to_string(table.cell(r, c)), lone);
    }
    out.push_back('\n');
  }
  return out;
}

std::filesystem::path save_csv(const Table& table, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::IoError, "cannot write " + path.string());
  const auto text = to_csv(table);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw Error(ErrorKind::IoError, "write failed for " + path.string());
  return path;
}

// ---------------------------------------------------------------------------
// Row selection

std::string_view to_string(Comparator op) {
  switch (op) {
    case Comparator::Eq: return "==";
    case Comparator::Ne: return "!=";
    case Comparator::Lt: return "<";
    case Comparator::Le: return "<=";
    case Comparator::Gt: return ">";
    case Comparator::Ge: return ">=";
    case Comparator::InSet: return "in";
    case Comparator::Contains: return "contains";
    case Comparator::IsMissing: return "is_missing";
  }
  return "==";
}

Comparator comparator_from_string(std::string_view text) {
  for (auto op : {Comparator::Eq, Comparator::Ne, Comparator::Lt, Comparator::Le, Comparator::Gt,
                  Comparator::Ge, Comparator::InSet, Comparator::Contains, Comparator::IsMissing}) {
    if (to_string(op) == text) return op;
  }
  throw Error(ErrorKind::InvalidConfig, "unknown comparator '" + std::string(text) + "'");
}

void check_predicate(const RowPredicate& predicate, const Schema& schema) {
  for (const auto& condition : predicate.all_of) {
    const auto kind = schema.kind_of(condition.column);
    if (!kind) throw Error(ErrorKind::UnknownColumn, "predicate references '" + condition.column + "'");
    const bool numeric = *kind == ColumnKind::Numeric;
    const std::string where = " (column '" + condition.column + "')";
    switch (condition.op) {
      case Comparator::IsMissing:
        continue;
      case Comparator::Lt:
      case Comparator::Le:
      case Comparator::Gt:
      case Comparator::Ge:
        if (!numeric) throw Error(ErrorKind::TypeMismatch, "ordered comparison on non-numeric column" + where);
        break;
      case Comparator::Contains:
        if (numeric) throw Error(ErrorKind::TypeMismatch, "substring test on numeric column" + where);
        break;
      default:
        break;
    }
    const bool multi = condition.op == Comparator::InSet || condition.op == Comparator::Contains;
    if (condition.literals.empty() || (!multi && condition.literals.size() != 1)) {
      throw Error(ErrorKind::InvalidSpec, "wrong number of literals for '" +
                                              std::string(to_string(condition.op)) + "'" + where);
    }
    for (const auto& literal : condition.literals) {
      if (is_missing(literal) || std::holds_alternative<double>(literal) != numeric) {
        throw Error(ErrorKind::TypeMismatch, "literal type does not match column" + where);
      }
    }
  }
}

namespace {

struct CompiledCondition {
  std::span<const Cell> cells;
  const Condition* condition;
};

bool matches(const Cell& cell, const Condition& condition) {
  if (condition.op == Comparator::IsMissing) return is_missing(cell);
  if (is_missing(cell)) return false;
  const auto& literals = condition.literals;
  switch (condition.op) {
    case Comparator::Eq: return cell == literals.front();
    case Comparator::Ne: return cell != literals.front();
    case Comparator::Lt: return std::get<double>(cell) < std::get<double>(literals.front());
    case Comparator::Le: return std::get<double>(cell) <= std::get<double>(literals.front());
    case Comparator::Gt: return std::get<double>(cell) > std::get<double>(literals.front());
    case Comparator::Ge: return std::get<double>(cell) >= std::get<double>(literals.front());
    case Comparator::InSet:
      return std::find(literals.begin(), literals.end(), cell) != literals.end();
    case Comparator::Contains: {
      const auto& text = std::get<std::string>(cell);
      return std::any_of(literals.begin(), literals.end(), [&](const Cell& literal) {
        return text.find(std::get<std::string>(literal)) != std::string::npos;
      });
    }
    case Comparator::IsMissing: break;
  }
  return false;
}

std::vector<CompiledCondition> compile(const Table& table, const RowPredicate& predicate) {
  check_predicate(predicate, table.schema());
  std::vector<CompiledCondition> compiled;
  compiled.reserve(predicate.all_of.size());
  for (const auto& condition : predicate.all_of) {
    compiled.push_back({table.column_cells(table.column_position(condition.column)), &condition});
  }
  return compiled;
}

}  // namespace

bool row_matches(const Table& table, std::size_t row, const RowPredicate& predicate) {
  const auto compiled = compile(table, predicate);
  return std::all_of(compiled.begin(), compiled.end(),
                     [&](const CompiledCondition& c) { return matches(c.cells[row], *c.condition); });
}

std::vector<std::size_t> select_rows(const Table& table, const RowPredicate& predicate) {
  const auto compiled = compile(table, predicate);
  std::vector<std::size_t> rows;
  for (std::size_t r = 0; r < table.num_rows(); ++r) {
    if (std::all_of(compiled.begin(), compiled.end(),
                    [&](const CompiledCondition& c) { return matches(c.cells[r], *c.condition); })) {
      rows.push_back(r);
    }
  }
  return rows;
}

}  // namespace scrub
