#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

namespace scrub {

inline constexpr std::string_view kDefaultIndexColumn = "_competition_index";

enum class ColumnKind { Numeric, Categorical, Text };

std::string_view to_string(ColumnKind kind);
ColumnKind column_kind_from_string(std::string_view name);

// A missing cell is std::monostate. Numeric columns hold doubles, the
// others hold non-empty strings.
using Cell = std::variant<std::monostate, double, std::string>;

inline bool is_missing(const Cell& cell) { return std::holds_alternative<std::monostate>(cell); }

// Shortest decimal text that parses back to the same double.
std::string format_number(double value);

// Strict finite-number parse of a whole field; nullopt when the text is not a number.
std::optional<double> parse_number(std::string_view text);

// Text form used for CSV output and for category labels.
std::string cell_to_string(const Cell& cell);

struct ColumnSpec {
  std::string name;
  ColumnKind kind = ColumnKind::Numeric;

  friend bool operator==(const ColumnSpec&, const ColumnSpec&) = default;
};

struct Schema {
  std::vector<ColumnSpec> columns;
  std::optional<std::string> index_column;

  bool has_column(std::string_view name) const;
  std::optional<ColumnKind> kind_of(std::string_view name) const;

  // Order-insensitive on names, kind-sensitive.
  friend bool operator==(const Schema& lhs, const Schema& rhs);
};

struct SchemaDiff {
  std::vector<std::string> added;
  std::vector<std::string> removed;
  bool index_ok = true;

  bool empty() const { return added.empty() && removed.empty() && index_ok; }
};

SchemaDiff compare_schema(const Schema& candidate, const Schema& reference);

// Column-major table with an optional protected integer index column.
//
// Invariants (checked on construction and on every edit): unique column
// names, one cell per row in every column, cells match their column kind,
// index values unique, integral and never missing.
class Table {
 public:
  Table() = default;
  Table(std::vector<ColumnSpec> columns, std::vector<std::vector<Cell>> cells,
        std::optional<std::string> index_column = std::nullopt);

  std::size_t num_rows() const { return num_rows_; }
  std::size_t num_columns() const { return specs_.size(); }

  const std::vector<ColumnSpec>& columns() const { return specs_; }
  const ColumnSpec& column(std::size_t position) const { return specs_.at(position); }
  std::optional<std::size_t> find_column(std::string_view name) const;
  // Throws UnknownColumn.
  std::size_t column_position(std::string_view name) const;

  std::span<const Cell> column_cells(std::size_t position) const { return cells_.at(position); }
  const Cell& cell(std::size_t row, std::size_t column) const { return cells_.at(column).at(row); }

  const std::optional<std::string>& index_column() const { return index_; }
  std::int64_t index_value(std::size_t row) const;
  std::unordered_map<std::int64_t, std::size_t> index_positions() const;

  Schema schema() const;

  // Replaces one cell. The index column cannot be edited through here.
  void set_cell(std::size_t row, std::size_t column, Cell value);

  Table without_columns(std::span<const std::string> names) const;
  Table take_rows(std::span<const std::size_t> positions) const;
  // Prepends an index column holding 0..n-1.
  Table with_index(std::string name = std::string(kDefaultIndexColumn)) const;
  // Re-types columns named in `kinds`; unparseable numeric text becomes missing.
  Table cast_to(const std::map<std::string, ColumnKind, std::less<>>& kinds) const;

  friend bool operator==(const Table&, const Table&) = default;

 private:
  void check_cell_kind(std::size_t column, const Cell& value) const;
  void validate() const;

  std::vector<ColumnSpec> specs_;
  std::vector<std::vector<Cell>> cells_;
  std::optional<std::string> index_;
  std::size_t num_rows_ = 0;
};

// ---------------------------------------------------------------------------
// CSV

struct CsvDocument {
  std::vector<std::string> header;
  // Empty string = empty field.
  std::vector<std::vector<std::string>> records;
};

CsvDocument parse_csv(std::string_view text);
CsvDocument read_csv(const std::filesystem::path& path);

struct LoadOptions {
  std::string index_column = std::string(kDefaultIndexColumn);
  std::map<std::string, ColumnKind, std::less<>> kind_overrides;
};

Table table_from_csv(const CsvDocument& document, const LoadOptions& options = {});
Table load_csv(const std::filesystem::path& path, const LoadOptions& options = {});

std::string to_csv(const Table& table);
std::filesystem::path save_csv(const Table& table, const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Row selection

enum class Comparator { Eq, Ne, Lt, Le, Gt, Ge, InSet, Contains, IsMissing };

std::string_view to_string(Comparator op);
Comparator comparator_from_string(std::string_view text);

// `literals` holds one value for scalar comparators, any number for InSet and
// Contains (Contains matches if any literal is a substring), none for IsMissing.
struct Condition {
  std::string column;
  Comparator op = Comparator::Eq;
  std::vector<Cell> literals;
};

// Conjunction of conditions; the empty predicate matches every row.
struct RowPredicate {
  std::vector<Condition> all_of;
};

void check_predicate(const RowPredicate& predicate, const Schema& schema);
bool row_matches(const Table& table, std::size_t row, const RowPredicate& predicate);
std::vector<std::size_t> select_rows(const Table& table, const RowPredicate& predicate);

}  // namespace scrub
