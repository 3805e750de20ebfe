#include <gtest/gtest.h>

#include "scrub/error.hpp"
#include "scrub/table.hpp"
#include "support.hpp"

namespace scrub {
namespace {

using testing::random_table;
using testing::TempDir;

Table small_table() {
  return Table({{"id", ColumnKind::Numeric}, {"name", ColumnKind::Categorical}, {"x", ColumnKind::Numeric}},
               {{0.0, 1.0, 2.0}, {std::string("a"), Cell{}, std::string("b,c")}, {1.5, 2.5, Cell{}}}, "id");
}

ErrorKind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& error) {
    return error.kind();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorKind::InvalidConfig;
}

TEST(FormatNumber, ShortestRoundTrip) {
  EXPECT_EQ(format_number(0.1), "0.1");
  EXPECT_EQ(format_number(3.0), "3");
  EXPECT_EQ(format_number(-2.5), "-2.5");
  EXPECT_EQ(format_number(1e21), "1e+21");
  for (double v : {0.1 + 0.2, 1.0 / 3.0, 123456.789, 5e-324, 1.7976931348623157e308}) {
    EXPECT_EQ(*parse_number(format_number(v)), v);
  }
}

TEST(ParseNumber, RejectsPartialAndNonFinite) {
  EXPECT_EQ(parse_number("12"), 12.0);
  EXPECT_EQ(parse_number("-1.5e2"), -150.0);
  EXPECT_FALSE(parse_number("12abc"));
  EXPECT_FALSE(parse_number(""));
  EXPECT_FALSE(parse_number("nan"));
  EXPECT_FALSE(parse_number("inf"));
}

TEST(Table, RejectsBrokenInvariants) {
  EXPECT_EQ(kind_of([] { Table({{"a", ColumnKind::Numeric}, {"a", ColumnKind::Numeric}}, {{1.0}, {2.0}}); }),
            ErrorKind::InvalidTable);
  EXPECT_EQ(kind_of([] { Table({{"a", ColumnKind::Numeric}, {"b", ColumnKind::Numeric}}, {{1.0}, {2.0, 3.0}}); }),
            ErrorKind::InvalidTable);
  EXPECT_EQ(kind_of([] { Table({{"a", ColumnKind::Numeric}}, {{std::string("x")}}); }), ErrorKind::TypeMismatch);
  EXPECT_EQ(kind_of([] { Table({{"i", ColumnKind::Numeric}}, {{1.0, 1.0}}, "i"); }), ErrorKind::InvalidTable);
  EXPECT_EQ(kind_of([] { Table({{"i", ColumnKind::Numeric}}, {{1.5}}, "i"); }), ErrorKind::InvalidTable);
  EXPECT_EQ(kind_of([] { Table({{"i", ColumnKind::Numeric}}, {{Cell{}}}, "i"); }), ErrorKind::InvalidTable);
}

TEST(Table, IndexIsProtected) {
  auto table = small_table();
  EXPECT_EQ(kind_of([&] { table.set_cell(0, 0, 7.0); }), ErrorKind::InvalidTable);
  EXPECT_EQ(kind_of([&] { table.set_cell(0, 1, 7.0); }), ErrorKind::TypeMismatch);
  table.set_cell(1, 1, std::string("z"));
  EXPECT_EQ(std::get<std::string>(table.cell(1, 1)), "z");
  EXPECT_EQ(table.index_value(2), 2);
}

TEST(Table, EmptyStringIsMissing) {
  Table table({{"c", ColumnKind::Categorical}}, {{std::string("")}});
  EXPECT_TRUE(is_missing(table.cell(0, 0)));
}

TEST(Table, WithIndexPrepends) {
  Table table({{"v", ColumnKind::Numeric}}, {{5.0, 6.0}});
  const auto indexed = table.with_index();
  EXPECT_EQ(indexed.column(0).name, kDefaultIndexColumn);
  EXPECT_EQ(indexed.index_value(1), 1);
  EXPECT_EQ(kind_of([&] { (void)indexed.with_index(); }), ErrorKind::InvalidTable);
}

TEST(Table, CastToParsesOrBlanks) {
  Table table({{"c", ColumnKind::Categorical}}, {{std::string("1.5"), std::string("oops"), Cell{}}});
  const auto cast = table.cast_to({{"c", ColumnKind::Numeric}});
  EXPECT_EQ(cast.column(0).kind, ColumnKind::Numeric);
  EXPECT_EQ(std::get<double>(cast.cell(0, 0)), 1.5);
  EXPECT_TRUE(is_missing(cast.cell(1, 0)));
  const auto back = cast.cast_to({{"c", ColumnKind::Categorical}});
  EXPECT_EQ(std::get<std::string>(back.cell(0, 0)), "1.5");
}

TEST(Schema, EqualityIgnoresOrder) {
  Schema a{{{"x", ColumnKind::Numeric}, {"y", ColumnKind::Categorical}}, std::nullopt};
  Schema b{{{"y", ColumnKind::Categorical}, {"x", ColumnKind::Numeric}}, std::nullopt};
  Schema c{{{"y", ColumnKind::Numeric}, {"x", ColumnKind::Numeric}}, std::nullopt};
  EXPECT_EQ(a, b);
  EXPECT_FALSE(a == c);
  const auto diff = compare_schema(Schema{{{"x", ColumnKind::Numeric}, {"z", ColumnKind::Numeric}}, std::nullopt}, a);
  EXPECT_EQ(diff.added, std::vector<std::string>{"z"});
  EXPECT_EQ(diff.removed, std::vector<std::string>{"y"});
}

TEST(Csv, ParsesQuotingAndLineEndings) {
  const auto doc = parse_csv("\xEF\xBB\xBF" "a,b\r\n\"x,1\",\"he said \"\"hi\"\"\"\r\n,\n");
  ASSERT_EQ(doc.header, (std::vector<std::string>{"a", "b"}));
  ASSERT_EQ(doc.records.size(), 2u);
  EXPECT_EQ(doc.records[0][0], "x,1");
  EXPECT_EQ(doc.records[0][1], "he said \"hi\"");
  EXPECT_EQ(doc.records[1][0], "");
}

TEST(Csv, MalformedInputs) {
  EXPECT_EQ(kind_of([] { parse_csv(""); }), ErrorKind::MalformedCsv);
  EXPECT_EQ(kind_of([] { parse_csv("a,b\n1\n"); }), ErrorKind::MalformedCsv);
  EXPECT_EQ(kind_of([] { parse_csv("a\n\"open\n"); }), ErrorKind::MalformedCsv);
  EXPECT_EQ(kind_of([] { table_from_csv(parse_csv("a,a\n1,2\n")); }), ErrorKind::MalformedCsv);
  EXPECT_EQ(kind_of([] { read_csv("/nonexistent/file.csv"); }), ErrorKind::FileNotFound);
}

TEST(Csv, KindInferenceAndOverrides) {
  const auto doc = parse_csv("n,c,m\n1,x,\n2.5,3,\n");
  const auto table = table_from_csv(doc);
  EXPECT_EQ(table.column(0).kind, ColumnKind::Numeric);
  EXPECT_EQ(table.column(1).kind, ColumnKind::Categorical);
  EXPECT_EQ(table.column(2).kind, ColumnKind::Numeric);
  LoadOptions options;
  options.kind_overrides = {{"n", ColumnKind::Categorical}};
  EXPECT_EQ(table_from_csv(doc, options).column(0).kind, ColumnKind::Categorical);
}

TEST(Csv, RoundTripsRandomTables) {
  TempDir dir;
  auto stream = RandomStream::derive(3, "table-roundtrip");
  for (int i = 0; i < 20; ++i) {
    const auto table = random_table(stream, 50, 6);
    const auto path = save_csv(table, dir / ("t" + std::to_string(i) + ".csv"));
    LoadOptions options;
    for (const auto& spec : table.columns()) options.kind_overrides[spec.name] = spec.kind;
    const auto loaded = load_csv(path, options);
    EXPECT_EQ(loaded, table);
    EXPECT_EQ(to_csv(loaded), to_csv(table));
  }
}

TEST(Csv, SingleColumnMissingStaysVisible) {
  Table table({{"v", ColumnKind::Categorical}}, {{std::string("a"), Cell{}}});
  const auto text = to_csv(table);
  EXPECT_EQ(text, "v\na\n\"\"\n");
  EXPECT_EQ(table_from_csv(parse_csv(text)), table);
}

TEST(Predicate, Comparators) {
  const auto table = small_table();
  auto rows = [&](Condition c) { return select_rows(table, RowPredicate{{std::move(c)}}); };
  EXPECT_EQ(rows({"x", Comparator::Gt, {2.0}}), std::vector<std::size_t>{1});
  EXPECT_EQ(rows({"x", Comparator::Le, {2.5}}), (std::vector<std::size_t>{0, 1}));
  EXPECT_EQ(rows({"x", Comparator::Ne, {1.5}}), std::vector<std::size_t>{1});
  EXPECT_EQ(rows({"x", Comparator::IsMissing, {}}), std::vector<std::size_t>{2});
  EXPECT_EQ(rows({"name", Comparator::Contains, {std::string("q"), std::string(",")}}), std::vector<std::size_t>{2});
  EXPECT_EQ(rows({"name", Comparator::InSet, {std::string("a"), std::string("b,c")}}),
            (std::vector<std::size_t>{0, 2}));
  EXPECT_EQ(select_rows(table, RowPredicate{}).size(), 3u);
  EXPECT_TRUE(row_matches(table, 0, RowPredicate{{{"name", Comparator::Eq, {std::string("a")}}}}));
}

TEST(Predicate, Validation) {
  const auto schema = small_table().schema();
  EXPECT_EQ(kind_of([&] { check_predicate({{{"nope", Comparator::Eq, {1.0}}}}, schema); }), ErrorKind::UnknownColumn);
  EXPECT_EQ(kind_of([&] { check_predicate({{{"name", Comparator::Lt, {std::string("a")}}}}, schema); }),
            ErrorKind::TypeMismatch);
  EXPECT_EQ(kind_of([&] { check_predicate({{{"x", Comparator::Eq, {std::string("a")}}}}, schema); }),
            ErrorKind::TypeMismatch);
  EXPECT_EQ(kind_of([&] { check_predicate({{{"x", Comparator::Eq, {1.0, 2.0}}}}, schema); }), ErrorKind::InvalidSpec);
}

TEST(Comparator, NamesRoundTrip) {
  for (auto op : {Comparator::Eq, Comparator::Ne, Comparator::Lt, Comparator::Le, Comparator::Gt, Comparator::Ge,
                  Comparator::InSet, Comparator::Contains, Comparator::IsMissing}) {
    EXPECT_EQ(comparator_from_string(to_string(op)), op);
  }
}

}  // namespace
}  // namespace scrub
