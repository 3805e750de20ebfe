#include <gtest/gtest.h>

#include "scrub/corruption.hpp"
#include "scrub/error.hpp"
#include "scrub/provisioning.hpp"
#include "support.hpp"

namespace scrub {
namespace {

using testing::TempDir;

Table numbers_table(std::size_t rows) {
  std::vector<Cell> v;
  std::vector<Cell> g;
  std::vector<Cell> k;
  for (std::size_t r = 0; r < rows; ++r) {
    v.emplace_back(static_cast<double>(r));
    g.emplace_back(std::string(r % 2 == 0 ? "even" : "odd"));
    k.emplace_back(static_cast<double>(r % 4));
  }
  return Table({{"v", ColumnKind::Numeric}, {"g", ColumnKind::Categorical}, {"k", ColumnKind::Numeric}},
               {v, g, k})
      .with_index();
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

TEST(MutationCount, FloorWithTolerance) {
  EXPECT_EQ(mutation_count(0.5, 7), 3u);
  EXPECT_EQ(mutation_count(0.29, 100), 29u);
  EXPECT_EQ(mutation_count(0.7, 10), 7u);
  EXPECT_EQ(mutation_count(0.0, 10), 0u);
  EXPECT_EQ(mutation_count(1.0, 10), 10u);
  EXPECT_EQ(mutation_count(0.999, 3), 2u);
}

TEST(Quantile, LinearInterpolation) {
  const auto table = numbers_table(11);
  const auto v = table.column_position("v");
  EXPECT_DOUBLE_EQ(column_quantile(table, v, 0.0), 0.0);
  EXPECT_DOUBLE_EQ(column_quantile(table, v, 0.5), 5.0);
  EXPECT_DOUBLE_EQ(column_quantile(table, v, 0.85), 8.5);
  Table empty({{"x", ColumnKind::Numeric}}, {{Cell{}, Cell{}}});
  EXPECT_EQ(kind_of([&] { column_quantile(empty, 0, 0.5); }), ErrorKind::EmptyColumn);
}

TEST(ApplyStep, ExactFractionOfMatches) {
  const auto table = numbers_table(100);
  CorruptionStep step{{{{"g", Comparator::Eq, {std::string("even")}}}}, "v", AddConstant{1000.0}, 0.3, "s"};
  auto stream = RandomStream::derive(1, "s");
  const auto out = apply_step(table, step, stream, 4);
  ASSERT_EQ(out.log.entries.size(), 15u);
  for (const auto& entry : out.log.entries) {
    EXPECT_EQ(entry.index % 2, 0);
    EXPECT_EQ(std::get<double>(entry.new_value), std::get<double>(entry.old_value) + 1000.0);
    EXPECT_EQ(entry.step, 4u);
  }
  // Untouched rows keep their values.
  std::size_t changed = 0;
  for (std::size_t r = 0; r < 100; ++r) changed += table.cell(r, 1) != out.table.cell(r, 1);
  EXPECT_EQ(changed, 15u);
}

TEST(ApplyStep, ActionsComputeExpectedValues) {
  const auto table = numbers_table(8);
  auto run = [&](StepAction action, const std::string& target = "v") {
    auto stream = RandomStream::derive(2, "a");
    return apply_step(table, {{}, target, std::move(action), 1.0, "a"}, stream);
  };
  auto multiplied = run(MultiplyConstant{0.1});
  EXPECT_EQ(std::get<double>(multiplied.table.cell(5, 1)), 5.0 * 0.1);

  auto ranged = run(ResampleRange{2.0, 8.0});
  for (std::size_t r = 0; r < 8; ++r) {
    const double value = std::get<double>(ranged.table.cell(r, 1));
    EXPECT_GE(value, 2.0);
    EXPECT_LE(value, 8.0);
  }

  auto banded = run(ResampleQuantileBand{0.85, 0.95});
  for (std::size_t r = 0; r < 8; ++r) {
    const double value = std::get<double>(banded.table.cell(r, 1));
    EXPECT_GE(value, 7.0 * 0.85);
    EXPECT_LE(value, 7.0 * 0.95);
  }

  auto compounded = run(CompoundByKey{"k", 1.0, 1.3, true});
  // Row 7: v = 7, k = 3 -> 7 * 1.3^2.
  EXPECT_EQ(std::get<double>(compounded.table.cell(7, 1)), 7.0 * (1.3 * 1.3));
  auto linear = run(CompoundByKey{"k", 1.0, 1.3, false});
  EXPECT_DOUBLE_EQ(std::get<double>(linear.table.cell(7, 1)), 7.0 * 1.6);

  auto blanked = run(SetMissing{});
  EXPECT_TRUE(is_missing(blanked.table.cell(3, 1)));

  auto replaced = run(ReplaceCategory{"odd"}, "g");
  EXPECT_EQ(std::get<std::string>(replaced.table.cell(0, 2)), "odd");
  // No-op replacements are still logged so the count is exact.
  EXPECT_EQ(replaced.log.entries.size(), 8u);
}

TEST(ApplyStep, MissingInputsStayMissing) {
  Table table = Table({{"v", ColumnKind::Numeric}}, {{Cell{}, 2.0}}).with_index();
  auto stream = RandomStream::derive(0, "x");
  const auto out = apply_step(table, {{}, "v", AddConstant{1.0}, 1.0, "x"}, stream);
  EXPECT_TRUE(is_missing(out.table.cell(0, 1)));
  EXPECT_EQ(std::get<double>(out.table.cell(1, 1)), 3.0);
}

TEST(ValidateStep, RejectsBadSteps) {
  const auto schema = numbers_table(4).schema();
  auto check = [&](CorruptionStep step) { return kind_of([&] { validate_step(step, schema); }); };
  EXPECT_EQ(check({{}, "nope", SetMissing{}, 1.0, "s"}), ErrorKind::InvalidStep);
  EXPECT_EQ(check({{}, "v", SetMissing{}, 1.5, "s"}), ErrorKind::InvalidStep);
  EXPECT_EQ(check({{}, "g", AddConstant{1.0}, 1.0, "s"}), ErrorKind::InvalidStep);
  EXPECT_EQ(check({{}, "v", ReplaceCategory{"x"}, 1.0, "s"}), ErrorKind::InvalidStep);
  EXPECT_EQ(check({{}, "v", ResampleRange{2.0, 1.0}, 1.0, "s"}), ErrorKind::InvalidStep);
  EXPECT_EQ(check({{}, "v", ResampleQuantileBand{0.5, 1.5}, 1.0, "s"}), ErrorKind::InvalidStep);
  EXPECT_EQ(check({{}, "v", CompoundByKey{"g", 0.0, 1.1, true}, 1.0, "s"}), ErrorKind::InvalidStep);
  EXPECT_EQ(check({{}, std::string(kDefaultIndexColumn), SetMissing{}, 1.0, "s"}), ErrorKind::InvalidStep);
  EXPECT_EQ(check({{{{"zzz", Comparator::Eq, {1.0}}}}, "v", SetMissing{}, 1.0, "s"}), ErrorKind::InvalidStep);
}

TEST(ApplyRecipe, DuplicateLabelsRejected) {
  CorruptionRecipe recipe;
  recipe.steps = {{{}, "v", SetMissing{}, 0.5, "same"}, {{}, "v", AddConstant{1}, 0.5, "same"}};
  EXPECT_EQ(kind_of([&] { apply_recipe(numbers_table(10), recipe); }), ErrorKind::InvalidStep);
}

TEST(ApplyRecipe, StepsSeeEarlierOutput) {
  CorruptionRecipe recipe;
  recipe.steps = {{{}, "g", ReplaceCategory{"x"}, 1.0, "first"},
                  {{{{"g", Comparator::Eq, {std::string("x")}}}}, "v", AddConstant{1}, 1.0, "second"}};
  const auto out = apply_recipe(numbers_table(6), recipe);
  EXPECT_EQ(out.log.entries.size(), 12u);
  EXPECT_EQ(out.log.entries.back().step, 2u);
}

TEST(ApplyRecipe, StreamsIndependentOfOtherSteps) {
  CorruptionRecipe one;
  one.master_seed = 5;
  one.steps = {{{}, "v", SetMissing{}, 0.3, "keep"}};
  CorruptionRecipe two = one;
  two.steps.insert(two.steps.begin(), {{}, "g", ReplaceCategory{"z"}, 0.5, "other"});
  const auto a = apply_recipe(numbers_table(50), one);
  const auto b = apply_recipe(numbers_table(50), two);
  for (std::size_t r = 0; r < 50; ++r) EXPECT_EQ(a.table.cell(r, 1), b.table.cell(r, 1));
}

TEST(Invert, DetectsMismatches) {
  const auto table = numbers_table(10);
  CorruptionRecipe recipe;
  recipe.steps = {{{}, "v", AddConstant{1}, 1.0, "s"}};
  const auto out = apply_recipe(table, recipe);
  EXPECT_EQ(invert(out.table, out.log), table);
  EXPECT_EQ(kind_of([&] { invert(table, out.log); }), ErrorKind::LogMismatch);
  auto bad = out.log;
  bad.entries[0].index = 999;
  EXPECT_EQ(kind_of([&] { invert(out.table, bad); }), ErrorKind::LogMismatch);
  bad = out.log;
  bad.entries[0].column = "zzz";
  EXPECT_EQ(kind_of([&] { invert(out.table, bad); }), ErrorKind::LogMismatch);
}

TEST(Invert, BuiltInRecipesOnFixtures) {
  const std::vector<std::pair<std::string, Table>> cases{{"titanic", testing::titanic_fixture()},
                                                         {"meat_consumption", testing::meat_fixture()},
                                                         {"hotel_bookings", testing::hotel_fixture()}};
  for (const auto& [id, table] : cases) {
    const auto out = apply_recipe(table, recipe_for(id));
    EXPECT_FALSE(out.log.entries.empty()) << id;
    EXPECT_EQ(invert(out.table, out.log), table) << id;
  }
}

TEST(Invert, RandomRecipes) {
  auto stream = RandomStream::derive(99, "random-recipes");
  for (int i = 0; i < 25; ++i) {
    const auto table = testing::random_table(stream, 80, 5);
    const auto recipe = testing::random_recipe(stream, table, 6);
    const auto out = apply_recipe(table, recipe);
    ASSERT_EQ(invert(out.table, out.log), table) << recipe_to_json(recipe).dump();
  }
}

TEST(Serialization, RecipeRoundTrip) {
  for (const auto& id : registered_datasets()) {
    const auto recipe = recipe_for(id);
    const auto back = recipe_from_json(recipe_to_json(recipe));
    EXPECT_EQ(recipe_to_json(back), recipe_to_json(recipe)) << id;
  }
  TempDir dir;
  save_recipe(recipe_for("titanic"), dir / "r.json");
  EXPECT_EQ(recipe_to_json(load_recipe(dir / "r.json")), recipe_to_json(recipe_for("titanic")));
}

TEST(Serialization, RecipeErrors) {
  using nlohmann::json;
  EXPECT_EQ(kind_of([] { recipe_from_json(json{{"steps", {{{"target_column", "v"}}}}}); }),
            ErrorKind::InvalidConfig);
  EXPECT_EQ(kind_of([] {
              recipe_from_json(json{{"steps",
                                     {{{"stream_label", "a"},
                                       {"target_column", "v"},
                                       {"kind", "nan_corruption"},
                                       {"action", {{"type", "add"}, {"amount", 1}}}}}}});
            }),
            ErrorKind::InvalidStep);
  EXPECT_EQ(kind_of([] { load_recipe("/nonexistent.json"); }), ErrorKind::FileNotFound);
}

TEST(Serialization, LogRoundTrip) {
  const auto table = testing::titanic_fixture();
  const auto out = apply_recipe(table, recipe_for("titanic"));
  TempDir dir;
  save_log(out.log, dir / "log.csv");
  const auto loaded = load_log(dir / "log.csv", table.schema());
  EXPECT_EQ(loaded, out.log);
  EXPECT_EQ(invert(out.table, loaded), table);
}

}  // namespace
}  // namespace scrub
