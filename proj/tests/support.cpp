#include "support.hpp"

#include <stdlib.h>

#include <cmath>
#include <fstream>
#include <iterator>
#include <set>
#include <stdexcept>

#include "scrub/provisioning.hpp"

namespace scrub::testing {

namespace fs = std::filesystem;

TempDir::TempDir() {
  std::string pattern = (fs::temp_directory_path() / "scrub-test-XXXXXX").string();
  if (::mkdtemp(pattern.data()) == nullptr) throw std::runtime_error("mkdtemp failed");
  path_ = pattern;
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
}

fs::path test_data_dir() { return SCRUB_TEST_DIR; }

WorkerCommand fake_worker_command() {
  return {{"python3", (test_data_dir() / "fixtures" / "fake_worker.py").string()}};
}

namespace {

double round_to(double value, int decimals) {
  const double scale = std::pow(10.0, decimals);
  return std::round(value * scale) / scale;
}

const std::vector<std::string> kLetters{"a", "b", "c", "d", "e", "ab", "bc"};

template <typename T>
const T& pick(RandomStream& stream, const std::vector<T>& values) {
  return values[stream.below(values.size())];
}

Cell existing_value(RandomStream& stream, const Table& table, std::size_t column) {
  for (int tries = 0; tries < 20; ++tries) {
    const auto& cell = table.cell(stream.below(table.num_rows()), column);
    if (!is_missing(cell)) return cell;
  }
  if (table.column(column).kind == ColumnKind::Numeric) return 1.0;
  return std::string("a");
}

}  // namespace

Table random_table(RandomStream& stream, std::size_t rows, std::size_t columns) {
  std::vector<ColumnSpec> specs;
  std::vector<std::vector<Cell>> cells;
  for (std::size_t c = 0; c < columns; ++c) {
    // Keep the first two columns numeric so compound steps always have a key.
    const bool numeric = c < 2 || stream.uniform() < 0.5;
    specs.push_back({"col" + std::to_string(c), numeric ? ColumnKind::Numeric : ColumnKind::Categorical});
    std::vector<Cell> column;
    for (std::size_t r = 0; r < rows; ++r) {
      if (r > 0 && stream.uniform() < 0.1) {
        column.emplace_back();
      } else if (numeric) {
        column.emplace_back(round_to(stream.uniform(-50.0, 150.0), stream.below(3)));
      } else {
        column.emplace_back(pick(stream, kLetters));
      }
    }
    cells.push_back(std::move(column));
  }
  std::vector<Cell> index;
  for (std::size_t r = 0; r < rows; ++r) index.emplace_back(static_cast<double>(r * 3 + 1));
  specs.push_back({std::string(kDefaultIndexColumn), ColumnKind::Numeric});
  cells.push_back(std::move(index));
  return Table(std::move(specs), std::move(cells), std::string(kDefaultIndexColumn));
}

CorruptionRecipe random_recipe(RandomStream& stream, const Table& table, std::size_t steps) {
  CorruptionRecipe recipe;
  recipe.master_seed = stream.next_u64();
  std::vector<std::size_t> numeric;
  std::vector<std::size_t> categorical;
  for (std::size_t c = 0; c < table.num_columns(); ++c) {
    if (table.column(c).name == kDefaultIndexColumn) continue;
    (table.column(c).kind == ColumnKind::Numeric ? numeric : categorical).push_back(c);
  }
  std::set<std::string> emptied;
  for (std::size_t s = 0; s < steps; ++s) {
    CorruptionStep step;
    step.stream_label = "random/" + std::to_string(s);
    const auto conditions = stream.below(3);
    for (std::size_t k = 0; k < conditions; ++k) {
      const auto column = stream.below(table.num_columns() - 1);
      const auto& spec = table.column(column);
      Condition condition{spec.name, Comparator::Eq, {}};
      if (spec.kind == ColumnKind::Numeric) {
        const std::vector<Comparator> ops{Comparator::Eq, Comparator::Ne, Comparator::Lt, Comparator::Le,
                                          Comparator::Gt, Comparator::Ge, Comparator::InSet, Comparator::IsMissing};
        condition.op = pick(stream, ops);
      } else {
        const std::vector<Comparator> ops{Comparator::Eq, Comparator::Ne, Comparator::InSet, Comparator::Contains,
                                          Comparator::IsMissing};
        condition.op = pick(stream, ops);
      }
      if (condition.op == Comparator::InSet || condition.op == Comparator::Contains) {
        const auto n = 1 + stream.below(3);
        for (std::size_t i = 0; i < n; ++i) condition.literals.push_back(existing_value(stream, table, column));
      } else if (condition.op != Comparator::IsMissing) {
        condition.literals.push_back(existing_value(stream, table, column));
      }
      step.predicate.all_of.push_back(std::move(condition));
    }
    const bool target_numeric = categorical.empty() || stream.uniform() < 0.6;
    const auto target = target_numeric ? pick(stream, numeric) : pick(stream, categorical);
    step.target_column = table.column(target).name;
    step.fraction = stream.uniform() < 0.3 ? 1.0 : round_to(stream.uniform(), 2);
    if (target_numeric) {
      auto choice = stream.below(6);
      if (choice == 3 && emptied.count(step.target_column) != 0) choice = 0;
      switch (choice) {
        case 0: step.action = AddConstant{round_to(stream.uniform(-20.0, 20.0), 1)}; break;
        case 1: step.action = MultiplyConstant{round_to(stream.uniform(0.1, 3.0), 2)}; break;
        case 2: step.action = ResampleRange{0.0, 0.1}; break;
        case 3: step.action = ResampleQuantileBand{0.85, 0.95}; break;
        case 4: {
          const auto& key = table.column(pick(stream, numeric)).name;
          step.action = CompoundByKey{key, round_to(stream.uniform(0.0, 50.0), 0), 1.0 + round_to(stream.uniform(0.0, 0.05), 3),
                                      stream.uniform() < 0.5};
          break;
        }
        default:
          step.action = SetMissing{};
          emptied.insert(step.target_column);
          break;
      }
    } else if (stream.uniform() < 0.5) {
      step.action = SetMissing{};
    } else {
      step.action = ReplaceCategory{pick(stream, kLetters)};
    }
    recipe.steps.push_back(std::move(step));
  }
  return recipe;
}

namespace {

Table finish(std::vector<ColumnSpec> specs, std::vector<std::vector<Cell>> cells) {
  return Table(std::move(specs), std::move(cells)).with_index();
}

}  // namespace

Table titanic_fixture(std::size_t rows) {
  auto stream = RandomStream::derive(11, "fixture/titanic");
  const std::vector<std::string> male_titles{"Mr.", "Master.", "Dr.", "Rev."};
  const std::vector<std::string> female_titles{"Mrs.", "Miss.", "Lady", "Dr."};
  const std::vector<std::string> surnames{"Smith", "Brown", "Allen", "Moran", "Kelly", "Hewlett"};
  std::vector<std::vector<Cell>> cells(10);
  for (std::size_t r = 0; r < rows; ++r) {
    const bool female = stream.uniform() < 0.4;
    const auto& title = pick(stream, female ? female_titles : male_titles);
    const double survived = stream.uniform() < (female ? 0.7 : 0.2) ? 1.0 : 0.0;
    cells[0].emplace_back(static_cast<double>(r + 1));
    cells[1].emplace_back(survived);
    cells[2].emplace_back(static_cast<double>(1 + stream.below(3)));
    cells[3].emplace_back(pick(stream, surnames) + ", " + title + " Passenger" + std::to_string(r));
    cells[4].emplace_back(std::string(female ? "female" : "male"));
    if (stream.uniform() < 0.15) {
      cells[5].emplace_back();
    } else {
      cells[5].emplace_back(static_cast<double>(1 + stream.below(70)));
    }
    cells[6].emplace_back(static_cast<double>(stream.below(3)));
    cells[7].emplace_back(static_cast<double>(stream.below(3)));
    cells[8].emplace_back(round_to(stream.uniform(5.0, 250.0), 4));
    cells[9].emplace_back(std::string(1, "CQS"[stream.below(3)]));
  }
  return finish({{"PassengerId", ColumnKind::Numeric},
                 {"Survived", ColumnKind::Numeric},
                 {"Pclass", ColumnKind::Numeric},
                 {"Name", ColumnKind::Categorical},
                 {"Sex", ColumnKind::Categorical},
                 {"Age", ColumnKind::Numeric},
                 {"SibSp", ColumnKind::Numeric},
                 {"Parch", ColumnKind::Numeric},
                 {"Fare", ColumnKind::Numeric},
                 {"Embarked", ColumnKind::Categorical}},
                std::move(cells));
}

Table meat_fixture(std::size_t rows) {
  auto stream = RandomStream::derive(11, "fixture/meat");
  const std::vector<std::string> countries{"Afghanistan", "Chad", "Nepal", "Mali", "Uzbekistan", "Mauritius",
                                           "Italy", "Japan", "Vietnam", "China", "Mexico", "France", "Brazil",
                                           "Kenya", "Norway"};
  std::set<std::pair<std::string, int>> used;
  std::vector<std::vector<Cell>> cells(8);
  while (used.size() < rows) {
    const auto& country = pick(stream, countries);
    const int year = 1985 + static_cast<int>(stream.below(33));
    if (!used.emplace(country, year).second) continue;
    cells[0].emplace_back(country);
    cells[1].emplace_back(static_cast<double>(year));
    for (std::size_t c = 2; c < 8; ++c) cells[c].emplace_back(round_to(stream.uniform(0.0, 60.0), 2));
  }
  return finish({{"Country", ColumnKind::Categorical},
                 {"Year", ColumnKind::Numeric},
                 {"Poultry", ColumnKind::Numeric},
                 {"Beef", ColumnKind::Numeric},
                 {"Sheep and goat", ColumnKind::Numeric},
                 {"Pork", ColumnKind::Numeric},
                 {"Other meats", ColumnKind::Numeric},
                 {"Fish and seafood", ColumnKind::Numeric}},
                std::move(cells));
}

Table hotel_fixture(std::size_t rows) {
  auto stream = RandomStream::derive(11, "fixture/hotel");
  const std::vector<std::string> hotels{"City Hotel", "Resort Hotel"};
  const std::vector<std::string> countries{"PRT", "GBR", "FRA", "ESP", "DEU"};
  const std::vector<std::string> channels{"TA/TO", "Direct", "Corporate"};
  const std::vector<std::string> deposits{"No Deposit", "Non Refund", "Refundable"};
  std::vector<std::vector<Cell>> cells(8);
  for (std::size_t r = 0; r < rows; ++r) {
    cells[0].emplace_back(pick(stream, hotels));
    cells[1].emplace_back(static_cast<double>(stream.below(2)));
    cells[2].emplace_back(static_cast<double>(stream.below(400)));
    cells[3].emplace_back(static_cast<double>(2015 + stream.below(3)));
    cells[4].emplace_back(stream.uniform() < 0.05 ? Cell{} : Cell{pick(stream, countries)});
    cells[5].emplace_back(pick(stream, channels));
    cells[6].emplace_back(pick(stream, deposits));
    cells[7].emplace_back(round_to(stream.uniform(30.0, 300.0), 2));
  }
  return finish({{"hotel", ColumnKind::Categorical},
                 {"is_canceled", ColumnKind::Numeric},
                 {"lead_time", ColumnKind::Numeric},
                 {"arrival_date_year", ColumnKind::Numeric},
                 {"country", ColumnKind::Categorical},
                 {"distribution_channel", ColumnKind::Categorical},
                 {"deposit_type", ColumnKind::Categorical},
                 {"adr", ColumnKind::Numeric}},
                std::move(cells));
}

PreparedDataset synthetic_prepared() {
  return corrupt_bundle(generate_synthetic(default_synthetic_spec()), recipe_for(kSyntheticDefault));
}

RunConfig scripted_config(const std::string& policy, std::uint64_t budget) {
  RunConfig config;
  config.dataset_id = std::string(kSyntheticDefault);
  config.recipe_id = std::string(kSyntheticDefault);
  config.token_budget = budget;
  config.agent.kind = "scripted";
  config.agent.policy = policy;
  config.agent.retry_backoff_s = 0.0;
  config.repeats = 1;
  config.goal_f1 = 0.9;
  return config;
}

}  // namespace scrub::testing
