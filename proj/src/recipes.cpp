// Built-in corruption recipes and task definitions.

#include <algorithm>

#include "scrub/error.hpp"
#include "scrub/provisioning.hpp"

namespace scrub {

namespace {

Condition equals(std::string column, Cell value) { return {std::move(column), Comparator::Eq, {std::move(value)}}; }

Condition not_equals(std::string column, Cell value) {
  return {std::move(column), Comparator::Ne, {std::move(value)}};
}

Condition compare(std::string column, Comparator op, double value) { return {std::move(column), op, {value}}; }

Condition one_of(std::string column, std::vector<Cell> values) {
  return {std::move(column), Comparator::InSet, std::move(values)};
}

Condition contains_any(std::string column, const std::vector<std::string>& needles) {
  return {std::move(column), Comparator::Contains, std::vector<Cell>(needles.begin(), needles.end())};
}

std::vector<Cell> strings(std::initializer_list<const char*> values) {
  return std::vector<Cell>(values.begin(), values.end());
}

std::vector<Cell> numbers(std::initializer_list<double> values) { return std::vector<Cell>(values.begin(), values.end()); }

// Title lists are config; these are the defaults.
const std::vector<std::string> kFemaleTitles{"Miss.", "Mrs."};
const std::vector<std::string> kMarriedTitles{"Mrs."};
const std::vector<std::string> kHighStatusTitles{"Dr.", "Lady"};

CorruptionRecipe titanic_recipe() {
  CorruptionRecipe recipe;
  recipe.master_seed = 7;
  recipe.steps.push_back({{{equals("Sex", std::string("female")), equals("Survived", 1.0),
                            contains_any("Name", kFemaleTitles)}},
                          "Sex",
                          ReplaceCategory{"male"},
                          0.5,
                          "titanic/female-survivor-sex"});
  recipe.steps.push_back({{{equals("Sex", std::string("female")), equals("Survived", 0.0),
                            contains_any("Name", kMarriedTitles)}},
                          "Age",
                          ResampleRange{2.0, 8.0},
                          0.5,
                          "titanic/married-nonsurvivor-age"});
  recipe.steps.push_back(
      {{{contains_any("Name", kHighStatusTitles)}}, "Fare", MultiplyConstant{0.1}, 1.0, "titanic/high-status-fare"});
  recipe.weak_hint = "Errors are in the Sex, Age and Fare columns.";
  recipe.strong_hint =
      "Errors are here: Female survisors had their sex entry corrupted, The same happened for the age of "
      "female married non-survivors, and the fare of some passengers with high social status was corrupted.";
  return recipe;
}

CorruptionRecipe meat_recipe() {
  CorruptionRecipe recipe;
  recipe.master_seed = 7;
  recipe.steps.push_back({{{one_of("Year", numbers({1986, 1990, 1993, 1995, 2000, 2005, 2010, 2015}))}},
                          "Poultry",
                          ResampleRange{0.0, 0.1},
                          1.0,
                          "meat/poultry-near-zero"});
  recipe.steps.push_back({{{one_of("Country", strings({"Afghanistan", "Burkina Faso", "Chad", "Burundi",
                                                       "Central African Republic", "Niger", "Nepal", "Mali",
                                                       "Tajikistan", "Uzbekistan", "Kyrgyzstan"}))}},
                          "Fish and seafood",
                          ResampleQuantileBand{0.85, 0.95},
                          1.0,
                          "meat/landlocked-fish"});
  const RowPredicate growth{{one_of("Country", strings({"Mauritius", "Italy", "Japan", "Vietnam", "China", "Mexico"})),
                             compare("Year", Comparator::Ge, 1997), compare("Year", Comparator::Le, 2004)}};
  for (const char* column : {"Poultry", "Beef", "Sheep and goat", "Pork", "Other meats", "Fish and seafood"}) {
    recipe.steps.push_back({growth, column, CompoundByKey{"Year", 1996.0, 1.3, true}, 1.0,
                            std::string("meat/compound-growth/") + column});
  }
  recipe.weak_hint =
      "Errors are observed in 1) certain years [1986, 1990, 1993, 1995, 2000, 2005, 2010, 2015]), 2) In some "
      "countries regarding fish and seafood consumption, and in consecutive years for the following countries "
      "Mauritius, Italy, Japan, Vietnam, China, Mexico.";
  recipe.strong_hint =
      "Observed errors:\n"
      "1. In the years [1986, 1990, 1993, 1995, 2000, 2005, 2010, 2015], poultry consumption is significantly "
      "underreported.\n"
      "2. In landlocked countries such as Afghanistan, Burkina Faso, Chad, Burundi, Central African Republic, "
      "Niger, Nepal, Mali, Tajikistan, Uzbekistan, and Kyrgyzstan, fish and seafood consumption is reported to "
      "be excessively high.\n"
      "3. In countries like Mauritius, Italy, Japan, Vietnam, China, and Mexico, the total meat consumption is "
      "notably overreported during the years [1997, 1998, 1999, 2000, 2001, 2003, 2004].";
  return recipe;
}

CorruptionRecipe hotel_recipe() {
  CorruptionRecipe recipe;
  recipe.master_seed = 7;
  recipe.steps.push_back(
      {{{equals("arrival_date_year", 2016.0)}}, "lead_time", AddConstant{10.0}, 1.0, "hotel/lead-time-2016"});
  recipe.steps.push_back({{{equals("distribution_channel", std::string("TA/TO")), equals("arrival_date_year", 2017.0)}},
                          "deposit_type",
                          ReplaceCategory{"Non Refund"},
                          1.0,
                          "hotel/deposit-ta-to-2017"});
  // Follows the "70% of entries where country == PRT" reading.
  recipe.steps.push_back({{{equals("country", std::string("PRT")), not_equals("arrival_date_year", 2015.0)}},
                          "country",
                          SetMissing{},
                          0.7,
                          "hotel/country-prt-missing"});
  recipe.weak_hint =
      "Errors are in the lead_time, deposit and country columns, there are no errors in any entries from 2015.";
  recipe.strong_hint =
      "Errors are here: There is a systematic bias in the lead_time of 2016, the deposit with "
      "distribution_channel TA/TO looks wrong in 2017 and often when people arrive from PRT, the country is not "
      "recorded.";
  return recipe;
}

// One error of each category on the synthetic schema, each tied to the
// label so that it measurably hurts the fixed pipeline.
CorruptionRecipe synthetic_recipe() {
  CorruptionRecipe recipe;
  recipe.master_seed = 7;
  recipe.steps.push_back({{{equals("region", std::string("north"))}},
                          "income",
                          MultiplyConstant{10.0},
                          1.0,
                          "synthetic/income-units-north"});
  recipe.steps.push_back({{{equals("channel", std::string("online")), equals("target", 1.0)}},
                          "tenure",
                          SetMissing{},
                          0.7,
                          "synthetic/tenure-missing-online"});
  recipe.steps.push_back({{{equals("region", std::string("north")), equals("target", 1.0)}},
                          "region",
                          ReplaceCategory{"west"},
                          0.5,
                          "synthetic/region-relabel"});
  recipe.weak_hint = "Errors are in the income, tenure and region columns.";
  recipe.strong_hint =
      "Errors are here: income in the north region is recorded in the wrong unit, tenure is often missing for "
      "online customers who converted, and some converted customers from the north were relabelled as west.";
  return recipe;
}

}  // namespace

std::vector<std::string> registered_datasets() {
  return {"titanic", "meat_consumption", "hotel_bookings", std::string(kSyntheticDefault)};
}

CorruptionRecipe recipe_for(std::string_view dataset_id) {
  if (dataset_id == "titanic") return titanic_recipe();
  if (dataset_id == "meat_consumption") return meat_recipe();
  if (dataset_id == "hotel_bookings") return hotel_recipe();
  if (dataset_id == kSyntheticDefault) return synthetic_recipe();
  throw Error(ErrorKind::UnknownDataset, "no recipe for '" + std::string(dataset_id) + "'");
}

std::optional<TaskSpec> default_task_for(std::string_view dataset_id) {
  if (dataset_id == "titanic") {
    TaskSpec task;
    task.target_column = "Survived";
    task.positive_label = "1";
    task.kind_overrides = {{"Survived", ColumnKind::Numeric}};
    task.dataset_description =
        "Passenger records from the Titanic: ticket class, name, sex, age, number of siblings/spouses and "
        "parents/children aboard, ticket number, fare, cabin and port of embarkation. Survived is 1 if the "
        "passenger survived.";
    return task;
  }
  if (dataset_id == "hotel_bookings") {
    TaskSpec task;
    task.target_column = "is_canceled";
    task.positive_label = "1";
    task.dropped_columns = {"reservation_status", "reservation_status_date", "name", "email", "phone-number",
                            "credit_card"};
    task.dataset_description =
        "Hotel booking records for a city hotel and a resort hotel, including arrival dates, lead time, length "
        "of stay, guests, meal plan, country of origin, market segment, distribution channel, deposit type and "
        "special requests. is_canceled is 1 if the booking was cancelled.";
    return task;
  }
  if (dataset_id == kSyntheticDefault) return default_synthetic_spec().task;
  if (dataset_id == "meat_consumption") return std::nullopt;
  throw Error(ErrorKind::UnknownDataset, "unknown dataset '" + std::string(dataset_id) + "'");
}

}  // namespace scrub
