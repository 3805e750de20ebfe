#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "scrub/corruption.hpp"
#include "scrub/orchestrator.hpp"
#include "scrub/rng.hpp"
#include "scrub/sandbox.hpp"
#include "scrub/table.hpp"

namespace scrub::testing {

class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& text);

std::filesystem::path test_data_dir();
WorkerCommand fake_worker_command();

// Mixed numeric/categorical table with ~10% missing cells and an index column.
Table random_table(RandomStream& stream, std::size_t rows, std::size_t columns);
// Valid random recipe for `table`.
CorruptionRecipe random_recipe(RandomStream& stream, const Table& table, std::size_t steps);

// Small tables with the columns the built-in recipes touch.
Table titanic_fixture(std::size_t rows = 200);
Table meat_fixture(std::size_t rows = 200);
Table hotel_fixture(std::size_t rows = 200);

// synthetic-default bundle corrupted with its built-in recipe.
PreparedDataset synthetic_prepared();

// RunConfig for scripted episodes on synthetic-default.
RunConfig scripted_config(const std::string& policy, std::uint64_t budget = 200000);

}  // namespace scrub::testing
