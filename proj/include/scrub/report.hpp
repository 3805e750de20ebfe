#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "scrub/gate.hpp"
#include "scrub/orchestrator.hpp"
#include "scrub/pipeline.hpp"

namespace scrub {

struct Improvement {
  double raw = 0.0;      // 100 * (best - P_Dirty)
  double floored = 0.0;  // max(raw, 0)
};

// Throws LineageMismatch when the run was scored against other baselines.
Improvement improvement(const RunResult& run, const BaselineReport& baselines);

struct CurvePoint {
  std::uint64_t threshold = 0;
  double best_score = 0.0;
};

// Max accepted score among submissions made within each threshold; P_Dirty
// where there is none yet. Thresholds must be ascending.
std::vector<CurvePoint> best_at_thresholds(const RunResult& run, const std::vector<std::uint64_t>& thresholds);

std::vector<std::uint64_t> default_thresholds();  // 25k, 50k, ..., 200k

struct ToolMix {
  int code_calls = 0;
  int submission_code_calls = 0;
  double percent = 0.0;
  bool empty = true;  // no code calls at all
};

ToolMix tool_mix(const RunResult& run);

struct GroupKey {
  std::string dataset;
  std::string agent;
  std::string hint_level;

  friend auto operator<=>(const GroupKey&, const GroupKey&) = default;
};

struct GroupSummary {
  GroupKey key;
  int repeats = 0;
  double mean_improvement = 0.0;
  double min_improvement = 0.0;
  double max_improvement = 0.0;
  double mean_raw_improvement = 0.0;
  // Improvement of the best repeat.
  double best_of_repeats = 0.0;
  std::vector<CurvePoint> mean_curve;
  std::vector<CurvePoint> min_curve;
  std::vector<CurvePoint> max_curve;
  FailureTable failures;
  ToolMix tool_mix;
};

struct ExperimentSummary {
  std::vector<GroupSummary> groups;
  // One row per agent.
  std::vector<std::pair<std::string, FailureTable>> failures_by_agent;
  std::vector<std::pair<std::string, ToolMix>> tool_mix_by_agent;
  std::vector<std::uint64_t> thresholds;
};

struct EpisodeRecord {
  RunResult result;
  BaselineReport baselines;
};

// Reads <episodes_root>/<run-id>/{result.json,episode.json}; sorted by run id.
std::vector<EpisodeRecord> load_episodes(const std::filesystem::path& episodes_root);

// Order of `episodes` does not affect the result.
ExperimentSummary summarize(std::vector<EpisodeRecord> episodes, const std::vector<std::uint64_t>& thresholds);

nlohmann::json summary_to_json(const ExperimentSummary& summary);
std::string improvement_csv(const ExperimentSummary& summary);
std::string failures_csv(const ExperimentSummary& summary);
std::string toolmix_csv(const ExperimentSummary& summary);
std::string curve_csv(const std::vector<CurvePoint>& curve);
// threshold followed by ASCII bars, one line per point.
std::string curve_ascii(const std::vector<CurvePoint>& curve);

// Writes summary.json, improvement.csv, failures.csv, toolmix.csv and curves/<run-id>.csv.
ExperimentSummary write_report(const std::filesystem::path& episodes_root, const std::filesystem::path& out_dir,
                               const std::vector<std::uint64_t>& thresholds);

}  // namespace scrub
