#include "scrub/report.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "scrub/error.hpp"

namespace scrub {

using nlohmann::json;
namespace fs = std::filesystem;

Improvement improvement(const RunResult& run, const BaselineReport& baselines) {
  if (run.p_dirty != baselines.p_dirty || run.p_clean != baselines.p_clean) {
    throw Error(ErrorKind::LineageMismatch, "run " + run.run_id + " was scored against different baselines");
  }
  Improvement out;
  out.raw = 100.0 * (run.best_score - baselines.p_dirty);
  out.floored = std::max(out.raw, 0.0);
  return out;
}

std::vector<CurvePoint> best_at_thresholds(const RunResult& run, const std::vector<std::uint64_t>& thresholds) {
  std::vector<CurvePoint> curve;
  curve.reserve(thresholds.size());
  for (const auto threshold : thresholds) {
    double best = run.p_dirty;
    for (const auto& record : run.submissions) {
      if (record.verdict.accepted() && record.score && record.cumulative_tokens <= threshold) {
        best = std::max(best, *record.score);
      }
    }
    curve.push_back({threshold, best});
  }
  return curve;
}

std::vector<std::uint64_t> default_thresholds() {
  std::vector<std::uint64_t> thresholds;
  for (std::uint64_t t = 25000; t <= 200000; t += 25000) thresholds.push_back(t);
  return thresholds;
}

ToolMix tool_mix(const RunResult& run) {
  ToolMix mix;
  mix.code_calls = run.code_calls;
  mix.submission_code_calls = run.submission_code_calls;
  mix.empty = run.code_calls == 0;
  mix.percent = mix.empty ? 0.0 : 100.0 * run.submission_code_calls / run.code_calls;
  return mix;
}

namespace {

ToolMix merge(ToolMix mix, const RunResult& run) {
  mix.code_calls += run.code_calls;
  mix.submission_code_calls += run.submission_code_calls;
  mix.empty = mix.code_calls == 0;
  mix.percent = mix.empty ? 0.0 : 100.0 * mix.submission_code_calls / mix.code_calls;
  return mix;
}

void add_verdicts(FailureTable& table, const RunResult& run) {
  std::vector<ValidationVerdict> verdicts;
  for (const auto& record : run.submissions) verdicts.push_back(record.verdict);
  const auto tally = tally_failures(verdicts);
  table.submissions += tally.submissions;
  table.column_violation += tally.column_violation;
  table.dataset_not_found += tally.dataset_not_found;
  table.other += tally.other;
}

json curve_json(const std::vector<CurvePoint>& curve) {
  json out = json::array();
  for (const auto& point : curve) out.push_back({{"threshold", point.threshold}, {"best_score", point.best_score}});
  return out;
}

json failures_json(const FailureTable& table) {
  return {{"submissions", table.submissions},
          {"column_violation", table.column_violation},
          {"dataset_not_found", table.dataset_not_found},
          {"other", table.other},
          {"column_violation_pct", table.column_violation_pct()},
          {"dataset_not_found_pct", table.dataset_not_found_pct()},
          {"other_pct", table.other_pct()},
          {"total_failures_pct", table.total_pct()}};
}

json tool_mix_json(const ToolMix& mix) {
  return {{"code_calls", mix.code_calls},
          {"submission_code_calls", mix.submission_code_calls},
          {"percent", mix.percent},
          {"empty", mix.empty}};
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::IoError, "cannot write " + path.string());
  out << text;
}

}  // namespace

std::vector<EpisodeRecord> load_episodes(const fs::path& episodes_root) {
  if (!fs::is_directory(episodes_root)) {
    throw Error(ErrorKind::FileNotFound, "no episodes directory " + episodes_root.string());
  }
  std::vector<EpisodeRecord> episodes;
  for (const auto& entry : fs::directory_iterator(episodes_root)) {
    if (!entry.is_directory() || !fs::is_regular_file(entry.path() / "result.json")) continue;
    EpisodeRecord record;
    record.result = load_run_result(entry.path() / "result.json");
    std::ifstream in(entry.path() / "episode.json");
    if (!in) throw Error(ErrorKind::MissingArtifacts, "missing " + (entry.path() / "episode.json").string());
    const auto episode = json::parse(in, nullptr, false);
    if (episode.is_discarded() || !episode.contains("baselines")) {
      throw Error(ErrorKind::TranscriptCorrupt, (entry.path() / "episode.json").string() + " is unreadable");
    }
    record.baselines = baseline_from_json(episode["baselines"]);
    episodes.push_back(std::move(record));
  }
  std::sort(episodes.begin(), episodes.end(),
            [](const auto& a, const auto& b) { return a.result.run_id < b.result.run_id; });
  return episodes;
}

ExperimentSummary summarize(std::vector<EpisodeRecord> episodes, const std::vector<std::uint64_t>& thresholds) {
  if (!std::is_sorted(thresholds.begin(), thresholds.end())) {
    throw Error(ErrorKind::InvalidConfig, "thresholds must be ascending");
  }
  std::sort(episodes.begin(), episodes.end(),
            [](const auto& a, const auto& b) { return a.result.run_id < b.result.run_id; });

  ExperimentSummary summary;
  summary.thresholds = thresholds;
  std::map<GroupKey, std::vector<const EpisodeRecord*>> groups;
  std::map<std::string, FailureTable> failures;
  std::map<std::string, ToolMix> mixes;
  for (const auto& episode : episodes) {
    const auto& run = episode.result;
    groups[{run.dataset_id, run.agent, std::string(to_string(run.hint_level))}].push_back(&episode);
    add_verdicts(failures[run.agent], run);
    mixes[run.agent] = merge(mixes[run.agent], run);
  }

  for (const auto& [key, members] : groups) {
    GroupSummary group;
    group.key = key;
    group.repeats = static_cast<int>(members.size());
    double sum = 0.0;
    double raw_sum = 0.0;
    std::vector<std::vector<CurvePoint>> curves;
    for (std::size_t i = 0; i < members.size(); ++i) {
      const auto& run = members[i]->result;
      const auto value = improvement(run, members[i]->baselines);
      sum += value.floored;
      raw_sum += value.raw;
      if (i == 0) {
        group.min_improvement = group.max_improvement = value.floored;
      } else {
        group.min_improvement = std::min(group.min_improvement, value.floored);
        group.max_improvement = std::max(group.max_improvement, value.floored);
      }
      curves.push_back(best_at_thresholds(run, thresholds));
      add_verdicts(group.failures, run);
      group.tool_mix = merge(group.tool_mix, run);
    }
    group.mean_improvement = sum / group.repeats;
    group.mean_raw_improvement = raw_sum / group.repeats;
    group.best_of_repeats = group.max_improvement;
    for (std::size_t t = 0; t < thresholds.size(); ++t) {
      double total = 0.0;
      double low = curves.front()[t].best_score;
      double high = low;
      for (const auto& curve : curves) {
        total += curve[t].best_score;
        low = std::min(low, curve[t].best_score);
        high = std::max(high, curve[t].best_score);
      }
      group.mean_curve.push_back({thresholds[t], total / static_cast<double>(curves.size())});
      group.min_curve.push_back({thresholds[t], low});
      group.max_curve.push_back({thresholds[t], high});
    }
    summary.groups.push_back(std::move(group));
  }
  summary.failures_by_agent.assign(failures.begin(), failures.end());
  summary.tool_mix_by_agent.assign(mixes.begin(), mixes.end());
  return summary;
}

json summary_to_json(const ExperimentSummary& summary) {
  json groups = json::array();
  for (const auto& group : summary.groups) {
    groups.push_back({{"dataset", group.key.dataset},
                      {"agent", group.key.agent},
                      {"hint_level", group.key.hint_level},
                      {"repeats", group.repeats},
                      {"mean_improvement", group.mean_improvement},
                      {"min_improvement", group.min_improvement},
                      {"max_improvement", group.max_improvement},
                      {"best_of_repeats_improvement", group.best_of_repeats},
                      {"mean_raw_improvement", group.mean_raw_improvement},
                      {"curve_mean", curve_json(group.mean_curve)},
                      {"curve_min", curve_json(group.min_curve)},
                      {"curve_max", curve_json(group.max_curve)},
                      {"failures", failures_json(group.failures)},
                      {"tool_mix", tool_mix_json(group.tool_mix)}});
  }
  json failures = json::object();
  for (const auto& [agent, table] : summary.failures_by_agent) failures[agent] = failures_json(table);
  json mixes = json::object();
  for (const auto& [agent, mix] : summary.tool_mix_by_agent) mixes[agent] = tool_mix_json(mix);
  return {{"thresholds", summary.thresholds}, {"groups", groups}, {"failures", failures}, {"tool_mix", mixes}};
}

std::string improvement_csv(const ExperimentSummary& summary) {
  std::ostringstream out;
  out << "dataset,agent,hint_level,repeats,mean_improvement,min_improvement,max_improvement,"
         "best_of_repeats_improvement,mean_raw_improvement\n";
  for (const auto& g : summary.groups) {
    out << csv_field(g.key.dataset) << ',' << csv_field(g.key.agent) << ',' << g.key.hint_level << ',' << g.repeats
        << ',' << format_number(g.mean_improvement) << ',' << format_number(g.min_improvement) << ','
        << format_number(g.max_improvement) << ',' << format_number(g.best_of_repeats) << ','
        << format_number(g.mean_raw_improvement) << '\n';
  }
  return out.str();
}

std::string failures_csv(const ExperimentSummary& summary) { return failure_table_csv(summary.failures_by_agent); }

std::string toolmix_csv(const ExperimentSummary& summary) {
  std::ostringstream out;
  out << "agent,code_calls,submission_code_calls,submission_code_call_pct\n";
  for (const auto& [agent, mix] : summary.tool_mix_by_agent) {
    out << csv_field(agent) << ',' << mix.code_calls << ',' << mix.submission_code_calls << ','
        << (mix.empty ? std::string("n/a") : format_number(mix.percent)) << '\n';
  }
  return out.str();
}

std::string curve_csv(const std::vector<CurvePoint>& curve) {
  std::ostringstream out;
  out << "threshold,best_score\n";
  for (const auto& point : curve) out << point.threshold << ',' << format_number(point.best_score) << '\n';
  return out.str();
}

std::string curve_ascii(const std::vector<CurvePoint>& curve) {
  std::ostringstream out;
  for (const auto& point : curve) {
    const int width = static_cast<int>(std::lround(std::clamp(point.best_score, 0.0, 1.0) * 50.0));
    char label[32];
    std::snprintf(label, sizeof label, "%7lluk ", static_cast<unsigned long long>(point.threshold / 1000));
    char score[16];
    std::snprintf(score, sizeof score, " %.4f", point.best_score);
    out << label << std::string(static_cast<std::size_t>(width), '#') << score << '\n';
  }
  return out.str();
}

ExperimentSummary write_report(const fs::path& episodes_root, const fs::path& out_dir,
                               const std::vector<std::uint64_t>& thresholds) {
  const auto episodes = load_episodes(episodes_root);
  const auto summary = summarize(episodes, thresholds);
  fs::create_directories(out_dir / "curves");
  write_text(out_dir / "summary.json", summary_to_json(summary).dump(2) + "\n");
  write_text(out_dir / "improvement.csv", improvement_csv(summary));
  write_text(out_dir / "failures.csv", failures_csv(summary));
  write_text(out_dir / "toolmix.csv", toolmix_csv(summary));
  for (const auto& episode : episodes) {
    const auto curve = best_at_thresholds(episode.result, thresholds);
    write_text(out_dir / "curves" / (episode.result.run_id + ".csv"), curve_csv(curve));
    write_text(out_dir / "curves" / (episode.result.run_id + ".txt"), curve_ascii(curve));
  }
  return summary;
}

}  // namespace scrub
