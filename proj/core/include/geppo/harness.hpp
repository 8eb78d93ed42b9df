#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "geppo/trainer.hpp"
#include "json.hpp"

namespace geppo {

/// Persistent record of one training run: the resolved configuration, the
/// per-iteration metrics and a summary.
struct RunRecord {
  nlohmann::json config;
  std::uint64_t config_hash = 0;
  std::vector<UpdateReport> metrics;
  nlohmann::json summary;
};

std::uint64_t hash_config(const nlohmann::json& config);

/// Trains under `config`, writing metrics.jsonl and summary.json into
/// `outdir` (plus checkpoint.json when requested). Deterministic per seed; a
/// divergence abort is recorded in the summary rather than thrown.
RunRecord run_experiment(const TrainerConfig& config,
                         const std::filesystem::path& outdir,
                         bool write_checkpoint = false);

void write_record(const RunRecord& record, const std::filesystem::path& dir);
RunRecord load_record(const std::filesystem::path& dir);

/// All run directories directly below `dir` (containing summary.json), plus
/// `dir` itself if it is a run directory.
std::vector<RunRecord> load_records(const std::filesystem::path& dir);

struct ComparisonRow {
  std::string metric;
  double a_mean = 0.0;
  std::optional<double> a_stderr;
  double b_mean = 0.0;
  std::optional<double> b_stderr;
  double improvement = 0.0;  // percent for returns, ratio for steps
};

struct ComparisonTable {
  std::string algo_a;
  std::string algo_b;
  std::vector<ComparisonRow> rows;

  std::string to_csv() const;
};

/// Average-over-training and final performance (mean of the last 10
/// evaluations) with standard errors across seeds, plus the number of steps
/// each algorithm needs to reach the first algorithm's final performance.
ComparisonTable compare(const std::vector<RunRecord>& a,
                        const std::vector<RunRecord>& b);

/// Per-algorithm CSV curves: return_<algo>.csv with (steps, mean, stderr)
/// and tv_<algo>.csv with (steps, mean, stderr, target), target = eps/2 of
/// the algorithm's resolved clipping parameter.
void emit_plot_data(const std::vector<RunRecord>& records,
                    const std::filesystem::path& outdir);

struct SuiteCheck {
  std::string name;
  bool passed = false;
  double slack = 0.0;
};

struct SuiteReport {
  std::string suite;
  std::vector<SuiteCheck> checks;

  int failures() const;
  double worst_slack() const;
  bool passed() const { return failures() == 0; }
  nlohmann::json to_json() const;
};

/// Property-suite dispatch: suite is one of bounds, identities, weights,
/// estimators, all. Throws std::invalid_argument for unknown ids.
SuiteReport run_verification_suite(const std::string& suite,
                                   std::uint64_t seed = 2024);

}  // namespace geppo
