// SPDX-FileCopyrightText: Copyright (c) 2026 The rlforge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "rlforge/trainer.hpp"

namespace rlforge::rundir {

namespace fs = std::filesystem;

// $RLFORGE_RUN_DIR, falling back to ./runs.
fs::path default_root();
std::string dir_name(const std::string& config_hash, std::uint64_t seed);  // "<hash>-s<seed>"

inline constexpr const char* kMetricsHeader =
    "step,reward_mean,kl,clip_frac,loss,wer,ins,del,r_asr,mean_len,diversity,"
    "adv_abs_mean,hallu_rate,sampled_hallu_rate,kw_recall,rm_wer,skipped_groups,selected,updated";

// One row per step (0 = baseline eval); eval columns are blank between evals.
std::string metrics_csv(const trainer::RunReport& report, world::Task task);

nlohmann::json eval_summary(const trainer::EvalMetrics& m, world::Task task);
std::string utterances_jsonl(const trainer::EvalMetrics& m, world::Task task);
std::string utterance_log_name(std::size_t step);  // "utterances/step_000050.jsonl"

nlohmann::json checkpoint_metadata(const trainer::RunConfig& config, const std::string& hash, std::size_t step);

nlohmann::json report_json(const trainer::RunConfig& config, const trainer::RunReport& report,
                           const trainer::RunAssets& assets);

// Writes every artifact atomically into `dir`:
//   config.json, metrics.csv, report.json, utterances/step_*.jsonl,
//   final.ckpt, best.ckpt
void write_run(const fs::path& dir, const trainer::RunConfig& config, const trainer::RunReport& report,
               const trainer::RunAssets& assets);

class IncompleteRun : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TableRow {
  std::string method, rules, data;
  std::size_t step = 0;
  std::vector<double> values;
};

struct RenderedReport {
  world::Task task = world::Task::Asr;
  std::vector<std::string> columns;
  std::vector<TableRow> rows;  // rows.front() is the baseline, method "-"
  std::string table;           // fixed-width text
  std::vector<std::pair<std::string, std::string>> curves;  // (file name, CSV)
};

// Table values are recomputed from the per-utterance logs of each run's best
// eval and cross-checked against report.json (IncompleteRun on mismatch or
// missing files). All runs must share a task.
RenderedReport render(const std::vector<fs::path>& run_dirs);

}  // namespace rlforge::rundir
