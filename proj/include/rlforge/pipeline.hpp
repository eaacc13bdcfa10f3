// SPDX-FileCopyrightText: Copyright (c) 2026 The rlforge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace rlforge::pipeline {

// Stage kinds; a stage list may repeat a kind (e.g. several device switches).
inline const std::vector<std::string>& stage_kinds() {
  static const std::vector<std::string> kinds = {"encode", "rollout", "decode_vocode", "reward",
                                                 "policy_update", "weight_sync", "device_switch"};
  return kinds;
}

struct StageSpec {
  std::string name;
  double fixed_latency = 0.0;  // seconds
  double per_item_cost = 0.0;  // seconds per item
  double items = 0.0;          // items per step

  double duration() const { return fixed_latency + per_item_cost * items; }
};

struct Lease {
  std::string stage;
  double start = 0.0;
  double end = 0.0;
};

struct PipelineReport {
  std::vector<std::string> order;  // configured stage order
  std::vector<double> durations;   // per stage, same order
  std::vector<Lease> leases;       // on the single exclusive device pool
  double total = 0.0;
  double audio_seconds = 0.0;
  double rtf = 0.0;

  // Share of the step spent in weight_sync plus device_switch stages.
  double sync_switch_share() const;
  // Stage with the largest summed duration across repeats.
  std::string dominant_stage() const;
};

struct PipelineConfig {
  std::vector<StageSpec> stages;
  double audio_seconds = 0.0;
};

// Throws std::invalid_argument on an empty stage list, unknown stage names,
// negative costs or non-positive audio duration.
PipelineReport simulate_step(const std::vector<StageSpec>& stages, double audio_seconds);

// True iff leases are ordered, non-overlapping and follow `order`.
bool validate_exclusive(const PipelineReport& report);

// Parameters: "batch" (items of every stage with a per-item cost),
// "audio_seconds", or "<stage>.fixed_latency" / "<stage>.per_item_cost" /
// "<stage>.items" (applied to every stage of that name).
std::vector<PipelineReport> sweep(const PipelineConfig& base, const std::string& parameter,
                                  const std::vector<double>& values);
std::string sweep_csv(const std::string& parameter, const std::vector<double>& values,
                      const std::vector<PipelineReport>& reports);

// Per-stage breakdown: stage,start,end,duration,share
std::string breakdown_csv(const PipelineReport& r);
nlohmann::json to_json(const PipelineReport& r);

// Presets calibrated to 54.6 s per ASR step over an hour of audio and to
// 16.73 s per TTS step at batch 128. Stage shares are illustrative.
PipelineConfig asr_preset();
PipelineConfig tts_preset(double batch = 128.0);
PipelineConfig preset(const std::string& name);  // "asr" | "tts"

// INFO file: `audio_seconds N` plus repeated `stage { name .. fixed_latency
// .. per_item_cost .. items .. }` blocks in execution order.
PipelineConfig load_stage_file(const std::filesystem::path& path);

}  // namespace rlforge::pipeline
