// SPDX-FileCopyrightText: Copyright (c) 2026 The rlforge Authors
// SPDX-License-Identifier: Apache-2.0

#include "rlforge/pipeline.hpp"

#include <algorithm>
#include <boost/property_tree/info_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <cmath>
#include <map>
#include <sstream>
#include <stdexcept>

#include "rlforge/errors.hpp"

namespace rlforge::pipeline {

namespace {

bool is_sync_or_switch(const std::string& name) { return name == "weight_sync" || name == "device_switch"; }

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

double PipelineReport::sync_switch_share() const {
  if (total <= 0.0) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < order.size(); ++i)
    if (is_sync_or_switch(order[i])) s += durations[i];
  return s / total;
}

std::string PipelineReport::dominant_stage() const {
  std::map<std::string, double> by_kind;
  for (std::size_t i = 0; i < order.size(); ++i) by_kind[order[i]] += durations[i];
  auto it = std::max_element(by_kind.begin(), by_kind.end(),
                             [](const auto& a, const auto& b) { return a.second < b.second; });
  return it == by_kind.end() ? std::string() : it->first;
}

PipelineReport simulate_step(const std::vector<StageSpec>& stages, double audio_seconds) {
  if (stages.empty()) throw std::invalid_argument("pipeline needs at least one stage");
  if (!(audio_seconds > 0.0)) throw std::invalid_argument("audio_seconds must be positive");
  const auto& kinds = stage_kinds();
  PipelineReport r;
  r.audio_seconds = audio_seconds;
  double clock = 0.0;
  for (const auto& s : stages) {
    if (std::find(kinds.begin(), kinds.end(), s.name) == kinds.end())
      throw std::invalid_argument("unknown stage '" + s.name + "'");
    if (s.fixed_latency < 0.0 || s.per_item_cost < 0.0 || s.items < 0.0)
      throw std::invalid_argument("stage '" + s.name + "' has a negative cost");
    const double d = s.duration();
    r.order.push_back(s.name);
    r.durations.push_back(d);
    r.leases.push_back({s.name, clock, clock + d});
    clock += d;
  }
  r.total = 0.0;
  for (double d : r.durations) r.total += d;
  r.rtf = r.total / audio_seconds;
  return r;
}

bool validate_exclusive(const PipelineReport& report) {
  if (report.leases.size() != report.order.size()) return false;
  double prev_end = 0.0;
  for (std::size_t i = 0; i < report.leases.size(); ++i) {
    const auto& l = report.leases[i];
    if (l.stage != report.order[i]) return false;
    if (l.end < l.start || l.start < prev_end) return false;
    prev_end = l.end;
  }
  return true;
}

std::vector<PipelineReport> sweep(const PipelineConfig& base, const std::string& parameter,
                                  const std::vector<double>& values) {
  std::string stage, field = parameter;
  if (auto dot = parameter.find('.'); dot != std::string::npos) {
    stage = parameter.substr(0, dot);
    field = parameter.substr(dot + 1);
  }
  const bool known = (stage.empty() && (field == "batch" || field == "audio_seconds")) ||
                     (!stage.empty() && (field == "fixed_latency" || field == "per_item_cost" || field == "items") &&
                      std::any_of(base.stages.begin(), base.stages.end(),
                                  [&](const StageSpec& s) { return s.name == stage; }));
  if (!known) throw std::invalid_argument("unknown sweep parameter '" + parameter + "'");

  std::vector<PipelineReport> out;
  for (double v : values) {
    PipelineConfig c = base;
    if (field == "audio_seconds") c.audio_seconds = v;
    for (auto& s : c.stages) {
      if (field == "batch" && s.per_item_cost > 0.0) s.items = v;
      if (s.name != stage) continue;
      if (field == "fixed_latency") s.fixed_latency = v;
      if (field == "per_item_cost") s.per_item_cost = v;
      if (field == "items") s.items = v;
    }
    out.push_back(simulate_step(c.stages, c.audio_seconds));
  }
  return out;
}

std::string sweep_csv(const std::string& parameter, const std::vector<double>& values,
                      const std::vector<PipelineReport>& reports) {
  if (values.size() != reports.size()) throw std::invalid_argument("sweep values and reports differ in length");
  std::ostringstream os;
  os << parameter << ",total,rtf";
  if (!reports.empty())
    for (std::size_t i = 0; i < reports[0].order.size(); ++i) os << ',' << i << '_' << reports[0].order[i];
  os << '\n';
  for (std::size_t k = 0; k < reports.size(); ++k) {
    os << fmt(values[k]) << ',' << fmt(reports[k].total) << ',' << fmt(reports[k].rtf);
    for (double d : reports[k].durations) os << ',' << fmt(d);
    os << '\n';
  }
  return os.str();
}

std::string breakdown_csv(const PipelineReport& r) {
  std::ostringstream os;
  os << "stage,start,end,duration,share\n";
  for (std::size_t i = 0; i < r.leases.size(); ++i)
    os << r.leases[i].stage << ',' << fmt(r.leases[i].start) << ',' << fmt(r.leases[i].end) << ','
       << fmt(r.durations[i]) << ',' << fmt(r.total > 0.0 ? r.durations[i] / r.total : 0.0) << '\n';
  return os.str();
}

nlohmann::json to_json(const PipelineReport& r) {
  nlohmann::json j;
  j["total_seconds"] = r.total;
  j["audio_seconds"] = r.audio_seconds;
  j["rtf"] = r.rtf;
  j["rtf_4dp"] = std::round(r.rtf * 1e4) / 1e4;
  j["sync_switch_share"] = r.sync_switch_share();
  j["dominant_stage"] = r.dominant_stage();
  j["exclusive"] = validate_exclusive(r);
  j["stages"] = nlohmann::json::array();
  for (std::size_t i = 0; i < r.order.size(); ++i)
    j["stages"].push_back(
        {{"name", r.order[i]}, {"start", r.leases[i].start}, {"end", r.leases[i].end}, {"duration", r.durations[i]}});
  return j;
}

// Batch of 512 utterances, about an hour of audio.
PipelineConfig asr_preset() {
  return {{
              {"encode", 0.6, 0.008, 512},
              {"device_switch", 0.5, 0.0, 0},
              {"rollout", 1.2, 0.035, 512},
              {"device_switch", 0.5, 0.0, 0},
              {"reward", 0.2, 0.002, 512},
              {"device_switch", 0.5, 0.0, 0},
              {"policy_update", 2.084, 0.048, 512},
              {"weight_sync", 1.4, 0.0, 0},
          },
          3600.0};
}

// Six seconds of generated speech per item.
PipelineConfig tts_preset(double batch) {
  return {{
              {"rollout", 0.4, 0.022, batch},
              {"device_switch", 0.25, 0.0, 0},
              {"decode_vocode", 0.5, 0.052, batch},
              {"device_switch", 0.25, 0.0, 0},
              {"reward", 0.2, 0.012, batch},
              {"device_switch", 0.25, 0.0, 0},
              {"policy_update", 0.552, 0.025, batch},
              {"weight_sync", 0.12, 0.0, 0},
          },
          6.0 * batch};
}

PipelineConfig preset(const std::string& name) {
  if (name == "asr") return asr_preset();
  if (name == "tts") return tts_preset();
  throw ConfigError("preset", "unknown preset '" + name + "' (expected asr or tts)");
}

PipelineConfig load_stage_file(const std::filesystem::path& path) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::read_info(path.string(), tree);
  } catch (const pt::info_parser_error& e) {
    throw ConfigError("<file>", path.string() + ":" + std::to_string(e.line()) + ": " + e.message());
  }
  auto number = [](const pt::ptree& t, const std::string& key, const std::string& where) {
    auto v = t.get_optional<double>(key);
    if (!v) throw ConfigError(where, "missing or non-numeric");
    return *v;
  };
  PipelineConfig c;
  std::size_t index = 0;
  for (const auto& [key, child] : tree) {
    if (key == "audio_seconds") {
      c.audio_seconds = number(tree, "audio_seconds", "audio_seconds");
    } else if (key == "stage") {
      const std::string where = "stage[" + std::to_string(index++) + "]";
      StageSpec s;
      s.name = child.get<std::string>("name", "");
      const auto& kinds = stage_kinds();
      if (std::find(kinds.begin(), kinds.end(), s.name) == kinds.end())
        throw ConfigError(where + ".name", "unknown stage '" + s.name + "'");
      s.fixed_latency = child.count("fixed_latency") ? number(child, "fixed_latency", where + ".fixed_latency") : 0.0;
      s.per_item_cost = child.count("per_item_cost") ? number(child, "per_item_cost", where + ".per_item_cost") : 0.0;
      s.items = child.count("items") ? number(child, "items", where + ".items") : 0.0;
      for (const auto& [f, _] : child)
        if (f != "name" && f != "fixed_latency" && f != "per_item_cost" && f != "items")
          throw ConfigError(where + "." + f, "unknown setting");
      if (s.fixed_latency < 0.0 || s.per_item_cost < 0.0 || s.items < 0.0)
        throw ConfigError(where, "negative cost");
      c.stages.push_back(s);
    } else {
      throw ConfigError(key, "unknown setting");
    }
  }
  if (c.stages.empty()) throw ConfigError("stage", "no stages configured");
  if (!(c.audio_seconds > 0.0)) throw ConfigError("audio_seconds", "must be positive");
  return c;
}

}  // namespace rlforge::pipeline
