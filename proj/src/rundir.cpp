// SPDX-FileCopyrightText: Copyright (c) 2026 The rlforge Authors
// SPDX-License-Identifier: Apache-2.0

#include "rlforge/rundir.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

#include "rlforge/checkpoint.hpp"
#include "rlforge/config.hpp"

namespace rlforge::rundir {

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string data_label(const std::vector<trainer::SubsetWeight>& data) {
  std::string s;
  for (const auto& d : data) {
    if (!s.empty()) s += "+";
    s += world::to_string(d.subset);
    if (data.size() > 1) s += ":" + num(d.weight);
  }
  return s;
}

nlohmann::json split_json(const rewards::AggregateWer& a) {
  return {{"wer", a.wer()}, {"ins", a.ins()}, {"del", a.del()}, {"utterances", a.utterances}, {"ref_len", a.ref_len}};
}

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

nlohmann::json read_json(const fs::path& p) {
  if (!fs::exists(p)) throw IncompleteRun("missing " + p.string());
  try {
    return nlohmann::json::parse(checkpoint::read_file(p));
  } catch (const nlohmann::json::exception& e) {
    throw IncompleteRun(p.string() + ": " + e.what());
  }
}

}  // namespace

fs::path default_root() {
  const char* env = std::getenv("RLFORGE_RUN_DIR");
  return env && *env ? fs::path(env) : fs::path("runs");
}

std::string dir_name(const std::string& config_hash, std::uint64_t seed) {
  return config_hash + "-s" + std::to_string(seed);
}

std::string metrics_csv(const trainer::RunReport& report, world::Task task) {
  std::map<std::size_t, const trainer::EvalMetrics*> evals;
  for (const auto& e : report.evals) evals[e.step] = &e;
  std::map<std::size_t, const trainer::StepRecord*> steps;
  for (const auto& s : report.steps) steps[s.step] = &s;
  std::set<std::size_t> all;
  for (auto& [k, _] : evals) all.insert(k);
  for (auto& [k, _] : steps) all.insert(k);

  std::ostringstream os;
  os << kMetricsHeader << '\n';
  const bool asr = task == world::Task::Asr;
  for (std::size_t step : all) {
    os << step;
    const auto* s = steps.count(step) ? steps[step] : nullptr;
    const auto* e = evals.count(step) ? evals[step] : nullptr;
    auto cell = [&](bool present, double v) { os << ',' << (present ? num(v) : ""); };
    cell(s, s ? s->reward_mean : 0);
    cell(s, s ? s->kl : 0);
    cell(s, s ? s->clip_fraction : 0);
    cell(s, s ? s->loss : 0);
    cell(e, e ? e->wer() : 0);
    cell(e, e ? e->splits.overall.ins() : 0);
    cell(e, e ? e->splits.overall.del() : 0);
    cell(e && !asr, e ? e->r_asr : 0);
    cell(e && !asr, e ? e->mean_len : 0);
    cell(e && !asr, e ? e->diversity : 0);
    cell(s, s ? s->adv_abs_mean : 0);
    cell(e, e ? e->splits.overall.hallucination_rate() : 0);
    cell(e && asr, e ? e->sampled_hallucination_rate : 0);
    cell(e && asr, e ? e->splits.overall.keyword_recall() : 0);
    cell(e && !asr, e ? e->rm_wer : 0);
    os << ',' << (s ? std::to_string(s->skipped_groups) : "");
    os << ',' << (s ? std::to_string(s->selected) : "");
    os << ',' << (s ? (s->updated ? "1" : "0") : "");
    os << '\n';
  }
  return os.str();
}

nlohmann::json eval_summary(const trainer::EvalMetrics& m, world::Task task) {
  nlohmann::json j;
  j["step"] = m.step;
  j["overall"] = split_json(m.splits.overall);
  j["short"] = split_json(m.splits.short_split);
  j["long"] = split_json(m.splits.long_split);
  j["wer"] = m.wer();
  j["hallucination_rate"] = m.splits.overall.hallucination_rate();
  if (task == world::Task::Asr) {
    j["sampled_hallucination_rate"] = m.sampled_hallucination_rate;
    j["keyword_recall"] = m.splits.overall.keyword_recall();
  } else {
    j["r_asr"] = m.r_asr;
    j["rm_wer"] = m.rm_wer;
    j["mean_len"] = m.mean_len;
    j["diversity"] = m.diversity;
  }
  return j;
}

std::string utterances_jsonl(const trainer::EvalMetrics& m, world::Task task) {
  std::string out;
  for (std::size_t i = 0; i < m.utterances.size(); ++i) {
    const auto& u = m.utterances[i];
    nlohmann::json j = {{"id", u.id},
                        {"condition_len", u.condition_len},
                        {"ref_len", u.wer.ref_len},
                        {"sub", u.wer.substitutions},
                        {"ins", u.wer.insertions},
                        {"del", u.wer.deletions},
                        {"hallucinated", u.hallucinated},
                        {"kw_ref", u.kw_ref},
                        {"kw_matched", u.kw_matched}};
    if (task == world::Task::Tts) {
      j["r_asr"] = m.utterance_r_asr.at(i);
      j["len"] = m.utterance_len.at(i);
    }
    out += j.dump() + "\n";
  }
  return out;
}

std::string utterance_log_name(std::size_t step) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "utterances/step_%06zu.jsonl", step);
  return buf;
}

nlohmann::json checkpoint_metadata(const trainer::RunConfig& config, const std::string& hash, std::size_t step) {
  const auto cj = config::to_json(config);
  return {{"config_hash", hash}, {"world_seed", config.world.seed}, {"world", cj["world"]},
          {"train", cj["train"]}, {"task", world::to_string(config.task)}, {"step", step}};
}

nlohmann::json report_json(const trainer::RunConfig& config, const trainer::RunReport& report,
                           const trainer::RunAssets& assets) {
  const std::string hash = report.config_hash.empty() ? config::config_hash(config) : report.config_hash;
  nlohmann::json j;
  j["config_hash"] = hash;
  j["seed"] = report.seed;
  j["task"] = world::to_string(config.task);
  j["method"] = trainer::to_string(config.method);
  j["rules"] = rewards::rules_str(config.rules);
  j["data"] = data_label(config.data);
  j["world_seed"] = config.world.seed;
  j["steps"] = config.steps;
  j["best_step"] = report.best_step;
  j["best_score"] = report.best_score;
  j["stability_step"] = report.stability_step ? nlohmann::json(*report.stability_step) : nlohmann::json(nullptr);
  j["baseline"] = eval_summary(report.baseline(), config.task);
  j["best"] = eval_summary(report.best(), config.task);
  j["final"] = eval_summary(report.evals.back(), config.task);
  j["evals"] = nlohmann::json::array();
  for (const auto& e : report.evals) j["evals"].push_back(eval_summary(e, config.task));
  j["checkpoints"] = {{"final", "final.ckpt"}, {"best", "best.ckpt"}};
  j["test_size"] = assets.test.size();
  if (assets.reward_model) j["reward_model_accuracy"] = assets.reward_model->accuracy;
  return j;
}

void write_run(const fs::path& dir, const trainer::RunConfig& config, const trainer::RunReport& report,
               const trainer::RunAssets& assets) {
  const std::string hash = report.config_hash.empty() ? config::config_hash(config) : report.config_hash;
  fs::create_directories(dir / "utterances");
  nlohmann::json cj = config::to_json(config);
  cj["config_hash"] = hash;
  checkpoint::write_atomic(dir / "config.json", cj.dump(2) + "\n");
  for (const auto& e : report.evals)
    checkpoint::write_atomic(dir / utterance_log_name(e.step), utterances_jsonl(e, config.task));
  checkpoint::save(dir / "final.ckpt",
                   checkpoint::from_policy(report.final_policy, checkpoint_metadata(config, hash, config.steps)));
  checkpoint::save(dir / "best.ckpt",
                   checkpoint::from_policy(report.best_policy, checkpoint_metadata(config, hash, report.best_step)));
  checkpoint::write_atomic(dir / "metrics.csv", metrics_csv(report, config.task));
  // Written last: its presence marks a complete run.
  checkpoint::write_atomic(dir / "report.json", report_json(config, report, assets).dump(2) + "\n");
}

// ---- rendering ---------------------------------------------------------------

namespace {

struct Recomputed {
  rewards::SplitMetrics splits;
  double r_asr = 0.0, mean_len = 0.0;
};

Recomputed recompute(const fs::path& log, world::Task task, const rewards::SplitThresholds& split) {
  if (!fs::exists(log)) throw IncompleteRun("missing " + log.string());
  std::ifstream is(log);
  std::vector<rewards::UtteranceResult> results;
  std::vector<double> r_asr, len;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    rewards::UtteranceResult u;
    u.id = j.at("id");
    u.condition_len = j.at("condition_len");
    u.wer.ref_len = j.at("ref_len");
    u.wer.substitutions = j.at("sub");
    u.wer.insertions = j.at("ins");
    u.wer.deletions = j.at("del");
    u.hallucinated = j.at("hallucinated");
    u.kw_ref = j.at("kw_ref");
    u.kw_matched = j.at("kw_matched");
    results.push_back(u);
    if (task == world::Task::Tts) {
      r_asr.push_back(j.at("r_asr"));
      len.push_back(j.at("len"));
    }
  }
  Recomputed r;
  r.splits = rewards::aggregate(results, split);
  r.r_asr = mean(r_asr);
  r.mean_len = mean(len);
  return r;
}

void check_close(const std::string& what, double recomputed, double summary) {
  if (std::abs(recomputed - summary) > 1e-9)
    throw IncompleteRun(what + " recomputed as " + num(recomputed) + " but the report says " + num(summary));
}

std::vector<double> row_values(world::Task task, const Recomputed& r, const nlohmann::json& summary,
                               const std::string& where) {
  const auto& o = r.splits.overall;
  check_close(where + " wer", o.wer(), summary.at("wer"));
  if (task == world::Task::Asr) {
    check_close(where + " ins", o.ins(), summary.at("overall").at("ins"));
    check_close(where + " del", o.del(), summary.at("overall").at("del"));
    check_close(where + " short wer", r.splits.short_split.wer(), summary.at("short").at("wer"));
    check_close(where + " long wer", r.splits.long_split.wer(), summary.at("long").at("wer"));
    check_close(where + " keyword recall", o.keyword_recall(), summary.at("keyword_recall"));
    return {o.wer(), o.ins(), o.del(), r.splits.short_split.wer(), r.splits.long_split.wer(),
            o.hallucination_rate(), summary.at("sampled_hallucination_rate"), o.keyword_recall()};
  }
  check_close(where + " r_asr", r.r_asr, summary.at("r_asr"));
  check_close(where + " mean_len", r.mean_len, summary.at("mean_len"));
  return {o.wer(), r.r_asr, r.mean_len, summary.at("diversity")};
}

std::string pad(const std::string& s, std::size_t w) { return s.size() >= w ? s : s + std::string(w - s.size(), ' '); }

std::string fixed(double v, int prec) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(prec) << v;
  return os.str();
}

}  // namespace

RenderedReport render(const std::vector<fs::path>& run_dirs) {
  if (run_dirs.empty()) throw IncompleteRun("no run directories given");
  RenderedReport out;
  bool first = true;
  for (const auto& dir : run_dirs) {
    const auto report = read_json(dir / "report.json");
    const auto cfg = read_json(dir / "config.json");
    const auto task = world::parse_task(report.at("task"));
    if (first) {
      out.task = task;
      out.columns = task == world::Task::Asr
                        ? std::vector<std::string>{"WER", "Ins", "Del", "WER_short", "WER_long", "Hallu",
                                                   "Hallu_sampled", "KW_recall"}
                        : std::vector<std::string>{"WER", "R_ASR", "Duration", "Diversity"};
    } else if (task != out.task) {
      throw IncompleteRun("runs mix ASR and TTS");
    }
    rewards::SplitThresholds split;
    split.short_max = cfg.at("eval").at("split").at("short_max");
    split.long_min = cfg.at("eval").at("split").at("long_min");

    if (first) {
      const auto& base = report.at("baseline");
      const std::size_t step = base.at("step");
      TableRow row{"-", "-", "-", step, {}};
      row.values = row_values(task, recompute(dir / utterance_log_name(step), task, split), base,
                              dir.string() + " baseline");
      out.rows.push_back(std::move(row));
    }
    const auto& best = report.at("best");
    const std::size_t step = best.at("step");
    TableRow row{report.at("method"), report.at("rules"), report.at("data"), step, {}};
    row.values = row_values(task, recompute(dir / utterance_log_name(step), task, split), best, dir.string());
    out.rows.push_back(std::move(row));

    // Curves from metrics.csv, steps strictly increasing by construction.
    const auto metrics = dir / "metrics.csv";
    if (!fs::exists(metrics)) throw IncompleteRun("missing " + metrics.string());
    std::ifstream is(metrics);
    std::string header, line;
    std::getline(is, header);
    std::ostringstream curve;
    curve << header << '\n';
    long long prev = -1;
    while (std::getline(is, line)) {
      if (line.empty()) continue;
      const long long step_v = std::stoll(line.substr(0, line.find(',')));
      if (step_v <= prev) throw IncompleteRun(metrics.string() + ": steps not increasing");
      prev = step_v;
      curve << line << '\n';
    }
    out.curves.emplace_back("curve_" + dir.filename().string() + ".csv", curve.str());
    first = false;
  }

  std::ostringstream t;
  t << pad("Method", 18) << pad("Reward", 8) << pad("Data", 18) << pad("Step", 6);
  for (const auto& c : out.columns) t << pad(c, 14);
  t << '\n';
  for (const auto& r : out.rows) {
    t << pad(r.method, 18) << pad(r.rules, 8) << pad(r.data, 18) << pad(std::to_string(r.step), 6);
    for (double v : r.values) t << pad(fixed(v, 4), 14);
    t << '\n';
  }
  out.table = t.str();
  return out;
}

}  // namespace rlforge::rundir
