// SPDX-FileCopyrightText: Copyright (c) 2026 The rlforge Authors
// SPDX-License-Identifier: Apache-2.0

#include "rlforge/rlforge.h"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <sstream>

#include "rlforge/checkpoint.hpp"
#include "rlforge/config.hpp"
#include "rlforge/pipeline.hpp"
#include "rlforge/rundir.hpp"

namespace ck = rlforge::checkpoint;
namespace cf = rlforge::config;
namespace fs = std::filesystem;
namespace pp = rlforge::pipeline;
namespace tr = rlforge::trainer;
namespace wd = rlforge::world;

struct rlf_config {
  tr::RunConfig run;
};
struct rlf_world {
  wd::World world;
  wd::WorldSpec spec;
};
struct rlf_policy {
  rlforge::policy::Policy policy;
};
struct rlf_pipeline_report {
  pp::PipelineConfig config;
  pp::PipelineReport report;
};

namespace {

thread_local std::string g_error;
thread_local std::string g_key;

rlf_status fail(rlf_status s, const std::string& msg, const std::string& key = {}) {
  g_error = msg;
  g_key = key;
  return s;
}

template <class F>
rlf_status guarded(F&& f) {
  g_error.clear();
  g_key.clear();
  try {
    f();
    return RLF_OK;
  } catch (const rlforge::ConfigError& e) {
    return fail(RLF_ERR_CONFIG, e.what(), e.key());
  } catch (const std::invalid_argument& e) {
    return fail(RLF_ERR_ARGUMENT, e.what());
  } catch (const std::exception& e) {
    return fail(RLF_ERR_RUNTIME, e.what());
  } catch (...) {
    return fail(RLF_ERR_RUNTIME, "unknown error");
  }
}

struct ArgumentError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

void require(const void* p, const char* what) {
  if (!p) throw ArgumentError(std::string(what) + " is NULL");
}

rlf_status copy_out(const std::string& s, char* buf, std::size_t len, std::size_t* needed) {
  if (needed) *needed = s.size() + 1;
  if (!buf || len < s.size() + 1) return fail(RLF_ERR_ARGUMENT, "buffer too small");
  std::memcpy(buf, s.c_str(), s.size() + 1);
  return RLF_OK;
}

// Checkpoints must belong to the configured world.
void check_world_seed(const ck::Checkpoint& c, const tr::RunConfig& run, const std::string& what) {
  if (!c.metadata.contains("world_seed")) return;
  const auto seed = c.metadata["world_seed"].get<std::uint64_t>();
  if (seed != run.world.seed)
    throw rlforge::ConfigError("world.seed", what + " was built for world seed " + std::to_string(seed) +
                                                 " but the config uses " + std::to_string(run.world.seed));
}

std::optional<rlforge::policy::Policy> load_policy(const char* path, const tr::RunConfig& run) {
  if (!path || !*path) return std::nullopt;
  const auto c = ck::load(path);
  check_world_seed(c, run, path);
  auto p = ck::to_policy(c);
  p.role = rlforge::policy::Role::Current;
  return p;
}

std::optional<rlforge::diffro::RewardModel> load_rm(const char* path, const tr::RunConfig& run) {
  if (!path || !*path) return std::nullopt;
  const auto c = ck::load(path);
  check_world_seed(c, run, path);
  return ck::to_reward_model(c);
}

nlohmann::json step_json(const tr::StepRecord& s) {
  return {{"step", s.step},         {"reward_mean", s.reward_mean},   {"kl", s.kl},
          {"clip_frac", s.clip_fraction}, {"loss", s.loss},        {"adv_abs_mean", s.adv_abs_mean},
          {"mean_len", s.mean_len}, {"skipped_groups", s.skipped_groups}, {"selected", s.selected},
          {"updated", s.updated}};
}

rlforge::TokenSequence strip_text_eos(rlforge::TokenSequence t) {
  if (!t.empty() && t.back() == rlforge::text::kEos) t.pop_back();
  return t;
}

}  // namespace

extern "C" {

const char* rlf_version(void) { return "0.1.0"; }
const char* rlf_last_error(void) { return g_error.c_str(); }
const char* rlf_last_error_key(void) { return g_key.c_str(); }

// ---- configuration ----------------------------------------------------------

rlf_status rlf_config_default(rlf_config** out) {
  return guarded([&] {
    require(out, "out");
    *out = new rlf_config{};
  });
}

rlf_status rlf_config_load(const char* path, rlf_config** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = new rlf_config{cf::load(path)};
  });
}

rlf_status rlf_config_parse(const char* text, rlf_config** out) {
  return guarded([&] {
    require(text, "text");
    require(out, "out");
    *out = new rlf_config{cf::apply(cf::parse_flat(text))};
  });
}

rlf_status rlf_config_set(rlf_config* c, const char* key, const char* value) {
  return guarded([&] {
    require(c, "config");
    require(key, "key");
    require(value, "value");
    c->run = cf::apply({{key, value}}, c->run);
  });
}

rlf_status rlf_config_clone(const rlf_config* c, rlf_config** out) {
  return guarded([&] {
    require(c, "config");
    require(out, "out");
    *out = new rlf_config{*c};
  });
}

rlf_status rlf_config_hash(const rlf_config* c, char* buf, size_t len, size_t* needed) {
  if (!c) return fail(RLF_ERR_ARGUMENT, "config is NULL");
  return copy_out(cf::config_hash(c->run), buf, len, needed);
}

rlf_status rlf_config_get(const rlf_config* c, const char* key, char* buf, size_t len, size_t* needed) {
  std::string value;
  const auto s = guarded([&] {
    require(c, "config");
    require(key, "key");
    std::string ptr = std::string("/") + key;
    std::replace(ptr.begin(), ptr.end(), '.', '/');
    const auto j = cf::to_json(c->run);
    const nlohmann::json::json_pointer jp(ptr);
    if (!j.contains(jp)) throw rlforge::ConfigError(key, "unknown setting");
    const auto& v = j[jp];
    value = v.is_string() ? v.get<std::string>() : v.dump();
  });
  if (s != RLF_OK) return s;
  return copy_out(value, buf, len, needed);
}

rlf_status rlf_config_json(const rlf_config* c, char* buf, size_t len, size_t* needed) {
  if (!c) return fail(RLF_ERR_ARGUMENT, "config is NULL");
  return copy_out(cf::to_json(c->run).dump(), buf, len, needed);
}

void rlf_config_free(rlf_config* c) { delete c; }

// ---- world and data ---------------------------------------------------------

rlf_status rlf_world_create(const rlf_config* c, rlf_world** out) {
  return guarded([&] {
    require(c, "config");
    require(out, "out");
    *out = new rlf_world{wd::build_world(c->run.world), c->run.world};
  });
}

void rlf_world_free(rlf_world* w) { delete w; }

rlf_status rlf_gen_data(const rlf_world* w, const char* task, const char* subset, size_t n, uint64_t seed,
                        const char* out_path) {
  return guarded([&] {
    require(w, "world");
    require(task, "task");
    require(subset, "subset");
    require(out_path, "out_path");
    wd::DatasetOptions o;
    try {
      o.task = wd::parse_task(task);
    } catch (const std::exception& e) {
      throw rlforge::ConfigError("task", e.what());
    }
    wd::Subset s;
    try {
      s = wd::parse_subset(subset);
    } catch (const std::exception& e) {
      throw rlforge::ConfigError("subset", e.what());
    }
    const auto samples = wd::generate_dataset(w->world, s, n, seed, o);
    std::ostringstream os;
    wd::write_dataset(os, w->spec, o.task, samples);
    ck::write_atomic(out_path, os.str());
  });
}

// ---- models -----------------------------------------------------------------

rlf_status rlf_pretrain_policy(const rlf_config* c, const char* out_ckpt) {
  return guarded([&] {
    require(c, "config");
    require(out_ckpt, "out_ckpt");
    const auto& run = c->run;
    const auto w = wd::build_world(run.world);
    const auto p = tr::pretrain_baseline(w, run.task, run.model, run.pretrain, run.seed);
    auto meta = rlforge::rundir::checkpoint_metadata(run, cf::config_hash(run), 0);
    meta["kind"] = "baseline";
    ck::save(out_ckpt, ck::from_policy(p, meta));
  });
}

rlf_status rlf_pretrain_reward(const rlf_config* c, const char* out_ckpt, double* accuracy) {
  return guarded([&] {
    require(c, "config");
    require(out_ckpt, "out_ckpt");
    const auto& run = c->run;
    const auto w = wd::build_world(run.world);
    const auto r = tr::pretrain_run_reward_model(run, w);
    auto meta = rlforge::rundir::checkpoint_metadata(run, cf::config_hash(run), 0);
    meta["target_met"] = r.target_met;
    ck::save(out_ckpt, ck::from_reward_model(r.rm, meta));
    if (accuracy) *accuracy = r.rm.accuracy;
  });
}

rlf_status rlf_policy_load(const char* ckpt, rlf_policy** out) {
  return guarded([&] {
    require(ckpt, "ckpt");
    require(out, "out");
    *out = new rlf_policy{ck::to_policy(ck::load(ckpt))};
  });
}

void rlf_policy_free(rlf_policy* p) { delete p; }

rlf_status rlf_policy_decode(const rlf_policy* p, const int32_t* condition, size_t n, size_t t_max, int32_t* out,
                             size_t cap, size_t* len) {
  return guarded([&] {
    require(p, "policy");
    require(len, "len");
    if (n) require(condition, "condition");
    rlforge::TokenSequence cond(condition, condition + n);
    const auto o = rlforge::policy::greedy_decode(p->policy, cond, t_max);
    *len = o.size();
    if (cap) require(out, "out");
    for (std::size_t i = 0; i < std::min(cap, o.size()); ++i) out[i] = o[i];
  });
}

// ---- runs -------------------------------------------------------------------

rlf_status rlf_train(const rlf_config* c, const char* root, const char* baseline_ckpt, const char* rm_ckpt,
                     rlf_progress_fn progress, void* user, char* dir_buf, size_t dir_len) {
  std::string dir;
  const auto s = guarded([&] {
    require(c, "config");
    const auto& run = c->run;
    const fs::path base = root && *root ? fs::path(root) : rlforge::rundir::default_root();
    auto assets = tr::prepare_assets(run, load_policy(baseline_ckpt, run), load_rm(rm_ckpt, run));
    tr::ProgressFn fn;
    if (progress)
      fn = [&](const tr::StepRecord& r, const tr::EvalMetrics* e) {
        const std::string sj = step_json(r).dump();
        const std::string ej = e ? rlforge::rundir::eval_summary(*e, run.task).dump() : std::string();
        progress(sj.c_str(), e ? ej.c_str() : nullptr, user);
      };
    auto report = tr::train(run, assets, fn);
    report.config_hash = cf::config_hash(run);
    report.seed = run.seed;
    const auto path = base / rlforge::rundir::dir_name(report.config_hash, run.seed);
    rlforge::rundir::write_run(path, run, report, assets);
    dir = path.string();
  });
  if (s != RLF_OK) return s;
  if (dir_buf) return copy_out(dir, dir_buf, dir_len, nullptr);
  return RLF_OK;
}

rlf_status rlf_eval(const rlf_config* c, const char* policy_ckpt, const char* rm_ckpt, const char* out_json) {
  return guarded([&] {
    require(c, "config");
    require(policy_ckpt, "policy_ckpt");
    require(out_json, "out_json");
    const auto& run = c->run;
    const auto w = wd::build_world(run.world);
    const auto p = *load_policy(policy_ckpt, run);
    if (p.arch != tr::policy_arch(w, run.task, run.model))
      throw rlforge::ConfigError("model", "checkpoint architecture does not match the config");
    std::optional<rlforge::diffro::RewardModel> rm;
    if (run.task == wd::Task::Tts) {
      rm = load_rm(rm_ckpt, run);
      if (!rm) rm = tr::pretrain_run_reward_model(run, w).rm;
    }
    const auto test = tr::held_out_test_set(run, w);
    const auto m = tr::evaluate(p, test, w, run, rm ? &*rm : nullptr, rlforge::derive_seed(run.seed, 400));
    auto j = rlforge::rundir::eval_summary(m, run.task);
    j["config_hash"] = cf::config_hash(run);
    j["checkpoint"] = policy_ckpt;
    fs::path utt = out_json;
    utt.replace_extension(".utterances.jsonl");
    ck::write_atomic(utt, rlforge::rundir::utterances_jsonl(m, run.task));
    ck::write_atomic(out_json, j.dump(2) + "\n");
  });
}

rlf_status rlf_score(const rlf_config* c, const char* in_jsonl, const char* out_csv) {
  return guarded([&] {
    require(c, "config");
    require(in_jsonl, "in_jsonl");
    require(out_csv, "out_csv");
    const auto& run = c->run;
    const auto w = wd::build_world(run.world);
    std::ifstream is(in_jsonl);
    if (!is) throw std::runtime_error(std::string("cannot open ") + in_jsonl);
    std::ostringstream os;
    os << "index,ref_len,sub,ins,del,wer,r1,r2_flagged,r3,combined\n";
    rlforge::rewards::AggregateWer total;
    double combined_sum = 0.0;
    std::size_t flagged = 0, n = 0;
    std::string line;
    char buf[64];
    auto num = [&](double v) {
      std::snprintf(buf, sizeof buf, "%.17g", v);
      return std::string(buf);
    };
    while (std::getline(is, line)) {
      if (line.empty()) continue;
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(line);
      } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("line " + std::to_string(n + 1) + ": " + e.what());
      }
      const auto ref = strip_text_eos(j.at("ref").get<rlforge::TokenSequence>());
      const auto hyp = strip_text_eos(j.at("hyp").get<rlforge::TokenSequence>());
      const auto kw = j.contains("keywords") ? j["keywords"].get<std::vector<rlforge::Token>>() : w.keywords();
      const auto b = rlforge::rewards::score_asr(ref, hyp, kw, run.rules, run.hallucination, run.weights);
      rlforge::rewards::UtteranceResult u;
      u.wer = rlforge::rewards::wer(ref, hyp);
      total.add(u);
      combined_sum += b.combined;
      flagged += b.r2_flagged.value_or(false);
      os << n << ',' << u.wer.ref_len << ',' << u.wer.substitutions << ',' << u.wer.insertions << ','
         << u.wer.deletions << ',' << num(u.wer.wer) << ',' << num(b.r1) << ','
         << (b.r2_flagged ? (*b.r2_flagged ? "1" : "0") : "") << ',' << (b.r3 ? num(*b.r3) : "") << ','
         << num(b.combined) << '\n';
      ++n;
    }
    os << "corpus," << total.ref_len << ',' << total.substitutions << ',' << total.insertions << ','
       << total.deletions << ',' << num(total.wer()) << ",," << (n ? num(double(flagged) / double(n)) : "") << ",,"
       << (n ? num(combined_sum / double(n)) : "") << '\n';
    ck::write_atomic(out_csv, os.str());
  });
}

rlf_status rlf_render_report(const char* const* run_dirs, size_t n, const char* out_dir) {
  return guarded([&] {
    require(out_dir, "out_dir");
    if (n) require(run_dirs, "run_dirs");
    std::vector<fs::path> dirs;
    for (std::size_t i = 0; i < n; ++i) {
      require(run_dirs[i], "run_dirs[i]");
      dirs.emplace_back(run_dirs[i]);
    }
    const auto r = rlforge::rundir::render(dirs);
    ck::write_atomic(fs::path(out_dir) / "table.txt", r.table);
    for (const auto& [name, csv] : r.curves) ck::write_atomic(fs::path(out_dir) / name, csv);
  });
}

// ---- pipeline ---------------------------------------------------------------

rlf_status rlf_pipeline_preset(const char* name, rlf_pipeline_report** out) {
  return guarded([&] {
    require(name, "name");
    require(out, "out");
    auto c = pp::preset(name);
    auto r = pp::simulate_step(c.stages, c.audio_seconds);
    *out = new rlf_pipeline_report{std::move(c), std::move(r)};
  });
}

rlf_status rlf_pipeline_load(const char* stage_file, rlf_pipeline_report** out) {
  return guarded([&] {
    require(stage_file, "stage_file");
    require(out, "out");
    auto c = pp::load_stage_file(stage_file);
    auto r = pp::simulate_step(c.stages, c.audio_seconds);
    *out = new rlf_pipeline_report{std::move(c), std::move(r)};
  });
}

double rlf_pipeline_total(const rlf_pipeline_report* r) { return r ? r->report.total : 0.0; }
double rlf_pipeline_rtf(const rlf_pipeline_report* r) { return r ? r->report.rtf : 0.0; }
int rlf_pipeline_exclusive(const rlf_pipeline_report* r) { return r && pp::validate_exclusive(r->report) ? 1 : 0; }

rlf_status rlf_pipeline_write(const rlf_pipeline_report* r, const char* out_dir) {
  return guarded([&] {
    require(r, "report");
    require(out_dir, "out_dir");
    ck::write_atomic(fs::path(out_dir) / "report.json", pp::to_json(r->report).dump(2) + "\n");
    ck::write_atomic(fs::path(out_dir) / "breakdown.csv", pp::breakdown_csv(r->report));
  });
}

rlf_status rlf_pipeline_sweep(const rlf_pipeline_report* r, const char* parameter, const double* values, size_t n,
                              const char* out_csv) {
  return guarded([&] {
    require(r, "report");
    require(parameter, "parameter");
    require(out_csv, "out_csv");
    if (n) require(values, "values");
    const std::vector<double> v(values, values + n);
    const auto reports = pp::sweep(r->config, parameter, v);
    ck::write_atomic(out_csv, pp::sweep_csv(parameter, v, reports));
  });
}

void rlf_pipeline_free(rlf_pipeline_report* r) { delete r; }

}  // extern "C"
