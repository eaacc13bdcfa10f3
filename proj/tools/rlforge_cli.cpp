// SPDX-FileCopyrightText: Copyright (c) 2026 The rlforge Authors
// SPDX-License-Identifier: Apache-2.0

// rlforge command-line front end. Talks to the engine only through the C API.

#include <CLI11.hpp>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "rlforge/rlforge.h"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitRuntime = 2;

struct CliFailure {
  int code;
};

int exit_code(rlf_status s) {
  switch (s) {
    case RLF_OK: return kExitOk;
    case RLF_ERR_CONFIG:
    case RLF_ERR_ARGUMENT: return kExitConfig;
    case RLF_ERR_RUNTIME: return kExitRuntime;
  }
  return kExitRuntime;
}

void check(rlf_status s) {
  if (s == RLF_OK) return;
  const std::string key = rlf_last_error_key();
  std::cerr << "rlforge: " << (s == RLF_ERR_RUNTIME ? "runtime error" : "configuration error");
  if (!key.empty()) std::cerr << " [" << key << "]";
  std::cerr << ": " << rlf_last_error() << '\n';
  throw CliFailure{exit_code(s)};
}

using ConfigPtr = std::unique_ptr<rlf_config, decltype(&rlf_config_free)>;

ConfigPtr load_config(const std::string& path, const std::optional<std::uint64_t>& seed,
                      const std::vector<std::string>& overrides) {
  rlf_config* c = nullptr;
  check(path.empty() ? rlf_config_default(&c) : rlf_config_load(path.c_str(), &c));
  ConfigPtr owned(c, rlf_config_free);
  for (const auto& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      std::cerr << "rlforge: configuration error [" << kv << "]: --set expects key=value\n";
      throw CliFailure{kExitConfig};
    }
    check(rlf_config_set(c, kv.substr(0, eq).c_str(), kv.substr(eq + 1).c_str()));
  }
  if (seed) check(rlf_config_set(c, "seed", std::to_string(*seed).c_str()));
  return owned;
}

std::string config_hash(const rlf_config* c) {
  char buf[64];
  check(rlf_config_hash(c, buf, sizeof buf, nullptr));
  return buf;
}

std::string now_utc() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

// Timestamps never enter artifacts; they go to this sidecar only.
void append_sidecar(const fs::path& dir, const std::string& line) {
  std::ofstream os(dir / "run.log", std::ios::app);
  os << now_utc() << ' ' << line << '\n';
}

void progress(const char* step_json, const char* eval_json, void* user) {
  const bool quiet = *static_cast<bool*>(user);
  if (eval_json && !quiet) std::cerr << "eval " << eval_json << '\n';
  (void)step_json;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"rlforge: desk-scale GRPO / DiffRO engine for toy speech tasks"};
  app.require_subcommand(1);
  app.set_version_flag("--version", rlf_version());

  std::string config_path, out, subset = "D0", task = "asr", checkpoint, reward_ckpt, baseline_ckpt, input;
  std::string preset, sweep_param;
  std::vector<double> sweep_values;
  std::vector<std::string> overrides, run_dirs;
  std::optional<std::uint64_t> seed;
  std::size_t n = 0;
  bool quiet = false;

  auto add_config = [&](CLI::App* sub, bool required) {
    auto* o = sub->add_option("--config,-c", config_path, "config file (INFO syntax)");
    if (required) o->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "override the run seed");
    sub->add_option("--set", overrides, "override a setting, key=value (repeatable)");
  };

  auto* gen = app.add_subcommand("gen-data", "write a JSON-lines dataset for one subset");
  add_config(gen, false);
  gen->add_option("--subset", subset, "D0 | D1 | D2 | D3")->required();
  gen->add_option("--n", n, "number of samples")->required();
  gen->add_option("--task", task, "asr | tts");
  gen->add_option("--out,-o", out, "output .jsonl")->required();

  auto* pre = app.add_subcommand("pretrain-policy", "supervised baseline checkpoint");
  add_config(pre, true);
  pre->add_option("--out,-o", out, "output checkpoint")->required();

  auto* prr = app.add_subcommand("pretrain-reward", "frozen TTS reward model checkpoint");
  add_config(prr, true);
  prr->add_option("--out,-o", out, "output checkpoint")->required();

  auto* trn = app.add_subcommand("train", "RL run into <root>/<config-hash>-s<seed>/");
  add_config(trn, true);
  trn->add_option("--out,-o", out, "run root (default $RLFORGE_RUN_DIR or ./runs)");
  trn->add_option("--baseline", baseline_ckpt, "pretrained policy checkpoint")->check(CLI::ExistingFile);
  trn->add_option("--reward-model", reward_ckpt, "pretrained reward model checkpoint")->check(CLI::ExistingFile);
  trn->add_flag("--quiet,-q", quiet, "no progress output");

  auto* evl = app.add_subcommand("eval", "evaluate a policy checkpoint on the held-out set");
  add_config(evl, true);
  evl->add_option("--checkpoint", checkpoint, "policy checkpoint")->required();
  evl->add_option("--reward-model", reward_ckpt, "reward model checkpoint (TTS)");
  evl->add_option("--out,-o", out, "output JSON")->required();

  auto* scr = app.add_subcommand("score", "score {ref, hyp} JSON-lines pairs with the ASR rules");
  add_config(scr, false);
  scr->add_option("--in,-i", input, "input .jsonl")->required()->check(CLI::ExistingFile);
  scr->add_option("--out,-o", out, "output CSV")->required();

  auto* sim = app.add_subcommand("simulate-pipeline", "step timing of the alternating-device pipeline");
  auto* src = sim->add_option_group("source");
  src->add_option("--preset", preset, "asr | tts");
  src->add_option("--config,-c", config_path, "stage file")->check(CLI::ExistingFile);
  src->require_option(1);
  sim->add_option("--out,-o", out, "output directory (default .)");
  sim->add_option("--sweep", sweep_param, "parameter to sweep (batch, audio_seconds, <stage>.<field>)");
  sim->add_option("--values", sweep_values, "sweep values")->delimiter(',');

  auto* rep = app.add_subcommand("render-report", "ablation table and curves from run directories");
  rep->add_option("--run", run_dirs, "run directory (repeatable; first supplies the baseline row)")->required();
  rep->add_option("--out,-o", out, "output directory (default .)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  if (out.empty() && (sim->parsed() || rep->parsed())) out = ".";

  try {
    if (gen->parsed()) {
      auto c = load_config(config_path, seed, overrides);
      rlf_world* w = nullptr;
      check(rlf_world_create(c.get(), &w));
      std::unique_ptr<rlf_world, decltype(&rlf_world_free)> world(w, rlf_world_free);
      char run_seed[32];
      check(rlf_config_get(c.get(), "seed", run_seed, sizeof run_seed, nullptr));
      check(rlf_gen_data(w, task.c_str(), subset.c_str(), n, std::stoull(run_seed), out.c_str()));
      std::cout << "wrote " << n << " samples to " << out << '\n';
    } else if (pre->parsed()) {
      auto c = load_config(config_path, seed, overrides);
      check(rlf_pretrain_policy(c.get(), out.c_str()));
      std::cout << "wrote " << out << '\n';
    } else if (prr->parsed()) {
      auto c = load_config(config_path, seed, overrides);
      double acc = 0.0;
      check(rlf_pretrain_reward(c.get(), out.c_str(), &acc));
      std::cout << "wrote " << out << " (held-out accuracy " << acc << ")\n";
    } else if (trn->parsed()) {
      auto c = load_config(config_path, seed, overrides);
      char dir[4096];
      const auto started = now_utc();
      check(rlf_train(c.get(), out.empty() ? nullptr : out.c_str(), baseline_ckpt.empty() ? nullptr : baseline_ckpt.c_str(),
                      reward_ckpt.empty() ? nullptr : reward_ckpt.c_str(), progress, &quiet, dir, sizeof dir));
      append_sidecar(dir, "started " + started);
      append_sidecar(dir, "finished config " + config_hash(c.get()));
      std::cout << dir << '\n';
    } else if (evl->parsed()) {
      auto c = load_config(config_path, seed, overrides);
      check(rlf_eval(c.get(), checkpoint.c_str(), reward_ckpt.empty() ? nullptr : reward_ckpt.c_str(), out.c_str()));
      std::cout << "wrote " << out << '\n';
    } else if (scr->parsed()) {
      auto c = load_config(config_path, seed, overrides);
      check(rlf_score(c.get(), input.c_str(), out.c_str()));
      std::cout << "wrote " << out << '\n';
    } else if (sim->parsed()) {
      rlf_pipeline_report* r = nullptr;
      check(preset.empty() ? rlf_pipeline_load(config_path.c_str(), &r) : rlf_pipeline_preset(preset.c_str(), &r));
      std::unique_ptr<rlf_pipeline_report, decltype(&rlf_pipeline_free)> report(r, rlf_pipeline_free);
      check(rlf_pipeline_write(r, out.c_str()));
      if (!sweep_param.empty()) {
        const auto csv = (fs::path(out) / "sweep.csv").string();
        check(rlf_pipeline_sweep(r, sweep_param.c_str(), sweep_values.data(), sweep_values.size(), csv.c_str()));
      }
      std::printf("total %.4f s  rtf %.4f  exclusive %s\n", rlf_pipeline_total(r), rlf_pipeline_rtf(r),
                  rlf_pipeline_exclusive(r) ? "yes" : "no");
    } else if (rep->parsed()) {
      std::vector<const char*> dirs;
      for (const auto& d : run_dirs) dirs.push_back(d.c_str());
      check(rlf_render_report(dirs.data(), dirs.size(), out.c_str()));
      std::ifstream is(fs::path(out) / "table.txt");
      std::cout << is.rdbuf();
    }
  } catch (const CliFailure& f) {
    return f.code;
  }
  return kExitOk;
}
