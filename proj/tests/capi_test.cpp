// SPDX-FileCopyrightText: Copyright (c) 2026 The rlforge Authors
// SPDX-License-Identifier: Apache-2.0

// Uses nothing but the public C header and the shared library.

#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <memory>
#include <sstream>
#include <string>

#include "rlforge/rlforge.h"

namespace fs = std::filesystem;

namespace {

const std::string kConfigs = RLFORGE_CONFIG_DIR;

struct ConfigDeleter {
  void operator()(rlf_config* c) const { rlf_config_free(c); }
};
using Config = std::unique_ptr<rlf_config, ConfigDeleter>;

Config load(const std::string& name) {
  rlf_config* c = nullptr;
  EXPECT_EQ(rlf_config_load((kConfigs + "/" + name).c_str(), &c), RLF_OK) << rlf_last_error();
  return Config(c);
}

std::string get(const rlf_config* c, const char* key) {
  std::size_t need = 0;
  EXPECT_EQ(rlf_config_get(c, key, nullptr, 0, &need), RLF_ERR_ARGUMENT);
  std::string s(need, '\0');
  EXPECT_EQ(rlf_config_get(c, key, s.data(), s.size(), &need), RLF_OK) << rlf_last_error();
  s.resize(need - 1);
  return s;
}

std::string hash(const rlf_config* c) {
  char buf[32];
  EXPECT_EQ(rlf_config_hash(c, buf, sizeof buf, nullptr), RLF_OK);
  return buf;
}

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("rlforge_capi_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST(CApi, ConfigErrorsNameTheKey) {
  rlf_config* raw = nullptr;
  ASSERT_EQ(rlf_config_default(&raw), RLF_OK);
  Config c(raw);
  const auto before = hash(c.get());

  EXPECT_EQ(rlf_config_set(c.get(), "train.nope", "1"), RLF_ERR_CONFIG);
  EXPECT_STREQ(rlf_last_error_key(), "train.nope");
  EXPECT_EQ(rlf_config_set(c.get(), "train.lr", "fast"), RLF_ERR_CONFIG);
  EXPECT_STREQ(rlf_last_error_key(), "train.lr");
  EXPECT_EQ(rlf_config_set(c.get(), "train.clip_eps", "3"), RLF_ERR_CONFIG);
  EXPECT_STREQ(rlf_last_error_key(), "train.clip_eps");
  EXPECT_EQ(rlf_config_set(c.get(), "data", "D0:0.5,D3:0.4"), RLF_ERR_CONFIG);
  EXPECT_STREQ(rlf_last_error_key(), "data");
  EXPECT_EQ(hash(c.get()), before);  // failed sets leave the config alone

  EXPECT_EQ(rlf_config_set(c.get(), "train.lr", "5e-4"), RLF_OK);
  EXPECT_EQ(get(c.get(), "train.lr"), "0.0005");
  EXPECT_NE(hash(c.get()), before);
  EXPECT_EQ(rlf_config_get(c.get(), "no.such", nullptr, 0, nullptr), RLF_ERR_CONFIG);

  rlf_config* bad = nullptr;
  EXPECT_EQ(rlf_config_parse("train { lr 1e-3 }\nbogus 1\n", &bad), RLF_ERR_CONFIG);
  EXPECT_STREQ(rlf_last_error_key(), "bogus");
  EXPECT_EQ(bad, nullptr);
  EXPECT_EQ(rlf_config_load("/nonexistent/x.cfg", &bad), RLF_ERR_CONFIG);
  EXPECT_EQ(rlf_config_set(nullptr, "seed", "1"), RLF_ERR_ARGUMENT);
}

TEST(CApi, BufferProtocol) {
  auto c = load("asr_grpo_r1_d0.cfg");
  std::size_t need = 0;
  EXPECT_EQ(rlf_config_hash(c.get(), nullptr, 0, &need), RLF_ERR_ARGUMENT);
  EXPECT_EQ(need, 17u);
  char small[16];
  EXPECT_EQ(rlf_config_hash(c.get(), small, sizeof small, &need), RLF_ERR_ARGUMENT);
  char exact[17];
  EXPECT_EQ(rlf_config_hash(c.get(), exact, sizeof exact, &need), RLF_OK);
  EXPECT_EQ(std::string(exact).size(), 16u);

  EXPECT_EQ(rlf_config_json(c.get(), nullptr, 0, &need), RLF_ERR_ARGUMENT);
  std::string js(need, '\0');
  ASSERT_EQ(rlf_config_json(c.get(), js.data(), js.size(), &need), RLF_OK);
  const auto j = nlohmann::json::parse(js.c_str());
  EXPECT_EQ(j["task"], "asr");
  EXPECT_EQ(j["data"]["D0"], 1.0);
}

TEST(CApi, IncludesAndCloneShareHashes) {
  auto r1 = load("asr_grpo_r1_d0.cfg");
  auto base = load("base.cfg");
  EXPECT_EQ(hash(r1.get()), hash(base.get()));
  auto d3 = load("asr_grpo_rall_d3.cfg");
  EXPECT_EQ(get(d3.get(), "rules"), "1,2,3");
  EXPECT_EQ(get(d3.get(), "data"), R"({"D3":1.0})");

  rlf_config* raw = nullptr;
  ASSERT_EQ(rlf_config_clone(r1.get(), &raw), RLF_OK);
  Config copy(raw);
  EXPECT_EQ(hash(copy.get()), hash(r1.get()));
  ASSERT_EQ(rlf_config_set(copy.get(), "seed", "8"), RLF_OK);
  EXPECT_NE(hash(copy.get()), hash(r1.get()));
}

TEST(CApi, PipelinePresets) {
  rlf_pipeline_report* r = nullptr;
  ASSERT_EQ(rlf_pipeline_preset("asr", &r), RLF_OK);
  EXPECT_NEAR(rlf_pipeline_total(r), 54.6, 1e-9);
  EXPECT_NEAR(rlf_pipeline_rtf(r), 54.6 / 3600.0, 1e-15);
  EXPECT_EQ(rlf_pipeline_exclusive(r), 1);
  rlf_pipeline_free(r);

  ASSERT_EQ(rlf_pipeline_preset("tts", &r), RLF_OK);
  EXPECT_NEAR(rlf_pipeline_total(r), 16.73, 1e-9);
  const auto dir = scratch("pipe");
  ASSERT_EQ(rlf_pipeline_write(r, dir.string().c_str()), RLF_OK);
  EXPECT_TRUE(fs::exists(dir / "report.json"));
  EXPECT_TRUE(fs::exists(dir / "breakdown.csv"));
  const double batches[] = {64, 128, 256};
  ASSERT_EQ(rlf_pipeline_sweep(r, "batch", batches, 3, (dir / "sweep.csv").string().c_str()), RLF_OK);
  EXPECT_EQ(rlf_pipeline_sweep(r, "gpu_count", batches, 3, (dir / "x.csv").string().c_str()), RLF_ERR_ARGUMENT);
  rlf_pipeline_free(r);

  EXPECT_EQ(rlf_pipeline_preset("mt", &r), RLF_ERR_CONFIG);
  EXPECT_EQ(rlf_pipeline_load((kConfigs + "/pipeline_asr.cfg").c_str(), &r), RLF_OK);
  EXPECT_NEAR(rlf_pipeline_total(r), 54.6, 1e-9);
  rlf_pipeline_free(r);
}

TEST(CApi, GenDataLongSubset) {
  auto c = load("world.cfg");
  rlf_world* w = nullptr;
  ASSERT_EQ(rlf_world_create(c.get(), &w), RLF_OK);
  const auto out = scratch("gen") / "d2.jsonl";
  ASSERT_EQ(rlf_gen_data(w, "asr", "D2", 100, 7, out.string().c_str()), RLF_OK);
  EXPECT_EQ(rlf_gen_data(w, "asr", "D7", 1, 7, out.string().c_str()), RLF_ERR_CONFIG);
  EXPECT_STREQ(rlf_last_error_key(), "subset");
  rlf_world_free(w);

  const std::size_t long_threshold = std::stoul(get(c.get(), "world.long_threshold"));
  std::ifstream is(out);
  std::string line;
  ASSERT_TRUE(std::getline(is, line));
  EXPECT_EQ(nlohmann::json::parse(line)["world"]["seed"], 7);
  std::size_t n = 0;
  while (std::getline(is, line)) {
    const auto j = nlohmann::json::parse(line);
    EXPECT_GT(j["condition"].size(), long_threshold);
    ++n;
  }
  EXPECT_EQ(n, 100u);
}

TEST(CApi, CheckpointsAreBoundToTheirWorld) {
  auto c = load("smoke_asr.cfg");
  const auto dir = scratch("ckpt");
  const auto ckpt = (dir / "sft.ckpt").string();
  ASSERT_EQ(rlf_pretrain_policy(c.get(), ckpt.c_str()), RLF_OK) << rlf_last_error();

  rlf_policy* p = nullptr;
  ASSERT_EQ(rlf_policy_load(ckpt.c_str(), &p), RLF_OK);
  const int32_t cond[] = {3, 4, 5, 6, 7, 8};
  std::size_t len = 0;
  ASSERT_EQ(rlf_policy_decode(p, cond, 6, 10, nullptr, 0, &len), RLF_OK);
  EXPECT_GE(len, 1u);
  EXPECT_LE(len, 10u);
  rlf_policy_free(p);

  const auto eval_json = (dir / "eval.json").string();
  ASSERT_EQ(rlf_eval(c.get(), ckpt.c_str(), nullptr, eval_json.c_str()), RLF_OK) << rlf_last_error();
  EXPECT_TRUE(fs::exists(dir / "eval.utterances.jsonl"));

  ASSERT_EQ(rlf_config_set(c.get(), "world.seed", "8"), RLF_OK);
  EXPECT_EQ(rlf_eval(c.get(), ckpt.c_str(), nullptr, eval_json.c_str()), RLF_ERR_CONFIG);
  EXPECT_STREQ(rlf_last_error_key(), "world.seed");

  EXPECT_EQ(rlf_policy_load((dir / "missing.ckpt").string().c_str(), &p), RLF_ERR_RUNTIME);
  std::ofstream(dir / "junk.ckpt") << "not a checkpoint";
  EXPECT_EQ(rlf_policy_load((dir / "junk.ckpt").string().c_str(), &p), RLF_ERR_RUNTIME);
}

TEST(CApi, ScoreWritesCorpusRow) {
  const auto dir = scratch("score");
  {
    std::ofstream os(dir / "pairs.jsonl");
    os << R"({"ref":[5,6,7,8],"hyp":[5,6,7,8]})" << '\n';
    os << R"({"ref":[5,6,7,8],"hyp":[5,9,7]})" << '\n';
    os << R"({"ref":[5,6],"hyp":[5,6,5,6,5,6,5,6,5,6]})" << '\n';
  }
  auto c = load("asr_grpo_r12_d0.cfg");
  const auto csv = (dir / "scores.csv").string();
  ASSERT_EQ(rlf_score(c.get(), (dir / "pairs.jsonl").string().c_str(), csv.c_str()), RLF_OK) << rlf_last_error();
  std::ifstream is(csv);
  std::vector<std::string> lines;
  for (std::string l; std::getline(is, l);) lines.push_back(l);
  ASSERT_EQ(lines.size(), 5u);
  EXPECT_EQ(lines[0], "index,ref_len,sub,ins,del,wer,r1,r2_flagged,r3,combined");
  EXPECT_EQ(lines[1].substr(0, 12), "0,4,0,0,0,0,");
  EXPECT_EQ(lines[3].substr(lines[3].rfind(',') + 1), "-1");  // looping hypothesis flagged
  // Corpus WER = (0 + 2 + 8) / (4 + 4 + 2).
  EXPECT_NE(lines[4].find(",1,"), std::string::npos) << lines[4];
  EXPECT_EQ(rlf_score(c.get(), (dir / "absent.jsonl").string().c_str(), csv.c_str()), RLF_ERR_RUNTIME);
}
