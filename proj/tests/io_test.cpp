// SPDX-FileCopyrightText: Copyright (c) 2026 The rlforge Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <fstream>

#include "rlforge/checkpoint.hpp"
#include "rlforge/config.hpp"
#include "rlforge/rundir.hpp"

namespace ck = rlforge::checkpoint;
namespace cf = rlforge::config;
namespace fs = std::filesystem;
namespace pl = rlforge::policy;
namespace tr = rlforge::trainer;

namespace {

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("rlforge_io_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void write(const fs::path& p, const std::string& text) {
  std::ofstream os(p);
  os << text;
}

}  // namespace

TEST(Checkpoint, RoundTripIsBitExact) {
  pl::ArchConfig arch;
  arch.hidden = 8;
  arch.ffn = 12;
  auto p = pl::init_policy(arch, 5);
  p.params.begin()->second.data[0] = -0.0;
  p.params.begin()->second.data[1] = 1e-310;  // subnormal survives
  const auto c = ck::from_policy(p, {{"world_seed", 7}});
  const auto bytes = ck::encode(c);
  const auto back = ck::decode(bytes);
  EXPECT_EQ(back, c);
  EXPECT_EQ(ck::encode(back), bytes);
  const auto q = ck::to_policy(back);
  EXPECT_EQ(q.arch, p.arch);
  for (const auto& [name, a] : p.params) {
    const auto& b = q.params.at(name);
    ASSERT_EQ(a.shape, b.shape);
    EXPECT_EQ(std::memcmp(a.data.data(), b.data.data(), a.data.size() * sizeof(double)), 0) << name;
  }
  EXPECT_TRUE(std::signbit(q.params.begin()->second.data[0]));
}

TEST(Checkpoint, FileRoundTripAndRewardModelRole) {
  const auto dir = scratch("ckpt");
  rlforge::diffro::RewardModel rm{pl::init_policy(pl::ArchConfig{}, 2), 0.97, 0.8};
  ck::save(dir / "rm.ckpt", ck::from_reward_model(rm));
  EXPECT_FALSE(fs::exists(dir / "rm.ckpt.tmp"));
  const auto c = ck::load(dir / "rm.ckpt");
  EXPECT_EQ(c.role, "reward_model");
  const auto back = ck::to_reward_model(c);
  EXPECT_EQ(back.model.params, rm.model.params);
  EXPECT_EQ(back.model.role, pl::Role::RewardModel);
  EXPECT_DOUBLE_EQ(back.accuracy, 0.97);
  EXPECT_THROW(ck::to_reward_model(ck::from_policy(rm.model)), ck::CheckpointError);
  EXPECT_THROW(ck::load(dir / "absent.ckpt"), ck::CheckpointError);
}

TEST(Checkpoint, RejectsCorruptContainers) {
  const auto bytes = ck::encode(ck::from_policy(pl::init_policy(pl::ArchConfig{}, 1)));
  EXPECT_THROW(ck::decode(bytes.substr(0, bytes.size() - 3)), ck::CheckpointError);
  EXPECT_THROW(ck::decode(bytes + "x"), ck::CheckpointError);
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(ck::decode(bad_magic), ck::CheckpointError);
  auto bad_version = bytes;
  bad_version[8] = 9;
  EXPECT_THROW(ck::decode(bad_version), ck::CheckpointError);

  auto c = ck::decode(bytes);
  c.arrays.erase(c.arrays.begin());
  EXPECT_THROW(ck::to_policy(c), ck::CheckpointError);
}

TEST(Config, ParsesNestedSectionsAndData) {
  const auto flat = cf::parse_flat(R"(
task tts
method combined_filtered
rules "1,2"
steps 120
train {
  lr 5e-4
  group_size 6
  temperature_one_ratio false
}
data {
  D0 0.75
  D1 0.25
}
eval { split { long_min 44 } }
)");
  const auto c = cf::apply(flat);
  EXPECT_EQ(c.task, rlforge::world::Task::Tts);
  EXPECT_EQ(c.method, tr::Method::CombinedFiltered);
  EXPECT_EQ(c.rules.size(), 2u);
  EXPECT_EQ(c.steps, 120u);
  EXPECT_DOUBLE_EQ(c.train.lr, 5e-4);
  EXPECT_EQ(c.train.group_size, 6u);
  EXPECT_FALSE(c.train.temperature_one_ratio);
  ASSERT_EQ(c.data.size(), 2u);
  EXPECT_EQ(c.data[1].subset, rlforge::world::Subset::D1);
  EXPECT_EQ(c.eval.split.long_min, 44u);
}

TEST(Config, ErrorsNameTheKey) {
  auto key_of = [](const std::string& text) {
    try {
      cf::apply(cf::parse_flat(text));
    } catch (const rlforge::ConfigError& e) {
      return e.key();
    }
    return std::string("<none>");
  };
  EXPECT_EQ(key_of("train { lrr 0.1 }"), "train.lrr");
  EXPECT_EQ(key_of("train { lr fast }"), "train.lr");
  EXPECT_EQ(key_of("steps -3"), "steps");
  EXPECT_EQ(key_of("method ppo"), "method");
  EXPECT_EQ(key_of("data { D9 1 }"), "data.D9");
  EXPECT_EQ(key_of("data { D0 0.3 }"), "data");
  EXPECT_EQ(key_of("method diffro"), "method");  // ASR cannot run DiffRO
  EXPECT_EQ(key_of("train { temperature_one_ratio maybe }"), "train.temperature_one_ratio");
  EXPECT_EQ(key_of("task asr"), "<none>");
}

TEST(Config, IncludeIsRelativeAndOverridable) {
  const auto dir = scratch("cfg");
  fs::create_directories(dir / "base");
  write(dir / "base" / "common.cfg", "steps 40\ntrain { lr 0.002 group_size 4 }\n");
  write(dir / "run.cfg", "include \"base/common.cfg\"\ntrain { lr 0.003 }\n");
  const auto c = cf::load(dir / "run.cfg");
  EXPECT_EQ(c.steps, 40u);
  EXPECT_EQ(c.train.group_size, 4u);
  EXPECT_DOUBLE_EQ(c.train.lr, 0.003);

  write(dir / "loop.cfg", "include \"loop.cfg\"\n");
  EXPECT_THROW(cf::load(dir / "loop.cfg"), rlforge::ConfigError);
  EXPECT_THROW(cf::load(dir / "missing.cfg"), rlforge::ConfigError);
}

TEST(Config, HashIsCanonical) {
  tr::RunConfig a;
  const auto from_text = cf::apply(cf::parse_flat("seed 7\ntrain { lr 1e-3 }"));
  EXPECT_EQ(cf::config_hash(a), cf::config_hash(from_text));
  EXPECT_EQ(cf::config_hash(a).size(), 16u);
  auto b = a;
  b.train.kl_beta = 0.05;
  EXPECT_NE(cf::config_hash(a), cf::config_hash(b));
  // Every registered setting survives a text round trip.
  const auto j = cf::to_json(b);
  cf::FlatConfig flat;
  std::function<void(const nlohmann::json&, const std::string&)> walk = [&](const nlohmann::json& n,
                                                                            const std::string& prefix) {
    for (auto it = n.begin(); it != n.end(); ++it) {
      const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
      if (it->is_object())
        walk(*it, key);
      else if (it->is_string())
        flat[key] = it->get<std::string>();
      else if (it->is_boolean())
        flat[key] = it->get<bool>() ? "true" : "false";
      else
        flat[key] = it->dump();
    }
  };
  walk(j, "");
  EXPECT_EQ(cf::config_hash(cf::apply(flat)), cf::config_hash(b));
}

TEST(RunDir, NameAndEnvironmentRoot) {
  EXPECT_EQ(rlforge::rundir::dir_name("abc", 3), "abc-s3");
  ::setenv("RLFORGE_RUN_DIR", "/tmp/somewhere", 1);
  EXPECT_EQ(rlforge::rundir::default_root(), fs::path("/tmp/somewhere"));
  ::unsetenv("RLFORGE_RUN_DIR");
  EXPECT_EQ(rlforge::rundir::default_root(), fs::path("runs"));
}

TEST(RunDir, WriteAndRenderRecomputesFromLogs) {
  tr::RunConfig c;
  c.model.hidden = 8;
  c.model.ffn = 8;
  c.pool_size = 30;
  c.pretrain.pool_size = 40;
  c.pretrain.sft.steps = 10;
  c.eval.test_size = 15;
  c.eval.every = 2;
  c.eval.sampled_conditions = 3;
  c.train.group_size = 4;
  c.train.groups_per_step = 2;
  c.steps = 3;
  const auto assets = tr::prepare_assets(c);
  const auto dir = scratch("run");
  auto report = tr::train(c, assets);
  rlforge::rundir::write_run(dir / "a", c, report, assets);
  for (const char* f : {"config.json", "metrics.csv", "report.json", "final.ckpt", "best.ckpt"})
    EXPECT_TRUE(fs::exists(dir / "a" / f)) << f;

  std::ifstream is(dir / "a" / "metrics.csv");
  std::string header;
  std::getline(is, header);
  EXPECT_EQ(header, rlforge::rundir::kMetricsHeader);
  EXPECT_TRUE(header.starts_with("step,reward_mean,kl,clip_frac,loss,wer,ins,del,r_asr,mean_len,diversity"));

  const auto r = rlforge::rundir::render({dir / "a"});
  ASSERT_EQ(r.rows.size(), 2u);
  EXPECT_EQ(r.rows[0].method, "-");
  EXPECT_DOUBLE_EQ(r.rows[0].values[0], report.baseline().wer());
  EXPECT_DOUBLE_EQ(r.rows[1].values[0], report.best().wer());
  ASSERT_EQ(r.curves.size(), 1u);

  // Tampering with a per-utterance log is caught by the recomputation.
  const auto log = dir / "a" / rlforge::rundir::utterance_log_name(0);
  std::string text = ck::read_file(log);
  const auto pos = text.find("\"sub\":");
  text.replace(pos, 7, "\"sub\":9");
  write(log, text);
  EXPECT_THROW(rlforge::rundir::render({dir / "a"}), rlforge::rundir::IncompleteRun);
  fs::remove(dir / "a" / "report.json");
  EXPECT_THROW(rlforge::rundir::render({dir / "a"}), rlforge::rundir::IncompleteRun);
}
