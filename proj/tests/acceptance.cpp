// SPDX-FileCopyrightText: Copyright (c) 2026 The rlforge Authors
// SPDX-License-Identifier: Apache-2.0

// End-to-end acceptance run: one PASS/FAIL line per criterion. The exit
// status is nonzero when a criterion could not be evaluated (exception), or
// with --strict when any criterion fails. Criteria 7 and 8 train real
// models and take several minutes on one core.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "rlforge/pipeline.hpp"
#include "rlforge/rng.hpp"
#include "rlforge/trainer.hpp"

namespace ad = rlforge::ad;
namespace df = rlforge::diffro;
namespace gr = rlforge::grpo;
namespace pl = rlforge::policy;
namespace pp = rlforge::pipeline;
namespace rw = rlforge::rewards;
namespace tr = rlforge::trainer;
namespace wd = rlforge::world;
namespace fs = std::filesystem;
using rlforge::Rng;
using rlforge::TokenSequence;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double median3(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

bool bitwise_equal(double a, double b) { return std::memcmp(&a, &b, sizeof a) == 0; }

// ---- 1: gradient fidelity -------------------------------------------------

// Central differences over every coordinate of every parameter; worst
// relative error with a small absolute floor on the denominator.
double fd_worst(ad::Graph& g, ad::Var out, const std::vector<std::string>& names) {
  g.forward();
  const auto analytic = g.gradient(out).gradients;
  double worst = 0.0;
  const double h = 1e-5;
  for (const auto& name : names) {
    const ad::Array base = g.leaf(name);
    ad::Array probe = base;
    for (std::size_t i = 0; i < base.size(); ++i) {
      probe[i] = base[i] + h;
      g.bind(name, probe);
      g.forward();
      const double up = g.scalar(out);
      probe[i] = base[i] - h;
      g.bind(name, probe);
      g.forward();
      const double down = g.scalar(out);
      probe[i] = base[i];
      const double numeric = (up - down) / (2 * h);
      const double a = analytic.at(name)[i];
      worst = std::max(worst, std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8}));
    }
    g.bind(name, base);
  }
  g.forward();
  return worst;
}

pl::ArchConfig arch(std::size_t cond, std::size_t out, rlforge::Token eos) {
  pl::ArchConfig a;
  a.cond_vocab = cond;
  a.out_vocab = out;
  a.out_eos = eos;
  a.hidden = 6;
  a.ffn = 6;
  a.context = 16;
  return a;
}

std::vector<std::string> names_of(const pl::Policy& p) {
  std::vector<std::string> out;
  for (const auto& [k, v] : p.params) out.push_back(k);
  return out;
}

Outcome criterion1() {
  const auto t0 = Clock::now();
  const auto tts = arch(10, 12, 0);
  const auto rec = arch(12, 10, 2);
  const auto policy = pl::init_policy(tts, 21);
  const auto reference = pl::init_policy(tts, 22);
  const auto snapshot = pl::copy_as(policy, pl::Role::Snapshot);
  const auto rm = pl::init_policy(rec, 23);
  const TokenSequence text{3, 5, 4, 2};
  const auto names = names_of(policy);
  std::array<double, 5> worst{};

  {
    ad::Graph g;
    auto pv = pl::bind_params(g, policy, true, "");
    const auto loss = pl::sft_loss(g, pv, tts, {text, {4, 7, 1, 9, 3, 0}});
    worst[0] = fd_worst(g, loss, names);
  }

  pl::RolloutGroup group = pl::sample_group(snapshot, text, 4, 1.0, 6, 5);
  group.rewards = {1.0, 0.2, 0.6, 0.0};
  group.validity.assign(4, true);
  gr::assign_advantages(group);
  gr::GrpoConfig gc;
  gc.kl_beta = 0.3;
  {
    auto gl = gr::build_group_loss(policy, reference, snapshot, group, gc);
    worst[1] = fd_worst(gl->graph, gl->terms.loss, names);
  }
  {
    ad::Graph g;
    auto pv = pl::bind_params(g, policy, true, "");
    auto rv = pl::bind_params(g, rm, false, "rm.");
    const auto l = df::diffro_loss_on_response(g, pv, tts, rv, rec, text, {4, 7, 1, 9, 3, 0}, df::FrameMode::Soft);
    worst[2] = fd_worst(g, l.loss, names);
  }
  {
    ad::Graph g;
    auto pv = pl::bind_params(g, policy, true, "");
    auto rv = pl::bind_params(g, rm, false, "rm.");
    const auto ro = df::gumbel_generate(policy, text, 0.8, 6, 9);
    const auto l = df::diffro_loss_gumbel(g, pv, tts, rv, rec, text, ro, df::FrameMode::Soft);
    worst[3] = fd_worst(g, l.loss, names);
  }
  {
    // GRPO plus lambda-weighted DiffRO terms sharing one set of logits.
    ad::Graph g;
    auto pv = pl::bind_params(g, policy, true, "");
    auto rv = pl::bind_params(g, rm, false, "rm.");
    const auto fwd = gr::forward_group(g, pv, tts, group);
    const auto terms = gr::grpo_loss(g, fwd, group, gr::group_logprobs(snapshot, group),
                                     gr::group_logprobs(reference, group), gc);
    ad::Var total = terms.loss;
    for (std::size_t i = 0; i < group.size(); ++i) {
      const auto d = df::diffro_loss_from_logits(g, fwd.logits[i], group.responses[i], rv, rec, text,
                                                 df::FrameMode::Soft);
      total = g.add(total, g.scale(d.loss, 0.5 / static_cast<double>(group.size())));
    }
    worst[4] = fd_worst(g, total, names);
  }
  const double secs = seconds_since(t0);
  const double max_err = *std::max_element(worst.begin(), worst.end());
  return {max_err < 1e-4 && secs < 30.0,
          fmt("max rel err sft %.1e grpo %.1e diffro %.1e gumbel %.1e combined %.1e; %.1fs", worst[0], worst[1],
              worst[2], worst[3], worst[4], secs)};
}

// ---- 2-6: closed-form invariants ----------------------------------------

Outcome criterion2() {
  Rng rng(2);
  double worst_mean = 0.0, worst_std = 0.0;
  std::size_t degenerate = 0, degenerate_bad = 0;
  for (int k = 0; k < 100000; ++k) {
    const std::size_t G = 2 + rng.below(15);
    std::vector<double> r(G);
    const bool flat = rng.uniform() < 0.05;
    const double c = rng.normal();
    for (auto& x : r) x = flat ? c : rng.normal() * (0.01 + 5 * rng.uniform());
    const auto a = gr::advantages(r);
    if (oracle::population_std(r) < 1e-6) {
      ++degenerate;
      for (double v : a.advantages) degenerate_bad += v != 0.0;
      continue;
    }
    double m = 0.0;
    for (double v : a.advantages) m += v;
    m /= static_cast<double>(G);
    worst_mean = std::max(worst_mean, std::abs(m));
    worst_std = std::max(worst_std, std::abs(oracle::population_std(a.advantages) - 1.0));
  }
  return {worst_mean < 1e-9 && worst_std < 1e-6 && degenerate > 0 && degenerate_bad == 0,
          fmt("max |mean| %.1e, max |std-1| %.1e, %zu degenerate groups all zero: %s", worst_mean, worst_std,
              degenerate, degenerate_bad ? "no" : "yes")};
}

Outcome criterion3() {
  Rng rng(3);
  std::size_t above = 0, unclipped_mismatch = 0, in_band = 0;
  for (int k = 0; k < 100000; ++k) {
    const double r = std::exp(rng.normal() * 0.6);
    const double a = rng.normal() * 2.0;
    const double eps = 0.01 + 0.49 * rng.uniform();
    const double s = gr::clipped_surrogate(r, a, eps);
    const double bound = std::min(r * a, std::clamp(r, 1 - eps, 1 + eps) * a);
    above += s > bound;
    if (r >= 1 - eps && r <= 1 + eps) {
      ++in_band;
      unclipped_mismatch += s != r * a;
    }
  }
  return {above == 0 && unclipped_mismatch == 0 && in_band > 0,
          fmt("%zu above the clipped bound, %zu of %zu in-band triples differ from r*A", above, unclipped_mismatch,
              in_band)};
}

Outcome criterion4() {
  Rng rng(4);
  std::size_t negative = 0;
  for (int k = 0; k < 1000000; ++k) {
    const double cur = -20.0 * rng.uniform();
    const double ref = -20.0 * rng.uniform();
    negative += gr::kl_estimator(cur, ref) < 0.0;
  }
  std::size_t nonzero = 0;
  for (int k = 0; k < 1000; ++k) {
    const double lp = -30.0 * rng.uniform();
    nonzero += gr::kl_estimator(lp, lp) != 0.0;
  }
  return {negative == 0 && nonzero == 0, fmt("%zu negative of 1e6, %zu nonzero at equality", negative, nonzero)};
}

Outcome criterion5() {
  Rng rng(5);
  std::size_t mismatches = 0;
  for (int k = 0; k < 10000; ++k) {
    const std::size_t n = 1 + rng.below(12), m = rng.below(13);
    const std::size_t vocab = 2 + rng.below(5);
    TokenSequence ref(n), hyp(m);
    for (auto& t : ref) t = static_cast<rlforge::Token>(rng.below(vocab));
    for (auto& t : hyp) t = static_cast<rlforge::Token>(rng.below(vocab));
    const auto got = rw::wer(ref, hyp);
    const auto want = oracle::naive_wer(std::vector<int>(ref.begin(), ref.end()), std::vector<int>(hyp.begin(), hyp.end()));
    const double want_wer = static_cast<double>(want.s + want.i + want.d) / static_cast<double>(n);
    mismatches += got.substitutions != want.s || got.insertions != want.i || got.deletions != want.d ||
                  std::abs(got.wer - want_wer) > 1e-15;
  }
  return {mismatches == 0, fmt("%zu of 10000 pairs disagree with the full-table DP", mismatches)};
}

Outcome criterion6() {
  std::vector<std::string> failures;
  const TokenSequence ref{5, 6, 7, 8};
  const TokenSequence looping{5, 6, 5, 6, 5, 6, 5, 6, 5, 6};
  const TokenSequence kw{};
  const auto hallu = rw::score_asr(ref, looping, kw, {rw::Rule::R1, rw::Rule::R2});
  if (hallu.combined != -1.0) failures.push_back("R2 override");
  const auto hallu3 = rw::score_asr(ref, looping, TokenSequence{6}, {rw::Rule::R1, rw::Rule::R2, rw::Rule::R3});
  if (hallu3.combined != -1.0) failures.push_back("R2 override with R3");

  const std::vector<std::size_t> lens{8, 10, 12};
  const auto dur = rw::tts_duration_reward(lens);
  if (std::abs(dur[0] + 0.2) > 1e-15 || dur[1] != 0.0 || std::abs(dur[2] + 0.2) > 1e-15)
    failures.push_back("duration [8,10,12]");

  const std::vector<TokenSequence> same(4, TokenSequence{3, 9, 4, 4, 1});
  const std::vector<std::vector<double>> pitch(4, std::vector<double>(5, 0.3));
  for (double v : rw::tts_diversity_reward(same, pitch))
    if (v != 0.0) failures.push_back("diversity of identical group");

  std::string detail = "override -1, duration [-0.2, 0, -0.2], identical-group diversity 0";
  if (!failures.empty()) {
    detail = "failed:";
    for (const auto& f : failures) detail += " " + f + ";";
  }
  return {failures.empty(), detail};
}

// ---- 7: ASR direction -----------------------------------------------------

tr::RunConfig asr_config(std::uint64_t seed) {
  tr::RunConfig c;
  c.seed = seed;
  c.steps = 500;
  c.pretrain.sft.steps = 400;
  return c;
}

struct Criterion7 {
  Outcome wer, hallucination, keywords;
};

Criterion7 criterion7() {
  const auto t0 = Clock::now();
  std::vector<double> base_wer, r1_wer, r1_hallu, r12_hallu, r1_kw, r13_kw;
  for (std::uint64_t seed : {1, 2, 3}) {
    auto c1 = asr_config(seed);
    // Pools for both subsets; the baseline and test set do not depend on the mix.
    auto pools = c1;
    pools.data = {{wd::Subset::D0, 0.5}, {wd::Subset::D3, 0.5}};
    const auto assets = tr::prepare_assets(pools);

    c1.rules = {rw::Rule::R1};
    const auto run1 = tr::train(c1, assets);
    auto c12 = c1;
    c12.rules = {rw::Rule::R1, rw::Rule::R2};
    const auto run12 = tr::train(c12, assets);
    auto c13 = c1;
    c13.rules = {rw::Rule::R1, rw::Rule::R3};
    c13.data = {{wd::Subset::D3, 1.0}};
    const auto run13 = tr::train(c13, assets);

    base_wer.push_back(run1.baseline().wer());
    r1_wer.push_back(run1.evals.back().wer());
    r1_kw.push_back(run1.evals.back().splits.overall.keyword_recall());
    r13_kw.push_back(run13.evals.back().splits.overall.keyword_recall());

    // Noise-heavy held-out set: channel rates tripled.
    auto noisy = c1;
    noisy.eval.noise_scale = 3.0;
    const auto test = tr::held_out_test_set(noisy, assets.world);
    const std::uint64_t eval_seed = rlforge::derive_seed(seed, 0x7b);
    r1_hallu.push_back(tr::evaluate(run1.final_policy, test, assets.world, noisy, nullptr, eval_seed)
                           .sampled_hallucination_rate);
    r12_hallu.push_back(tr::evaluate(run12.final_policy, test, assets.world, noisy, nullptr, eval_seed)
                            .sampled_hallucination_rate);
  }
  const double secs = seconds_since(t0);
  const bool budget = secs < 1800.0;
  Criterion7 out;
  out.wer = {median3(r1_wer) < median3(base_wer) && budget,
             fmt("median WER %.4f (GRPO R1, D0, step 500) vs baseline %.4f", median3(r1_wer), median3(base_wer))};
  out.hallucination = {median3(r12_hallu) < median3(r1_hallu) && budget,
                       fmt("median sampled hallucination rate on noise x3 set: R1+R2 %.4f vs R1 %.4f",
                           median3(r12_hallu), median3(r1_hallu))};
  out.keywords = {median3(r13_kw) > median3(r1_kw) && budget,
                  fmt("median keyword recall R1+R3 on D3 %.4f vs R1 on D0 %.4f; all ASR runs %.0fs",
                      median3(r13_kw), median3(r1_kw), secs)};
  return out;
}

// ---- 8: TTS direction -----------------------------------------------------

struct Criterion8 {
  Outcome diffro, filter, length;
};

// Mean absolute departure of the eval mean length from the baseline's.
double length_drift(const tr::RunReport& r) {
  double s = 0.0;
  for (std::size_t k = 1; k < r.evals.size(); ++k) s += std::abs(r.evals[k].mean_len - r.baseline().mean_len);
  return s / static_cast<double>(r.evals.size() - 1);
}

Criterion8 criterion8() {
  std::vector<double> base, diffro, naive_best, filtered_best, drift1, drift12;
  for (std::uint64_t seed : {1, 2, 3}) {
    tr::RunConfig c;
    c.task = wd::Task::Tts;
    c.seed = seed;
    c.steps = 300;
    c.eval.test_size = 100;
    const auto assets = tr::prepare_assets(c);

    auto run = [&](tr::Method m, rw::RuleSet rules) {
      auto cfg = c;
      cfg.method = m;
      cfg.rules = std::move(rules);
      return tr::train(cfg, assets);
    };
    const auto d = run(tr::Method::Diffro, {rw::Rule::R1});
    base.push_back(d.baseline().r_asr);
    diffro.push_back(d.evals.back().r_asr);
    naive_best.push_back(run(tr::Method::Combined, {rw::Rule::R1}).best_score);
    filtered_best.push_back(run(tr::Method::CombinedFiltered, {rw::Rule::R1}).best_score);
    drift1.push_back(length_drift(run(tr::Method::Grpo, {rw::Rule::R1})));
    drift12.push_back(length_drift(run(tr::Method::Grpo, {rw::Rule::R1, rw::Rule::R2})));
  }
  Criterion8 out;
  out.diffro = {median3(diffro) > median3(base),
                fmt("median R_ASR DiffRO %.3f vs baseline %.3f", median3(diffro), median3(base))};
  out.filter = {median3(naive_best) < median3(filtered_best),
                fmt("median best R_ASR naive combined %.3f vs combined_filtered %.3f", median3(naive_best),
                    median3(filtered_best))};
  out.length = {median3(drift12) < median3(drift1),
                fmt("median mean-length drift R1+R2 %.3f vs R1 %.3f", median3(drift12), median3(drift1))};
  return out;
}

// ---- 9: filter exactness ----------------------------------------------------

Outcome criterion9() {
  tr::RunConfig c;
  c.task = wd::Task::Tts;
  c.model.hidden = 8;
  c.model.ffn = 8;
  const auto world = wd::build_world(c.world);
  const auto policy = pl::init_policy(tr::policy_arch(world, wd::Task::Tts, c.model), 3);
  const auto reference = pl::copy_as(policy, pl::Role::Reference);
  const auto snapshot = pl::copy_as(policy, pl::Role::Snapshot);
  const df::RewardModel rm{pl::init_policy(df::reward_model_arch(world, 8, 8), 4), 0.0, 0.0};

  tr::StepBatch batch;
  Rng rng(9);
  for (std::uint64_t k = 0; k < 6; ++k) {
    const TokenSequence text = wd::random_text(world, 100 + k);
    auto g = pl::sample_group(snapshot, text, 6, 1.0, 16, 200 + k);
    g.rewards.resize(g.size());
    for (auto& r : g.rewards) r = rng.normal();
    g.validity.resize(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) g.validity[i] = rng.uniform() < 0.7;
    gr::assign_advantages(g);
    batch.groups.push_back(std::move(g));
    batch.texts.push_back(text);
  }

  auto filtered = tr::build_step_loss(policy, reference, snapshot, &rm, batch, tr::Method::CombinedFiltered, c.train);
  std::size_t excluded = 0, leaked = 0, included_zero = 0;
  if (filtered->diffro_term) {
    filtered->graph.gradient(*filtered->diffro_term);
    for (std::size_t k = 0; k < batch.groups.size(); ++k) {
      const auto& g = batch.groups[k];
      for (std::size_t i = 0; i < g.size(); ++i) {
        const bool keep = g.validity[i] && g.advantages[i] > 0.0;
        bool any = false;
        for (double v : filtered->graph.grad(filtered->frames[k][i]).data) {
          any |= !bitwise_equal(v, 0.0);
          if (!keep && !bitwise_equal(v, 0.0)) ++leaked;
        }
        if (keep) included_zero += !any;
        excluded += !keep;
      }
    }
  }

  // Empty filter: no positive-advantage response is valid.
  for (auto& g : batch.groups)
    for (std::size_t i = 0; i < g.size(); ++i)
      if (g.advantages[i] > 0.0) g.validity[i] = false;
  auto grpo = tr::build_step_loss(policy, reference, snapshot, &rm, batch, tr::Method::Grpo, c.train);
  auto empty = tr::build_step_loss(policy, reference, snapshot, &rm, batch, tr::Method::CombinedFiltered, c.train);
  const bool same_loss = bitwise_equal(grpo->graph.scalar(grpo->loss), empty->graph.scalar(empty->loss));
  const bool same_grad = grpo->graph.gradient(grpo->loss).gradients == empty->graph.gradient(empty->loss).gradients;

  return {filtered->diffro_term && excluded > 0 && leaked == 0 && included_zero == 0 && same_loss && same_grad,
          fmt("%zu excluded responses, %zu nonzero masked entries; empty filter loss %s, gradients %s", excluded,
              leaked, same_loss ? "bitwise equal" : "differ", same_grad ? "bitwise equal" : "differ")};
}

// ---- 10: pipeline timing ------------------------------------------------------

struct PublishedTiming {
  double asr_step = 0, asr_rtf = 0, tts_step = 0;
  std::size_t tts_batch = 0;
};

PublishedTiming published_timing() {
  std::ifstream is(RLFORGE_PAPER_PATH);
  std::stringstream ss;
  ss << is.rdbuf();
  const std::string text = ss.str();
  PublishedTiming p;
  std::smatch m;
  if (std::regex_search(text, m, std::regex(R"(one training step consumes about ([0-9.]+) seconds)")))
    p.asr_step = std::stod(m[1]);
  if (std::regex_search(text, m, std::regex(R"(\(RTF\) is about ([0-9.]+))"))) p.asr_rtf = std::stod(m[1]);
  if (std::regex_search(text, m, std::regex(R"(one training step is ([0-9.]+)s with ([0-9]+) batchsize)"))) {
    p.tts_step = std::stod(m[1]);
    p.tts_batch = std::stoul(m[2]);
  }
  return p;
}

Outcome criterion10() {
  const auto pub = published_timing();
  if (pub.asr_step == 0 || pub.asr_rtf == 0 || pub.tts_step == 0) return {false, "published timings not found"};
  const auto asr_cfg = pp::asr_preset();
  const auto tts_cfg = pp::tts_preset(pub.tts_batch);
  const auto asr = pp::simulate_step(asr_cfg.stages, asr_cfg.audio_seconds);
  const auto tts = pp::simulate_step(tts_cfg.stages, tts_cfg.audio_seconds);
  double sum = 0.0;
  for (double d : asr.durations) sum += d;
  const bool asr_ok = std::abs(asr.total - pub.asr_step) < 1e-9 && sum == asr.total &&
                      std::abs(asr.rtf - pub.asr_step / asr_cfg.audio_seconds) < 1e-12 && std::abs(asr.rtf - 0.0152) <= 1e-4 &&
                      std::abs(asr.rtf - pub.asr_rtf) < 5e-4;
  const bool tts_ok = std::abs(tts.total - pub.tts_step) < 1e-9 && tts.dominant_stage() == "decode_vocode";
  const bool exclusive = pp::validate_exclusive(asr) && pp::validate_exclusive(tts);
  const bool small_sync = asr.sync_switch_share() < 0.10 && tts.sync_switch_share() < 0.10;
  return {asr_ok && tts_ok && exclusive && small_sync,
          fmt("ASR %.4f s rtf %.4f (published %.1f s, %.3f); TTS %.4f s at batch %zu (published %.2f s); "
              "sync+switch %.1f%% / %.1f%%",
              asr.total, asr.rtf, pub.asr_step, pub.asr_rtf, tts.total, pub.tts_batch, pub.tts_step,
              100 * asr.sync_switch_share(), 100 * tts.sync_switch_share())};
}

// ---- 11: determinism through the CLI ------------------------------------

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string("\"") + RLFORGE_CLI_PATH + "\" " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Outcome criterion11() {
  const fs::path work = fs::temp_directory_path() / "rlforge_acceptance_det";
  fs::remove_all(work);
  fs::create_directories(work);
  const std::string cfg = RLFORGE_CONFIG_DIR "/smoke_tts.cfg";
  const std::string asr_cfg = RLFORGE_CONFIG_DIR "/smoke_asr.cfg";

  std::vector<std::string> differing;
  std::size_t compared = 0;
  auto compare_trees = [&](const fs::path& a, const fs::path& b) {
    for (const auto& e : fs::recursive_directory_iterator(a)) {
      if (!e.is_regular_file() || e.path().filename() == "run.log") continue;
      const auto rel = fs::relative(e.path(), a);
      ++compared;
      if (!fs::exists(b / rel) || slurp(e.path()) != slurp(b / rel)) differing.push_back(rel.string());
    }
  };

  bool ok = true;
  for (int k = 0; k < 2; ++k) {
    const auto dir = work / ("rep" + std::to_string(k));
    const std::string d = "\"" + dir.string() + "\"";
    ok &= run_cli("gen-data -c " + asr_cfg + " --subset D2 --n 20 --out " + d + "/d2.jsonl") == 0;
    ok &= run_cli("pretrain-policy -c " + asr_cfg + " --out " + d + "/asr_sft.ckpt") == 0;
    ok &= run_cli("pretrain-reward -c " + cfg + " --out " + d + "/rm.ckpt") == 0;
    ok &= run_cli("train -q -c " + asr_cfg + " --seed 7 --out " + d + "/runs") == 0;
    ok &= run_cli("train -q -c " + cfg + " --seed 7 --reward-model " + d + "/rm.ckpt --out " + d + "/runs") == 0;
    ok &= run_cli("simulate-pipeline --preset tts --out " + d + "/pipe") == 0;
  }
  if (ok) compare_trees(work / "rep0", work / "rep1");
  std::size_t metrics = 0, ckpts = 0;
  for (const auto& e : fs::recursive_directory_iterator(work / "rep0")) {
    metrics += e.path().filename() == "metrics.csv";
    ckpts += e.path().extension() == ".ckpt";
  }
  std::string detail = fmt("%zu files compared (%zu metrics.csv, %zu checkpoints)", compared, metrics, ckpts);
  if (!ok) detail = "a CLI command failed";
  for (const auto& f : differing) detail += "; differs: " + f;
  fs::remove_all(work);
  return {ok && differing.empty() && metrics == 2 && ckpts >= 6, detail};
}

}  // namespace

int main(int argc, char** argv) {
  const bool strict = argc > 1 && std::string(argv[1]) == "--strict";
  int failed = 0, errors = 0, total = 0;
  auto report = [&](const std::string& id, const Outcome& o) {
    std::printf("%s criterion %s: %s\n", o.pass ? "PASS" : "FAIL", id.c_str(), o.detail.c_str());
    std::fflush(stdout);
    failed += !o.pass;
    ++total;
  };
  auto guarded = [&](const std::string& id, const std::function<Outcome()>& f) {
    try {
      report(id, f());
    } catch (const std::exception& e) {
      report(id, {false, std::string("exception: ") + e.what()});
      ++errors;
    }
  };

  guarded("1", criterion1);
  guarded("2", criterion2);
  guarded("3", criterion3);
  guarded("4", criterion4);
  guarded("5", criterion5);
  guarded("6", criterion6);
  try {
    const auto c7 = criterion7();
    report("7a", c7.wer);
    report("7b", c7.hallucination);
    report("7c", c7.keywords);
  } catch (const std::exception& e) {
    report("7", {false, std::string("exception: ") + e.what()});
    ++errors;
  }
  try {
    const auto c8 = criterion8();
    report("8a", c8.diffro);
    report("8b", c8.filter);
    report("8c", c8.length);
  } catch (const std::exception& e) {
    report("8", {false, std::string("exception: ") + e.what()});
    ++errors;
  }
  guarded("9", criterion9);
  guarded("10", criterion10);
  guarded("11", criterion11);
  std::printf("%d of %d criteria passed\n", total - failed, total);
  if (errors) return 2;
  return strict && failed ? 1 : 0;
}
