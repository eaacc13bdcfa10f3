// SPDX-FileCopyrightText: Copyright (c) 2026 The rlforge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "rlforge/diffro.hpp"
#include "rlforge/errors.hpp"
#include "rlforge/grpo.hpp"
#include "rlforge/policy.hpp"
#include "rlforge/rewards.hpp"
#include "rlforge/world.hpp"

namespace rlforge::trainer {

using rlforge::ConfigError;

enum class Method { Grpo, Diffro, Combined, CombinedFiltered };
const char* to_string(Method m) noexcept;
Method parse_method(const std::string& s);

struct SubsetWeight {
  world::Subset subset = world::Subset::D0;
  double weight = 1.0;
};

struct TrainConfig {
  std::size_t group_size = 8;
  std::size_t groups_per_step = 4;
  double temperature = 1.0;
  std::size_t t_max = 0;  // 0: twice the longest reference plus slack, capped by the context
  double lr = 1e-3;
  double clip_eps = 0.2;
  double kl_beta = 0.04;
  bool temperature_one_ratio = true;
  double lambda_diff = 1.0;
  double tau = 1.0;
  double eps_std = 1e-6;
};

struct EvalConfig {
  std::size_t every = 50;
  std::size_t test_size = 200;
  double noise_scale = 1.0;  // multiplies the channel rates of ASR test conditions
  std::size_t diversity_conditions = 16;  // TTS: conditions sampled for group diversity
  std::size_t sampled_conditions = 200;   // ASR: conditions sampled for the hallucination rate
  double stability_threshold = 0.2;
  rewards::SplitThresholds split;
};

struct PretrainConfig {
  std::size_t pool_size = 2000;
  policy::SftOptions sft;
};

struct ModelConfig {
  std::size_t hidden = 64;
  std::size_t ffn = 64;
  std::size_t context = 128;
};

struct RunConfig {
  world::Task task = world::Task::Asr;
  Method method = Method::Grpo;
  rewards::RuleSet rules = {rewards::Rule::R1};
  rewards::RuleWeights weights;
  rewards::HallucinationParams hallucination;
  world::WorldSpec world;
  std::vector<SubsetWeight> data = {{world::Subset::D0, 1.0}};
  std::size_t pool_size = 1000;  // training samples per subset
  ModelConfig model;
  TrainConfig train;
  EvalConfig eval;
  PretrainConfig pretrain;
  diffro::RewardModelOptions reward_model;
  std::size_t steps = 500;
  std::uint64_t seed = 7;

  void validate() const;  // throws ConfigError
};

// Draws subsets according to the configured mixing weights.
class DataMixer {
 public:
  explicit DataMixer(std::vector<SubsetWeight> weights);
  world::Subset draw(Rng& rng) const;

 private:
  std::vector<SubsetWeight> weights_;
  std::vector<double> probs_;
};

/// Everything a run needs besides its config: the world, training pools,
/// a held-out test set disjoint from them, the SFT baseline and (for TTS)
/// the frozen reward model. Baselines and reward models depend only on the
/// world, pretraining settings and seed, so comparative runs can share them.
struct RunAssets {
  world::World world;
  std::map<world::Subset, std::vector<world::Sample>> pools;
  std::vector<world::Sample> test;
  policy::Policy baseline;
  std::optional<diffro::RewardModel> reward_model;
};

policy::ArchConfig policy_arch(const world::World& w, world::Task task, const ModelConfig& model);

// Target sequence the policy is supervised on: the text for ASR, a noisy
// acoustic rendering (seeded by the sample id) for TTS.
policy::SftPair sft_pair(const world::World& w, world::Task task, const world::Sample& s);

std::vector<world::Sample> make_test_set(const world::World& w, world::Task task, std::size_t n, double noise_scale,
                                         std::uint64_t seed,
                                         const std::map<world::Subset, std::vector<world::Sample>>& exclude);

// Throws std::invalid_argument when a test sample also occurs in a pool.
void check_disjoint(const std::vector<world::Sample>& test,
                    const std::map<world::Subset, std::vector<world::Sample>>& pools, world::Task task);

policy::Policy pretrain_baseline(const world::World& w, world::Task task, const ModelConfig& model,
                                 const PretrainConfig& pretrain, std::uint64_t seed);

// The run's held-out test set: depends on the world, task, pretraining pool
// and seed only, never on the RL data mix.
std::vector<world::Sample> held_out_test_set(const RunConfig& config, const world::World& w);
std::vector<world::Sample> held_out_test_set(const RunConfig& config, const world::World& w,
                                            const std::map<world::Subset, std::vector<world::Sample>>& pretrain);

// Reward model a TTS run would pretrain for itself.
diffro::RewardModelResult pretrain_run_reward_model(const RunConfig& config, const world::World& w);

// Builds missing pieces; supplied baseline / reward model are used as given.
RunAssets prepare_assets(const RunConfig& config, std::optional<policy::Policy> baseline = std::nullopt,
                         std::optional<diffro::RewardModel> reward_model = std::nullopt);

// ---- scoring -------------------------------------------------------------

struct ScoredResponse {
  rewards::RewardBreakdown breakdown;
  rewards::HallucinationFlags flags;
  double tts_r1 = 0.0, tts_r2 = 0.0, tts_r3 = 0.0;
};

// Fills rewards, validity and advantages of an ASR group.
std::vector<ScoredResponse> score_asr_group(policy::RolloutGroup& group, const TokenSequence& ref,
                                            const world::World& w, const RunConfig& config);

// TTS rule rewards: R1 = 1 - WER of the reward model's greedy transcription,
// R2 = duration reward, R3 = diversity reward; combined is their mean.
std::vector<ScoredResponse> score_tts_group(policy::RolloutGroup& group, const TokenSequence& text,
                                            const world::World& w, const diffro::RewardModel& rm,
                                            const RunConfig& config);

TokenSequence transcribe(const diffro::RewardModel& rm, const TokenSequence& acoustic, std::size_t max_len);

// {i : A_i > 0 and response i valid}
std::vector<std::size_t> filter_positive(const policy::RolloutGroup& group);

// ---- one update ----------------------------------------------------------

struct StepBatch {
  std::vector<policy::RolloutGroup> groups;
  std::vector<TokenSequence> texts;                          // reference text per group
  std::vector<std::vector<diffro::GumbelRollout>> gumbel;    // DiffRO-only sampling
};

/// Loss graph of one optimizer step. For DiffRO-bearing methods frames[g][i]
/// holds the straight-through frames of response i in group g whether or not
/// the response is selected, so the gradient mask can be inspected.
struct StepLoss {
  ad::Graph graph;
  policy::ParamVars params;
  ad::Var loss;
  std::optional<ad::Var> grpo_term;
  std::optional<ad::Var> diffro_term;
  std::vector<std::vector<ad::Var>> frames;
  std::vector<std::vector<std::size_t>> selected;
  std::size_t grpo_groups = 0;
  double kl = 0.0;
  double clip_fraction = 0.0;
  bool empty = true;  // nothing to optimize
};

std::unique_ptr<StepLoss> build_step_loss(const policy::Policy& current, const policy::Policy& reference,
                                          const policy::Policy& snapshot, const diffro::RewardModel* rm,
                                          const StepBatch& batch, Method method, const TrainConfig& config);

// ---- evaluation ----------------------------------------------------------

struct EvalMetrics {
  std::size_t step = 0;
  // ASR
  rewards::SplitMetrics splits;
  std::vector<rewards::UtteranceResult> utterances;
  // Flag rate over group_size temperature samples per condition; greedy
  // decoding rarely trips the rules, sampling exposes the tendency.
  double sampled_hallucination_rate = 0.0;
  // TTS
  double r_asr = 0.0;
  double rm_wer = 0.0;
  double mean_len = 0.0;
  double diversity = 0.0;
  // TTS per-utterance values aligned with `utterances`.
  std::vector<double> utterance_r_asr;
  std::vector<double> utterance_len;

  double wer() const { return splits.overall.wer(); }
};

// ASR corpus metrics of given hypotheses (EOS optional) against the test set.
EvalMetrics asr_metrics(const std::vector<world::Sample>& test, const std::vector<TokenSequence>& hypotheses,
                        const world::World& w, const RunConfig& config);

EvalMetrics evaluate(const policy::Policy& p, const std::vector<world::Sample>& test, const world::World& w,
                     const RunConfig& config, const diffro::RewardModel* rm, std::uint64_t seed);

// Higher is better: -WER for ASR, R_ASR for TTS.
double primary_score(world::Task task, const EvalMetrics& m);

// ---- full run ------------------------------------------------------------

struct StepRecord {
  std::size_t step = 0;
  double reward_mean = 0.0;
  double kl = 0.0;
  double clip_fraction = 0.0;
  double loss = 0.0;
  double adv_abs_mean = 0.0;
  double mean_len = 0.0;
  std::size_t skipped_groups = 0;
  std::size_t selected = 0;
  bool updated = false;
};

struct RunReport {
  std::string config_hash;
  std::uint64_t seed = 0;
  std::vector<StepRecord> steps;
  std::vector<EvalMetrics> evals;  // evals.front() is the baseline at step 0
  std::size_t best_step = 0;
  double best_score = 0.0;
  std::optional<std::size_t> stability_step;  // first eval degrading beyond the threshold from the best
  policy::Policy final_policy;
  policy::Policy best_policy;

  const EvalMetrics& baseline() const { return evals.front(); }
  const EvalMetrics& best() const;
};

class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(std::size_t step, const std::string& what)
      : std::runtime_error("step " + std::to_string(step) + ": " + what), step_(step) {}
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

using ProgressFn = std::function<void(const StepRecord&, const EvalMetrics*)>;

RunReport train(const RunConfig& config, const RunAssets& assets, const ProgressFn& progress = {});

}  // namespace rlforge::trainer
