// SPDX-FileCopyrightText: Copyright (c) 2026 The rlforge Authors
// SPDX-License-Identifier: Apache-2.0

#include "rlforge/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "rlforge/hash.hpp"
#include "rlforge/optim.hpp"

namespace rlforge::trainer {

namespace {

// Seed streams, kept apart so that adding a consumer never shifts another.
enum Stream : std::uint64_t {
  kPretrainPool = 100,
  kPretrainInit = 101,
  kPretrainSgd = 102,
  kRewardModel = 110,
  kRlPool = 200,
  kTestSet = 300,
  kEval = 400,
  kRollout = 500,
};

std::set<std::string> content_keys(const std::map<world::Subset, std::vector<world::Sample>>& pools,
                                   world::Task task) {
  std::set<std::string> keys;
  for (const auto& [subset, samples] : pools)
    for (const auto& s : samples) keys.insert(world::content_key(task, s.condition, s.text));
  return keys;
}

std::size_t resolve_t_max(const RunConfig& c, const policy::ArchConfig& arch) {
  if (c.train.t_max) return std::min(c.train.t_max, arch.context);
  const std::size_t ref = c.task == world::Task::Asr
                              ? c.world.max_text_len + 1
                              : c.world.max_text_len * c.world.tokens_per_text_symbol + 1;
  return std::min(2 * ref, arch.context);
}

double mean_of(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

ad::Var mean_of(ad::Graph& g, const std::vector<ad::Var>& terms) {
  ad::Var total = terms.front();
  for (std::size_t i = 1; i < terms.size(); ++i) total = g.add(total, terms[i]);
  return terms.size() == 1 ? total : g.scale(total, 1.0 / static_cast<double>(terms.size()));
}

}  // namespace

const char* to_string(Method m) noexcept {
  switch (m) {
    case Method::Grpo: return "grpo";
    case Method::Diffro: return "diffro";
    case Method::Combined: return "combined";
    case Method::CombinedFiltered: return "combined_filtered";
  }
  return "?";
}

Method parse_method(const std::string& s) {
  if (s == "grpo") return Method::Grpo;
  if (s == "diffro") return Method::Diffro;
  if (s == "combined") return Method::Combined;
  if (s == "combined_filtered") return Method::CombinedFiltered;
  throw ConfigError("method", "unknown method '" + s + "' (grpo, diffro, combined, combined_filtered)");
}

void RunConfig::validate() const {
  try {
    world.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError("world", e.what());
  }
  if (method != Method::Grpo && task != world::Task::Tts)
    throw ConfigError("method", std::string(to_string(method)) + " needs the tts task and its reward model");
  if (!rules.contains(rewards::Rule::R1)) throw ConfigError("rules", "R1 must be enabled");
  if (data.empty()) throw ConfigError("data", "no training subsets");
  std::set<world::Subset> seen;
  double total = 0.0;
  for (const auto& sw : data) {
    if (!seen.insert(sw.subset).second) throw ConfigError("data", "subset listed twice");
    if (!(sw.weight >= 0.0)) throw ConfigError("data", "negative mixing weight");
    total += sw.weight;
  }
  if (std::abs(total - 1.0) > 1e-6) throw ConfigError("data", "mixing weights must sum to 1");
  if (pool_size == 0) throw ConfigError("data.pool_size", "must be positive");
  if (model.hidden == 0 || model.ffn == 0) throw ConfigError("model", "layer sizes must be positive");
  if (model.context < 2 * (world.max_text_len * world.tokens_per_text_symbol + 1))
    throw ConfigError("model.context", "too short for the longest utterance");
  if (train.group_size < 2) throw ConfigError("train.group_size", "must be at least 2");
  if (train.groups_per_step == 0) throw ConfigError("train.groups_per_step", "must be positive");
  if (!(train.temperature > 0.0)) throw ConfigError("train.temperature", "must be positive");
  if (!(train.lr > 0.0)) throw ConfigError("train.lr", "must be positive");
  if (!(train.clip_eps > 0.0 && train.clip_eps < 1.0)) throw ConfigError("train.clip_eps", "must lie in (0, 1)");
  if (!(train.kl_beta >= 0.0)) throw ConfigError("train.kl_beta", "must be non-negative");
  if (!(train.lambda_diff >= 0.0)) throw ConfigError("train.lambda_diff", "must be non-negative");
  if (!(train.tau > 0.0)) throw ConfigError("train.tau", "must be positive");
  if (!(train.eps_std > 0.0)) throw ConfigError("train.eps_std", "must be positive");
  if (train.t_max > model.context) throw ConfigError("train.t_max", "exceeds the model context");
  if (eval.every == 0) throw ConfigError("eval.every", "must be positive");
  if (eval.test_size == 0) throw ConfigError("eval.test_size", "must be positive");
  if (!(eval.noise_scale >= 0.0)) throw ConfigError("eval.noise_scale", "must be non-negative");
  if (!(eval.stability_threshold > 0.0)) throw ConfigError("eval.stability_threshold", "must be positive");
  if (pretrain.pool_size == 0) throw ConfigError("pretrain.pool_size", "must be positive");
  if (pretrain.sft.batch == 0) throw ConfigError("pretrain.batch", "must be positive");
  if (!(pretrain.sft.lr > 0.0)) throw ConfigError("pretrain.lr", "must be positive");
  if (task == world::Task::Tts && reward_model.target_accuracy > 1.0)
    throw ConfigError("reward_model.target_accuracy", "must not exceed 1");
}

DataMixer::DataMixer(std::vector<SubsetWeight> weights) : weights_(std::move(weights)) {
  if (weights_.empty()) throw std::invalid_argument("DataMixer: no subsets");
  for (const auto& w : weights_) probs_.push_back(w.weight);
}

world::Subset DataMixer::draw(Rng& rng) const { return weights_[rng.categorical(probs_)].subset; }

policy::ArchConfig policy_arch(const world::World& w, world::Task task, const ModelConfig& model) {
  policy::ArchConfig a;
  if (task == world::Task::Asr) {
    a.cond_vocab = w.acoustic_vocab();
    a.out_vocab = w.text_vocab();
    a.out_eos = text::kEos;
  } else {
    a.cond_vocab = w.text_vocab();
    a.out_vocab = w.acoustic_vocab();
    a.out_eos = acoustic::kEos;
  }
  a.hidden = model.hidden;
  a.ffn = model.ffn;
  a.context = model.context;
  return a;
}

policy::SftPair sft_pair(const world::World& w, world::Task task, const world::Sample& s) {
  if (task == world::Task::Asr) return {s.condition, s.text};
  Fnv1a h;
  h.update(s.id);
  return {s.condition, world::synthesize_utterance(w, s.text, true, h.digest())};
}

std::vector<world::Sample> make_test_set(const world::World& w, world::Task task, std::size_t n, double noise_scale,
                                         std::uint64_t seed,
                                         const std::map<world::Subset, std::vector<world::Sample>>& exclude) {
  auto used = content_keys(exclude, task);
  world::ChannelRates rates = w.channel();
  rates.p_sub = std::min(1.0, rates.p_sub * noise_scale);
  rates.p_ins = std::min(1.0, rates.p_ins * noise_scale);
  rates.p_del = std::min(1.0, rates.p_del * noise_scale);
  std::vector<world::Sample> out;
  for (std::uint64_t attempt = 0; out.size() < n; ++attempt) {
    if (attempt > 1000 * n + 1000) throw world::DatasetError("cannot draw a disjoint test set");
    const std::uint64_t s = derive_seed(seed, attempt);
    TokenSequence text_seq = world::random_text(w, derive_seed(s, 1));
    TokenSequence clean = world::synthesize_utterance(w, text_seq, false, 0);
    TokenSequence utterance = world::apply_channel(w, clean, rates, derive_seed(s, 2));
    auto sample = world::make_sample(w, task, world::Subset::D0, utterance, std::move(text_seq));
    if (!used.insert(world::content_key(task, sample.condition, sample.text)).second) continue;
    out.push_back(std::move(sample));
  }
  return out;
}

void check_disjoint(const std::vector<world::Sample>& test,
                    const std::map<world::Subset, std::vector<world::Sample>>& pools, world::Task task) {
  const auto keys = content_keys(pools, task);
  for (const auto& s : test)
    if (keys.contains(world::content_key(task, s.condition, s.text)))
      throw std::invalid_argument("test sample " + s.id + " also occurs in the training data");
}

namespace {

std::vector<world::Sample> pretrain_pool(const world::World& w, world::Task task, const PretrainConfig& pretrain,
                                         std::uint64_t seed) {
  world::DatasetOptions o;
  o.task = task;
  return world::generate_dataset(w, world::Subset::D0, pretrain.pool_size, derive_seed(seed, kPretrainPool), o);
}

}  // namespace

policy::Policy pretrain_baseline(const world::World& w, world::Task task, const ModelConfig& model,
                                 const PretrainConfig& pretrain, std::uint64_t seed) {
  std::vector<policy::SftPair> pairs;
  for (const auto& s : pretrain_pool(w, task, pretrain, seed)) pairs.push_back(sft_pair(w, task, s));
  policy::Policy p = policy::init_policy(policy_arch(w, task, model), derive_seed(seed, kPretrainInit));
  policy::SftOptions sft = pretrain.sft;
  sft.seed = derive_seed(seed, kPretrainSgd);
  policy::sft_pretrain(p, pairs, sft);
  return p;
}

std::vector<world::Sample> held_out_test_set(const RunConfig& config, const world::World& w,
                                            const std::map<world::Subset, std::vector<world::Sample>>& pretrain) {
  return make_test_set(w, config.task, config.eval.test_size, config.eval.noise_scale,
                       derive_seed(config.seed, kTestSet), pretrain);
}

std::vector<world::Sample> held_out_test_set(const RunConfig& config, const world::World& w) {
  std::map<world::Subset, std::vector<world::Sample>> pretrain;
  pretrain[world::Subset::D0] = pretrain_pool(w, config.task, config.pretrain, config.seed);
  return held_out_test_set(config, w, pretrain);
}

diffro::RewardModelResult pretrain_run_reward_model(const RunConfig& config, const world::World& w) {
  auto o = config.reward_model;
  o.seed = derive_seed(config.reward_model.seed, config.seed + kRewardModel);
  return diffro::pretrain_reward_model(w, o);
}

RunAssets prepare_assets(const RunConfig& config, std::optional<policy::Policy> baseline,
                         std::optional<diffro::RewardModel> reward_model) {
  config.validate();
  RunAssets a{world::build_world(config.world), {}, {}, {}, std::nullopt};
  // The test set depends only on the world, the pretraining pool and the seed,
  // so runs that differ in their RL data are evaluated on identical samples.
  std::map<world::Subset, std::vector<world::Sample>> pretrain;
  pretrain[world::Subset::D0] = pretrain_pool(a.world, config.task, config.pretrain, config.seed);
  a.test = held_out_test_set(config, a.world, pretrain);
  std::map<world::Subset, std::vector<world::Sample>> test_pool{{world::Subset::D0, a.test}};
  const auto test_keys = content_keys(test_pool, config.task);

  world::DatasetOptions o;
  o.task = config.task;
  o.repetition = config.hallucination;
  for (const auto& sw : config.data) {
    auto drawn = world::generate_dataset(a.world, sw.subset, config.pool_size + config.pool_size / 10 + 10,
                                         derive_seed(config.seed, kRlPool + static_cast<std::uint64_t>(sw.subset)), o);
    std::erase_if(drawn, [&](const world::Sample& s) {
      return test_keys.contains(world::content_key(config.task, s.condition, s.text));
    });
    if (drawn.size() < config.pool_size)
      throw world::DatasetError(std::string("too many collisions with the test set in subset ") +
                                world::to_string(sw.subset));
    drawn.resize(config.pool_size);
    a.pools[sw.subset] = std::move(drawn);
  }
  auto all = a.pools;
  auto& d0 = all[world::Subset::D0];
  d0.insert(d0.end(), pretrain[world::Subset::D0].begin(), pretrain[world::Subset::D0].end());
  check_disjoint(a.test, all, config.task);

  if (baseline) {
    if (baseline->arch != policy_arch(a.world, config.task, config.model))
      throw ConfigError("model", "supplied baseline does not match the configured architecture");
    a.baseline = std::move(*baseline);
  } else {
    a.baseline = pretrain_baseline(a.world, config.task, config.model, config.pretrain, config.seed);
  }
  a.baseline.role = policy::Role::Current;

  if (config.task == world::Task::Tts) {
    if (reward_model) {
      a.reward_model = std::move(reward_model);
    } else {
      a.reward_model = pretrain_run_reward_model(config, a.world).rm;
    }
    if (a.reward_model->model.arch.cond_vocab != a.world.acoustic_vocab() ||
        a.reward_model->model.arch.out_vocab != a.world.text_vocab())
      throw ConfigError("reward_model", "reward model vocabularies do not match the world");
  }
  return a;
}

// ---- scoring ---------------------------------------------------------------

std::vector<ScoredResponse> score_asr_group(policy::RolloutGroup& group, const TokenSequence& ref,
                                            const world::World& w, const RunConfig& config) {
  const TokenSequence r = strip_eos(ref, text::kEos);
  std::vector<ScoredResponse> out(group.size());
  group.rewards.assign(group.size(), 0.0);
  group.validity.assign(group.size(), false);
  for (std::size_t i = 0; i < group.size(); ++i) {
    const TokenSequence h = strip_eos(group.responses[i], text::kEos);
    out[i].flags = rewards::detect_hallucination(r, h, config.hallucination);
    out[i].breakdown = rewards::score_asr(r, h, w.keywords(), config.rules, config.hallucination, config.weights);
    group.rewards[i] = out[i].breakdown.combined;
    group.validity[i] = group.eos[i] && !out[i].flags.any();
  }
  grpo::assign_advantages(group, config.train.eps_std);
  return out;
}

TokenSequence transcribe(const diffro::RewardModel& rm, const TokenSequence& acoustic, std::size_t max_len) {
  TokenSequence cond = acoustic;
  if (cond.empty()) cond.push_back(acoustic::kEos);
  if (cond.size() > rm.model.arch.context) cond.resize(rm.model.arch.context);
  return policy::greedy_decode(rm.model, cond, std::min(max_len, rm.model.arch.context));
}

std::vector<ScoredResponse> score_tts_group(policy::RolloutGroup& group, const TokenSequence& text,
                                            const world::World& w, const diffro::RewardModel& rm,
                                            const RunConfig& config) {
  const TokenSequence ref = strip_eos(text, text::kEos);
  const std::size_t g = group.size();
  std::vector<ScoredResponse> out(g);
  std::vector<std::size_t> lengths(g);
  std::vector<std::vector<double>> pitch(g);
  for (std::size_t i = 0; i < g; ++i) {
    const auto& o = group.responses[i];
    lengths[i] = o.size();
    pitch[i] = world::f0_of(w, o).values;
    const TokenSequence hyp = strip_eos(transcribe(rm, o, 2 * text.size() + 4), text::kEos);
    out[i].tts_r1 = 1.0 - rewards::wer(ref, hyp).wer;
    out[i].flags.repetition =
        rewards::has_long_repetition(strip_eos(o, acoustic::kEos), config.hallucination);
  }
  const bool use_r2 = config.rules.contains(rewards::Rule::R2);
  const bool use_r3 = config.rules.contains(rewards::Rule::R3);
  const auto r2 = use_r2 ? rewards::tts_duration_reward(lengths) : std::vector<double>(g, 0.0);
  const auto r3 = use_r3 ? rewards::tts_diversity_reward(group.responses, pitch) : std::vector<double>(g, 0.0);
  group.rewards.assign(g, 0.0);
  group.validity.assign(g, false);
  for (std::size_t i = 0; i < g; ++i) {
    out[i].tts_r2 = r2[i];
    out[i].tts_r3 = r3[i];
    double sum = out[i].tts_r1, n = 1.0;
    if (use_r2) sum += r2[i], n += 1.0;
    if (use_r3) sum += r3[i], n += 1.0;
    out[i].breakdown.r1 = out[i].tts_r1;
    out[i].breakdown.enabled = config.rules;
    out[i].breakdown.combined = sum / n;
    group.rewards[i] = out[i].breakdown.combined;
    group.validity[i] = group.eos[i] && !out[i].flags.repetition;
  }
  grpo::assign_advantages(group, config.train.eps_std);
  return out;
}

std::vector<std::size_t> filter_positive(const policy::RolloutGroup& group) {
  if (group.advantages.size() != group.size() || group.validity.size() != group.size())
    throw std::invalid_argument("filter_positive: advantages and validity must be populated");
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < group.size(); ++i)
    if (group.advantages[i] > 0.0 && group.validity[i]) out.push_back(i);
  return out;
}

// ---- loss ------------------------------------------------------------------

std::unique_ptr<StepLoss> build_step_loss(const policy::Policy& current, const policy::Policy& reference,
                                          const policy::Policy& snapshot, const diffro::RewardModel* rm,
                                          const StepBatch& batch, Method method, const TrainConfig& config) {
  const std::size_t n_groups = batch.groups.size();
  if (batch.texts.size() != n_groups) throw std::invalid_argument("build_step_loss: one text per group required");
  const bool use_grpo = method != Method::Diffro;
  const bool use_diffro = method == Method::Diffro || (method != Method::Grpo && config.lambda_diff != 0.0);
  if (use_diffro && !rm) throw std::invalid_argument("build_step_loss: DiffRO needs a reward model");
  if (method == Method::Diffro && batch.gumbel.size() != n_groups)
    throw std::invalid_argument("build_step_loss: DiffRO-only steps need Gumbel rollouts");

  auto sl = std::make_unique<StepLoss>();
  ad::Graph& g = sl->graph;
  sl->params = policy::bind_params(g, current, true, "");
  policy::ParamVars rmp;
  if (use_diffro) rmp = policy::bind_params(g, rm->model, false, "");
  const auto& arch = current.arch;

  grpo::GrpoConfig gcfg;
  gcfg.clip_eps = config.clip_eps;
  gcfg.kl_beta = config.kl_beta;
  gcfg.temperature_one_ratio = config.temperature_one_ratio;

  std::vector<ad::Var> grpo_terms, diffro_terms;
  sl->frames.resize(n_groups);
  sl->selected.resize(n_groups);
  double kl = 0.0, clip = 0.0;
  for (std::size_t k = 0; k < n_groups; ++k) {
    const auto& group = batch.groups[k];
    const auto& text = batch.texts[k];
    if (method == Method::Diffro) {
      for (std::size_t i = 0; i < batch.gumbel[k].size(); ++i) {
        auto d = diffro::diffro_loss_gumbel(g, sl->params, arch, rmp, rm->model.arch, text, batch.gumbel[k][i]);
        sl->frames[k].push_back(d.frames);
        sl->selected[k].push_back(i);
        diffro_terms.push_back(d.loss);
      }
      continue;
    }
    const auto fwd = grpo::forward_group(g, sl->params, arch, group);
    if (use_grpo && !group.skippable) {
      const double temp = config.temperature_one_ratio ? 1.0 : group.temperature;
      const auto old_lp =
          config.temperature_one_ratio ? grpo::group_logprobs(snapshot, group, 1.0) : group.rollout_logprobs;
      const auto ref_lp = grpo::group_logprobs(reference, group, temp);
      auto terms = grpo::grpo_loss(g, fwd, group, old_lp, ref_lp, gcfg);
      grpo_terms.push_back(terms.loss);
      kl += terms.diagnostics.kl_mean;
      clip += terms.diagnostics.clip_fraction;
    }
    if (!use_diffro) continue;
    std::vector<std::size_t> sel;
    if (method == Method::CombinedFiltered) {
      sel = filter_positive(group);
    } else {
      sel.resize(group.size());
      std::iota(sel.begin(), sel.end(), std::size_t{0});
    }
    std::vector<bool> chosen(group.size(), false);
    for (std::size_t i : sel) chosen[i] = true;
    for (std::size_t i = 0; i < group.size(); ++i) {
      if (chosen[i]) {
        auto d = diffro::diffro_loss_from_logits(g, fwd.logits[i], group.responses[i], rmp, rm->model.arch, text);
        sl->frames[k].push_back(d.frames);
        diffro_terms.push_back(d.loss);
      } else {
        // Built for inspection only; nothing downstream consumes it.
        const auto& r = group.responses[i];
        sl->frames[k].push_back(
            diffro::straight_through(g, g.softmax(fwd.logits[i]), std::vector<std::size_t>(r.begin(), r.end())));
      }
    }
    sl->selected[k] = std::move(sel);
  }

  sl->grpo_groups = grpo_terms.size();
  if (!grpo_terms.empty()) {
    sl->grpo_term = mean_of(g, grpo_terms);
    sl->kl = kl / static_cast<double>(grpo_terms.size());
    sl->clip_fraction = clip / static_cast<double>(grpo_terms.size());
  }
  if (!diffro_terms.empty()) sl->diffro_term = mean_of(g, diffro_terms);

  if (method == Method::Diffro) {
    if (sl->diffro_term) sl->loss = *sl->diffro_term;
  } else if (sl->grpo_term && sl->diffro_term) {
    sl->loss = g.add(*sl->grpo_term, g.scale(*sl->diffro_term, config.lambda_diff));
  } else if (sl->grpo_term) {
    sl->loss = *sl->grpo_term;
  } else if (sl->diffro_term) {
    sl->loss = g.scale(*sl->diffro_term, config.lambda_diff);
  }
  sl->empty = !sl->loss.valid();
  return sl;
}

// ---- evaluation ------------------------------------------------------------

EvalMetrics asr_metrics(const std::vector<world::Sample>& test, const std::vector<TokenSequence>& hypotheses,
                        const world::World& w, const RunConfig& config) {
  if (hypotheses.size() != test.size()) throw std::invalid_argument("asr_metrics: one hypothesis per sample");
  EvalMetrics m;
  for (std::size_t i = 0; i < test.size(); ++i) {
    const auto& s = test[i];
    const TokenSequence ref = strip_eos(s.text, text::kEos);
    const TokenSequence hyp = strip_eos(hypotheses[i], text::kEos);
    rewards::UtteranceResult u;
    u.id = s.id;
    u.condition_len = s.condition.size() - 1;
    u.wer = rewards::wer(ref, hyp);
    u.hallucinated = rewards::detect_hallucination(ref, hyp, config.hallucination).any();
    const auto kw = rewards::keyword_score(ref, hyp, w.keywords());
    u.kw_ref = kw.ref_count;
    u.kw_matched = kw.matched;
    m.utterances.push_back(std::move(u));
  }
  m.splits = rewards::aggregate(m.utterances, config.eval.split);
  return m;
}

EvalMetrics evaluate(const policy::Policy& p, const std::vector<world::Sample>& test, const world::World& w,
                     const RunConfig& config, const diffro::RewardModel* rm, std::uint64_t seed) {
  EvalMetrics m;
  const std::size_t t_max = resolve_t_max(config, p.arch);
  if (config.task == world::Task::Asr) {
    std::vector<TokenSequence> hyps;
    for (const auto& s : test) hyps.push_back(policy::greedy_decode(p, s.condition, t_max));
    m = asr_metrics(test, hyps, w, config);
    const std::size_t ns = std::min(config.eval.sampled_conditions, test.size());
    std::size_t flagged = 0, total = 0;
    for (std::size_t k = 0; k < ns; ++k) {
      const auto grp = policy::sample_group(p, test[k].condition, config.train.group_size, config.train.temperature,
                                            t_max, derive_seed(seed, k));
      const TokenSequence ref = strip_eos(test[k].text, text::kEos);
      for (const auto& o : grp.responses) {
        flagged += rewards::detect_hallucination(ref, strip_eos(o, text::kEos), config.hallucination).any();
        ++total;
      }
    }
    m.sampled_hallucination_rate = total ? static_cast<double>(flagged) / static_cast<double>(total) : 0.0;
    return m;
  }

  if (!rm) throw std::invalid_argument("evaluate: TTS evaluation needs the reward model");
  double r_asr = 0.0, len = 0.0;
  for (const auto& s : test) {
    const TokenSequence o = policy::greedy_decode(p, s.condition, t_max);
    const double r = diffro::diffro_reward(*rm, o.empty() ? TokenSequence{acoustic::kEos} : o, s.text);
    r_asr += r;
    len += static_cast<double>(o.size());
    m.utterance_r_asr.push_back(r);
    m.utterance_len.push_back(static_cast<double>(o.size()));
    rewards::UtteranceResult u;
    u.id = s.id;
    u.condition_len = (s.text.size() - 1) * w.spec().tokens_per_text_symbol;
    u.wer = rewards::wer(strip_eos(s.text, text::kEos),
                         strip_eos(transcribe(*rm, o, 2 * s.text.size() + 4), text::kEos));
    u.hallucinated = rewards::has_long_repetition(strip_eos(o, acoustic::kEos), config.hallucination);
    m.utterances.push_back(std::move(u));
  }
  const double n = static_cast<double>(test.size());
  m.r_asr = r_asr / n;
  m.mean_len = len / n;
  m.splits = rewards::aggregate(m.utterances, config.eval.split);
  m.rm_wer = m.splits.overall.wer();

  const std::size_t nd = std::min(config.eval.diversity_conditions, test.size());
  double div = 0.0;
  for (std::size_t k = 0; k < nd; ++k) {
    auto grp = policy::sample_group(p, test[k].condition, config.train.group_size, config.train.temperature, t_max,
                                    derive_seed(seed, k));
    std::vector<std::vector<double>> pitch;
    for (auto& o : grp.responses) {
      if (o.empty()) o.push_back(acoustic::kEos);
      pitch.push_back(world::f0_of(w, o).values);
    }
    div += mean_of(rewards::tts_diversity_reward(grp.responses, pitch));
  }
  m.diversity = nd ? div / static_cast<double>(nd) : 0.0;
  return m;
}

double primary_score(world::Task task, const EvalMetrics& m) {
  return task == world::Task::Asr ? -m.wer() : m.r_asr;
}

const EvalMetrics& RunReport::best() const {
  for (const auto& e : evals)
    if (e.step == best_step) return e;
  return evals.front();
}

// ---- training loop ---------------------------------------------------------

RunReport train(const RunConfig& config, const RunAssets& assets, const ProgressFn& progress) {
  config.validate();
  const diffro::RewardModel* rm = assets.reward_model ? &*assets.reward_model : nullptr;
  if (config.task == world::Task::Tts && !rm) throw ConfigError("reward_model", "TTS runs need a reward model");

  RunReport report;
  report.seed = config.seed;
  policy::Policy current = assets.baseline;
  current.role = policy::Role::Current;
  const policy::Policy reference = policy::copy_as(current, policy::Role::Reference);
  policy::Policy snapshot = policy::copy_as(current, policy::Role::Snapshot);
  optim::Adam adam(config.train.lr);
  const DataMixer mixer(config.data);
  const std::size_t t_max = resolve_t_max(config, current.arch);
  const std::uint64_t eval_seed = derive_seed(config.seed, kEval);

  auto run_eval = [&](std::size_t step) {
    EvalMetrics m = evaluate(current, assets.test, assets.world, config, rm, eval_seed);
    m.step = step;
    const double score = primary_score(config.task, m);
    if (report.evals.empty() || score > report.best_score) {
      report.best_score = score;
      report.best_step = step;
      report.best_policy = current;
    } else if (!report.stability_step &&
               score < report.best_score - config.eval.stability_threshold * std::abs(report.best_score)) {
      report.stability_step = step;
    }
    report.evals.push_back(std::move(m));
    return &report.evals.back();
  };

  {
    const EvalMetrics* e = run_eval(0);
    if (progress) progress(StepRecord{}, e);
  }

  for (std::size_t step = 1; step <= config.steps; ++step) {
    const std::uint64_t step_seed = derive_seed(derive_seed(config.seed, kRollout), step);
    Rng rng(step_seed);
    StepBatch batch;
    std::vector<double> all_rewards, adv_abs, lengths;
    StepRecord rec;
    rec.step = step;
    for (std::size_t k = 0; k < config.train.groups_per_step; ++k) {
      const auto& pool = assets.pools.at(mixer.draw(rng));
      const world::Sample& sample = pool[rng.below(pool.size())];
      const std::uint64_t group_seed = derive_seed(step_seed, k + 1);
      policy::RolloutGroup group;
      if (config.method == Method::Diffro) {
        group.condition = sample.condition;
        group.temperature = config.train.tau;
        std::vector<diffro::GumbelRollout> rollouts;
        for (std::size_t i = 0; i < config.train.group_size; ++i) {
          rollouts.push_back(
              diffro::gumbel_generate(snapshot, sample.condition, config.train.tau, t_max, derive_seed(group_seed, i)));
          group.responses.push_back(rollouts.back().response);
          group.eos.push_back(ends_with(group.responses.back(), current.arch.out_eos));
          group.rollout_logprobs.emplace_back(group.responses.back().size(), 0.0);
        }
        batch.gumbel.push_back(std::move(rollouts));
      } else {
        group = policy::sample_group(snapshot, sample.condition, config.train.group_size, config.train.temperature,
                                     t_max, group_seed);
      }
      if (config.task == world::Task::Asr)
        score_asr_group(group, sample.text, assets.world, config);
      else
        score_tts_group(group, sample.text, assets.world, *rm, config);
      for (std::size_t i = 0; i < group.size(); ++i) {
        all_rewards.push_back(group.rewards[i]);
        adv_abs.push_back(std::abs(group.advantages[i]));
        lengths.push_back(static_cast<double>(group.responses[i].size()));
      }
      rec.skipped_groups += group.skippable;
      batch.groups.push_back(std::move(group));
      batch.texts.push_back(sample.text);
    }
    rec.reward_mean = mean_of(all_rewards);
    rec.adv_abs_mean = mean_of(adv_abs);
    rec.mean_len = mean_of(lengths);

    try {
      auto sl = build_step_loss(current, reference, snapshot, rm, batch, config.method, config.train);
      rec.kl = sl->kl;
      rec.clip_fraction = sl->clip_fraction;
      for (const auto& s : sl->selected) rec.selected += s.size();
      if (!sl->empty) {
        rec.loss = sl->graph.scalar(sl->loss);
        const auto grads = sl->graph.gradient(sl->loss);
        grpo::step(adam, current, snapshot, rec.loss, grads.gradients);
        rec.updated = true;
      }
    } catch (const ad::NonFiniteError& e) {
      throw TrainingDiverged(step, e.what());
    } catch (const grpo::StepRejected& e) {
      throw TrainingDiverged(step, e.what());
    }
    report.steps.push_back(rec);

    const EvalMetrics* e = nullptr;
    if (step % config.eval.every == 0 || step == config.steps) e = run_eval(step);
    if (progress) progress(rec, e);
  }
  report.final_policy = current;
  return report;
}

}  // namespace rlforge::trainer
