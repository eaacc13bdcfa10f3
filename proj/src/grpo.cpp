// SPDX-FileCopyrightText: Copyright (c) 2026 The rlforge Authors
// SPDX-License-Identifier: Apache-2.0

#include "rlforge/grpo.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <stdexcept>

#include "rlforge/rewards.hpp"

namespace rlforge::grpo {

AdvantageResult advantages(std::span<const double> rewards, double eps_std) {
  if (rewards.size() < 2) throw std::invalid_argument("advantages need a group of at least 2");
  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= static_cast<double>(rewards.size());
  const double sd = rewards::population_std(rewards);
  AdvantageResult out;
  out.advantages.assign(rewards.size(), 0.0);
  if (sd < eps_std) {
    out.skippable = true;
    return out;
  }
  for (std::size_t i = 0; i < rewards.size(); ++i) out.advantages[i] = (rewards[i] - mean) / sd;
  return out;
}

void assign_advantages(policy::RolloutGroup& group, double eps_std) {
  if (group.rewards.size() != group.size()) throw std::invalid_argument("rewards missing for the group");
  auto res = advantages(group.rewards, eps_std);
  group.advantages = std::move(res.advantages);
  group.skippable = res.skippable;
}

double clipped_surrogate(double ratio, double advantage, double eps) {
  return std::min(ratio * advantage, std::clamp(ratio, 1.0 - eps, 1.0 + eps) * advantage);
}

double kl_estimator(double logp_current, double logp_ref) {
  const double d = logp_ref - logp_current;
  return std::expm1(d) - d;
}

std::vector<double> kl_penalty(std::span<const double> logp_current, std::span<const double> logp_ref) {
  if (logp_current.size() != logp_ref.size()) throw std::invalid_argument("kl_penalty: misaligned positions");
  std::vector<double> out(logp_current.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = kl_estimator(logp_current[i], logp_ref[i]);
  return out;
}

GroupForward forward_group(ad::Graph& g, const policy::ParamVars& pv, const policy::ArchConfig& arch,
                           const policy::RolloutGroup& group) {
  GroupForward fwd;
  fwd.condition = policy::encode_tokens(g, pv, arch, group.condition);
  for (const auto& r : group.responses) fwd.logits.push_back(policy::response_logits(g, pv, arch, fwd.condition, r));
  return fwd;
}

std::vector<std::vector<double>> group_logprobs(const policy::Policy& p, const policy::RolloutGroup& group,
                                                double temperature) {
  ad::Graph g;
  auto pv = policy::bind_params(g, p, false, "");
  auto fwd = forward_group(g, pv, p.arch, group);
  std::vector<std::vector<double>> out;
  for (std::size_t i = 0; i < group.size(); ++i)
    out.push_back(g.value(policy::response_logprobs(g, fwd.logits[i], group.responses[i], temperature)).data);
  return out;
}

GrpoTerms grpo_loss(ad::Graph& g, const GroupForward& fwd, const policy::RolloutGroup& group,
                    const std::vector<std::vector<double>>& old_logprobs,
                    const std::vector<std::vector<double>>& ref_logprobs, const GrpoConfig& config) {
  const std::size_t n = group.size();
  if (group.advantages.size() != n) throw std::invalid_argument("grpo_loss: advantages missing");
  if (old_logprobs.size() != n || ref_logprobs.size() != n || fwd.logits.size() != n)
    throw std::invalid_argument("grpo_loss: shape mismatch");
  if (!(config.clip_eps > 0.0 && config.clip_eps < 1.0)) throw std::invalid_argument("clip epsilon outside (0, 1)");
  if (config.kl_beta < 0.0) throw std::invalid_argument("negative KL coefficient");

  const double inf = std::numeric_limits<double>::infinity();
  const double temperature = config.temperature_one_ratio ? 1.0 : group.temperature;
  GrpoTerms terms;
  auto& diag = terms.diagnostics;
  std::size_t tokens = 0, clipped = 0;
  double kl_total = 0.0, surrogate = 0.0;
  ad::Var total;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& resp = group.responses[i];
    const std::size_t t_len = resp.size();
    if (old_logprobs[i].size() != t_len || ref_logprobs[i].size() != t_len)
      throw std::invalid_argument("grpo_loss: log-probabilities misaligned with response " + std::to_string(i));
    const double adv = group.advantages[i];

    ad::Var lp = policy::response_logprobs(g, fwd.logits[i], resp, temperature);
    ad::Var ratio = g.exp(g.sub(lp, g.constant(ad::Array::vector(old_logprobs[i]))));
    // min(rA, clip(r)A) == A * clip(r, -inf, 1+eps) for A > 0 and
    // A * clip(r, 1-eps, +inf) for A < 0.
    ad::Var bounded = adv > 0.0   ? g.clip(ratio, -inf, 1.0 + config.clip_eps)
                      : adv < 0.0 ? g.clip(ratio, 1.0 - config.clip_eps, inf)
                                  : ratio;
    ad::Var surr = g.scale(bounded, adv);
    ad::Var delta = g.sub(g.constant(ad::Array::vector(ref_logprobs[i])), lp);
    ad::Var kl = g.add_scalar(g.sub(g.exp(delta), delta), -1.0);
    ad::Var per_token = config.kl_beta == 0.0 ? surr : g.sub(surr, g.scale(kl, config.kl_beta));
    ad::Var resp_mean = g.mean(per_token);
    total = total.valid() ? g.add(total, resp_mean) : resp_mean;

    const auto& rv = g.value(ratio).data;
    const auto& kv = g.value(kl).data;
    const auto& sv = g.value(surr).data;
    diag.ratios.push_back(rv);
    for (std::size_t t = 0; t < t_len; ++t) {
      ++tokens;
      if ((adv > 0.0 && rv[t] > 1.0 + config.clip_eps) || (adv < 0.0 && rv[t] < 1.0 - config.clip_eps)) ++clipped;
      kl_total += kv[t];
    }
    double s = 0.0;
    for (double v : sv) s += v;
    surrogate += s / static_cast<double>(t_len);
  }
  terms.objective = g.scale(total, 1.0 / static_cast<double>(n));
  terms.loss = g.neg(terms.objective);
  diag.clip_fraction = tokens ? static_cast<double>(clipped) / static_cast<double>(tokens) : 0.0;
  diag.kl_mean = tokens ? kl_total / static_cast<double>(tokens) : 0.0;
  diag.surrogate = surrogate / static_cast<double>(n);
  diag.objective = g.scalar(terms.objective);
  diag.loss = g.scalar(terms.loss);
  return terms;
}

std::unique_ptr<GroupLoss> build_group_loss(const policy::Policy& current, const policy::Policy& reference,
                                            const policy::Policy& snapshot, const policy::RolloutGroup& group,
                                            const GrpoConfig& config) {
  const double temperature = config.temperature_one_ratio ? 1.0 : group.temperature;
  const auto old_lp = config.temperature_one_ratio ? group_logprobs(snapshot, group, 1.0) : group.rollout_logprobs;
  const auto ref_lp = group_logprobs(reference, group, temperature);
  auto out = std::make_unique<GroupLoss>();
  out->params = policy::bind_params(out->graph, current, true, "");
  out->forward = forward_group(out->graph, out->params, current.arch, group);
  out->terms = grpo_loss(out->graph, out->forward, group, old_lp, ref_lp, config);
  return out;
}

void step(optim::Adam& optimizer, policy::Policy& policy, policy::Policy& snapshot, double loss,
          const optim::ParamMap& gradients) {
  if (!std::isfinite(loss)) throw StepRejected("non-finite loss");
  if (!optim::all_finite(gradients)) throw StepRejected("non-finite gradient");
  optimizer.apply(policy.params, gradients);
  policy::sync_weights(policy, snapshot);
}

}  // namespace rlforge::grpo
