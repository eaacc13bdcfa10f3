// SPDX-FileCopyrightText: Copyright (c) 2026 The rlforge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "rlforge/autodiff.hpp"
#include "rlforge/optim.hpp"
#include "rlforge/policy.hpp"

namespace rlforge::grpo {

struct AdvantageResult {
  std::vector<double> advantages;
  bool skippable = false;  // population std below eps_std; advantages are all zero
};

// (R_i - mean) / std with the population standard deviation.
AdvantageResult advantages(std::span<const double> rewards, double eps_std = 1e-6);

// Fills group.advantages and group.skippable from group.rewards.
void assign_advantages(policy::RolloutGroup& group, double eps_std = 1e-6);

// min(r A, clip(r, 1-eps, 1+eps) A), scalar reference form.
double clipped_surrogate(double ratio, double advantage, double eps);

// exp(d) - d - 1 with d = logp_ref - logp_current; >= 0, zero iff d == 0.
double kl_estimator(double logp_current, double logp_ref);
std::vector<double> kl_penalty(std::span<const double> logp_current, std::span<const double> logp_ref);

struct GrpoConfig {
  double clip_eps = 0.2;
  double kl_beta = 0.1;
  // Ratios use temperature-1 distributions for both policies. When false the
  // current policy is evaluated at the rollout temperature and compared
  // against the recorded rollout log-probabilities.
  bool temperature_one_ratio = true;
};

struct GrpoStepDiagnostics {
  std::vector<std::vector<double>> ratios;
  double clip_fraction = 0.0;
  double kl_mean = 0.0;
  double surrogate = 0.0;
  double objective = 0.0;  // L_GRPO
  double loss = 0.0;       // -L_GRPO
  double grad_norm = 0.0;
  std::string kl_estimator = "exp(d)-d-1, d=log pi_ref - log pi_theta";
};

// Teacher-forced graph nodes for every response in a group, sharing one
// encoding of the condition.
struct GroupForward {
  policy::EncodedCondition condition;
  std::vector<ad::Var> logits;  // [T_i, out_vocab] per response
};

GroupForward forward_group(ad::Graph& g, const policy::ParamVars& pv, const policy::ArchConfig& arch,
                           const policy::RolloutGroup& group);

// Log-probabilities of every response under a frozen policy, computed through
// the same graph path as the trainable one.
std::vector<std::vector<double>> group_logprobs(const policy::Policy& p, const policy::RolloutGroup& group,
                                                double temperature = 1.0);

struct GrpoTerms {
  ad::Var objective;  // L_GRPO (to be maximized)
  ad::Var loss;       // -L_GRPO
  GrpoStepDiagnostics diagnostics;
};

// Builds -L_GRPO for one group. old_logprobs and ref_logprobs are per-token
// values under pi_theta_old and pi_ref aligned with the group's responses.
GrpoTerms grpo_loss(ad::Graph& g, const GroupForward& fwd, const policy::RolloutGroup& group,
                    const std::vector<std::vector<double>>& old_logprobs,
                    const std::vector<std::vector<double>>& ref_logprobs, const GrpoConfig& config);

// Convenience: builds the whole single-group loss against concrete policies.
struct GroupLoss {
  ad::Graph graph;
  policy::ParamVars params;
  GroupForward forward;
  GrpoTerms terms;
};
std::unique_ptr<GroupLoss> build_group_loss(const policy::Policy& current, const policy::Policy& reference,
                                            const policy::Policy& snapshot, const policy::RolloutGroup& group,
                                            const GrpoConfig& config);

class StepRejected : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Applies an Adam update from gradients of the loss, then copies the updated
// parameters into the rollout snapshot. Throws StepRejected (parameters and
// snapshot untouched) when the loss or any gradient is non-finite.
void step(optim::Adam& optimizer, policy::Policy& policy, policy::Policy& snapshot, double loss,
          const optim::ParamMap& gradients);

}  // namespace rlforge::grpo
