// SPDX-FileCopyrightText: Copyright (c) 2026 The rlforge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rlforge/autodiff.hpp"
#include "rlforge/optim.hpp"
#include "rlforge/tokens.hpp"

namespace rlforge::policy {

using optim::ParamMap;

enum class Role { Current, Reference, Snapshot, RewardModel };
const char* to_string(Role r) noexcept;
Role parse_role(const std::string& s);

/// Shape of the attention sequence model shared by the policy and the
/// reward model.
///
/// Condition tokens (or probability frames) are embedded and combined with
/// learned positions into keys; each output position queries them through a
/// single softmax attention, adds the previous output token's embedding and
/// its own position, and a softplus feed-forward layer projects to logits.
struct ArchConfig {
  std::size_t cond_vocab = 64;
  std::size_t out_vocab = 32;
  Token out_eos = text::kEos;
  std::size_t hidden = 64;
  std::size_t ffn = 64;
  std::size_t context = 128;  // longest condition and longest response

  bool operator==(const ArchConfig&) const = default;
};

struct Policy {
  ArchConfig arch;
  Role role = Role::Current;
  ParamMap params;
};

Policy init_policy(const ArchConfig& arch, std::uint64_t seed);
Policy copy_as(const Policy& p, Role role);

// Throws std::invalid_argument when the architectures differ.
void sync_weights(const Policy& source, Policy& target);

// Parameters bound into a graph, either trainable or frozen.
struct ParamVars {
  std::map<std::string, ad::Var> vars;
  ad::Var operator[](const std::string& name) const { return vars.at(name); }
};

ParamVars bind_params(ad::Graph& g, const Policy& p, bool trainable, const std::string& prefix);

// Condition encoded once and shared by every response in a group.
struct EncodedCondition {
  ad::Var values;  // [S, d]
  ad::Var keys;    // [S, d]
  std::size_t length = 0;
};

EncodedCondition encode_tokens(ad::Graph& g, const ParamVars& pv, const ArchConfig& arch,
                               const TokenSequence& condition);
// frames: [S, cond_vocab] probability rows; the embedding is a matrix product
// so gradients reach the frames.
EncodedCondition encode_frames(ad::Graph& g, const ParamVars& pv, const ArchConfig& arch, ad::Var frames);

// Teacher-forced logits [T, out_vocab] for a response of length T; the
// previous-token input at t = 0 is BOS.
ad::Var response_logits(ad::Graph& g, const ParamVars& pv, const ArchConfig& arch, const EncodedCondition& cond,
                        const TokenSequence& response);

// Per-token log-probabilities [T] of `response` at the given temperature.
ad::Var response_logprobs(ad::Graph& g, ad::Var logits, const TokenSequence& response, double temperature = 1.0);

void validate_response(const ArchConfig& arch, const TokenSequence& response);
void validate_condition(const Policy& p, const TokenSequence& condition);

// Teacher-forced per-position log-probabilities, each <= 0.
std::vector<double> logprob(const Policy& p, const TokenSequence& condition, const TokenSequence& response,
                            double temperature = 1.0);

/// Incremental decoder for sampling and greedy decoding without building a
/// graph. Numerically equivalent to the graph path up to summation order.
class IncrementalDecoder {
 public:
  IncrementalDecoder(const Policy& p, const TokenSequence& condition);
  IncrementalDecoder(const Policy& p, const ad::Array& frames);  // [S, cond_vocab]

  // Next-token probabilities at position t after `prev`.
  std::vector<double> next_distribution(std::size_t t, Token prev, double temperature = 1.0) const;
  std::vector<double> next_logits(std::size_t t, Token prev) const;

 private:
  void init_keys();
  const Policy* p_;
  std::size_t s_ = 0;
  std::vector<double> values_;  // [S, d]
  std::vector<double> keys_;    // [S, d]
};

std::vector<double> next_token_distribution(const Policy& p, const TokenSequence& condition,
                                            const TokenSequence& prefix, double temperature = 1.0);

TokenSequence greedy_decode(const Policy& p, const TokenSequence& condition, std::size_t t_max);

struct RolloutGroup {
  TokenSequence condition;
  std::vector<TokenSequence> responses;
  std::vector<std::vector<double>> rollout_logprobs;  // at the sampling temperature
  std::vector<bool> eos;                              // EOS emitted within T_max
  std::vector<double> rewards;
  std::vector<double> advantages;  // empty until rewards are assigned
  std::vector<bool> validity;      // eos && not hallucination-flagged
  bool skippable = false;
  double temperature = 1.0;

  std::size_t size() const noexcept { return responses.size(); }
};

// G ancestral samples with logits divided by temperature. Response i is drawn
// from a generator seeded by derive_seed(seed, i). Temperature 0 decodes
// greedily.
RolloutGroup sample_group(const Policy& snapshot, const TokenSequence& condition, std::size_t group_size,
                          double temperature, std::size_t t_max, std::uint64_t seed);

TokenSequence sample_response(const Policy& p, const TokenSequence& condition, double temperature,
                              std::size_t t_max, std::uint64_t seed, std::vector<double>* logprobs = nullptr);

struct SftPair {
  TokenSequence condition;
  TokenSequence target;
};

struct SftOptions {
  std::size_t steps = 500;
  std::size_t batch = 8;
  double lr = 5e-3;
  std::uint64_t seed = 0;
};

struct SftResult {
  std::vector<double> loss_curve;  // mean per-token cross-entropy per step
};

class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(std::size_t step, const std::string& what)
      : std::runtime_error("training diverged at step " + std::to_string(step) + ": " + what), step_(step) {}
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

// Cross-entropy loss graph for one pair (mean token NLL).
ad::Var sft_loss(ad::Graph& g, const ParamVars& pv, const ArchConfig& arch, const SftPair& pair);

SftResult sft_pretrain(Policy& p, const std::vector<SftPair>& data, const SftOptions& options);

}  // namespace rlforge::policy
