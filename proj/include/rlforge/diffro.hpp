// SPDX-FileCopyrightText: Copyright (c) 2026 The rlforge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "rlforge/autodiff.hpp"
#include "rlforge/policy.hpp"
#include "rlforge/rng.hpp"
#include "rlforge/world.hpp"

namespace rlforge::diffro {

// One Gumbel-max draw: the soft relaxation softmax((logits + g) / tau) and
// the index of its largest entry.
struct GumbelDraw {
  std::vector<double> noise;
  std::vector<double> soft;
  std::size_t index = 0;
};
GumbelDraw gumbel_draw(std::span<const double> logits, double tau, Rng& rng);

// Straight-through frames: the forward value is exactly `hard`, the backward
// path is the one of `soft`.
ad::Var straight_through(ad::Graph& g, ad::Var soft, const std::vector<std::size_t>& hard_index);

// Graph form of the estimator on logits [T, V] with explicit noise [T, V].
ad::Var gumbel_softmax_st(ad::Graph& g, ad::Var logits, const ad::Array& noise, double tau);
// Convenience: draws the noise row by row from `seed`.
ad::Var gumbel_softmax_st(ad::Graph& g, ad::Var logits, double tau, std::uint64_t seed);

ad::Array one_hot(const std::vector<std::size_t>& index, std::size_t vocab);

/// Token-level recognizer mapping acoustic frames to text. It shares the
/// policy's architecture with acoustic conditions and text outputs and is
/// never updated once pretrained.
struct RewardModel {
  policy::Policy model;
  double accuracy = 0.0;        // held-out teacher-forced per-token accuracy, clean renderings
  double noisy_accuracy = 0.0;  // same on channel-corrupted renderings
};

policy::ArchConfig reward_model_arch(const world::World& w, std::size_t hidden = 64, std::size_t ffn = 64,
                                     std::size_t context = 128);

struct RewardModelOptions {
  std::size_t n_pairs = 2000;
  std::size_t held_out = 200;
  std::size_t steps = 1000;
  std::size_t batch = 8;
  double lr = 5e-3;
  double noise_fraction = 0.5;  // share of training pairs passed through the channel
  double target_accuracy = 0.95;
  std::uint64_t seed = 11;
  std::size_t hidden = 64;
  std::size_t ffn = 64;
};

struct RewardModelResult {
  RewardModel rm;
  bool target_met = false;
  std::vector<double> loss_curve;
};

RewardModelResult pretrain_reward_model(const world::World& w, const RewardModelOptions& options);

// Teacher-forced per-token argmax accuracy on (acoustic, text) pairs.
double teacher_forced_accuracy(const policy::Policy& rm, const std::vector<policy::SftPair>& pairs);

// Per-position posteriors [N, text_vocab] of the recognizer given frames.
ad::Array posteriors(const RewardModel& rm, const ad::Array& frames, const TokenSequence& y);

// R_ASR = sum_n log P(y_n | y_<n, frames) as a graph node; rm_params must be
// bound as constants.
ad::Var diffro_reward(ad::Graph& g, const policy::ParamVars& rm_params, const policy::ArchConfig& rm_arch,
                      ad::Var frames, const TokenSequence& y);
double diffro_reward(const RewardModel& rm, const ad::Array& frames, const TokenSequence& y);
// Reward of a discrete acoustic sequence (one-hot frames).
double diffro_reward(const RewardModel& rm, const TokenSequence& acoustic, const TokenSequence& y);

enum class FrameMode {
  StraightThrough,  // forward one-hot, backward soft
  Soft,             // forward and backward soft (differentiable surrogate)
  Hard,             // plain one-hots, no gradient to the policy
};

struct DiffroLoss {
  ad::Var loss;     // -R_ASR
  ad::Var reward;   // R_ASR
  ad::Var frames;   // [T, acoustic vocab]
  ad::Var probs;    // policy probability rows [T, acoustic vocab]
};

// Teacher-forced DiffRO loss on an already sampled response: the frame for
// step t is onehot(o_t) with the policy's probability row on the backward path.
DiffroLoss diffro_loss_on_response(ad::Graph& g, const policy::ParamVars& pv, const policy::ArchConfig& arch,
                                   const policy::ParamVars& rm_params, const policy::ArchConfig& rm_arch,
                                   const TokenSequence& text, const TokenSequence& response,
                                   FrameMode mode = FrameMode::StraightThrough);

// Same loss from teacher-forced policy logits [T, acoustic vocab] that are
// already in the graph, e.g. the ones a GRPO term was built from.
DiffroLoss diffro_loss_from_logits(ad::Graph& g, ad::Var logits, const TokenSequence& response,
                                   const policy::ParamVars& rm_params, const policy::ArchConfig& rm_arch,
                                   const TokenSequence& text, FrameMode mode = FrameMode::StraightThrough);

/// Response generated by Gumbel-max sampling with its recorded noise, so the
/// same frames can be rebuilt in a graph. Prefixes are the hard tokens.
struct GumbelRollout {
  TokenSequence response;
  ad::Array noise;  // [T, acoustic vocab]
  double tau = 1.0;
};

GumbelRollout gumbel_generate(const policy::Policy& p, const TokenSequence& condition, double tau,
                              std::size_t t_max, std::uint64_t seed);

// Standalone DiffRO loss: frames = straight-through of softmax((logits + g) / tau).
DiffroLoss diffro_loss_gumbel(ad::Graph& g, const policy::ParamVars& pv, const policy::ArchConfig& arch,
                              const policy::ParamVars& rm_params, const policy::ArchConfig& rm_arch,
                              const TokenSequence& text, const GumbelRollout& rollout,
                              FrameMode mode = FrameMode::StraightThrough);

}  // namespace rlforge::diffro
