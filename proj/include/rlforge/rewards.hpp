// SPDX-FileCopyrightText: Copyright (c) 2026 The rlforge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "rlforge/tokens.hpp"

namespace rlforge::rewards {

// Callers strip terminators before calling anything in this header; every
// function here treats its inputs as plain symbol strings.

struct WerResult {
  double wer = 0.0;
  std::size_t substitutions = 0;
  std::size_t insertions = 0;
  std::size_t deletions = 0;
  std::size_t ref_len = 0;

  std::size_t errors() const noexcept { return substitutions + insertions + deletions; }
  double ins_rate() const { return static_cast<double>(insertions) / static_cast<double>(ref_len); }
  double del_rate() const { return static_cast<double>(deletions) / static_cast<double>(ref_len); }
  bool operator==(const WerResult&) const = default;
};

// Unit-cost Levenshtein alignment. Among equal-cost alignments the one with
// the most substitutions is reported (substitution preferred over insertion
// over deletion). Throws std::invalid_argument for an empty reference.
WerResult wer(std::span<const Token> ref, std::span<const Token> hyp);

// Plain edit distance; either side may be empty.
std::size_t edit_distance(std::span<const Token> a, std::span<const Token> b);

double asr_reward_r1(std::span<const Token> ref, std::span<const Token> hyp);

struct HallucinationParams {
  std::size_t n_max = 4;
  std::size_t rep_threshold = 4;
  double len_ratio = 2.0;
};

struct HallucinationFlags {
  bool repetition = false;
  TokenSequence ngram;       // offending n-gram when repetition is set
  std::size_t count = 0;     // its consecutive repeat count
  bool length_explosion = false;

  bool any() const noexcept { return repetition || length_explosion; }
};

// Consecutive n-gram repetition in hyp only (ref is ignored for that rule).
bool has_long_repetition(std::span<const Token> hyp, const HallucinationParams& params,
                         TokenSequence* ngram = nullptr, std::size_t* count = nullptr);

HallucinationFlags detect_hallucination(std::span<const Token> ref, std::span<const Token> hyp,
                                        const HallucinationParams& params = {});

struct KeywordScore {
  double recall = 1.0;
  double precision = 1.0;
  std::size_t ref_count = 0;
  std::size_t hyp_count = 0;
  std::size_t matched = 0;
  double reward() const noexcept { return 0.5 * (recall + precision); }
};

KeywordScore keyword_score(std::span<const Token> ref, std::span<const Token> hyp,
                           std::span<const Token> keywords);
double keyword_reward(std::span<const Token> ref, std::span<const Token> hyp,
                      std::span<const Token> keywords);

enum class Rule { R1 = 1, R2 = 2, R3 = 3 };
using RuleSet = std::set<Rule>;

RuleSet parse_rules(const std::string& text);  // "1", "1,2", "all"
std::string rules_str(const RuleSet& rules);

struct RuleWeights {
  double r1 = 1.0;
  double r3 = 1.0;
};

struct RewardBreakdown {
  double r1 = 0.0;
  std::optional<bool> r2_flagged;
  std::optional<double> r3;
  double combined = 0.0;
  RuleSet enabled;
};

// Weighted mean of the enabled non-override rules, then the hallucination
// override pins the result to -1 when R2 is enabled and flagged.
RewardBreakdown combine_asr_rewards(double r1, bool flagged, std::optional<double> r3,
                                    const RuleSet& enabled, const RuleWeights& weights = {});

// Full ASR scoring of one hypothesis against its reference.
RewardBreakdown score_asr(std::span<const Token> ref, std::span<const Token> hyp,
                          std::span<const Token> keywords, const RuleSet& enabled,
                          const HallucinationParams& params = {}, const RuleWeights& weights = {});

double median(std::vector<double> values);  // even count: mean of the two central values
double population_std(std::span<const double> values);

struct GroupStats {
  std::vector<std::size_t> lengths;
  double median_length = 0.0;
  std::vector<std::vector<std::size_t>> distances;  // pairwise token edit distances
};

GroupStats group_stats(std::span<const TokenSequence> responses);

// -|(|o_i| - T_m) / T_m| for every response.
std::vector<double> tts_duration_reward(std::span<const std::size_t> lengths);

// (1/G) sum_j dist(o_i, o_j) / |o_i|  +  std(pitch_i); j includes i.
std::vector<double> tts_diversity_reward(std::span<const TokenSequence> responses,
                                         std::span<const std::vector<double>> pitch_tracks);

// Per-utterance record used for corpus aggregation.
struct UtteranceResult {
  std::string id;
  std::size_t condition_len = 0;
  WerResult wer;
  bool hallucinated = false;
  std::size_t kw_ref = 0;
  std::size_t kw_matched = 0;
};

struct SplitThresholds {
  std::size_t short_max = 20;  // condition length < short_max
  std::size_t long_min = 40;   // condition length > long_min
};

struct AggregateWer {
  std::size_t utterances = 0;
  std::size_t substitutions = 0, insertions = 0, deletions = 0, ref_len = 0;
  std::size_t hallucinated = 0;
  std::size_t kw_ref = 0, kw_matched = 0;

  double wer() const;
  double ins() const;
  double del() const;
  double hallucination_rate() const;
  double keyword_recall() const;
  void add(const UtteranceResult& r);
};

struct SplitMetrics {
  AggregateWer overall, short_split, long_split;
};

// Rates come from summed counts, never from averaged per-utterance rates.
SplitMetrics aggregate(std::span<const UtteranceResult> results, const SplitThresholds& split);

}  // namespace rlforge::rewards
