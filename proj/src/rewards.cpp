// SPDX-FileCopyrightText: Copyright (c) 2026 The rlforge Authors
// SPDX-License-Identifier: Apache-2.0

#include "rlforge/rewards.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>
#include <stdexcept>

namespace rlforge::rewards {

namespace {

// Cost plus the error decomposition of the preferred path into a cell.
struct Cell {
  std::size_t cost = 0, s = 0, i = 0, d = 0;
};

}  // namespace

WerResult wer(std::span<const Token> ref, std::span<const Token> hyp) {
  if (ref.empty()) throw std::invalid_argument("wer: empty reference");
  const std::size_t m = hyp.size();

  // Two rows of the alignment lattice. Among minimum-cost alignments the one
  // with the most substitutions wins; S then fixes I and D because D - I is
  // |ref| - |hyp|. Remaining exact ties go diagonal, insertion, deletion.
  // The ordering is the same from either side, so swapping ref and hyp swaps
  // I with D and keeps S.
  std::vector<Cell> prev(m + 1), cur(m + 1);
  for (std::size_t j = 0; j <= m; ++j) prev[j] = {j, 0, j, 0};
  for (std::size_t r = 1; r <= ref.size(); ++r) {
    cur[0] = {r, 0, 0, r};
    for (std::size_t j = 1; j <= m; ++j) {
      const bool same = ref[r - 1] == hyp[j - 1];
      Cell diag = prev[j - 1];
      diag.cost += same ? 0 : 1;
      diag.s += same ? 0 : 1;
      Cell ins = cur[j - 1];
      ins.cost += 1;
      ins.i += 1;
      Cell del = prev[j];
      del.cost += 1;
      del.d += 1;
      auto better = [](const Cell& a, const Cell& b) { return a.cost < b.cost || (a.cost == b.cost && a.s > b.s); };
      Cell best = diag;
      if (better(ins, best)) best = ins;
      if (better(del, best)) best = del;
      cur[j] = best;
    }
    std::swap(prev, cur);
  }
  const Cell& end = prev[m];
  WerResult out;
  out.substitutions = end.s;
  out.insertions = end.i;
  out.deletions = end.d;
  out.ref_len = ref.size();
  out.wer = static_cast<double>(end.cost) / static_cast<double>(ref.size());
  return out;
}

std::size_t edit_distance(std::span<const Token> a, std::span<const Token> b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = std::min({prev[j - 1] + (a[i - 1] == b[j - 1] ? 0u : 1u), prev[j] + 1, cur[j - 1] + 1});
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double asr_reward_r1(std::span<const Token> ref, std::span<const Token> hyp) { return 1.0 - wer(ref, hyp).wer; }

bool has_long_repetition(std::span<const Token> hyp, const HallucinationParams& params, TokenSequence* ngram,
                         std::size_t* count) {
  const std::size_t len = hyp.size();
  for (std::size_t n = 1; n <= params.n_max; ++n) {
    for (std::size_t start = 0; start + n <= len; ++start) {
      std::size_t reps = 1;
      while (start + (reps + 1) * n <= len &&
             std::equal(hyp.begin() + static_cast<std::ptrdiff_t>(start),
                        hyp.begin() + static_cast<std::ptrdiff_t>(start + n),
                        hyp.begin() + static_cast<std::ptrdiff_t>(start + reps * n)))
        ++reps;
      if (reps >= params.rep_threshold) {
        if (ngram) ngram->assign(hyp.begin() + static_cast<std::ptrdiff_t>(start),
                                 hyp.begin() + static_cast<std::ptrdiff_t>(start + n));
        if (count) *count = reps;
        return true;
      }
    }
  }
  return false;
}

HallucinationFlags detect_hallucination(std::span<const Token> ref, std::span<const Token> hyp,
                                        const HallucinationParams& params) {
  HallucinationFlags flags;
  flags.repetition = has_long_repetition(hyp, params, &flags.ngram, &flags.count);
  flags.length_explosion = static_cast<double>(hyp.size()) > params.len_ratio * static_cast<double>(ref.size());
  return flags;
}

KeywordScore keyword_score(std::span<const Token> ref, std::span<const Token> hyp, std::span<const Token> keywords) {
  std::map<Token, std::size_t> in_ref, in_hyp;
  auto is_kw = [&](Token t) { return std::find(keywords.begin(), keywords.end(), t) != keywords.end(); };
  for (Token t : ref)
    if (is_kw(t)) ++in_ref[t];
  for (Token t : hyp)
    if (is_kw(t)) ++in_hyp[t];

  KeywordScore s;
  for (const auto& [k, c] : in_ref) s.ref_count += c;
  for (const auto& [k, c] : in_hyp) {
    s.hyp_count += c;
    auto it = in_ref.find(k);
    if (it != in_ref.end()) s.matched += std::min(c, it->second);
  }
  // Empty denominators count as perfect (vacuous) on that side.
  s.recall = s.ref_count ? static_cast<double>(s.matched) / static_cast<double>(s.ref_count) : 1.0;
  s.precision = s.hyp_count ? static_cast<double>(s.matched) / static_cast<double>(s.hyp_count) : 1.0;
  return s;
}

double keyword_reward(std::span<const Token> ref, std::span<const Token> hyp, std::span<const Token> keywords) {
  return keyword_score(ref, hyp, keywords).reward();
}

RuleSet parse_rules(const std::string& text) {
  RuleSet rules;
  if (text == "all") return {Rule::R1, Rule::R2, Rule::R3};
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item.erase(std::remove_if(item.begin(), item.end(), [](char c) { return c == ' ' || c == 'R' || c == 'r'; }),
               item.end());
    if (item == "1") rules.insert(Rule::R1);
    else if (item == "2") rules.insert(Rule::R2);
    else if (item == "3") rules.insert(Rule::R3);
    else throw std::invalid_argument("unknown reward rule '" + item + "'");
  }
  if (rules.empty()) throw std::invalid_argument("empty reward rule set");
  return rules;
}

std::string rules_str(const RuleSet& rules) {
  std::string out;
  for (Rule r : rules) {
    if (!out.empty()) out += ',';
    out += std::to_string(static_cast<int>(r));
  }
  return out;
}

RewardBreakdown combine_asr_rewards(double r1, bool flagged, std::optional<double> r3, const RuleSet& enabled,
                                    const RuleWeights& weights) {
  if (!enabled.count(Rule::R1)) throw std::invalid_argument("R1 must be enabled when combining rewards");
  RewardBreakdown b;
  b.enabled = enabled;
  b.r1 = r1;
  double num = weights.r1 * r1;
  double den = weights.r1;
  if (enabled.count(Rule::R3)) {
    if (!r3) throw std::invalid_argument("R3 enabled but no keyword reward supplied");
    b.r3 = r3;
    num += weights.r3 * *r3;
    den += weights.r3;
  }
  b.combined = num / den;
  if (enabled.count(Rule::R2)) {
    b.r2_flagged = flagged;
    if (flagged) b.combined = -1.0;
  }
  return b;
}

RewardBreakdown score_asr(std::span<const Token> ref, std::span<const Token> hyp, std::span<const Token> keywords,
                          const RuleSet& enabled, const HallucinationParams& params, const RuleWeights& weights) {
  const double r1 = asr_reward_r1(ref, hyp);
  const bool flagged = enabled.count(Rule::R2) ? detect_hallucination(ref, hyp, params).any() : false;
  std::optional<double> r3;
  if (enabled.count(Rule::R3)) r3 = keyword_reward(ref, hyp, keywords);
  return combine_asr_rewards(r1, flagged, r3, enabled, weights);
}

double median(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("median of an empty set");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

double population_std(std::span<const double> values) {
  if (values.empty()) return 0.0;
  // Shifted by the first value so a constant input gives exactly 0.
  const double shift = values[0];
  double mean = 0.0;
  for (double v : values) mean += v - shift;
  mean /= static_cast<double>(values.size());
  double var = 0.0;
  for (double v : values) var += (v - shift - mean) * (v - shift - mean);
  return std::sqrt(var / static_cast<double>(values.size()));
}

GroupStats group_stats(std::span<const TokenSequence> responses) {
  GroupStats st;
  const std::size_t g = responses.size();
  std::vector<double> lens;
  for (const auto& r : responses) {
    st.lengths.push_back(r.size());
    lens.push_back(static_cast<double>(r.size()));
  }
  st.median_length = median(lens);
  st.distances.assign(g, std::vector<std::size_t>(g, 0));
  for (std::size_t i = 0; i < g; ++i)
    for (std::size_t j = i + 1; j < g; ++j)
      st.distances[i][j] = st.distances[j][i] = edit_distance(responses[i], responses[j]);
  return st;
}

std::vector<double> tts_duration_reward(std::span<const std::size_t> lengths) {
  if (lengths.size() < 2) throw std::invalid_argument("duration reward needs a group of at least 2");
  std::vector<double> lens;
  for (auto l : lengths) {
    if (l == 0) throw std::invalid_argument("duration reward: empty response");
    lens.push_back(static_cast<double>(l));
  }
  const double tm = median(lens);
  std::vector<double> out;
  for (double l : lens) out.push_back(-std::abs((l - tm) / tm));
  return out;
}

std::vector<double> tts_diversity_reward(std::span<const TokenSequence> responses,
                                         std::span<const std::vector<double>> pitch_tracks) {
  const std::size_t g = responses.size();
  if (g < 2) throw std::invalid_argument("diversity reward needs a group of at least 2");
  if (pitch_tracks.size() != g) throw std::invalid_argument("diversity reward: one pitch track per response");
  const GroupStats st = group_stats(responses);
  std::vector<double> out(g);
  for (std::size_t i = 0; i < g; ++i) {
    if (responses[i].empty()) throw std::invalid_argument("diversity reward: empty response");
    const double len = static_cast<double>(responses[i].size());
    double token_term = 0.0;
    for (std::size_t j = 0; j < g; ++j) token_term += static_cast<double>(st.distances[i][j]) / len;
    out[i] = token_term / static_cast<double>(g) + population_std(pitch_tracks[i]);
  }
  return out;
}

namespace {
double ratio(std::size_t a, std::size_t b) { return b ? static_cast<double>(a) / static_cast<double>(b) : 0.0; }
}  // namespace

double AggregateWer::wer() const { return ratio(substitutions + insertions + deletions, ref_len); }
double AggregateWer::ins() const { return ratio(insertions, ref_len); }
double AggregateWer::del() const { return ratio(deletions, ref_len); }
double AggregateWer::hallucination_rate() const { return ratio(hallucinated, utterances); }
double AggregateWer::keyword_recall() const { return kw_ref ? ratio(kw_matched, kw_ref) : 1.0; }

void AggregateWer::add(const UtteranceResult& r) {
  ++utterances;
  substitutions += r.wer.substitutions;
  insertions += r.wer.insertions;
  deletions += r.wer.deletions;
  ref_len += r.wer.ref_len;
  hallucinated += r.hallucinated ? 1 : 0;
  kw_ref += r.kw_ref;
  kw_matched += r.kw_matched;
}

SplitMetrics aggregate(std::span<const UtteranceResult> results, const SplitThresholds& split) {
  SplitMetrics m;
  for (const auto& r : results) {
    m.overall.add(r);
    if (r.condition_len < split.short_max) m.short_split.add(r);
    if (r.condition_len > split.long_min) m.long_split.add(r);
  }
  return m;
}

}  // namespace rlforge::rewards
