// SPDX-FileCopyrightText: Copyright (c) 2026 The rlforge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "rlforge/rewards.hpp"
#include "rlforge/tokens.hpp"

namespace rlforge::world {

struct WorldSpec {
  std::size_t text_vocab_size = 32;      // includes PAD, BOS, EOS
  std::size_t acoustic_vocab_size = 64;  // includes EOS
  std::size_t tokens_per_text_symbol = 2;
  double p_sub = 0.05;
  double p_ins = 0.03;
  double p_del = 0.03;
  std::size_t num_keywords = 4;
  double keyword_weight = 0.15;  // sampling weight of a keyword relative to 1 for other symbols
  std::size_t embedding_dim = 16;
  std::size_t min_text_len = 2;
  std::size_t max_text_len = 24;
  std::size_t long_threshold = 40;   // acoustic tokens; "long" utterances exceed it
  std::size_t short_threshold = 20;  // acoustic tokens; "short" utterances stay below it
  std::uint64_t seed = 7;

  void validate() const;  // throws std::invalid_argument
  bool operator==(const WorldSpec&) const = default;
};

struct ChannelRates {
  double p_sub = 0.0, p_ins = 0.0, p_del = 0.0;
};

/// Immutable synthetic universe built from a WorldSpec.
class World {
 public:
  explicit World(WorldSpec spec);

  const WorldSpec& spec() const noexcept { return spec_; }
  ChannelRates channel() const noexcept { return {spec_.p_sub, spec_.p_ins, spec_.p_del}; }

  std::size_t text_vocab() const noexcept { return spec_.text_vocab_size; }
  std::size_t acoustic_vocab() const noexcept { return spec_.acoustic_vocab_size; }

  const std::vector<Token>& rendering(Token text_symbol) const;
  const std::map<Token, std::vector<Token>>& text_to_acoustic() const noexcept { return t2a_; }
  double pitch(Token acoustic_symbol) const;
  const std::vector<double>& pitch_map() const noexcept { return pitch_; }
  double pitch_mean() const noexcept { return pitch_mean_; }
  double pitch_std() const noexcept { return pitch_std_; }
  const std::vector<double>& embedding(Token acoustic_symbol) const;
  const std::vector<Token>& keywords() const noexcept { return keywords_; }
  bool is_keyword(Token t) const;
  bool is_text_symbol(Token t) const noexcept;
  bool is_acoustic_symbol(Token t) const noexcept;

  // Inverse of the rendering map, keyed by the symbol subsequence.
  const std::map<std::vector<Token>, Token>& acoustic_to_text() const noexcept { return a2t_; }

 private:
  WorldSpec spec_;
  std::map<Token, std::vector<Token>> t2a_;
  std::map<std::vector<Token>, Token> a2t_;
  std::vector<double> pitch_;
  double pitch_mean_ = 0.0, pitch_std_ = 0.0;
  std::vector<std::vector<double>> embedding_;
  std::vector<Token> keywords_;
};

World build_world(const WorldSpec& spec);

// Clean rendering: concatenated symbol renderings followed by acoustic EOS.
// Noisy rendering: the clean one passed through the world's channel.
TokenSequence synthesize_utterance(const World& w, const TokenSequence& text, bool noisy, std::uint64_t seed);

// Per-position deletion, then substitution, then insertion after the symbol.
TokenSequence apply_channel(const World& w, const TokenSequence& acoustic, const ChannelRates& rates,
                            std::uint64_t seed);

// Greedy left-to-right inversion assuming a clean channel: known renderings
// emit their symbol, anything else is skipped one token at a time.
TokenSequence invert_clean(const World& w, const TokenSequence& acoustic);

// Random EOS-terminated text drawn from the world's symbol distribution.
TokenSequence random_text(const World& w, std::uint64_t seed);

struct PitchTrack {
  std::vector<double> values;
  double std() const;
};

PitchTrack f0_of(const World& w, const TokenSequence& acoustic);

enum class Task { Asr, Tts };
enum class Subset { D0, D1, D2, D3 };

const char* to_string(Task t) noexcept;
const char* to_string(Subset s) noexcept;
Task parse_task(const std::string& s);
Subset parse_subset(const std::string& s);

struct Sample {
  std::string id;
  TokenSequence condition;  // acoustic for ASR, text for TTS
  TokenSequence text;       // EOS-terminated reference text
  std::vector<std::pair<Token, std::size_t>> keywords_present;
  Subset subset = Subset::D0;

  std::vector<Token> keyword_occurrences() const;
};

using Decoder = std::function<TokenSequence(const TokenSequence& acoustic, std::uint64_t seed)>;

struct DatasetOptions {
  Task task = Task::Asr;
  bool noisy = true;  // pass ASR conditions through the channel
  std::size_t retry_factor = 2000;
  Decoder decoder_a;  // D1 only; defaults to invert_clean
  Decoder decoder_b;  // D1 only; defaults to invert_clean of a re-noised utterance
  rewards::HallucinationParams repetition;
};

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Emits exactly n samples of the requested subset. Throws DatasetError when
// the subset filter cannot be satisfied within retry_factor * n draws.
std::vector<Sample> generate_dataset(const World& w, Subset strategy, std::size_t n, std::uint64_t seed,
                                     const DatasetOptions& options = {});

// Hash of task, condition and text; the part of a sample id after the subset
// prefix. Two samples with equal keys are the same utterance.
std::string content_key(Task task, const TokenSequence& condition, const TokenSequence& text);
// Builds a sample with its id; `utterance` is the acoustic rendering.
Sample make_sample(const World& w, Task task, Subset subset, const TokenSequence& utterance, TokenSequence text);

// D1 membership predicate, exposed for checking.
bool disagreement_or_repetition(const TokenSequence& a, const TokenSequence& b,
                                const rewards::HallucinationParams& params);

std::vector<std::pair<Token, std::size_t>> count_keywords(const World& w, const TokenSequence& text);

// JSON-lines: one header line, then one sample per line.
inline constexpr int kDatasetFormatVersion = 1;

struct DatasetFile {
  WorldSpec world;
  Task task = Task::Asr;
  std::vector<Sample> samples;
};

void write_dataset(std::ostream& os, const WorldSpec& spec, Task task, const std::vector<Sample>& samples);
DatasetFile read_dataset(std::istream& is);

std::string spec_to_json(const WorldSpec& spec);
WorldSpec spec_from_json(const std::string& json);

}  // namespace rlforge::world
