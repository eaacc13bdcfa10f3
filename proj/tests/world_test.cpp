// SPDX-FileCopyrightText: Copyright (c) 2026 The rlforge Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <map>
#include <sstream>

#include "oracles.hpp"
#include "rlforge/rng.hpp"
#include "rlforge/world.hpp"

namespace wd = rlforge::world;
using rlforge::Token;
using rlforge::TokenSequence;

namespace {

wd::WorldSpec quiet_spec() {
  wd::WorldSpec s;
  s.p_sub = s.p_ins = s.p_del = 0.0;
  return s;
}

}  // namespace

TEST(World, DeterministicFromSeed) {
  wd::WorldSpec spec;
  spec.seed = 7;
  const auto a = wd::build_world(spec);
  const auto b = wd::build_world(spec);
  EXPECT_EQ(a.text_to_acoustic(), b.text_to_acoustic());
  EXPECT_EQ(a.pitch_map(), b.pitch_map());
  EXPECT_EQ(a.keywords(), b.keywords());
  spec.seed = 8;
  EXPECT_NE(wd::build_world(spec).text_to_acoustic(), a.text_to_acoustic());
}

TEST(World, InvalidSpecRejected) {
  wd::WorldSpec spec;
  spec.p_sub = 0.5;
  EXPECT_THROW(wd::build_world(spec), std::invalid_argument);
  spec = {};
  spec.text_vocab_size = 3;
  EXPECT_THROW(wd::build_world(spec), std::invalid_argument);
}

TEST(World, CleanLengthArithmetic) {
  const auto w = wd::build_world(quiet_spec());
  const TokenSequence text{3, 4, 5, 6, 7, rlforge::text::kEos};
  const auto u = wd::synthesize_utterance(w, text, false, 0);
  EXPECT_EQ(u.size(), 11u);
  EXPECT_EQ(u.back(), rlforge::acoustic::kEos);
}

TEST(World, PitchStdPositiveAndKeywordsAreSymbols) {
  const auto w = wd::build_world({});
  std::vector<double> symbol_pitch(w.pitch_map().begin() + 1, w.pitch_map().end());
  EXPECT_NEAR(w.pitch_std(), oracle::population_std(symbol_pitch), 1e-15);
  EXPECT_GT(w.pitch_std(), 0.0);
  EXPECT_EQ(w.keywords().size(), 4u);
  for (Token k : w.keywords()) EXPECT_TRUE(w.is_text_symbol(k));
}

TEST(World, ZeroNoiseIsConcatenation) {
  const auto w = wd::build_world(quiet_spec());
  const TokenSequence text{9, 4, rlforge::text::kEos};
  TokenSequence expect = w.rendering(9);
  expect.insert(expect.end(), w.rendering(4).begin(), w.rendering(4).end());
  expect.push_back(rlforge::acoustic::kEos);
  EXPECT_EQ(wd::synthesize_utterance(w, text, true, 123), expect);
}

TEST(World, FullDeletionLeavesOnlyEos) {
  const auto w = wd::build_world(quiet_spec());
  const auto clean = wd::synthesize_utterance(w, {3, 4, 5, rlforge::text::kEos}, false, 0);
  EXPECT_EQ(wd::apply_channel(w, clean, {0.0, 0.0, 1.0}, 1), TokenSequence{rlforge::acoustic::kEos});
}

TEST(World, SubstitutionRateMonteCarlo) {
  const auto w = wd::build_world(quiet_spec());
  TokenSequence clean;
  rlforge::Rng rng(3);
  for (int i = 0; i < 10000; ++i) clean.push_back(static_cast<Token>(1 + rng.below(63)));
  clean.push_back(rlforge::acoustic::kEos);
  const auto noisy = wd::apply_channel(w, clean, {0.1, 0.0, 0.0}, 44);
  ASSERT_EQ(noisy.size(), clean.size());
  std::size_t changed = 0;
  for (std::size_t i = 0; i + 1 < clean.size(); ++i) changed += clean[i] != noisy[i];
  EXPECT_NEAR(static_cast<double>(changed) / 10000.0, 0.1, 0.01);
}

TEST(World, UnknownSymbolRejected) {
  const auto w = wd::build_world({});
  EXPECT_THROW(wd::synthesize_utterance(w, {1, rlforge::text::kEos}, false, 0), std::invalid_argument);
  EXPECT_THROW(wd::f0_of(w, {99}), std::invalid_argument);
}

TEST(World, InversionRecoversEveryShortText) {
  const auto w = wd::build_world(quiet_spec());
  // every text of length 1 and 2
  for (Token a = 3; a < 32; ++a) {
    TokenSequence t1{a, rlforge::text::kEos};
    ASSERT_EQ(wd::invert_clean(w, wd::synthesize_utterance(w, t1, false, 0)), t1);
    for (Token b = 3; b < 32; ++b) {
      TokenSequence t2{a, b, rlforge::text::kEos};
      ASSERT_EQ(wd::invert_clean(w, wd::synthesize_utterance(w, t2, false, 0)), t2);
    }
  }
}

TEST(World, PitchTrackIsCorpusNormalized) {
  wd::WorldSpec spec;
  spec.seed = 7;
  const auto w = wd::build_world(spec);
  const TokenSequence seq{5, 17, 5, 40, rlforge::acoustic::kEos};
  const auto track = wd::f0_of(w, seq);
  ASSERT_EQ(track.values.size(), 4u);
  std::vector<double> symbol_pitch(w.pitch_map().begin() + 1, w.pitch_map().end());
  double mean = 0.0;
  for (double p : symbol_pitch) mean += p;
  mean /= static_cast<double>(symbol_pitch.size());
  const double sd = oracle::population_std(symbol_pitch);
  for (std::size_t i = 0; i < 4; ++i)
    EXPECT_NEAR(track.values[i], (w.pitch_map()[static_cast<std::size_t>(seq[i])] - mean) / sd, 1e-12);
  EXPECT_EQ(wd::f0_of(w, {9, 9, 9, 9}).std(), 0.0);
  EXPECT_EQ(wd::f0_of(w, {}).std(), 0.0);
}

TEST(Dataset, SubsetPurity) {
  const auto w = wd::build_world({});
  for (const auto& s : wd::generate_dataset(w, wd::Subset::D2, 50, 1)) {
    EXPECT_GT(s.condition.size() - 1, w.spec().long_threshold);
    EXPECT_EQ(s.subset, wd::Subset::D2);
  }
  for (const auto& s : wd::generate_dataset(w, wd::Subset::D3, 50, 2)) {
    EXPECT_FALSE(s.keywords_present.empty());
    EXPECT_EQ(s.keywords_present, wd::count_keywords(w, s.text));
  }
}

TEST(Dataset, D1SamplesSatisfyDecoderOracle) {
  const auto w = wd::build_world({});
  // Record what each decoder produced for each utterance so emitted samples
  // can be re-checked against the membership predicate.
  std::map<TokenSequence, TokenSequence> out_a, out_b;
  wd::DatasetOptions opt;
  opt.decoder_a = [&](const TokenSequence& a, std::uint64_t) { return out_a[a] = wd::invert_clean(w, a); };
  opt.decoder_b = [&](const TokenSequence& a, std::uint64_t s) {
    return out_b[a] = wd::invert_clean(w, wd::apply_channel(w, a, w.channel(), s));
  };
  const auto data = wd::generate_dataset(w, wd::Subset::D1, 40, 3, opt);
  ASSERT_EQ(data.size(), 40u);
  for (const auto& s : data) {
    ASSERT_TRUE(out_a.count(s.condition));
    const auto& a = out_a.at(s.condition);
    const auto& b = out_b.at(s.condition);
    const bool differ = a != b;
    const bool repeats = oracle::brute_force_repetition(std::vector<int>(a.begin(), a.end() - 1), 4, 4) ||
                         oracle::brute_force_repetition(std::vector<int>(b.begin(), b.end() - 1), 4, 4);
    EXPECT_TRUE(differ || repeats);
    EXPECT_EQ(s.subset, wd::Subset::D1);
  }
}

TEST(Dataset, UnsatisfiableStrategyReported) {
  wd::WorldSpec spec;
  spec.max_text_len = 5;  // acoustic length never exceeds 40
  spec.p_ins = 0.0;
  const auto w = wd::build_world(spec);
  wd::DatasetOptions opt;
  opt.retry_factor = 20;
  EXPECT_THROW(wd::generate_dataset(w, wd::Subset::D2, 5, 1, opt), wd::DatasetError);
}

TEST(Dataset, DeterministicAndRoundTrips) {
  const auto w = wd::build_world({});
  const auto a = wd::generate_dataset(w, wd::Subset::D0, 30, 9);
  const auto b = wd::generate_dataset(w, wd::Subset::D0, 30, 9);
  std::ostringstream sa, sb;
  wd::write_dataset(sa, w.spec(), wd::Task::Asr, a);
  wd::write_dataset(sb, w.spec(), wd::Task::Asr, b);
  EXPECT_EQ(sa.str(), sb.str());
  std::istringstream in(sa.str());
  const auto file = wd::read_dataset(in);
  EXPECT_EQ(file.world, w.spec());
  ASSERT_EQ(file.samples.size(), a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(file.samples[i].id, a[i].id);
    EXPECT_EQ(file.samples[i].condition, a[i].condition);
    EXPECT_EQ(file.samples[i].keywords_present, a[i].keywords_present);
  }
}
