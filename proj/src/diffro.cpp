// SPDX-FileCopyrightText: Copyright (c) 2026 The rlforge Authors
// SPDX-License-Identifier: Apache-2.0

#include "rlforge/diffro.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace rlforge::diffro {

namespace {

std::vector<double> softmax_row(std::span<const double> x, double tau) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double v : x) mx = std::max(mx, v / tau);
  std::vector<double> out(x.size());
  double z = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) z += out[i] = std::exp(x[i] / tau - mx);
  for (double& v : out) v /= z;
  return out;
}

std::vector<std::size_t> to_index(const TokenSequence& seq) { return {seq.begin(), seq.end()}; }

ad::Var frames_for(ad::Graph& g, ad::Var soft, const std::vector<std::size_t>& hard, std::size_t vocab,
                   FrameMode mode) {
  switch (mode) {
    case FrameMode::StraightThrough: return straight_through(g, soft, hard);
    case FrameMode::Soft: return soft;
    case FrameMode::Hard: return g.constant(one_hot(hard, vocab));
  }
  throw std::invalid_argument("unknown frame mode");
}

DiffroLoss finish(ad::Graph& g, ad::Var frames, ad::Var probs, const policy::ParamVars& rm_params,
                  const policy::ArchConfig& rm_arch, const TokenSequence& text) {
  DiffroLoss out;
  out.frames = frames;
  out.probs = probs;
  out.reward = diffro_reward(g, rm_params, rm_arch, frames, text);
  out.loss = g.neg(out.reward);
  return out;
}

}  // namespace

GumbelDraw gumbel_draw(std::span<const double> logits, double tau, Rng& rng) {
  if (!(tau > 0.0)) throw std::invalid_argument("Gumbel temperature must be positive");
  GumbelDraw d;
  d.noise.resize(logits.size());
  std::vector<double> perturbed(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    d.noise[i] = rng.gumbel();
    perturbed[i] = logits[i] + d.noise[i];
  }
  d.soft = softmax_row(perturbed, tau);
  d.index = static_cast<std::size_t>(std::max_element(perturbed.begin(), perturbed.end()) - perturbed.begin());
  return d;
}

ad::Array one_hot(const std::vector<std::size_t>& index, std::size_t vocab) {
  ad::Array a({index.size(), vocab});
  for (std::size_t t = 0; t < index.size(); ++t) {
    if (index[t] >= vocab) throw std::invalid_argument("one-hot index out of range");
    a.data[t * vocab + index[t]] = 1.0;
  }
  return a;
}

ad::Var straight_through(ad::Graph& g, ad::Var soft, const std::vector<std::size_t>& hard_index) {
  const ad::Array& s = g.value(soft);
  if (s.rank() != 2 || s.shape[0] != hard_index.size()) throw ad::ShapeError("straight_through: shape mismatch");
  ad::Var hard = g.constant(one_hot(hard_index, s.shape[1]));
  // soft - stop_gradient(soft) is exactly zero, so the forward value is hard.
  return g.add(hard, g.sub(soft, g.stop_gradient(soft)));
}

ad::Var gumbel_softmax_st(ad::Graph& g, ad::Var logits, const ad::Array& noise, double tau) {
  if (!(tau > 0.0)) throw std::invalid_argument("Gumbel temperature must be positive");
  const ad::Array& l = g.value(logits);
  if (l.shape != noise.shape || l.rank() != 2) throw ad::ShapeError("gumbel_softmax_st: noise shape mismatch");
  const std::size_t rows = l.shape[0], v = l.shape[1];
  std::vector<std::size_t> hard(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < v; ++k)
      if (l.data[r * v + k] + noise.data[r * v + k] > l.data[r * v + best] + noise.data[r * v + best]) best = k;
    hard[r] = best;
  }
  ad::Var soft = g.softmax(g.scale(g.add(logits, g.constant(noise)), 1.0 / tau));
  return straight_through(g, soft, hard);
}

ad::Var gumbel_softmax_st(ad::Graph& g, ad::Var logits, double tau, std::uint64_t seed) {
  const ad::Array& l = g.value(logits);
  if (l.rank() != 2) throw ad::ShapeError("gumbel_softmax_st: logits must be 2-D");
  ad::Array noise(l.shape);
  Rng rng(seed);
  for (double& x : noise.data) x = rng.gumbel();
  return gumbel_softmax_st(g, logits, noise, tau);
}

policy::ArchConfig reward_model_arch(const world::World& w, std::size_t hidden, std::size_t ffn,
                                     std::size_t context) {
  policy::ArchConfig a;
  a.cond_vocab = w.acoustic_vocab();
  a.out_vocab = w.text_vocab();
  a.out_eos = text::kEos;
  a.hidden = hidden;
  a.ffn = ffn;
  a.context = context;
  return a;
}

double teacher_forced_accuracy(const policy::Policy& rm, const std::vector<policy::SftPair>& pairs) {
  std::size_t hit = 0, total = 0;
  for (const auto& pair : pairs) {
    ad::Graph g;
    auto pv = policy::bind_params(g, rm, false, "");
    auto enc = policy::encode_tokens(g, pv, rm.arch, pair.condition);
    const ad::Array& logits = g.value(policy::response_logits(g, pv, rm.arch, enc, pair.target));
    const std::size_t v = rm.arch.out_vocab;
    for (std::size_t t = 0; t < pair.target.size(); ++t) {
      const auto row = logits.data.begin() + static_cast<std::ptrdiff_t>(t * v);
      const auto arg = static_cast<std::size_t>(std::max_element(row, row + static_cast<std::ptrdiff_t>(v)) - row);
      hit += arg == static_cast<std::size_t>(pair.target[t]);
      ++total;
    }
  }
  return total ? static_cast<double>(hit) / static_cast<double>(total) : 0.0;
}

RewardModelResult pretrain_reward_model(const world::World& w, const RewardModelOptions& options) {
  if (options.n_pairs == 0 || options.held_out == 0) throw std::invalid_argument("reward model needs data");
  if (options.noise_fraction < 0.0 || options.noise_fraction > 1.0)
    throw std::invalid_argument("noise_fraction outside [0, 1]");
  auto make_pairs = [&](std::size_t n, std::uint64_t stream, double noise_fraction) {
    std::vector<policy::SftPair> out;
    for (std::size_t i = 0; i < n; ++i) {
      const std::uint64_t s = derive_seed(derive_seed(options.seed, stream), i);
      TokenSequence text = world::random_text(w, s);
      Rng coin(derive_seed(s, 2));
      const bool noisy = coin.uniform() < noise_fraction;
      TokenSequence ac = world::synthesize_utterance(w, text, noisy, derive_seed(s, 1));
      out.push_back({std::move(ac), std::move(text)});
    }
    return out;
  };
  const auto train = make_pairs(options.n_pairs, 1, options.noise_fraction);
  const auto test = make_pairs(options.held_out, 2, 0.0);
  const auto test_noisy = make_pairs(options.held_out, 5, 1.0);

  RewardModelResult res;
  res.rm.model = policy::init_policy(reward_model_arch(w, options.hidden, options.ffn), derive_seed(options.seed, 3));
  res.rm.model.role = policy::Role::RewardModel;
  policy::SftOptions sft;
  sft.steps = options.steps;
  sft.batch = options.batch;
  sft.lr = options.lr;
  sft.seed = derive_seed(options.seed, 4);
  res.loss_curve = policy::sft_pretrain(res.rm.model, train, sft).loss_curve;
  res.rm.accuracy = teacher_forced_accuracy(res.rm.model, test);
  res.rm.noisy_accuracy = teacher_forced_accuracy(res.rm.model, test_noisy);
  res.target_met = res.rm.accuracy >= options.target_accuracy;
  return res;
}

ad::Var diffro_reward(ad::Graph& g, const policy::ParamVars& rm_params, const policy::ArchConfig& rm_arch,
                      ad::Var frames, const TokenSequence& y) {
  if (y.empty() || y.back() != rm_arch.out_eos) throw std::invalid_argument("reward target must end with EOS");
  if (y.size() > rm_arch.context) throw std::invalid_argument("reward target longer than the model context");
  auto enc = policy::encode_frames(g, rm_params, rm_arch, frames);
  return g.sum(policy::response_logprobs(g, policy::response_logits(g, rm_params, rm_arch, enc, y), y));
}

double diffro_reward(const RewardModel& rm, const ad::Array& frames, const TokenSequence& y) {
  ad::Graph g;
  auto pv = policy::bind_params(g, rm.model, false, "");
  return g.scalar(diffro_reward(g, pv, rm.model.arch, g.constant(frames), y));
}

double diffro_reward(const RewardModel& rm, const TokenSequence& acoustic, const TokenSequence& y) {
  return diffro_reward(rm, one_hot(to_index(acoustic), rm.model.arch.cond_vocab), y);
}

ad::Array posteriors(const RewardModel& rm, const ad::Array& frames, const TokenSequence& y) {
  ad::Graph g;
  auto pv = policy::bind_params(g, rm.model, false, "");
  auto enc = policy::encode_frames(g, pv, rm.model.arch, g.constant(frames));
  return g.value(g.softmax(policy::response_logits(g, pv, rm.model.arch, enc, y)));
}

DiffroLoss diffro_loss_on_response(ad::Graph& g, const policy::ParamVars& pv, const policy::ArchConfig& arch,
                                   const policy::ParamVars& rm_params, const policy::ArchConfig& rm_arch,
                                   const TokenSequence& text, const TokenSequence& response, FrameMode mode) {
  if (arch.out_vocab != rm_arch.cond_vocab) throw std::invalid_argument("policy and reward model vocabularies differ");
  auto enc = policy::encode_tokens(g, pv, arch, text);
  return diffro_loss_from_logits(g, policy::response_logits(g, pv, arch, enc, response), response, rm_params, rm_arch,
                                 text, mode);
}

DiffroLoss diffro_loss_from_logits(ad::Graph& g, ad::Var logits, const TokenSequence& response,
                                   const policy::ParamVars& rm_params, const policy::ArchConfig& rm_arch,
                                   const TokenSequence& text, FrameMode mode) {
  const ad::Array& l = g.value(logits);
  if (l.rank() != 2 || l.shape[0] != response.size() || l.shape[1] != rm_arch.cond_vocab)
    throw ad::ShapeError("diffro: logits do not match the response and reward model vocabulary");
  ad::Var probs = g.softmax(logits);
  ad::Var frames = frames_for(g, probs, to_index(response), rm_arch.cond_vocab, mode);
  return finish(g, frames, probs, rm_params, rm_arch, text);
}

GumbelRollout gumbel_generate(const policy::Policy& p, const TokenSequence& condition, double tau,
                              std::size_t t_max, std::uint64_t seed) {
  policy::IncrementalDecoder dec(p, condition);
  Rng rng(seed);
  GumbelRollout out;
  out.tau = tau;
  const std::size_t v = p.arch.out_vocab;
  std::vector<double> noise;
  Token prev = -1;
  const std::size_t limit = std::min(t_max, p.arch.context);
  for (std::size_t t = 0; t < limit; ++t) {
    const auto logits = dec.next_logits(t, prev);
    auto d = gumbel_draw(logits, tau, rng);
    noise.insert(noise.end(), d.noise.begin(), d.noise.end());
    const auto tok = static_cast<Token>(d.index);
    out.response.push_back(tok);
    if (tok == p.arch.out_eos) break;
    prev = tok;
  }
  out.noise = ad::Array({out.response.size(), v}, std::move(noise));
  return out;
}

DiffroLoss diffro_loss_gumbel(ad::Graph& g, const policy::ParamVars& pv, const policy::ArchConfig& arch,
                              const policy::ParamVars& rm_params, const policy::ArchConfig& rm_arch,
                              const TokenSequence& text, const GumbelRollout& rollout, FrameMode mode) {
  if (arch.out_vocab != rm_arch.cond_vocab) throw std::invalid_argument("policy and reward model vocabularies differ");
  if (!(rollout.tau > 0.0)) throw std::invalid_argument("Gumbel temperature must be positive");
  auto enc = policy::encode_tokens(g, pv, arch, text);
  ad::Var logits = policy::response_logits(g, pv, arch, enc, rollout.response);
  ad::Var soft = g.softmax(g.scale(g.add(logits, g.constant(rollout.noise)), 1.0 / rollout.tau));
  ad::Var frames = frames_for(g, soft, to_index(rollout.response), arch.out_vocab, mode);
  return finish(g, frames, soft, rm_params, rm_arch, text);
}

}  // namespace rlforge::diffro
