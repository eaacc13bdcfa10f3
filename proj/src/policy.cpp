// SPDX-FileCopyrightText: Copyright (c) 2026 The rlforge Authors
// SPDX-License-Identifier: Apache-2.0

#include "rlforge/policy.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "rlforge/rng.hpp"

namespace rlforge::policy {

const char* to_string(Role r) noexcept {
  switch (r) {
    case Role::Current: return "current";
    case Role::Reference: return "reference";
    case Role::Snapshot: return "snapshot";
    case Role::RewardModel: return "reward_model";
  }
  return "?";
}

Role parse_role(const std::string& s) {
  if (s == "current") return Role::Current;
  if (s == "reference") return Role::Reference;
  if (s == "snapshot") return Role::Snapshot;
  if (s == "reward_model") return Role::RewardModel;
  throw std::invalid_argument("unknown role '" + s + "'");
}

namespace {

ad::Array random_array(ad::Shape shape, double scale, Rng& rng) {
  ad::Array a(std::move(shape));
  for (double& v : a.data) v = rng.normal() * scale;
  return a;
}

std::vector<std::size_t> iota_idx(std::size_t n) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return idx;
}

double softplus(double x) { return x > 30.0 ? x + std::log1p(std::exp(-x)) : std::log(std::exp(x) + 1.0); }

}  // namespace

Policy init_policy(const ArchConfig& arch, std::uint64_t seed) {
  if (arch.cond_vocab < 2 || arch.out_vocab < 2 || arch.hidden < 1 || arch.ffn < 1 || arch.context < 1)
    throw std::invalid_argument("invalid architecture");
  if (arch.out_eos < 0 || static_cast<std::size_t>(arch.out_eos) >= arch.out_vocab)
    throw std::invalid_argument("output EOS outside the output vocabulary");
  Policy p;
  p.arch = arch;
  Rng rng(derive_seed(seed, 0x5eed));
  const double d = static_cast<double>(arch.hidden);
  const double unit = 1.0 / std::sqrt(d);
  p.params["cond_embed"] = random_array({arch.cond_vocab, arch.hidden}, unit, rng);
  p.params["cond_pos"] = random_array({arch.context, arch.hidden}, unit, rng);
  p.params["out_pos"] = random_array({arch.context, arch.hidden}, unit, rng);
  p.params["prev_embed"] = random_array({arch.out_vocab + 1, arch.hidden}, unit, rng);
  p.params["key_proj"] = random_array({arch.hidden, arch.hidden}, unit, rng);
  p.params["ffn_in"] = random_array({arch.hidden, arch.ffn}, unit, rng);
  p.params["ffn_bias"] = ad::Array({arch.ffn}, 0.0);
  p.params["ffn_out"] = random_array({arch.ffn, arch.out_vocab}, 1.0 / std::sqrt(static_cast<double>(arch.ffn)), rng);
  p.params["out_bias"] = ad::Array({arch.out_vocab}, 0.0);
  return p;
}

Policy copy_as(const Policy& p, Role role) {
  Policy out = p;
  out.role = role;
  return out;
}

void sync_weights(const Policy& source, Policy& target) {
  if (!(source.arch == target.arch)) throw std::invalid_argument("sync_weights: architecture mismatch");
  for (const auto& [name, a] : source.params) {
    auto it = target.params.find(name);
    if (it == target.params.end() || it->second.shape != a.shape)
      throw std::invalid_argument("sync_weights: parameter layout mismatch at " + name);
  }
  target.params = source.params;
}

ParamVars bind_params(ad::Graph& g, const Policy& p, bool trainable, const std::string& prefix) {
  ParamVars pv;
  for (const auto& [name, a] : p.params)
    pv.vars[name] = trainable ? g.parameter(prefix + name, a) : g.constant(a);
  return pv;
}

namespace {

EncodedCondition finish_encoding(ad::Graph& g, const ParamVars& pv, ad::Var x, std::size_t len) {
  EncodedCondition e;
  e.length = len;
  e.values = x;
  ad::Var pos = g.lookup(pv["cond_pos"], iota_idx(len));
  e.keys = g.add(pos, g.matmul(x, pv["key_proj"]));
  return e;
}

}  // namespace

EncodedCondition encode_tokens(ad::Graph& g, const ParamVars& pv, const ArchConfig& arch,
                               const TokenSequence& condition) {
  if (condition.empty() || condition.size() > arch.context)
    throw std::invalid_argument("condition length " + std::to_string(condition.size()) + " outside [1, " +
                                std::to_string(arch.context) + "]");
  std::vector<std::size_t> idx;
  for (Token t : condition) {
    if (t < 0 || static_cast<std::size_t>(t) >= arch.cond_vocab)
      throw std::invalid_argument("condition token " + std::to_string(t) + " out of vocabulary");
    idx.push_back(static_cast<std::size_t>(t));
  }
  return finish_encoding(g, pv, g.lookup(pv["cond_embed"], std::move(idx)), condition.size());
}

EncodedCondition encode_frames(ad::Graph& g, const ParamVars& pv, const ArchConfig& arch, ad::Var frames) {
  const ad::Array& f = g.value(frames);
  if (f.rank() != 2 || f.shape[1] != arch.cond_vocab)
    throw ad::ShapeError("frames must be [S, " + std::to_string(arch.cond_vocab) + "]");
  if (f.shape[0] > arch.context) throw std::invalid_argument("frame sequence longer than the context window");
  return finish_encoding(g, pv, g.matmul(frames, pv["cond_embed"]), f.shape[0]);
}

void validate_response(const ArchConfig& arch, const TokenSequence& response) {
  if (response.empty()) throw std::invalid_argument("empty response");
  if (response.size() > arch.context) throw std::invalid_argument("response longer than the context window");
  for (Token t : response)
    if (t < 0 || static_cast<std::size_t>(t) >= arch.out_vocab)
      throw std::invalid_argument("response token " + std::to_string(t) + " out of vocabulary");
}

void validate_condition(const Policy& p, const TokenSequence& condition) {
  if (condition.empty() || condition.size() > p.arch.context)
    throw std::invalid_argument("condition length outside the context window");
  for (Token t : condition)
    if (t < 0 || static_cast<std::size_t>(t) >= p.arch.cond_vocab)
      throw std::invalid_argument("condition token " + std::to_string(t) + " out of vocabulary");
}

ad::Var response_logits(ad::Graph& g, const ParamVars& pv, const ArchConfig& arch, const EncodedCondition& cond,
                        const TokenSequence& response) {
  validate_response(arch, response);
  const std::size_t t_len = response.size();
  std::vector<std::size_t> prev{arch.out_vocab};  // BOS row
  for (std::size_t t = 0; t + 1 < t_len; ++t) prev.push_back(static_cast<std::size_t>(response[t]));

  ad::Var q = g.lookup(pv["out_pos"], iota_idx(t_len));
  ad::Var scores = g.scale(g.matmul(q, cond.keys, true), 1.0 / std::sqrt(static_cast<double>(arch.hidden)));
  ad::Var ctx = g.matmul(g.softmax(scores), cond.values);
  ad::Var h = g.add(g.add(ctx, g.lookup(pv["prev_embed"], std::move(prev))), q);
  ad::Var z = g.softplus(g.add(g.matmul(h, pv["ffn_in"]), pv["ffn_bias"]));
  return g.add(g.matmul(z, pv["ffn_out"]), pv["out_bias"]);
}

ad::Var response_logprobs(ad::Graph& g, ad::Var logits, const TokenSequence& response, double temperature) {
  if (!(temperature > 0.0)) throw std::invalid_argument("temperature must be positive");
  ad::Var scaled = temperature == 1.0 ? logits : g.scale(logits, 1.0 / temperature);
  std::vector<std::size_t> idx(response.begin(), response.end());
  return g.gather(g.log_softmax(scaled), std::move(idx));
}

std::vector<double> logprob(const Policy& p, const TokenSequence& condition, const TokenSequence& response,
                            double temperature) {
  ad::Graph g;
  ParamVars pv = bind_params(g, p, false, "");
  EncodedCondition enc = encode_tokens(g, pv, p.arch, condition);
  ad::Var lp = response_logprobs(g, response_logits(g, pv, p.arch, enc, response), response, temperature);
  return g.value(lp).data;
}

IncrementalDecoder::IncrementalDecoder(const Policy& p, const TokenSequence& condition) : p_(&p) {
  validate_condition(p, condition);
  s_ = condition.size();
  const std::size_t d = p.arch.hidden;
  const ad::Array& emb = p.params.at("cond_embed");
  values_.resize(s_ * d);
  for (std::size_t j = 0; j < s_; ++j)
    std::copy_n(emb.data.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(condition[j]) * d), d,
                values_.begin() + static_cast<std::ptrdiff_t>(j * d));
  init_keys();
}

IncrementalDecoder::IncrementalDecoder(const Policy& p, const ad::Array& frames) : p_(&p) {
  if (frames.rank() != 2 || frames.shape[1] != p.arch.cond_vocab) throw ad::ShapeError("bad frame shape");
  s_ = frames.shape[0];
  if (s_ > p.arch.context) throw std::invalid_argument("frame sequence longer than the context window");
  const std::size_t d = p.arch.hidden, v = p.arch.cond_vocab;
  const ad::Array& emb = p.params.at("cond_embed");
  values_.assign(s_ * d, 0.0);
  for (std::size_t j = 0; j < s_; ++j)
    for (std::size_t k = 0; k < v; ++k) {
      const double f = frames.data[j * v + k];
      if (f == 0.0) continue;
      for (std::size_t c = 0; c < d; ++c) values_[j * d + c] += f * emb.data[k * d + c];
    }
  init_keys();
}

void IncrementalDecoder::init_keys() {
  const std::size_t d = p_->arch.hidden;
  const ad::Array& pos = p_->params.at("cond_pos");
  const ad::Array& wk = p_->params.at("key_proj");
  keys_.assign(s_ * d, 0.0);
  for (std::size_t j = 0; j < s_; ++j) {
    double* kj = keys_.data() + j * d;
    const double* xj = values_.data() + j * d;
    for (std::size_t a = 0; a < d; ++a) {
      if (xj[a] == 0.0) continue;
      for (std::size_t c = 0; c < d; ++c) kj[c] += xj[a] * wk.data[a * d + c];
    }
    for (std::size_t c = 0; c < d; ++c) kj[c] = pos.data[j * d + c] + kj[c];
  }
}

std::vector<double> IncrementalDecoder::next_logits(std::size_t t, Token prev) const {
  const ArchConfig& arch = p_->arch;
  if (t >= arch.context) throw std::invalid_argument("position beyond the context window");
  const std::size_t d = arch.hidden, f = arch.ffn, v = arch.out_vocab;
  const double* q = p_->params.at("out_pos").data.data() + t * d;

  std::vector<double> att(s_);
  const double inv = 1.0 / std::sqrt(static_cast<double>(d));
  double mx = -INFINITY;
  for (std::size_t j = 0; j < s_; ++j) {
    double s = 0.0;
    for (std::size_t c = 0; c < d; ++c) s += q[c] * keys_[j * d + c];
    att[j] = s * inv;
    mx = std::max(mx, att[j]);
  }
  double z = 0.0;
  for (double& a : att) z += (a = std::exp(a - mx));
  std::vector<double> h(d, 0.0);
  for (std::size_t j = 0; j < s_; ++j) {
    const double a = att[j] / z;
    for (std::size_t c = 0; c < d; ++c) h[c] += a * values_[j * d + c];
  }
  const std::size_t prev_row = prev < 0 ? arch.out_vocab : static_cast<std::size_t>(prev);
  const double* pe = p_->params.at("prev_embed").data.data() + prev_row * d;
  for (std::size_t c = 0; c < d; ++c) h[c] = h[c] + pe[c] + q[c];

  const ad::Array& w1 = p_->params.at("ffn_in");
  const ad::Array& b1 = p_->params.at("ffn_bias");
  std::vector<double> hid(f, 0.0);
  for (std::size_t c = 0; c < d; ++c)
    for (std::size_t k = 0; k < f; ++k) hid[k] += h[c] * w1.data[c * f + k];
  for (std::size_t k = 0; k < f; ++k) hid[k] = softplus(hid[k] + b1.data[k]);

  const ad::Array& w2 = p_->params.at("ffn_out");
  const ad::Array& b2 = p_->params.at("out_bias");
  std::vector<double> logits(v, 0.0);
  for (std::size_t k = 0; k < f; ++k)
    for (std::size_t o = 0; o < v; ++o) logits[o] += hid[k] * w2.data[k * v + o];
  for (std::size_t o = 0; o < v; ++o) logits[o] += b2.data[o];
  return logits;
}

std::vector<double> IncrementalDecoder::next_distribution(std::size_t t, Token prev, double temperature) const {
  if (!(temperature > 0.0)) throw std::invalid_argument("temperature must be positive");
  std::vector<double> l = next_logits(t, prev);
  double mx = -INFINITY;
  for (double& x : l) mx = std::max(mx, x /= temperature);
  double z = 0.0;
  for (double& x : l) z += (x = std::exp(x - mx));
  for (double& x : l) x /= z;
  return l;
}

std::vector<double> next_token_distribution(const Policy& p, const TokenSequence& condition,
                                            const TokenSequence& prefix, double temperature) {
  IncrementalDecoder dec(p, condition);
  const Token prev = prefix.empty() ? Token{-1} : prefix.back();
  return dec.next_distribution(prefix.size(), prev, temperature);
}

TokenSequence greedy_decode(const Policy& p, const TokenSequence& condition, std::size_t t_max) {
  IncrementalDecoder dec(p, condition);
  TokenSequence out;
  Token prev = -1;
  const std::size_t limit = std::min(t_max, p.arch.context);
  for (std::size_t t = 0; t < limit; ++t) {
    const auto logits = dec.next_logits(t, prev);
    const auto best = static_cast<Token>(std::max_element(logits.begin(), logits.end()) - logits.begin());
    out.push_back(best);
    if (best == p.arch.out_eos) break;
    prev = best;
  }
  return out;
}

TokenSequence sample_response(const Policy& p, const TokenSequence& condition, double temperature,
                              std::size_t t_max, std::uint64_t seed, std::vector<double>* logprobs) {
  if (temperature <= 0.0) {
    TokenSequence out = greedy_decode(p, condition, t_max);
    if (logprobs) logprobs->assign(out.size(), 0.0);
    return out;
  }
  IncrementalDecoder dec(p, condition);
  Rng rng(seed);
  TokenSequence out;
  if (logprobs) logprobs->clear();
  Token prev = -1;
  const std::size_t limit = std::min(t_max, p.arch.context);
  for (std::size_t t = 0; t < limit; ++t) {
    const auto probs = dec.next_distribution(t, prev, temperature);
    const auto tok = static_cast<Token>(rng.categorical(probs));
    out.push_back(tok);
    if (logprobs) logprobs->push_back(std::log(probs[static_cast<std::size_t>(tok)]));
    if (tok == p.arch.out_eos) break;
    prev = tok;
  }
  return out;
}

RolloutGroup sample_group(const Policy& snapshot, const TokenSequence& condition, std::size_t group_size,
                          double temperature, std::size_t t_max, std::uint64_t seed) {
  if (group_size < 2) throw std::invalid_argument("group size must be at least 2");
  if (t_max < 1) throw std::invalid_argument("T_max must be at least 1");
  RolloutGroup grp;
  grp.condition = condition;
  grp.temperature = temperature;
  for (std::size_t i = 0; i < group_size; ++i) {
    std::vector<double> lp;
    grp.responses.push_back(sample_response(snapshot, condition, temperature, t_max, derive_seed(seed, i), &lp));
    grp.eos.push_back(ends_with(grp.responses.back(), snapshot.arch.out_eos));
    grp.rollout_logprobs.push_back(std::move(lp));
  }
  grp.validity = grp.eos;
  return grp;
}

ad::Var sft_loss(ad::Graph& g, const ParamVars& pv, const ArchConfig& arch, const SftPair& pair) {
  EncodedCondition enc = encode_tokens(g, pv, arch, pair.condition);
  TokenSequence target = pair.target;
  if (target.size() > arch.context) target.resize(arch.context);
  ad::Var lp = response_logprobs(g, response_logits(g, pv, arch, enc, target), target);
  return g.neg(g.mean(lp));
}

SftResult sft_pretrain(Policy& p, const std::vector<SftPair>& data, const SftOptions& options) {
  if (data.empty()) throw std::invalid_argument("sft_pretrain: empty dataset");
  if (options.batch == 0) throw std::invalid_argument("sft_pretrain: batch must be positive");
  optim::Adam adam(options.lr);
  SftResult result;
  for (std::size_t step = 0; step < options.steps; ++step) {
    Rng rng(derive_seed(options.seed, step));
    ad::Graph g;
    ParamVars pv = bind_params(g, p, true, "");
    ad::Var loss;
    ad::GradientReport report;
    try {
      ad::Var total;
      for (std::size_t b = 0; b < options.batch; ++b) {
        const SftPair& pair = data[rng.below(data.size())];
        ad::Var l = sft_loss(g, pv, p.arch, pair);
        total = total.valid() ? g.add(total, l) : l;
      }
      loss = g.scale(total, 1.0 / static_cast<double>(options.batch));
      report = g.gradient(loss);
    } catch (const ad::NonFiniteError& e) {
      throw DivergenceError(step, e.what());
    }
    const double value = g.scalar(loss);
    if (!optim::all_finite(report.gradients)) throw DivergenceError(step, "non-finite gradient");
    adam.apply(p.params, report.gradients);
    result.loss_curve.push_back(value);
  }
  return result;
}

}  // namespace rlforge::policy
