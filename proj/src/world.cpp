// SPDX-FileCopyrightText: Copyright (c) 2026 The rlforge Authors
// SPDX-License-Identifier: Apache-2.0

#include "rlforge/world.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include "json.hpp"
#include <ostream>
#include <set>

#include "rlforge/hash.hpp"
#include "rlforge/rng.hpp"

namespace rlforge::world {

using nlohmann::json;

void WorldSpec::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("invalid world spec: " + what); };
  if (text_vocab_size < 4) fail("text_vocab_size must be >= 4");
  if (acoustic_vocab_size < 4) fail("acoustic_vocab_size must be >= 4");
  if (tokens_per_text_symbol < 1) fail("tokens_per_text_symbol must be >= 1");
  for (double p : {p_sub, p_ins, p_del})
    if (!(p >= 0.0 && p < 0.5)) fail("noise rates must lie in [0, 0.5)");
  const std::size_t symbols = text_vocab_size - 3;
  if (num_keywords > symbols) fail("more keywords than text symbols");
  if (!(keyword_weight > 0.0)) fail("keyword_weight must be positive");
  if (embedding_dim < 1) fail("embedding_dim must be >= 1");
  if (min_text_len < 1 || max_text_len < min_text_len) fail("text length range is empty");
  // Renderings must be distinct as token multisets.
  const std::size_t alphabet = acoustic_vocab_size - 1;
  double capacity = 1.0;
  for (std::size_t k = 0; k < tokens_per_text_symbol; ++k)
    capacity *= static_cast<double>(alphabet + k) / static_cast<double>(k + 1);
  if (capacity < static_cast<double>(symbols) * 1.5) fail("acoustic vocabulary too small for the text vocabulary");
}

World::World(WorldSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  const Token first_text = text::kFirstSymbol;
  const Token end_text = static_cast<Token>(spec_.text_vocab_size);
  const auto alphabet = static_cast<std::uint64_t>(spec_.acoustic_vocab_size - 1);

  Rng map_rng(derive_seed(spec_.seed, 1));
  std::set<std::vector<Token>> used_multisets;
  for (Token s = first_text; s < end_text; ++s) {
    std::vector<Token> r;
    std::vector<Token> key;
    do {
      r.clear();
      for (std::size_t k = 0; k < spec_.tokens_per_text_symbol; ++k)
        r.push_back(static_cast<Token>(acoustic::kFirstSymbol + static_cast<Token>(map_rng.below(alphabet))));
      key = r;
      std::sort(key.begin(), key.end());
    } while (used_multisets.count(key) ||
             (spec_.tokens_per_text_symbol > 1 && std::adjacent_find(key.begin(), key.end()) != key.end()));
    used_multisets.insert(key);
    a2t_[r] = s;
    t2a_[s] = std::move(r);
  }

  Rng pitch_rng(derive_seed(spec_.seed, 2));
  pitch_.assign(spec_.acoustic_vocab_size, 0.0);
  for (std::size_t a = acoustic::kFirstSymbol; a < spec_.acoustic_vocab_size; ++a) pitch_[a] = pitch_rng.uniform();
  std::vector<double> symbol_pitches(pitch_.begin() + acoustic::kFirstSymbol, pitch_.end());
  for (double p : symbol_pitches) pitch_mean_ += p;
  pitch_mean_ /= static_cast<double>(symbol_pitches.size());
  pitch_std_ = rewards::population_std(symbol_pitches);

  Rng emb_rng(derive_seed(spec_.seed, 3));
  const double scale = 1.0 / std::sqrt(static_cast<double>(spec_.embedding_dim));
  embedding_.assign(spec_.acoustic_vocab_size, std::vector<double>(spec_.embedding_dim));
  for (auto& row : embedding_)
    for (double& v : row) v = emb_rng.normal() * scale;

  Rng kw_rng(derive_seed(spec_.seed, 4));
  std::vector<Token> pool;
  for (Token s = first_text; s < end_text; ++s) pool.push_back(s);
  for (std::size_t k = 0; k < spec_.num_keywords; ++k) {
    const auto pick = static_cast<std::size_t>(kw_rng.below(pool.size()));
    keywords_.push_back(pool[pick]);
    pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(pick));
  }
  std::sort(keywords_.begin(), keywords_.end());
}

const std::vector<Token>& World::rendering(Token s) const {
  auto it = t2a_.find(s);
  if (it == t2a_.end()) throw std::invalid_argument("unknown text symbol " + std::to_string(s));
  return it->second;
}

double World::pitch(Token a) const {
  if (!is_acoustic_symbol(a)) throw std::invalid_argument("unknown acoustic symbol " + std::to_string(a));
  return pitch_[static_cast<std::size_t>(a)];
}

const std::vector<double>& World::embedding(Token a) const {
  if (a < 0 || static_cast<std::size_t>(a) >= embedding_.size())
    throw std::invalid_argument("unknown acoustic token " + std::to_string(a));
  return embedding_[static_cast<std::size_t>(a)];
}

bool World::is_keyword(Token t) const { return std::binary_search(keywords_.begin(), keywords_.end(), t); }

bool World::is_text_symbol(Token t) const noexcept {
  return t >= text::kFirstSymbol && static_cast<std::size_t>(t) < spec_.text_vocab_size;
}

bool World::is_acoustic_symbol(Token t) const noexcept {
  return t >= acoustic::kFirstSymbol && static_cast<std::size_t>(t) < spec_.acoustic_vocab_size;
}

World build_world(const WorldSpec& spec) { return World(spec); }

TokenSequence synthesize_utterance(const World& w, const TokenSequence& text, bool noisy, std::uint64_t seed) {
  TokenSequence clean;
  for (Token t : text) {
    if (t == text::kEos) break;
    const auto& r = w.rendering(t);
    clean.insert(clean.end(), r.begin(), r.end());
  }
  clean.push_back(acoustic::kEos);
  if (!noisy) return clean;
  return apply_channel(w, clean, w.channel(), seed);
}

TokenSequence apply_channel(const World& w, const TokenSequence& acoustic_seq, const ChannelRates& rates,
                            std::uint64_t seed) {
  Rng rng(seed);
  const auto alphabet = static_cast<std::uint64_t>(w.acoustic_vocab() - 1);
  auto random_symbol = [&] { return static_cast<Token>(acoustic::kFirstSymbol + static_cast<Token>(rng.below(alphabet))); };
  TokenSequence out;
  for (Token a : acoustic_seq) {
    if (a == acoustic::kEos) break;
    if (!w.is_acoustic_symbol(a)) throw std::invalid_argument("unknown acoustic symbol " + std::to_string(a));
    if (rng.bernoulli(rates.p_del)) continue;
    Token emitted = a;
    if (rng.bernoulli(rates.p_sub)) {
      do emitted = random_symbol();
      while (emitted == a && alphabet > 1);
    }
    out.push_back(emitted);
    if (rng.bernoulli(rates.p_ins)) out.push_back(random_symbol());
  }
  out.push_back(acoustic::kEos);
  return out;
}

TokenSequence invert_clean(const World& w, const TokenSequence& acoustic_seq) {
  const std::size_t k = w.spec().tokens_per_text_symbol;
  const auto body = strip_eos(acoustic_seq, acoustic::kEos);
  TokenSequence out;
  std::size_t i = 0;
  while (i < body.size()) {
    if (i + k <= body.size()) {
      std::vector<Token> key(body.begin() + static_cast<std::ptrdiff_t>(i),
                             body.begin() + static_cast<std::ptrdiff_t>(i + k));
      auto it = w.acoustic_to_text().find(key);
      if (it != w.acoustic_to_text().end()) {
        out.push_back(it->second);
        i += k;
        continue;
      }
    }
    ++i;
  }
  out.push_back(text::kEos);
  return out;
}

TokenSequence random_text(const World& w, std::uint64_t seed) {
  Rng rng(seed);
  const auto& spec = w.spec();
  std::vector<double> weights;
  std::vector<Token> symbols;
  for (Token s = text::kFirstSymbol; static_cast<std::size_t>(s) < spec.text_vocab_size; ++s) {
    symbols.push_back(s);
    weights.push_back(w.is_keyword(s) ? spec.keyword_weight : 1.0);
  }
  const std::size_t len = spec.min_text_len + rng.below(spec.max_text_len - spec.min_text_len + 1);
  TokenSequence text;
  for (std::size_t i = 0; i < len; ++i) text.push_back(symbols[rng.categorical(weights)]);
  text.push_back(text::kEos);
  return text;
}

double PitchTrack::std() const { return rewards::population_std(values); }

PitchTrack f0_of(const World& w, const TokenSequence& acoustic_seq) {
  PitchTrack track;
  for (Token a : acoustic_seq) {
    if (a == acoustic::kEos) break;
    track.values.push_back((w.pitch(a) - w.pitch_mean()) / w.pitch_std());
  }
  return track;
}

const char* to_string(Task t) noexcept { return t == Task::Asr ? "asr" : "tts"; }

const char* to_string(Subset s) noexcept {
  switch (s) {
    case Subset::D0: return "D0";
    case Subset::D1: return "D1";
    case Subset::D2: return "D2";
    case Subset::D3: return "D3";
  }
  return "?";
}

Task parse_task(const std::string& s) {
  if (s == "asr" || s == "ASR") return Task::Asr;
  if (s == "tts" || s == "TTS") return Task::Tts;
  throw std::invalid_argument("unknown task '" + s + "'");
}

Subset parse_subset(const std::string& s) {
  if (s == "D0" || s == "d0" || s == "0") return Subset::D0;
  if (s == "D1" || s == "d1" || s == "1") return Subset::D1;
  if (s == "D2" || s == "d2" || s == "2") return Subset::D2;
  if (s == "D3" || s == "d3" || s == "3") return Subset::D3;
  throw std::invalid_argument("unknown data subset '" + s + "'");
}

std::vector<Token> Sample::keyword_occurrences() const {
  std::vector<Token> out;
  for (const auto& [k, c] : keywords_present) out.insert(out.end(), c, k);
  return out;
}

std::vector<std::pair<Token, std::size_t>> count_keywords(const World& w, const TokenSequence& text_seq) {
  std::map<Token, std::size_t> counts;
  for (Token t : text_seq)
    if (w.is_keyword(t)) ++counts[t];
  return {counts.begin(), counts.end()};
}

bool disagreement_or_repetition(const TokenSequence& a, const TokenSequence& b,
                                const rewards::HallucinationParams& params) {
  if (a != b) return true;
  return rewards::has_long_repetition(strip_eos(a, text::kEos), params) ||
         rewards::has_long_repetition(strip_eos(b, text::kEos), params);
}

std::vector<Sample> generate_dataset(const World& w, Subset strategy, std::size_t n, std::uint64_t seed,
                                     const DatasetOptions& options) {
  if (n == 0) throw std::invalid_argument("dataset size must be positive");
  Decoder dec_a = options.decoder_a;
  Decoder dec_b = options.decoder_b;
  if (strategy == Subset::D1) {
    if (!dec_a) dec_a = [&w](const TokenSequence& a, std::uint64_t) { return invert_clean(w, a); };
    if (!dec_b)
      dec_b = [&w](const TokenSequence& a, std::uint64_t s) {
        return invert_clean(w, apply_channel(w, a, w.channel(), s));
      };
  }

  std::vector<Sample> out;
  const std::size_t budget = n * options.retry_factor;
  std::uint64_t attempt = 0;
  for (; out.size() < n && attempt < budget; ++attempt) {
    const std::uint64_t draw_seed = derive_seed(seed, attempt);
    TokenSequence text_seq = random_text(w, derive_seed(draw_seed, 1));
    TokenSequence utterance = synthesize_utterance(w, text_seq, options.noisy, derive_seed(draw_seed, 2));
    const std::size_t acoustic_len = utterance.size() - 1;

    bool keep = true;
    switch (strategy) {
      case Subset::D0:
        break;
      case Subset::D1: {
        const auto ta = dec_a(utterance, derive_seed(draw_seed, 3));
        const auto tb = dec_b(utterance, derive_seed(draw_seed, 4));
        keep = disagreement_or_repetition(ta, tb, options.repetition);
        break;
      }
      case Subset::D2:
        keep = acoustic_len > w.spec().long_threshold;
        break;
      case Subset::D3:
        keep = !count_keywords(w, text_seq).empty();
        break;
    }
    if (!keep) continue;

    Sample s = make_sample(w, options.task, strategy, utterance, text_seq);
    out.push_back(std::move(s));
  }
  if (out.size() < n)
    throw DatasetError(std::string("subset ") + to_string(strategy) + " unsatisfiable: " +
                       std::to_string(out.size()) + " of " + std::to_string(n) + " samples after " +
                       std::to_string(attempt) + " draws");
  return out;
}

std::string content_key(Task task, const TokenSequence& condition, const TokenSequence& text) {
  Fnv1a h;
  h.update(to_string(task));
  for (Token t : condition) h.update_pod(t);
  h.update("|");
  for (Token t : text) h.update_pod(t);
  return h.hex();
}

Sample make_sample(const World& w, Task task, Subset subset, const TokenSequence& utterance, TokenSequence text) {
  Sample s;
  s.subset = subset;
  s.keywords_present = count_keywords(w, text);
  s.condition = task == Task::Asr ? utterance : text;
  s.text = std::move(text);
  s.id = std::string(to_string(subset)) + "-" + content_key(task, s.condition, s.text);
  return s;
}

namespace {

json spec_json(const WorldSpec& s) {
  return json{{"text_vocab_size", s.text_vocab_size},
              {"acoustic_vocab_size", s.acoustic_vocab_size},
              {"tokens_per_text_symbol", s.tokens_per_text_symbol},
              {"p_sub", s.p_sub},
              {"p_ins", s.p_ins},
              {"p_del", s.p_del},
              {"num_keywords", s.num_keywords},
              {"keyword_weight", s.keyword_weight},
              {"embedding_dim", s.embedding_dim},
              {"min_text_len", s.min_text_len},
              {"max_text_len", s.max_text_len},
              {"long_threshold", s.long_threshold},
              {"short_threshold", s.short_threshold},
              {"seed", s.seed}};
}

WorldSpec spec_of(const json& j) {
  WorldSpec s;
  s.text_vocab_size = j.at("text_vocab_size");
  s.acoustic_vocab_size = j.at("acoustic_vocab_size");
  s.tokens_per_text_symbol = j.at("tokens_per_text_symbol");
  s.p_sub = j.at("p_sub");
  s.p_ins = j.at("p_ins");
  s.p_del = j.at("p_del");
  s.num_keywords = j.at("num_keywords");
  s.keyword_weight = j.at("keyword_weight");
  s.embedding_dim = j.at("embedding_dim");
  s.min_text_len = j.at("min_text_len");
  s.max_text_len = j.at("max_text_len");
  s.long_threshold = j.at("long_threshold");
  s.short_threshold = j.at("short_threshold");
  s.seed = j.at("seed");
  return s;
}

}  // namespace

std::string spec_to_json(const WorldSpec& spec) { return spec_json(spec).dump(); }
WorldSpec spec_from_json(const std::string& text) { return spec_of(json::parse(text)); }

void write_dataset(std::ostream& os, const WorldSpec& spec, Task task, const std::vector<Sample>& samples) {
  os << json{{"format_version", kDatasetFormatVersion}, {"task", to_string(task)}, {"world", spec_json(spec)}}.dump()
     << '\n';
  for (const auto& s : samples) {
    os << json{{"id", s.id},
               {"subset", to_string(s.subset)},
               {"condition", s.condition},
               {"text", s.text},
               {"keywords", s.keyword_occurrences()}}
              .dump()
       << '\n';
  }
}

DatasetFile read_dataset(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("dataset: missing header line");
  const json header = json::parse(line);
  if (header.at("format_version").get<int>() != kDatasetFormatVersion)
    throw std::runtime_error("dataset: unsupported format version " + header.at("format_version").dump());
  DatasetFile file;
  file.world = spec_of(header.at("world"));
  file.task = parse_task(header.at("task"));
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const json j = json::parse(line);
    Sample s;
    s.id = j.at("id");
    s.subset = parse_subset(j.at("subset"));
    s.condition = j.at("condition").get<TokenSequence>();
    s.text = j.at("text").get<TokenSequence>();
    std::map<Token, std::size_t> counts;
    for (Token k : j.at("keywords").get<std::vector<Token>>()) ++counts[k];
    s.keywords_present.assign(counts.begin(), counts.end());
    file.samples.push_back(std::move(s));
  }
  return file;
}

}  // namespace rlforge::world
