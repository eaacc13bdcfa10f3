// SPDX-FileCopyrightText: Copyright (c) 2026 The rlforge Authors
// SPDX-License-Identifier: Apache-2.0

#include "rlforge/config.hpp"

#include <algorithm>
#include <boost/property_tree/info_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "rlforge/hash.hpp"

namespace rlforge::config {

namespace pt = boost::property_tree;
using trainer::RunConfig;

namespace {

constexpr int kMaxIncludeDepth = 16;

void flatten(const pt::ptree& tree, const std::string& prefix, FlatConfig& out) {
  for (const auto& [k, child] : tree) {
    const std::string key = prefix.empty() ? k : prefix + "." + k;
    if (child.empty())
      out[key] = child.data();
    else
      flatten(child, key, out);
  }
}

pt::ptree parse_tree(std::istream& is, const std::string& origin) {
  pt::ptree tree;
  try {
    pt::read_info(is, tree);
  } catch (const pt::info_parser_error& e) {
    throw ConfigError("<file>", origin + ":" + std::to_string(e.line()) + ": " + e.message());
  }
  return tree;
}

FlatConfig read_flat_impl(const std::filesystem::path& path, int depth) {
  if (depth > kMaxIncludeDepth) throw ConfigError("include", "include depth exceeded at " + path.string());
  std::ifstream is(path);
  if (!is) throw ConfigError("include", "cannot open config file " + path.string());
  const pt::ptree tree = parse_tree(is, path.string());

  FlatConfig merged;
  for (const auto& [k, child] : tree) {
    if (k != "include") continue;
    if (!child.empty()) throw ConfigError("include", "expects a file path");
    for (auto& [key, value] : read_flat_impl(path.parent_path() / child.data(), depth + 1)) merged[key] = value;
  }
  FlatConfig own;
  flatten(tree, "", own);
  own.erase("include");
  // A data mix is replaced as a whole, whichever form either file uses.
  auto is_data = [](const std::string& k) { return k == "data" || k.starts_with("data."); };
  if (std::any_of(own.begin(), own.end(), [&](const auto& kv) { return is_data(kv.first); }))
    std::erase_if(merged, [&](const auto& kv) { return is_data(kv.first); });
  for (auto& [key, value] : own) merged[key] = value;
  return merged;
}

template <class T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  const auto* end = v.data() + v.size();
  const auto [p, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc{} || p != end) throw ConfigError(key, "expected a number, got '" + v + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(key, "expected true or false, got '" + v + "'");
}

struct Entry {
  std::function<void(RunConfig&, const std::string& key, const std::string& value)> set;
  std::function<nlohmann::json(const RunConfig&)> get;
};

template <class Access>
Entry field(Access access) {
  using T = std::remove_cvref_t<decltype(access(std::declval<RunConfig&>()))>;
  Entry e;
  e.set = [access](RunConfig& c, const std::string& key, const std::string& v) {
    if constexpr (std::is_same_v<T, bool>)
      access(c) = parse_bool(key, v);
    else
      access(c) = parse_number<T>(key, v);
  };
  e.get = [access](const RunConfig& c) { return nlohmann::json(access(const_cast<RunConfig&>(c))); };
  return e;
}

template <class Parse, class Show>
Entry custom(Parse parse, Show show) {
  return {[parse](RunConfig& c, const std::string& key, const std::string& v) {
            try {
              parse(c, v);
            } catch (const ConfigError&) {
              throw;
            } catch (const std::exception& e) {
              throw ConfigError(key, e.what());
            }
          },
          show};
}

#define RLF_FIELD(key, member) \
  { key, field([](RunConfig& c) -> auto& { return c.member; }) }

const std::map<std::string, Entry>& registry() {
  static const std::map<std::string, Entry> entries = {
      {"task", custom([](RunConfig& c, const std::string& v) { c.task = world::parse_task(v); },
                      [](const RunConfig& c) { return nlohmann::json(world::to_string(c.task)); })},
      {"method", custom([](RunConfig& c, const std::string& v) { c.method = trainer::parse_method(v); },
                        [](const RunConfig& c) { return nlohmann::json(trainer::to_string(c.method)); })},
      {"rules", custom([](RunConfig& c, const std::string& v) { c.rules = rewards::parse_rules(v); },
                       [](const RunConfig& c) { return nlohmann::json(rewards::rules_str(c.rules)); })},
      RLF_FIELD("pool_size", pool_size),
      RLF_FIELD("steps", steps),
      RLF_FIELD("seed", seed),
      RLF_FIELD("weights.r1", weights.r1),
      RLF_FIELD("weights.r3", weights.r3),
      RLF_FIELD("hallucination.n_max", hallucination.n_max),
      RLF_FIELD("hallucination.rep_threshold", hallucination.rep_threshold),
      RLF_FIELD("hallucination.len_ratio", hallucination.len_ratio),
      RLF_FIELD("world.text_vocab_size", world.text_vocab_size),
      RLF_FIELD("world.acoustic_vocab_size", world.acoustic_vocab_size),
      RLF_FIELD("world.tokens_per_text_symbol", world.tokens_per_text_symbol),
      RLF_FIELD("world.p_sub", world.p_sub),
      RLF_FIELD("world.p_ins", world.p_ins),
      RLF_FIELD("world.p_del", world.p_del),
      RLF_FIELD("world.num_keywords", world.num_keywords),
      RLF_FIELD("world.keyword_weight", world.keyword_weight),
      RLF_FIELD("world.embedding_dim", world.embedding_dim),
      RLF_FIELD("world.min_text_len", world.min_text_len),
      RLF_FIELD("world.max_text_len", world.max_text_len),
      RLF_FIELD("world.long_threshold", world.long_threshold),
      RLF_FIELD("world.short_threshold", world.short_threshold),
      RLF_FIELD("world.seed", world.seed),
      RLF_FIELD("model.hidden", model.hidden),
      RLF_FIELD("model.ffn", model.ffn),
      RLF_FIELD("model.context", model.context),
      RLF_FIELD("train.group_size", train.group_size),
      RLF_FIELD("train.groups_per_step", train.groups_per_step),
      RLF_FIELD("train.temperature", train.temperature),
      RLF_FIELD("train.t_max", train.t_max),
      RLF_FIELD("train.lr", train.lr),
      RLF_FIELD("train.clip_eps", train.clip_eps),
      RLF_FIELD("train.kl_beta", train.kl_beta),
      RLF_FIELD("train.temperature_one_ratio", train.temperature_one_ratio),
      RLF_FIELD("train.lambda_diff", train.lambda_diff),
      RLF_FIELD("train.tau", train.tau),
      RLF_FIELD("train.eps_std", train.eps_std),
      RLF_FIELD("eval.every", eval.every),
      RLF_FIELD("eval.test_size", eval.test_size),
      RLF_FIELD("eval.noise_scale", eval.noise_scale),
      RLF_FIELD("eval.diversity_conditions", eval.diversity_conditions),
      RLF_FIELD("eval.sampled_conditions", eval.sampled_conditions),
      RLF_FIELD("eval.stability_threshold", eval.stability_threshold),
      RLF_FIELD("eval.split.short_max", eval.split.short_max),
      RLF_FIELD("eval.split.long_min", eval.split.long_min),
      RLF_FIELD("pretrain.pool_size", pretrain.pool_size),
      RLF_FIELD("pretrain.sft.steps", pretrain.sft.steps),
      RLF_FIELD("pretrain.sft.batch", pretrain.sft.batch),
      RLF_FIELD("pretrain.sft.lr", pretrain.sft.lr),
      RLF_FIELD("pretrain.sft.seed", pretrain.sft.seed),
      RLF_FIELD("reward_model.n_pairs", reward_model.n_pairs),
      RLF_FIELD("reward_model.held_out", reward_model.held_out),
      RLF_FIELD("reward_model.steps", reward_model.steps),
      RLF_FIELD("reward_model.batch", reward_model.batch),
      RLF_FIELD("reward_model.lr", reward_model.lr),
      RLF_FIELD("reward_model.noise_fraction", reward_model.noise_fraction),
      RLF_FIELD("reward_model.target_accuracy", reward_model.target_accuracy),
      RLF_FIELD("reward_model.seed", reward_model.seed),
      RLF_FIELD("reward_model.hidden", reward_model.hidden),
      RLF_FIELD("reward_model.ffn", reward_model.ffn),
  };
  return entries;
}

#undef RLF_FIELD

}  // namespace

FlatConfig read_flat(const std::filesystem::path& path) { return read_flat_impl(path, 0); }

FlatConfig parse_flat(const std::string& text) {
  std::istringstream is(text);
  const auto tree = parse_tree(is, "<string>");
  if (tree.count("include")) throw ConfigError("include", "includes need a file-backed config");
  FlatConfig out;
  flatten(tree, "", out);
  return out;
}

RunConfig apply(const FlatConfig& flat, RunConfig base) {
  const auto& reg = registry();
  std::vector<trainer::SubsetWeight> data;
  for (const auto& [key, value] : flat) {
    if (key == "data") {
      // Compact form: "D0" or "D0:0.5,D3:0.5".
      std::stringstream ss(value);
      std::string item;
      while (std::getline(ss, item, ',')) {
        const auto colon = item.find(':');
        const std::string name = item.substr(0, colon);
        world::Subset s;
        try {
          s = world::parse_subset(name);
        } catch (const std::exception& e) {
          throw ConfigError(key, e.what());
        }
        data.push_back({s, colon == std::string::npos ? 1.0 : parse_number<double>(key, item.substr(colon + 1))});
      }
      if (data.empty()) throw ConfigError(key, "no subsets given");
      continue;
    }
    if (key.starts_with("data.")) {
      world::Subset s;
      try {
        s = world::parse_subset(key.substr(5));
      } catch (const std::exception& e) {
        throw ConfigError(key, e.what());
      }
      data.push_back({s, parse_number<double>(key, value)});
      continue;
    }
    auto it = reg.find(key);
    if (it == reg.end()) throw ConfigError(key, "unknown setting");
    it->second.set(base, key, value);
  }
  if (!data.empty()) base.data = std::move(data);
  base.validate();
  return base;
}

RunConfig load(const std::filesystem::path& path) { return apply(read_flat(path)); }

nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [key, e] : registry()) {
    std::string ptr = "/" + key;
    std::replace(ptr.begin(), ptr.end(), '.', '/');
    j[nlohmann::json::json_pointer(ptr)] = e.get(c);
  }
  for (const auto& d : c.data) j["data"][world::to_string(d.subset)] = d.weight;
  return j;
}

std::string config_hash(const RunConfig& c) { return Fnv1a().update(to_json(c).dump()).hex(); }

}  // namespace rlforge::config
