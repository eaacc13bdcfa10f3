// SPDX-FileCopyrightText: Copyright (c) 2026 The rlforge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "rlforge/autodiff.hpp"
#include "rlforge/diffro.hpp"
#include "rlforge/policy.hpp"

namespace rlforge::checkpoint {

inline constexpr std::uint32_t kFormatVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Versioned binary container:
///   "RLFCKPT\0" | u32 version | u32 role-length | role | u64 meta-length |
///   meta (JSON) | u32 array count | per array: u32 name-length, name,
///   u32 rank, u64 dims[rank], f64 data[product(dims)]
/// Integers and doubles are little-endian; doubles are stored bit-exact.
struct Checkpoint {
  std::string role;
  nlohmann::json metadata = nlohmann::json::object();
  std::map<std::string, ad::Array> arrays;

  bool operator==(const Checkpoint&) const = default;
};

std::string encode(const Checkpoint& c);
Checkpoint decode(const std::string& bytes);

// Writes to a sibling temp file, then renames it into place.
void write_atomic(const std::filesystem::path& path, const std::string& bytes);
std::string read_file(const std::filesystem::path& path);

void save(const std::filesystem::path& path, const Checkpoint& c);
Checkpoint load(const std::filesystem::path& path);

nlohmann::json arch_to_json(const policy::ArchConfig& a);
policy::ArchConfig arch_from_json(const nlohmann::json& j);

// `extra` is merged into the metadata (config hash, world seed, train config).
Checkpoint from_policy(const policy::Policy& p, const nlohmann::json& extra = nlohmann::json::object());
policy::Policy to_policy(const Checkpoint& c);

Checkpoint from_reward_model(const diffro::RewardModel& rm, const nlohmann::json& extra = nlohmann::json::object());
diffro::RewardModel to_reward_model(const Checkpoint& c);

}  // namespace rlforge::checkpoint
