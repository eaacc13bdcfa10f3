// SPDX-FileCopyrightText: Copyright (c) 2026 The rlforge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <map>
#include <string>

#include <json.hpp>

#include "rlforge/trainer.hpp"

namespace rlforge::config {

using trainer::ConfigError;

// Flattened "a.b.c" -> value view of a config file. Files use the Boost
// INFO syntax (nested `section { key value }` blocks, `;` comments). A
// top-level `include "path"` entry, resolved against the including file's
// directory, pulls in a base file whose values the includer overrides.
using FlatConfig = std::map<std::string, std::string>;

FlatConfig read_flat(const std::filesystem::path& path);
FlatConfig parse_flat(const std::string& text);  // no includes

// Data mixing is given either as a `data { D0 0.5 D3 0.5 }` section or as a
// compact `data "D0:0.5,D3:0.5"` value; either replaces the base mix.
// Applies settings on top of `base`; unknown keys and bad values throw
// ConfigError naming the key. The result is validated.
trainer::RunConfig apply(const FlatConfig& flat, trainer::RunConfig base = {});
trainer::RunConfig load(const std::filesystem::path& path);

// Canonical nested form: every setting, sorted keys. The hash is FNV-1a of
// its compact dump, so two configs hash equal iff all settings agree.
nlohmann::json to_json(const trainer::RunConfig& c);
std::string config_hash(const trainer::RunConfig& c);

}  // namespace rlforge::config
