// SPDX-FileCopyrightText: Copyright (c) 2026 The rlforge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace rlforge {

/// Invalid or inconsistent configuration. key() names the offending setting
/// using the dotted config-file path.
class ConfigError : public std::invalid_argument {
 public:
  ConfigError(std::string key, const std::string& message)
      : std::invalid_argument(key + ": " + message), key_(std::move(key)) {}
  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

}  // namespace rlforge
