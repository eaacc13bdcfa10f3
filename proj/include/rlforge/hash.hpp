// SPDX-FileCopyrightText: Copyright (c) 2026 The rlforge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <cstdio>
#include <string>
#include <string_view>

namespace rlforge {

// 64-bit FNV-1a; stable across platforms, used for ids and config hashes.
class Fnv1a {
 public:
  Fnv1a& update(std::string_view bytes) {
    for (unsigned char c : bytes) {
      h_ ^= c;
      h_ *= 0x100000001B3ull;
    }
    return *this;
  }
  template <class T>
  Fnv1a& update_pod(const T& v) {
    return update(std::string_view(reinterpret_cast<const char*>(&v), sizeof(T)));
  }
  std::uint64_t digest() const noexcept { return h_; }
  std::string hex() const {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h_));
    return buf;
  }

 private:
  std::uint64_t h_ = 0xCBF29CE484222325ull;
};

}  // namespace rlforge
