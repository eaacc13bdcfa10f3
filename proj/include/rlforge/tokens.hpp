// SPDX-FileCopyrightText: Copyright (c) 2026 The rlforge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace rlforge {

using Token = std::int32_t;
using TokenSequence = std::vector<Token>;

// Text vocabulary layout: PAD, BOS, EOS, then ordinary symbols.
namespace text {
inline constexpr Token kPad = 0;
inline constexpr Token kBos = 1;
inline constexpr Token kEos = 2;
inline constexpr Token kFirstSymbol = 3;
}  // namespace text

// Acoustic vocabulary layout: EOS, then ordinary symbols.
namespace acoustic {
inline constexpr Token kEos = 0;
inline constexpr Token kFirstSymbol = 1;
}  // namespace acoustic

inline bool ends_with(std::span<const Token> seq, Token eos) { return !seq.empty() && seq.back() == eos; }

// Drops a single trailing terminator, if present.
inline TokenSequence strip_eos(std::span<const Token> seq, Token eos) {
  TokenSequence out(seq.begin(), seq.end());
  if (!out.empty() && out.back() == eos) out.pop_back();
  return out;
}

}  // namespace rlforge
