#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace url::model {

// Byte-level vocabulary: 256 raw byte values plus three specials. No external
// assets, exact round-trip for arbitrary byte strings.
inline constexpr int kBos = 256;
inline constexpr int kEos = 257;
inline constexpr int kPad = 258;
inline constexpr int kVocabSize = 259;

// Raw byte ids, no specials.
std::vector<int> encode_bytes(std::string_view text);

// [BOS] + byte ids + [EOS]. Never emits PAD.
std::vector<int> encode(std::string_view text);

// Inverse of encode for any byte string; special tokens are stripped.
std::string decode(std::span<const int> tokens);

}  // namespace url::model
