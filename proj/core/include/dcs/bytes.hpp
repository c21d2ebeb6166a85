// bytes.hpp -- byte buffer aliases and strict base64/hex codecs
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace dcs {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;

inline Bytes to_bytes(std::string_view s) {
    return Bytes(s.begin(), s.end());
}

inline std::string to_string(ByteView b) {
    return std::string(b.begin(), b.end());
}

// RFC 4648 base64 with padding. Encoding is canonical; decode rejects
// anything encode would not produce (bad alphabet, bad length, missing
// padding, nonzero trailing bits).
std::string base64_encode(ByteView data);
std::optional<Bytes> base64_decode(std::string_view text);

std::string hex_encode(ByteView data);

// True iff `needle` occurs as a contiguous substring of `hay`.
bool contains(ByteView hay, ByteView needle);

// True iff the bytes form valid UTF-8.
bool utf8_valid(std::string_view s);

} // namespace dcs
