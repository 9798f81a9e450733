#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace reem {

/// 64-bit FNV-1a. Stable across platforms and runs; used for cache keys,
/// manifest digests, and run-directory names. Not cryptographic.
inline std::uint64_t fnv1a64(std::string_view data,
                             std::uint64_t seed = 0xcbf29ce484222325ULL) {
  std::uint64_t h = seed;
  for (char c : data) {
    h ^= static_cast<std::uint64_t>(static_cast<unsigned char>(c));
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Lower-case 16-hex-digit rendering of a 64-bit digest.
std::string digest_hex(std::uint64_t value);

/// Digest of a string's bytes, rendered as hex.
std::string digest_of(std::string_view data);

/// Digest of a file's contents. Throws IoError if the file cannot be read.
std::string digest_of_file(const std::filesystem::path& path);

}  // namespace reem
