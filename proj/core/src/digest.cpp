#include "reem/digest.hpp"

#include <cstdio>
#include <fstream>

#include "reem/errors.hpp"

namespace reem {

std::string digest_hex(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(value));
  return std::string(buf);
}

std::string digest_of(std::string_view data) {
  return digest_hex(fnv1a64(data));
}

std::string digest_of_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read file for digest: " + path.string());
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof(buf));
    const std::streamsize n = in.gcount();
    for (std::streamsize i = 0; i < n; ++i) {
      h ^= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[i]));
      h *= 0x100000001b3ULL;
    }
  }
  return digest_hex(h);
}

}  // namespace reem
