#pragma once

#include <openssl/sha.h>

#include <string>
#include <string_view>

namespace forge {

inline std::string sha256_hex(std::string_view data) {
  unsigned char out[SHA256_DIGEST_LENGTH];
  SHA256(reinterpret_cast<const unsigned char*>(data.data()), data.size(), out);
  static const char* hex = "0123456789abcdef";
  std::string s;
  s.reserve(SHA256_DIGEST_LENGTH * 2);
  for (unsigned char b : out) {
    s.push_back(hex[b >> 4]);
    s.push_back(hex[b & 0x0F]);
  }
  return s;
}

}  // namespace forge
