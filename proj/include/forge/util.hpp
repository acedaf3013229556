#pragma once

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "forge/errors.hpp"

namespace forge {

inline std::string trim(std::string_view s) {
  size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

inline std::string to_lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return out;
}

inline std::string to_upper(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return std::toupper(c); });
  return out;
}

// Runs of whitespace become a single space; leading/trailing runs are dropped.
inline std::string collapse_whitespace(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  bool in_ws = true;
  for (char c : s) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      in_ws = true;
    } else {
      if (in_ws && !out.empty()) out.push_back(' ');
      in_ws = false;
      out.push_back(c);
    }
  }
  return out;
}

// CRLF and lone CR become LF.
inline std::string normalize_newlines(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '\r') {
      out.push_back('\n');
      if (i + 1 < s.size() && s[i + 1] == '\n') ++i;
    } else {
      out.push_back(s[i]);
    }
  }
  return out;
}

inline size_t find_last_ci(std::string_view haystack, std::string_view needle) {
  std::string h = to_lower(haystack);
  std::string n = to_lower(needle);
  return h.rfind(n);
}

inline bool contains_ci(std::string_view haystack, std::string_view needle) {
  return to_lower(haystack).find(to_lower(needle)) != std::string::npos;
}

// Byte offsets of every Unicode scalar value, plus a final entry at size().
// Throws IngestError on malformed UTF-8; offsets in the artifact's file
// formats are counted in scalar values, not bytes.
inline std::vector<size_t> utf8_index(std::string_view text,
                                      const std::string& origin = "") {
  std::vector<size_t> idx;
  idx.reserve(text.size() + 1);
  size_t i = 0;
  auto fail = [&](const char* why) -> void {
    throw IngestError("invalid UTF-8 (" + std::string(why) + ") at byte " +
                      std::to_string(i) + (origin.empty() ? "" : " in " + origin));
  };
  while (i < text.size()) {
    idx.push_back(i);
    unsigned char c = text[i];
    size_t len;
    uint32_t cp;
    if (c < 0x80) {
      len = 1;
      cp = c;
    } else if ((c & 0xE0) == 0xC0) {
      len = 2;
      cp = c & 0x1F;
    } else if ((c & 0xF0) == 0xE0) {
      len = 3;
      cp = c & 0x0F;
    } else if ((c & 0xF8) == 0xF0) {
      len = 4;
      cp = c & 0x07;
    } else {
      fail("bad lead byte");
      return idx;
    }
    if (i + len > text.size()) fail("truncated sequence");
    for (size_t k = 1; k < len; ++k) {
      unsigned char cc = text[i + k];
      if ((cc & 0xC0) != 0x80) fail("bad continuation byte");
      cp = (cp << 6) | (cc & 0x3F);
    }
    static const uint32_t kMin[5] = {0, 0, 0x80, 0x800, 0x10000};
    if (cp < kMin[len] || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF))
      fail("invalid scalar value");
    i += len;
  }
  idx.push_back(text.size());
  return idx;
}

// --- deterministic randomness -------------------------------------------

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

inline uint64_t fnv1a64(std::string_view s) {
  uint64_t h = 0xCBF29CE484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ull;
  }
  return h;
}

inline uint64_t mix_seed(uint64_t a, uint64_t b) {
  return splitmix64(a ^ splitmix64(b));
}

inline uint64_t mix_seed(uint64_t a, std::string_view b) {
  return mix_seed(a, fnv1a64(b));
}

// Unbiased bounded draw in [0, n). Hand-rolled so sequences are stable
// across standard libraries (std::uniform_int_distribution is not).
inline uint64_t bounded_uniform(std::mt19937_64& rng, uint64_t n) {
  if (n == 0) throw ContractError("bounded_uniform: n must be positive");
  uint64_t threshold = (0 - n) % n;
  for (;;) {
    uint64_t r = rng();
    if (r >= threshold) return r % n;
  }
}

template <typename T>
void fisher_yates(std::vector<T>& v, std::mt19937_64& rng) {
  for (size_t i = v.size(); i > 1; --i) {
    size_t j = static_cast<size_t>(bounded_uniform(rng, i));
    std::swap(v[i - 1], v[j]);
  }
}

inline std::vector<size_t> random_permutation(size_t n, std::mt19937_64& rng) {
  std::vector<size_t> perm(n);
  std::iota(perm.begin(), perm.end(), size_t{0});
  fisher_yates(perm, rng);
  return perm;
}

inline int64_t unix_millis() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

}  // namespace forge
