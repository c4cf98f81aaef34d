#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace rlrt {

// Independent, schedule-free random stream keyed by a base seed and a tuple
// of integer tags (trial index, source id, ...).
inline std::mt19937_64 make_stream(std::uint64_t seed, std::initializer_list<std::uint64_t> tags) {
  std::vector<std::uint32_t> words;
  words.reserve(2 + 2 * tags.size());
  words.push_back(static_cast<std::uint32_t>(seed));
  words.push_back(static_cast<std::uint32_t>(seed >> 32));
  for (auto t : tags) {
    words.push_back(static_cast<std::uint32_t>(t));
    words.push_back(static_cast<std::uint32_t>(t >> 32));
  }
  std::seed_seq seq(words.begin(), words.end());
  return std::mt19937_64(seq);
}

}  // namespace rlrt
