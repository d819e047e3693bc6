#pragma once

#include <boost/random/mersenne_twister.hpp>
#include <boost/random/normal_distribution.hpp>
#include <boost/random/uniform_01.hpp>
#include <boost/random/uniform_int_distribution.hpp>

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>

namespace rotinv {

// Boost's engines and distributions are specified algorithmically, so a seed
// yields the same stream on every platform and standard library.
using Engine = boost::random::mt19937_64;

enum class StreamTag : std::uint64_t {
  brownian = 0,
  volatility = 1,
  policy = 2,
  permutation = 3,
  bridge = 4,
};

inline constexpr std::string_view to_string(StreamTag tag) {
  switch (tag) {
    case StreamTag::brownian: return "brownian";
    case StreamTag::volatility: return "volatility";
    case StreamTag::policy: return "policy";
    case StreamTag::permutation: return "permutation";
    case StreamTag::bridge: return "bridge";
  }
  return "unknown";
}

namespace detail {

// splitmix64 finalizer; a bijection on 64-bit words.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace detail

inline constexpr std::string_view kSeedRule =
    "seed = mix64(mix64(base_seed) + 8*path_index + tag), mix64 = splitmix64 finalizer, "
    "tags {brownian:0, volatility:1, policy:2, permutation:3, bridge:4}";

/// Per-path substream seed. For a fixed base seed the map
/// (path_index, tag) -> seed is injective for path_index < 2^61.
constexpr std::uint64_t seed_for_path(std::uint64_t base_seed, std::uint64_t path_index,
                                      StreamTag tag) noexcept {
  const std::uint64_t key = (path_index << 3) + static_cast<std::uint64_t>(tag);
  return detail::mix64(detail::mix64(base_seed) + key);
}

inline void fill_standard_normal(Engine& engine, std::span<double> out) {
  boost::random::normal_distribution<double> normal;
  for (double& x : out) x = normal(engine);
}

inline double standard_normal(Engine& engine) {
  boost::random::normal_distribution<double> normal;
  return normal(engine);
}

inline double uniform01(Engine& engine) {
  boost::random::uniform_01<double> u;
  return u(engine);
}

}  // namespace rotinv
