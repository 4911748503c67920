#pragma once

#include <cstdint>
#include <random>

#include "gcpl/tensor.hpp"

namespace gcpl {

using Rng = std::mt19937_64;

// Stream tags keep independent consumers of one seed from overlapping.
enum class StreamTag : std::uint64_t {
  kData = 1,
  kConditions = 2,
  kModelInit = 3,
  kPretrainBatch = 4,
  kPromptInit = 5,
  kPromptSample = 6,
  kBatchComposition = 7,
  kEpisode = 8,
  kQuery = 9,
  kClassifierPairs = 10,
  kNullPrompts = 11,
};

/// SplitMix64-style mixing of a seed with up to three stream coordinates.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0);

inline Rng derive_stream(std::uint64_t seed, StreamTag tag, std::uint64_t a = 0, std::uint64_t b = 0) {
  return Rng(mix_seed(seed, static_cast<std::uint64_t>(tag), a, b));
}

float standard_normal(Rng& rng);
Tensor standard_normal(const Shape& shape, Rng& rng);

/// Uniform integer in [lo, hi].
int uniform_int(Rng& rng, int lo, int hi);
std::size_t uniform_index(Rng& rng, std::size_t n);

}  // namespace gcpl
