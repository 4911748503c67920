#include "gcpl/rng.hpp"

namespace gcpl {

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  std::uint64_t h = splitmix(seed);
  h = splitmix(h ^ a);
  h = splitmix(h ^ b);
  return splitmix(h ^ c);
}

float standard_normal(Rng& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  return static_cast<float>(dist(rng));
}

Tensor standard_normal(const Shape& shape, Rng& rng) {
  Tensor out(shape);
  std::normal_distribution<double> dist(0.0, 1.0);
  for (auto& v : out.data()) v = static_cast<float>(dist(rng));
  return out;
}

int uniform_int(Rng& rng, int lo, int hi) {
  std::uniform_int_distribution<int> dist(lo, hi);
  return dist(rng);
}

std::size_t uniform_index(Rng& rng, std::size_t n) {
  std::uniform_int_distribution<std::size_t> dist(0, n - 1);
  return dist(rng);
}

}  // namespace gcpl
