#pragma once

#include <cstdint>
#include <string_view>

namespace gamf {

// SplitMix64 finalizer; full-avalanche 64-bit mix.
constexpr uint64_t mix64(uint64_t z) {
  z += 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// FNV-1a, used to turn stream labels into derivation tags.
constexpr uint64_t rng_tag(std::string_view s) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ull;
  }
  return h;
}

// Counter-based random stream. Every draw is a pure function of
// (key, counter), so streams derived with independent keys produce
// identical sequences no matter how work is scheduled across threads.
class RngStream {
 public:
  RngStream() = default;
  explicit RngStream(uint64_t key) : key_(key) {}

  uint64_t next_u64() { return mix64(key_ + 0x9e3779b97f4a7c15ull * ++counter_); }

  // Uniform in [0, 1), 53-bit resolution.
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform in (0, 1); safe to feed into log().
  double next_open() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  // Uniform integer in [0, bound). Rejection-free would bias by < 2^-32
  // for our bounds; use rejection to keep draws exact.
  uint32_t next_below(uint32_t bound);

  double next_normal();                // standard normal, Box-Muller
  double next_gamma(double shape);     // Gamma(shape, 1), Marsaglia-Tsang
  double next_gumbel();                // standard Gumbel(0, 1)

  // Derive an independent stream; children with distinct tags never collide.
  RngStream child(uint64_t tag) const { return RngStream(mix64(key_ ^ mix64(tag))); }

  uint64_t key() const { return key_; }
  uint64_t counter() const { return counter_; }
  void set_counter(uint64_t c) { counter_ = c; }

 private:
  uint64_t key_ = 0;
  uint64_t counter_ = 0;
};

// Hash-chain a root seed through a path of tags.
inline uint64_t derive_key(uint64_t root, std::initializer_list<uint64_t> path) {
  uint64_t k = mix64(root);
  for (uint64_t p : path) k = mix64(k ^ mix64(p));
  return k;
}

}  // namespace gamf
