#ifndef QKD_RNG_HPP
#define QKD_RNG_HPP

#include <cstdint>
#include <string_view>

namespace qkd {

/// 64-bit FNV-1a. Used for stable substream derivation and content digests.
uint64_t stable_hash64(std::string_view data);

/// Seedable, splittable random stream (xoshiro256** core, splitmix64 seeding).
///
/// All sampling is implemented on top of next_u64() with fixed algorithms, so
/// a given (seed, stream name) reproduces the same draw sequence on any
/// platform. Substreams derived with distinct names are independent for
/// simulation purposes and may run in parallel.
class RngStream {
 public:
  explicit RngStream(uint64_t seed);
  RngStream(uint64_t seed, std::string_view stream_name);

  /// Derive an independent child stream from this stream's base seed.
  RngStream substream(std::string_view name) const;

  uint64_t base_seed() const { return base_seed_; }

  uint64_t next_u64();
  /// Uniform in [0, 1) with 53 random bits.
  double next_double();
  bool bernoulli(double p);
  /// Uniform integer in [0, bound), unbiased. bound must be > 0.
  uint64_t below(uint64_t bound);
  /// Exponential with the given mean (inversion method).
  double exponential(double mean);
  /// Poisson by Knuth multiplication; intended for small means (< ~30).
  uint32_t poisson(double mean);

 private:
  uint64_t base_seed_;
  uint64_t s_[4];
};

}  // namespace qkd

#endif
