#ifndef QKD_LFSR_HPP
#define QKD_LFSR_HPP

#include <cstdint>
#include <functional>
#include <vector>

namespace qkd {

/// Fibonacci linear feedback shift register.
///
/// Taps are given as 1-based polynomial exponents; (4, 3) means
/// x^4 + x^3 + 1. With a maximal-length polynomial the state cycles through
/// all 2^k - 1 nonzero values. An LFSR keeps the demo deterministic and
/// cheap; it is not a cryptographic bit source, which is why the sender's
/// bit stream is pluggable.
class Lfsr {
 public:
  Lfsr(unsigned width, std::vector<unsigned> taps, uint64_t state);

  bool next_bit();
  uint64_t next_bits(unsigned count);  // MSB-first within the returned word
  uint64_t state() const { return state_; }
  unsigned width() const { return width_; }

  /// Default register used by the station driver: 32-bit maximal taps.
  static Lfsr default32(uint64_t nonzero_state);

 private:
  unsigned width_;
  uint64_t tap_mask_;
  uint64_t state_mask_;
  uint64_t state_;
};

/// Pluggable bit source used by the encoder (basis and data bits).
using BitSource = std::function<bool()>;

BitSource lfsr_bit_source(Lfsr lfsr);

}  // namespace qkd

#endif
