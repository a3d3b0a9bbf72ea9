#include "qkd/lfsr.hpp"

#include <bit>
#include <stdexcept>
#include <utility>

namespace qkd {

Lfsr::Lfsr(unsigned width, std::vector<unsigned> taps, uint64_t state)
    : width_(width), tap_mask_(0), state_(state) {
  if (width == 0 || width > 63) throw std::invalid_argument("Lfsr: width must be in [1, 63]");
  state_mask_ = (uint64_t{1} << width) - 1;
  // Tap exponent t contributes the stage that is t shifts from the feedback
  // end; the x^width term is the output stage itself (position 0).
  for (unsigned t : taps) {
    if (t == 0 || t > width) throw std::invalid_argument("Lfsr: tap out of range");
    tap_mask_ |= uint64_t{1} << (width - t);
  }
  if (tap_mask_ == 0) throw std::invalid_argument("Lfsr: no taps");
  state_ &= state_mask_;
  if (state_ == 0) throw std::invalid_argument("Lfsr: zero state locks up");
}

bool Lfsr::next_bit() {
  const bool out = state_ & 1u;
  const uint64_t fb = std::popcount(state_ & tap_mask_) & 1u;
  state_ = (state_ >> 1) | (fb << (width_ - 1));
  return out;
}

uint64_t Lfsr::next_bits(unsigned count) {
  if (count > 64) throw std::invalid_argument("Lfsr: at most 64 bits per call");
  uint64_t v = 0;
  for (unsigned i = 0; i < count; ++i) v = (v << 1) | uint64_t(next_bit());
  return v;
}

Lfsr Lfsr::default32(uint64_t nonzero_state) {
  // x^32 + x^22 + x^2 + x + 1, a maximal-length polynomial.
  return Lfsr(32, {32, 22, 2, 1}, nonzero_state);
}

BitSource lfsr_bit_source(Lfsr lfsr) {
  return [reg = std::move(lfsr)]() mutable { return reg.next_bit(); };
}

}  // namespace qkd
