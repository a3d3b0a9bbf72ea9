#include "qkd/bits.hpp"

#include <bit>
#include <stdexcept>

namespace qkd {

BitVec BitVec::from_bytes(const std::vector<uint8_t>& bits01) {
  BitVec v(bits01.size());
  for (size_t i = 0; i < bits01.size(); ++i)
    if (bits01[i]) v.set(i, true);
  return v;
}

void BitVec::push_back(bool v) {
  if ((size_ & 63) == 0) words_.push_back(0);
  if (v) words_.back() |= uint64_t{1} << (size_ & 63);
  ++size_;
}

bool BitVec::parity(size_t begin, size_t end) const {
  if (begin > end || end > size_) throw std::out_of_range("BitVec::parity");
  uint64_t acc = 0;
  size_t wb = begin >> 6, we = (end + 63) >> 6;
  for (size_t w = wb; w < we; ++w) {
    uint64_t word = words_[w];
    const size_t lo = w << 6;
    if (begin > lo) word &= ~uint64_t{0} << (begin - lo);
    if (end - lo < 64) word &= (uint64_t{1} << (end - lo)) - 1;
    acc ^= word;
  }
  return std::popcount(acc) & 1u;
}

size_t BitVec::count_ones() const {
  size_t n = 0;
  for (size_t w = 0; w < words_.size(); ++w) {
    uint64_t word = words_[w];
    if (w + 1 == words_.size() && (size_ & 63) != 0)
      word &= (uint64_t{1} << (size_ & 63)) - 1;
    n += std::popcount(word);
  }
  return n;
}

size_t BitVec::hamming_distance(const BitVec& other) const {
  if (size_ != other.size_) throw std::invalid_argument("hamming_distance: size mismatch");
  size_t n = 0;
  for (size_t i = 0; i < words_.size(); ++i) n += std::popcount(words_[i] ^ other.words_[i]);
  return n;
}

BitVec BitVec::without_indices(const std::vector<uint32_t>& sorted_remove) const {
  BitVec out;
  size_t r = 0;
  for (size_t i = 0; i < size_; ++i) {
    if (r < sorted_remove.size() && sorted_remove[r] == i) {
      ++r;
      continue;
    }
    out.push_back(get(i));
  }
  return out;
}

uint64_t BitVec::digest() const {
  uint64_t h = 0xcbf29ce484222325ull;
  auto mix = [&h](uint64_t v) {
    for (int i = 0; i < 8; ++i) {
      h ^= (v >> (8 * i)) & 0xff;
      h *= 0x100000001b3ull;
    }
  };
  mix(size_);
  for (size_t w = 0; w < words_.size(); ++w) {
    uint64_t word = words_[w];
    if (w + 1 == words_.size() && (size_ & 63) != 0)
      word &= (uint64_t{1} << (size_ & 63)) - 1;
    mix(word);
  }
  return h;
}

std::vector<uint8_t> BitVec::to_bytes() const {
  std::vector<uint8_t> out(size_);
  for (size_t i = 0; i < size_; ++i) out[i] = get(i) ? 1 : 0;
  return out;
}

bool BitVec::operator==(const BitVec& o) const {
  if (size_ != o.size_) return false;
  return hamming_distance(o) == 0;
}

std::vector<uint8_t> pack_bits(const BitVec& v) {
  std::vector<uint8_t> out((v.size() + 7) / 8, 0);
  for (size_t i = 0; i < v.size(); ++i)
    if (v.get(i)) out[i >> 3] |= uint8_t(1u << (i & 7));
  return out;
}

BitVec unpack_bits(const uint8_t* data, size_t nbits) {
  BitVec v(nbits);
  for (size_t i = 0; i < nbits; ++i)
    if ((data[i >> 3] >> (i & 7)) & 1u) v.set(i, true);
  return v;
}

}  // namespace qkd
