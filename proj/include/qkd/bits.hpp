#ifndef QKD_BITS_HPP
#define QKD_BITS_HPP

#include <cstddef>
#include <cstdint>
#include <vector>

namespace qkd {

/// Packed bit vector with the operations key distillation needs:
/// range parity, word access for hashing, stable 64-bit digest.
class BitVec {
 public:
  BitVec() = default;
  explicit BitVec(size_t n) : size_(n), words_((n + 63) / 64, 0) {}

  static BitVec from_bytes(const std::vector<uint8_t>& bits01);

  size_t size() const { return size_; }
  bool empty() const { return size_ == 0; }

  bool get(size_t i) const { return (words_[i >> 6] >> (i & 63)) & 1u; }
  void set(size_t i, bool v) {
    const uint64_t m = uint64_t{1} << (i & 63);
    if (v)
      words_[i >> 6] |= m;
    else
      words_[i >> 6] &= ~m;
  }
  void flip(size_t i) { words_[i >> 6] ^= uint64_t{1} << (i & 63); }
  void push_back(bool v);

  /// Parity (XOR) of bits in [begin, end).
  bool parity(size_t begin, size_t end) const;
  size_t count_ones() const;

  /// Number of differing bits; sizes must match.
  size_t hamming_distance(const BitVec& other) const;

  /// Keep the bits whose indices are NOT in `sorted_remove` (ascending).
  BitVec without_indices(const std::vector<uint32_t>& sorted_remove) const;

  /// FNV-1a over the packed words (tail masked) and the length.
  /// Not cryptographic: random collision odds are ~2^-64, which is all the
  /// session integrity check needs under the authenticated-channel assumption.
  uint64_t digest() const;

  const std::vector<uint64_t>& words() const { return words_; }
  std::vector<uint8_t> to_bytes() const;

  bool operator==(const BitVec& o) const;

 private:
  size_t size_ = 0;
  std::vector<uint64_t> words_;
};

/// LSB-first packing used by wire payloads.
std::vector<uint8_t> pack_bits(const BitVec& v);
BitVec unpack_bits(const uint8_t* data, size_t nbits);

}  // namespace qkd

#endif
