#include "qkd/distill.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <set>
#include <stdexcept>
#include <string>

namespace qkd {

std::vector<std::vector<uint32_t>> cascade_permutations(size_t n, int passes,
                                                        uint64_t perm_seed) {
  std::vector<std::vector<uint32_t>> perms(passes);
  for (int p = 0; p < passes; ++p) {
    auto& perm = perms[p];
    perm.resize(n);
    std::iota(perm.begin(), perm.end(), 0u);
    if (p == 0) continue;
    RngStream rng(perm_seed, "cascade-perm-" + std::to_string(p));
    for (size_t i = n; i > 1; --i) {
      const size_t j = rng.below(i);
      std::swap(perm[i - 1], perm[j]);
    }
  }
  return perms;
}

size_t cascade_block_size(double qber_estimate, size_t n) {
  const auto k = size_t(std::ceil(0.73 / qber_estimate));
  return std::clamp<size_t>(k, 2, n);
}

namespace {

struct PassState {
  size_t block_size = 0;
  std::vector<uint32_t> pos_of;      // absolute index -> permuted position
  std::vector<uint8_t> mismatch;     // per block: bob parity != alice parity
};

bool key_parity_over(const BitVec& key, const std::vector<uint32_t>& perm,
                     size_t start, size_t end) {
  bool par = false;
  for (size_t j = start; j < end; ++j) par ^= key.get(perm[j]);
  return par;
}

}  // namespace

CascadeResult cascade_reconcile(const BitVec& key, double qber_estimate,
                                const ParityOracle& oracle, uint64_t perm_seed,
                                int passes) {
  if (!(qber_estimate > 0.0) || qber_estimate >= 0.11)
    throw std::invalid_argument("cascade_reconcile: need 0 < qber < 0.11");
  if (passes < 1) throw std::invalid_argument("cascade_reconcile: passes < 1");
  const size_t n = key.size();
  CascadeResult result;
  result.corrected = key;
  if (n == 0) return result;

  const auto perms = cascade_permutations(n, passes, perm_seed);
  const size_t k1 = cascade_block_size(qber_estimate, n);
  std::vector<PassState> state(passes);

  auto block_range = [n](const PassState& ps, size_t block) {
    const size_t start = block * ps.block_size;
    return std::pair<size_t, size_t>{start, std::min(n, start + ps.block_size)};
  };

  auto ask = [&](int p, uint32_t block, size_t start, size_t end) {
    ++result.parity_bits_disclosed;
    return oracle(uint8_t(p), block, uint32_t(start), uint32_t(end));
  };

  // Binary-search one mismatching block down to the wrong bit and flip it.
  // Returns the absolute index that was corrected.
  auto resolve = [&](int p, uint32_t block) {
    auto [start, end] = block_range(state[p], block);
    while (end - start > 1) {
      const size_t mid = start + (end - start) / 2;
      const bool alice_left = ask(p, block, start, mid);
      const bool bob_left = key_parity_over(result.corrected, perms[p], start, mid);
      if (alice_left != bob_left)
        end = mid;
      else
        start = mid;
    }
    const uint32_t pos = perms[p][start];
    result.corrected.flip(pos);
    ++result.corrections;
    return pos;
  };

  // Mismatching blocks across all initialized passes, smallest pass first
  // (earlier passes have the smaller, cheaper blocks).
  std::set<std::pair<int, uint32_t>> odd;

  auto toggle = [&](int p, uint32_t pos) {
    const uint32_t j = state[p].pos_of[pos];
    const uint32_t b = uint32_t(j / state[p].block_size);
    state[p].mismatch[b] ^= 1;
    const auto item = std::make_pair(p, b);
    if (state[p].mismatch[b])
      odd.insert(item);
    else
      odd.erase(item);
  };

  auto drain = [&](int initialized_passes) {
    while (!odd.empty()) {
      const auto [p, b] = *odd.begin();
      const uint32_t pos = resolve(p, b);
      for (int q = 0; q < initialized_passes; ++q) toggle(q, pos);
    }
  };

  for (int p = 0; p < passes; ++p) {
    auto& ps = state[p];
    ps.block_size = std::min(n, k1 << p);
    ps.pos_of.resize(n);
    for (uint32_t j = 0; j < n; ++j) ps.pos_of[perms[p][j]] = j;
    const size_t blocks = (n + ps.block_size - 1) / ps.block_size;
    ps.mismatch.assign(blocks, 0);
    for (uint32_t b = 0; b < blocks; ++b) {
      auto [start, end] = block_range(ps, b);
      const bool alice = ask(p, b, start, end);
      const bool bob = key_parity_over(result.corrected, perms[p], start, end);
      if (alice != bob) {
        ps.mismatch[b] = 1;
        odd.insert({p, b});
      }
    }
    drain(p + 1);
  }
  return result;
}

ParityOracle local_parity_oracle(const BitVec& reference_key,
                                 const std::vector<std::vector<uint32_t>>& perms) {
  return [&reference_key, &perms](uint8_t pass, uint32_t /*block*/, uint32_t start,
                                  uint32_t end) {
    return key_parity_over(reference_key, perms[pass], start, end);
  };
}

BitVec toeplitz_hash(const BitVec& key, const BitVec& seed, size_t out_len) {
  const size_t n = key.size();
  if (out_len == 0) return BitVec();
  if (seed.size() != n + out_len - 1)
    throw std::invalid_argument("toeplitz_hash: seed must hold n + m - 1 bits");

  // out[j] = parity over i of key[i] & seed[j + n - 1 - i]. Reversing the
  // seed turns each row into a contiguous window: out[j] = parity of
  // key & rev[m - 1 - j ...].
  BitVec rev(seed.size());
  for (size_t i = 0; i < seed.size(); ++i)
    if (seed.get(seed.size() - 1 - i)) rev.set(i, true);

  const auto& kw = key.words();
  const auto& rw = rev.words();
  const size_t key_words = (n + 63) / 64;

  auto rev_word_at = [&](size_t bit_off, size_t w) -> uint64_t {
    const size_t idx = bit_off / 64 + w;
    const unsigned sh = unsigned(bit_off % 64);
    uint64_t v = idx < rw.size() ? rw[idx] >> sh : 0;
    if (sh != 0 && idx + 1 < rw.size()) v |= rw[idx + 1] << (64 - sh);
    return v;
  };

  BitVec out(out_len);
  const uint64_t tail_mask =
      (n % 64) ? ((uint64_t{1} << (n % 64)) - 1) : ~uint64_t{0};
  for (size_t j = 0; j < out_len; ++j) {
    const size_t off = out_len - 1 - j;
    uint64_t acc = 0;
    for (size_t w = 0; w < key_words; ++w) {
      uint64_t kword = kw[w];
      if (w + 1 == key_words) kword &= tail_mask;
      acc ^= kword & rev_word_at(off, w);
    }
    if (std::popcount(acc) & 1) out.set(j, true);
  }
  return out;
}

size_t pa_output_length(size_t n, const OperatingPoint& op, PaMode mode,
                        const LeakageLedger& ledger) {
  if (n == 0) return 0;
  if (mode == PaMode::FormulaFraction) {
    const double tau = secure_fraction(op);
    if (tau <= 0.0) return 0;
    return size_t(std::floor(double(n) * std::min(tau, 1.0)));
  }
  // Ledger-exact: charge privacy amplification for the eavesdropper's
  // multiphoton/error knowledge only, then subtract the parities actually
  // sent on the wire.
  const double tau0 = privacy_fraction(op);
  if (tau0 <= 0.0) return 0;
  const double m = std::floor(double(n) * std::min(tau0, 1.0)) -
                   double(ledger.parity_bits_disclosed);
  return m > 0.0 ? size_t(m) : 0;
}

DistilledKey privacy_amplify(const BitVec& reconciled_key, const BitVec& seed,
                             size_t out_len) {
  DistilledKey out;
  out.bits = toeplitz_hash(reconciled_key, seed, out_len);
  out.digest = out.bits.digest();
  return out;
}

}  // namespace qkd
