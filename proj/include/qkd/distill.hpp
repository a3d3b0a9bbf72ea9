#ifndef QKD_DISTILL_HPP
#define QKD_DISTILL_HPP

#include <cstdint>
#include <functional>
#include <vector>

#include "qkd/bits.hpp"
#include "qkd/rng.hpp"
#include "qkd/security.hpp"

namespace qkd {

/// Public information given away during distillation.
struct LeakageLedger {
  uint64_t parity_bits_disclosed = 0;
  uint64_t sampled_bits_disclosed = 0;
  double multiphoton_fraction = 0.0;  // s_m / p_exp used for compression
  double f_e_used = 1.0;
};

struct DistilledKey {
  BitVec bits;
  uint64_t digest = 0;
};

/// Answers "parity of your bits at permuted positions [start, end) of this
/// pass" — locally for tests, over the wire inside a session. Every call
/// discloses one bit.
using ParityOracle =
    std::function<bool(uint8_t pass, uint32_t block, uint32_t start, uint32_t end)>;

/// Both ends derive the same pass permutations from a shared public seed.
/// Pass 0 is the identity; later passes are Fisher-Yates shuffles.
std::vector<std::vector<uint32_t>> cascade_permutations(size_t n, int passes,
                                                        uint64_t perm_seed);

/// First-pass block size: ceil(0.73 / e), clamped to [2, n].
size_t cascade_block_size(double qber_estimate, size_t n);

struct CascadeResult {
  BitVec corrected;
  uint64_t parity_bits_disclosed = 0;
  uint32_t corrections = 0;
};

/// Interactive parity reconciliation. Pass p uses blocks of k1 * 2^p; a
/// parity mismatch is resolved by binary search (one disclosed bit per
/// probe), and every fix re-opens the blocks of earlier passes that contain
/// the flipped position, smallest block first. qber_estimate only sizes the
/// blocks. Requires 0 < qber_estimate < 0.11.
CascadeResult cascade_reconcile(const BitVec& key, double qber_estimate,
                                const ParityOracle& oracle, uint64_t perm_seed,
                                int passes = 4);

/// Local oracle over a reference key, for tests and for the sender side.
ParityOracle local_parity_oracle(const BitVec& reference_key,
                                 const std::vector<std::vector<uint32_t>>& perms);

/// Binary Toeplitz matrix applied to the key: out[j] = parity of
/// key[i] & seed[j + n - 1 - i]. Needs n + m - 1 seed bits; linear-time in
/// n*m/64 and universal-2, so it serves as the privacy-amplification hash.
BitVec toeplitz_hash(const BitVec& key, const BitVec& seed, size_t out_len);

enum class PaMode {
  FormulaFraction,  // m = floor(n * 2G/p_exp): the published accounting
  LedgerExact,      // privacy-only fraction minus actually disclosed parities
};

/// Final key length for a reconciled key of n bits at the session's
/// operating point. Clamped at 0; 0 means the session is insecure.
size_t pa_output_length(size_t n, const OperatingPoint& op, PaMode mode,
                        const LeakageLedger& ledger);

/// Compress with a seeded Toeplitz hash. seed must hold n + m - 1 bits.
DistilledKey privacy_amplify(const BitVec& reconciled_key, const BitVec& seed,
                             size_t out_len);

}  // namespace qkd

#endif
