#include "qkd/session.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <thread>

namespace qkd {

double SessionParams::s_m() const {
  if (sm_convention == SmConvention::Fixed) return s_m_fixed;
  return multiphoton_probability(alice.source);
}

WilsonInterval wilson_interval(uint64_t errors, uint64_t n, double z) {
  if (n == 0) return {0.0, 1.0};
  const double p = double(errors) / double(n);
  const double z2 = z * z;
  const double denom = 1.0 + z2 / double(n);
  const double center = p + z2 / (2.0 * double(n));
  const double spread =
      z * std::sqrt(p * (1.0 - p) / double(n) + z2 / (4.0 * double(n) * double(n)));
  return {std::max(0.0, (center - spread) / denom),
          std::min(1.0, (center + spread) / denom)};
}

namespace {

constexpr uint8_t kAbortVersionMismatch = 1;
constexpr uint8_t kAbortConfigMismatch = 2;
constexpr uint8_t kAbortProtocolError = 3;
constexpr uint8_t kAbortQberTooHigh = 4;
constexpr uint8_t kAbortReconcileFailed = 5;

const char* abort_reason_name(uint8_t code) {
  switch (code) {
    case kAbortVersionMismatch: return "version mismatch";
    case kAbortConfigMismatch: return "config mismatch";
    case kAbortProtocolError: return "protocol error";
    case kAbortQberTooHigh: return "qber too high";
    case kAbortReconcileFailed: return "reconciliation failed";
    default: return "unspecified";
  }
}

struct SessionAbort {
  uint8_t code;
  std::string reason;
  bool received;  // true if the peer told us, false if we decided
};

// ---- message codecs -------------------------------------------------------

struct HelloMsg {
  uint32_t version = kProtocolVersion;
  Role role = Role::Alice;
  uint32_t n_slots = 0;
  uint64_t config_digest = 0;
};

Frame make_frame(MsgType t, uint64_t session_id, PayloadWriter&& w) {
  return Frame{t, session_id, std::move(w).take()};
}

Frame encode_hello(uint64_t sid, const HelloMsg& m) {
  PayloadWriter w;
  w.u32(m.version);
  w.u8(uint8_t(m.role));
  w.u32(m.n_slots);
  w.u64(m.config_digest);
  return make_frame(MsgType::Hello, sid, std::move(w));
}

HelloMsg decode_hello(const Frame& f) {
  PayloadReader r(f.payload);
  HelloMsg m;
  m.version = r.u32();
  m.role = static_cast<Role>(r.u8());
  m.n_slots = r.u32();
  m.config_digest = r.u64();
  r.expect_done();
  return m;
}

Frame encode_basis_announce(uint64_t sid, const std::vector<AcceptedClick>& acc) {
  PayloadWriter w;
  w.u32(uint32_t(acc.size()));
  for (const auto& a : acc) {
    w.u32(a.slot);
    w.u8(uint8_t(a.basis));
  }
  return make_frame(MsgType::BasisAnnounce, sid, std::move(w));
}

std::vector<AcceptedClick> decode_basis_announce(const Frame& f) {
  PayloadReader r(f.payload);
  const uint32_t count = r.u32();
  std::vector<AcceptedClick> acc(count);
  for (auto& a : acc) {
    a.slot = r.u32();
    const uint8_t b = r.u8();
    if (b > 1) throw FramingError("bad basis value");
    a.basis = static_cast<Basis>(b);
  }
  r.expect_done();
  return acc;
}

Frame encode_bitfield(MsgType t, uint64_t sid, const BitVec& bits) {
  PayloadWriter w;
  w.u32(uint32_t(bits.size()));
  w.raw(pack_bits(bits));
  return make_frame(t, sid, std::move(w));
}

BitVec decode_bitfield(const Frame& f) {
  PayloadReader r(f.payload);
  const uint32_t count = r.u32();
  const auto bytes = r.raw((count + 7) / 8);
  r.expect_done();
  return unpack_bits(bytes.data(), count);
}

Frame encode_sample_request(uint64_t sid, const std::vector<uint32_t>& idx,
                            const BitVec& bits) {
  PayloadWriter w;
  w.u32(uint32_t(idx.size()));
  for (uint32_t i : idx) w.u32(i);
  w.raw(pack_bits(bits));
  return make_frame(MsgType::SampleRequest, sid, std::move(w));
}

void decode_sample_request(const Frame& f, std::vector<uint32_t>& idx, BitVec& bits) {
  PayloadReader r(f.payload);
  const uint32_t count = r.u32();
  idx.resize(count);
  for (auto& i : idx) i = r.u32();
  const auto bytes = r.raw((count + 7) / 8);
  bits = unpack_bits(bytes.data(), count);
  r.expect_done();
}

struct ParityQueryMsg {
  uint8_t pass = 0;
  uint32_t block = 0;
  uint32_t start = 0;
  uint32_t end = 0;
};

Frame encode_parity_query(uint64_t sid, const ParityQueryMsg& q) {
  PayloadWriter w;
  w.u8(q.pass);
  w.u32(q.block);
  w.u32(q.start);
  w.u32(q.end);
  return make_frame(MsgType::ParityQuery, sid, std::move(w));
}

ParityQueryMsg decode_parity_query(const Frame& f) {
  PayloadReader r(f.payload);
  ParityQueryMsg q;
  q.pass = r.u8();
  q.block = r.u32();
  q.start = r.u32();
  q.end = r.u32();
  r.expect_done();
  return q;
}

Frame encode_parity_reply(uint64_t sid, bool parity) {
  PayloadWriter w;
  w.u8(parity ? 1 : 0);
  return make_frame(MsgType::ParityReply, sid, std::move(w));
}

Frame encode_pa_seed(uint64_t sid, const BitVec& seed) {
  return encode_bitfield(MsgType::PaSeed, sid, seed);
}

struct KeyDigestMsg {
  uint8_t stage = 0;  // 0 = after reconciliation, 1 = final key
  uint64_t digest = 0;
  uint32_t corrections = 0;
};

Frame encode_key_digest(uint64_t sid, const KeyDigestMsg& m) {
  PayloadWriter w;
  w.u8(m.stage);
  w.u64(m.digest);
  w.u32(m.corrections);
  return make_frame(MsgType::KeyDigest, sid, std::move(w));
}

KeyDigestMsg decode_key_digest(const Frame& f) {
  PayloadReader r(f.payload);
  KeyDigestMsg m;
  m.stage = r.u8();
  m.digest = r.u64();
  m.corrections = r.u32();
  r.expect_done();
  return m;
}

Frame encode_abort(uint64_t sid, uint8_t code, const std::string& reason) {
  PayloadWriter w;
  w.u8(code);
  w.raw({reinterpret_cast<const uint8_t*>(reason.data()), reason.size()});
  return make_frame(MsgType::Abort, sid, std::move(w));
}

// ---- shared endpoint machinery --------------------------------------------

class Endpoint {
 public:
  Endpoint(FrameChannel& ch, const SessionParams& params, Role role)
      : ch_(ch), params_(params), role_(role) {
    result_.summary.role = role;
    result_.summary.slots = params.n_slots;
  }

  void abort_local(uint8_t code, const std::string& reason) {
    try {
      ch_.send(encode_abort(params_.session_id, code, reason));
    } catch (...) {
      // peer already gone; the local abort state is what matters
    }
    throw SessionAbort{code, reason, false};
  }

  Frame expect(MsgType t) {
    Frame f = ch_.receive();
    if (f.type == MsgType::Abort) {
      PayloadReader r(f.payload);
      const uint8_t code = r.u8();
      throw SessionAbort{code, abort_reason_name(code), true};
    }
    if (f.type != t)
      abort_local(kAbortProtocolError,
                  std::string("expected ") + to_string(t) + ", got " + to_string(f.type));
    if (f.session_id != params_.session_id)
      abort_local(kAbortProtocolError, "session id mismatch");
    return f;
  }

  void hello_handshake() {
    HelloMsg mine{kProtocolVersion, role_, params_.n_slots, params_.config_digest};
    HelloMsg theirs{};
    if (role_ == Role::Bob) {
      ch_.send(encode_hello(params_.session_id, mine));
      theirs = decode_hello(expect(MsgType::Hello));
    } else {
      theirs = decode_hello(expect(MsgType::Hello));
      ch_.send(encode_hello(params_.session_id, mine));
    }
    if (theirs.version != kProtocolVersion)
      abort_local(kAbortVersionMismatch, "protocol version mismatch");
    if (theirs.role == role_) abort_local(kAbortProtocolError, "both sides same role");
    if (theirs.n_slots != params_.n_slots)
      abort_local(kAbortConfigMismatch, "slot count mismatch");
    if (theirs.config_digest != 0 && params_.config_digest != 0 &&
        theirs.config_digest != params_.config_digest)
      abort_local(kAbortConfigMismatch, "config digest mismatch");
  }

  // Fills the operating point, final length, and amplification bookkeeping
  // shared by both roles once reconciliation is settled.
  size_t plan_amplification(uint64_t accepted, uint64_t sample_errors,
                            uint64_t sampled, uint32_t corrections, size_t n_kept) {
    auto& s = result_.summary;
    s.corrections = corrections;
    const uint64_t observed = sampled + n_kept;
    s.e_used = observed ? double(sample_errors + corrections) / double(observed) : 0.0;
    s.p_exp_measured = double(accepted) / double(params_.n_slots);
    s.ledger.sampled_bits_disclosed = sampled;
    s.ledger.f_e_used = params_.f_e;

    if (n_kept == 0 || accepted == 0) return 0;
    if (s.e_used >= 0.5) {
      s.insecure = true;
      return 0;
    }
    OperatingPoint op;
    op.p_exp = s.p_exp_measured;
    op.s_m = params_.s_m();
    op.e = s.e_used;
    op.f_e = params_.f_e;
    op.f_e_override = params_.f_e_override;
    op.pulse_rate_hz = params_.pulse_rate_hz;
    s.ledger.multiphoton_fraction = op.s_m / op.p_exp;
    if (op.s_m >= op.p_exp) {
      s.insecure = true;
      return 0;
    }
    s.tau_secure = secure_fraction(op);
    const size_t m = pa_output_length(n_kept, op, params_.pa_mode, s.ledger);
    if (m == 0) s.insecure = true;
    return m;
  }

  void finalize_summary() {
    auto& s = result_.summary;
    s.sifted = result_.sifted_bits.size();
    s.final_bits = result_.key.bits.size();
    s.g_empirical = double(s.final_bits) / double(params_.n_slots);
    const double dur = params_.batch_duration_s();
    s.sifted_rate_hz = double(s.sifted) / dur;
    s.final_rate_hz = double(s.final_bits) / dur;
  }

  FrameChannel& ch_;
  const SessionParams& params_;
  Role role_;
  EndpointResult result_;
};

std::vector<uint32_t> pick_sample_indices(size_t n, size_t k, RngStream rng) {
  std::vector<uint32_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0u);
  for (size_t i = 0; i < k; ++i) {
    const size_t j = i + rng.below(n - i);
    std::swap(idx[i], idx[j]);
  }
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

size_t sample_count(const SessionParams& p, size_t n) {
  if (p.qber_mode == QberMode::FullCompare) return n;
  if (p.sample_fraction < 0.0 || p.sample_fraction > 1.0)
    throw std::invalid_argument("sample_fraction must be in [0, 1]");
  return size_t(std::floor(p.sample_fraction * double(n)));
}

}  // namespace

// ---- quantum phase ---------------------------------------------------------

void validate(const SessionParams& params) {
  validate(params.alice);
  validate(params.bob, params.alice.source.pulse_period_ns);
  if (params.sample_fraction < 0.0 || params.sample_fraction > 1.0)
    throw std::invalid_argument("SessionParams: sample_fraction must be in [0, 1]");
  if (params.cascade_passes < 1 || params.cascade_passes > 16)
    throw std::invalid_argument("SessionParams: cascade_passes must be in [1, 16]");
  if (params.f_e < 1.0)
    throw std::invalid_argument("SessionParams: f_e must be >= 1");
  if (!(params.qber_abort_threshold > 0.0) || params.qber_abort_threshold > 0.11)
    throw std::invalid_argument("SessionParams: abort threshold must be in (0, 0.11]");
  if (params.channel.loss_db < 0.0)
    throw std::invalid_argument("SessionParams: loss_db must be >= 0");
}

std::vector<AliceSlot> run_alice_quantum(const SessionParams& params, uint64_t seed) {
  validate(params.alice);
  RngStream lfsr_seed(seed, "alice-lfsr");
  RngStream aq(seed, "alice-quantum");
  BitSource bits =
      lfsr_bit_source(Lfsr::default32((lfsr_seed.next_u64() & 0xffffffffu) | 1u));
  std::vector<AliceSlot> slots;
  slots.reserve(params.n_slots);
  for (uint32_t i = 0; i < params.n_slots; ++i)
    slots.push_back(alice_emit_slot(params.alice, i, bits, aq));
  return slots;
}

struct QuantumSlotState {
  uint32_t slot = 0;
  Polarization encoded = Polarization::H;
  std::vector<double> offsets_ns;
};

static std::vector<AcceptedClick> run_bob_quantum(
    const SessionParams& params, uint64_t seed,
    const std::vector<QuantumSlotState>& states, uint64_t* clicked_out) {
  validate(params.bob, params.alice.source.pulse_period_ns);
  RngStream ch(seed, "channel");
  RngStream bq(seed, "bob-quantum");
  std::vector<AcceptedClick> accepted;
  uint64_t clicked = 0;
  for (const auto& st : states) {
    EmittedPulse pulse;
    pulse.slot_index = st.slot;
    pulse.emission_offsets_ns = st.offsets_ns;
    const EmittedPulse arrived = channel_transmit(pulse, params.channel, ch);
    const ClickRecord rec = bob_detect(arrived, st.encoded, params.bob,
                                       params.alice.source.pulse_period_ns, bq);
    if (rec.gated_mask) ++clicked;
    if (rec.accepted)
      accepted.push_back({st.slot, rec.accepted->basis, rec.accepted->bit});
  }
  if (clicked_out) *clicked_out = clicked;
  return accepted;
}

QuantumRun run_quantum_phase(const SessionParams& params, uint64_t seed) {
  const auto alice_slots = run_alice_quantum(params, seed);
  QuantumRun run;
  run.alice_bases.reserve(alice_slots.size());
  run.alice_bits = BitVec(alice_slots.size());
  std::vector<QuantumSlotState> states(alice_slots.size());
  for (size_t i = 0; i < alice_slots.size(); ++i) {
    run.alice_bases.push_back(alice_slots[i].basis);
    run.alice_bits.set(i, alice_slots[i].bit);
    states[i] = {uint32_t(alice_slots[i].slot), alice_slots[i].encoded,
                 alice_slots[i].pulse.emission_offsets_ns};
  }
  run.bob_accepted = run_bob_quantum(params, seed, states, &run.bob_clicked_slots);
  return run;
}

// ---- classical endpoints ---------------------------------------------------

EndpointResult run_alice_endpoint(FrameChannel& ch, const SessionParams& params,
                                  const std::vector<Basis>& bases, const BitVec& bits) {
  Endpoint ep(ch, params, Role::Alice);
  auto& res = ep.result_;
  auto& sum = res.summary;
  try {
    ep.hello_handshake();

    // Sifting: receive accepted slots + bases, answer with the agree mask.
    const auto announced = decode_basis_announce(ep.expect(MsgType::BasisAnnounce));
    sum.accepted = announced.size();
    uint32_t prev_slot = 0;
    BitVec mask(announced.size());
    for (size_t i = 0; i < announced.size(); ++i) {
      const auto& a = announced[i];
      if (a.slot >= params.n_slots || (i > 0 && a.slot <= prev_slot))
        ep.abort_local(kAbortProtocolError, "bad announced slot order");
      prev_slot = a.slot;
      if (bases[a.slot] == a.basis) {
        mask.set(i, true);
        res.sifted_bits.push_back(bits.get(a.slot));
        res.sifted_slots.push_back(a.slot);
      }
    }
    ch.send(encode_bitfield(MsgType::SiftMask, params.session_id, mask));

    // Sampling: reveal the requested bits, count disagreements.
    std::vector<uint32_t> idx;
    BitVec bob_sample;
    decode_sample_request(ep.expect(MsgType::SampleRequest), idx, bob_sample);
    const size_t n_sifted = res.sifted_bits.size();
    uint64_t sample_errors = 0;
    BitVec mine(idx.size());
    for (size_t i = 0; i < idx.size(); ++i) {
      if (idx[i] >= n_sifted || (i > 0 && idx[i] <= idx[i - 1]))
        ep.abort_local(kAbortProtocolError, "bad sample indices");
      const bool b = res.sifted_bits.get(idx[i]);
      mine.set(i, b);
      if (b != bob_sample.get(i)) ++sample_errors;
    }
    ch.send(encode_bitfield(MsgType::SampleReveal, params.session_id, mine));
    res.sampled_indices = idx;
    sum.revealed = idx.size();
    sum.sample_errors = sample_errors;
    sum.qber_estimate = idx.empty() ? 0.0 : double(sample_errors) / double(idx.size());
    sum.qber_ci = wilson_interval(sample_errors, idx.size());
    res.kept_bits = res.sifted_bits.without_indices(idx);

    // Call the session off only when the interval, not a small-sample point
    // estimate, puts the error at or beyond the threshold. Bob reaches the
    // same numbers and sends the abort.
    if (sum.qber_ci.low >= params.qber_abort_threshold) {
      ep.expect(MsgType::KeyDigest);  // unreachable; Abort arrives instead
    }

    // Reconciliation: answer parity probes until the digest arrives.
    const size_t n_kept = res.kept_bits.size();
    const auto perms =
        cascade_permutations(n_kept, params.cascade_passes, params.session_id);
    Frame f = ch.receive();
    while (f.type == MsgType::ParityQuery) {
      const auto q = decode_parity_query(f);
      if (q.pass >= perms.size() || q.start >= q.end || q.end > n_kept)
        ep.abort_local(kAbortProtocolError, "bad parity range");
      bool parity = false;
      for (uint32_t j = q.start; j < q.end; ++j)
        parity ^= res.kept_bits.get(perms[q.pass][j]);
      ++sum.ledger.parity_bits_disclosed;
      ch.send(encode_parity_reply(params.session_id, parity));
      f = ch.receive();
    }
    if (f.type == MsgType::Abort) {
      PayloadReader r(f.payload);
      const uint8_t code = r.u8();
      throw SessionAbort{code, abort_reason_name(code), true};
    }
    if (f.type != MsgType::KeyDigest)
      ep.abort_local(kAbortProtocolError, "expected KEY_DIGEST after parity rounds");

    const auto bob_digest = decode_key_digest(f);
    res.reconciled_bits = res.kept_bits;  // Alice's key is the reference
    const uint64_t my_digest = res.reconciled_bits.digest();
    sum.reconciled_digest_ok = bob_digest.digest == my_digest;
    ch.send(encode_key_digest(params.session_id,
                              {0, my_digest, bob_digest.corrections}));
    if (!sum.reconciled_digest_ok)
      ep.abort_local(kAbortReconcileFailed, "reconciled keys disagree");

    // Amplification: both sides know the plan; Alice supplies the seed.
    const size_t m = ep.plan_amplification(sum.accepted, sample_errors, idx.size(),
                                           bob_digest.corrections, n_kept);
    BitVec seed(m > 0 ? n_kept + m - 1 : 0);
    if (m > 0) {
      RngStream pa_rng(params.seed, "alice-pa");
      for (size_t i = 0; i < seed.size(); ++i) seed.set(i, pa_rng.bernoulli(0.5));
    }
    ch.send(encode_pa_seed(params.session_id, seed));
    res.key = privacy_amplify(res.reconciled_bits, seed, m);

    const auto bob_final = decode_key_digest(ep.expect(MsgType::KeyDigest));
    sum.final_digest_ok =
        bob_final.stage == 1 && bob_final.digest == res.key.digest;
    ch.send(encode_key_digest(params.session_id, {1, res.key.digest, 0}));
    if (!sum.final_digest_ok)
      ep.abort_local(kAbortReconcileFailed, "final digests disagree");

    sum.phase = Phase::Done;
  } catch (const SessionAbort& a) {
    sum.phase = Phase::Aborted;
    sum.abort_reason = a.reason;
    res.key = DistilledKey{};
  }
  ep.finalize_summary();
  return res;
}

EndpointResult run_bob_endpoint(FrameChannel& ch, const SessionParams& params,
                                const std::vector<AcceptedClick>& accepted) {
  Endpoint ep(ch, params, Role::Bob);
  auto& res = ep.result_;
  auto& sum = res.summary;
  try {
    ep.hello_handshake();

    sum.accepted = accepted.size();
    ch.send(encode_basis_announce(params.session_id, accepted));
    const BitVec mask = decode_bitfield(ep.expect(MsgType::SiftMask));
    if (mask.size() != accepted.size())
      ep.abort_local(kAbortProtocolError, "sift mask length mismatch");
    for (size_t i = 0; i < accepted.size(); ++i)
      if (mask.get(i)) {
        res.sifted_bits.push_back(accepted[i].bit);
        res.sifted_slots.push_back(accepted[i].slot);
      }

    // Sampling.
    const size_t n_sifted = res.sifted_bits.size();
    const size_t k = sample_count(params, n_sifted);
    const auto idx =
        pick_sample_indices(n_sifted, k, RngStream(params.seed, "bob-sample"));
    BitVec mine(idx.size());
    for (size_t i = 0; i < idx.size(); ++i) mine.set(i, res.sifted_bits.get(idx[i]));
    ch.send(encode_sample_request(params.session_id, idx, mine));
    const BitVec alice_sample = decode_bitfield(ep.expect(MsgType::SampleReveal));
    if (alice_sample.size() != idx.size())
      ep.abort_local(kAbortProtocolError, "sample reveal length mismatch");
    uint64_t sample_errors = 0;
    for (size_t i = 0; i < idx.size(); ++i)
      if (alice_sample.get(i) != mine.get(i)) ++sample_errors;
    res.sampled_indices = idx;
    sum.revealed = idx.size();
    sum.sample_errors = sample_errors;
    sum.qber_estimate = idx.empty() ? 0.0 : double(sample_errors) / double(idx.size());
    sum.qber_ci = wilson_interval(sample_errors, idx.size());
    res.kept_bits = res.sifted_bits.without_indices(idx);

    if (sum.qber_ci.low >= params.qber_abort_threshold)
      ep.abort_local(kAbortQberTooHigh, "estimated qber leaves no secure key");

    // Reconciliation: correct toward Alice over the wire. Blocks are sized
    // from the interval's upper bound: a small clean sample does not license
    // huge blocks, and an even error count inside one block would survive
    // every pass.
    const size_t n_kept = res.kept_bits.size();
    uint32_t corrections = 0;
    if (n_kept > 0) {
      const double e_sizing =
          std::min(std::max(sum.qber_ci.high, 1.0 / double(n_kept)), 0.109);
      ParityOracle oracle = [&](uint8_t pass, uint32_t block, uint32_t start,
                                uint32_t end) {
        ch.send(encode_parity_query(params.session_id, {pass, block, start, end}));
        const Frame reply = ep.expect(MsgType::ParityReply);
        PayloadReader r(reply.payload);
        const bool parity = r.u8() & 1;
        return parity;
      };
      auto cascade = cascade_reconcile(res.kept_bits, e_sizing, oracle,
                                       params.session_id, params.cascade_passes);
      res.reconciled_bits = std::move(cascade.corrected);
      sum.ledger.parity_bits_disclosed = cascade.parity_bits_disclosed;
      corrections = cascade.corrections;
    } else {
      res.reconciled_bits = res.kept_bits;
    }

    const uint64_t my_digest = res.reconciled_bits.digest();
    ch.send(encode_key_digest(params.session_id, {0, my_digest, corrections}));
    const auto alice_digest = decode_key_digest(ep.expect(MsgType::KeyDigest));
    sum.reconciled_digest_ok = alice_digest.digest == my_digest;
    // On mismatch Alice aborts instead of sending the amplification seed.

    const size_t m = ep.plan_amplification(sum.accepted, sample_errors, idx.size(),
                                           corrections, n_kept);
    const BitVec seed = decode_bitfield(ep.expect(MsgType::PaSeed));
    if (seed.size() != (m > 0 ? n_kept + m - 1 : 0))
      ep.abort_local(kAbortProtocolError, "amplification seed length mismatch");
    res.key = privacy_amplify(res.reconciled_bits, seed, m);

    ch.send(encode_key_digest(params.session_id, {1, res.key.digest, 0}));
    const auto alice_final = decode_key_digest(ep.expect(MsgType::KeyDigest));
    sum.final_digest_ok =
        alice_final.stage == 1 && alice_final.digest == res.key.digest;
    if (!sum.final_digest_ok)
      ep.abort_local(kAbortReconcileFailed, "final digests disagree");

    sum.phase = Phase::Done;
  } catch (const SessionAbort& a) {
    sum.phase = Phase::Aborted;
    sum.abort_reason = a.reason;
    res.key = DistilledKey{};
  }
  ep.finalize_summary();
  return res;
}

// ---- runners ---------------------------------------------------------------

SessionOutcome run_loopback_session(const SessionParams& params) {
  validate(params);
  const QuantumRun quantum = run_quantum_phase(params, params.seed);

  auto conn = make_loopback();
  // Each endpoint records the full conversation; Bob's copy is canonical.
  auto bob_transcript = std::make_shared<FrameChannel::Transcript>();

  SessionOutcome out;
  std::exception_ptr alice_error;
  std::thread alice_thread([&] {
    try {
      FrameChannel ch(*conn.alice, FrameChannel::Direction::AliceToBob);
      out.alice =
          run_alice_endpoint(ch, params, quantum.alice_bases, quantum.alice_bits);
    } catch (...) {
      alice_error = std::current_exception();
    }
    conn.alice->close();
  });
  std::exception_ptr bob_error;
  try {
    FrameChannel ch(*conn.bob, FrameChannel::Direction::BobToAlice, bob_transcript);
    out.bob = run_bob_endpoint(ch, params, quantum.bob_accepted);
  } catch (...) {
    bob_error = std::current_exception();
  }
  conn.bob->close();
  alice_thread.join();
  if (alice_error) std::rethrow_exception(alice_error);
  if (bob_error) std::rethrow_exception(bob_error);
  out.transcript = std::move(*bob_transcript);
  return out;
}

namespace {

void read_exact(ByteStream& s, uint8_t* out, size_t n) {
  size_t off = 0;
  while (off < n) {
    const size_t got = s.read_some({out + off, n - off});
    if (got == 0) throw std::runtime_error("stream ended inside quantum stream");
    off += got;
  }
}

// Pre-classical quantum stream: "QPLS", u32 slot count, u64 non-empty count,
// then per non-empty slot u32 index, u8 polarization, u8 photons, offsets.
void send_quantum_stream(ByteStream& s, uint32_t n_slots,
                         const std::vector<AliceSlot>& slots) {
  PayloadWriter w;
  w.raw({reinterpret_cast<const uint8_t*>("QPLS"), 4});
  w.u32(n_slots);
  uint64_t nonempty = 0;
  for (const auto& sl : slots)
    if (!sl.pulse.emission_offsets_ns.empty()) ++nonempty;
  w.u64(nonempty);
  for (const auto& sl : slots) {
    if (sl.pulse.emission_offsets_ns.empty()) continue;
    w.u32(uint32_t(sl.slot));
    w.u8(uint8_t(sl.encoded));
    w.u8(uint8_t(sl.pulse.emission_offsets_ns.size()));
    for (double t : sl.pulse.emission_offsets_ns) w.f64(t);
  }
  const auto bytes = std::move(w).take();
  s.write(bytes);
}

std::vector<QuantumSlotState> recv_quantum_stream(ByteStream& s, uint32_t expect_slots) {
  uint8_t head[16];
  read_exact(s, head, sizeof head);
  if (std::memcmp(head, "QPLS", 4) != 0)
    throw std::runtime_error("bad quantum stream magic");
  PayloadReader hr({head + 4, 12});
  const uint32_t n_slots = hr.u32();
  const uint64_t nonempty = hr.u64();
  if (n_slots != expect_slots)
    throw std::runtime_error("quantum stream slot count mismatch");
  // Expand back to one state per slot: empty slots still reach the receiver
  // (it rolls dark counts for every gate), only their photon list is empty.
  std::vector<QuantumSlotState> states(n_slots);
  for (uint32_t i = 0; i < n_slots; ++i) states[i].slot = i;
  for (uint64_t i = 0; i < nonempty; ++i) {
    uint8_t rec[6];
    read_exact(s, rec, sizeof rec);
    PayloadReader rr({rec, sizeof rec});
    const uint32_t slot = rr.u32();
    if (slot >= n_slots) throw std::runtime_error("quantum stream slot out of range");
    QuantumSlotState& st = states[slot];
    st.encoded = static_cast<Polarization>(rr.u8() & 3);
    const uint8_t count = rr.u8();
    st.offsets_ns.resize(count);
    for (auto& t : st.offsets_ns) {
      uint8_t buf[8];
      read_exact(s, buf, 8);
      PayloadReader fr({buf, 8});
      t = fr.f64();
    }
  }
  return states;
}

}  // namespace

EndpointResult run_alice_over_stream(ByteStream& stream, const SessionParams& params,
                                     FrameChannel::Transcript* transcript) {
  validate(params);
  const auto slots = run_alice_quantum(params, params.seed);
  send_quantum_stream(stream, params.n_slots, slots);
  std::vector<Basis> bases(slots.size());
  BitVec bits(slots.size());
  for (size_t i = 0; i < slots.size(); ++i) {
    bases[i] = slots[i].basis;
    bits.set(i, slots[i].bit);
  }
  auto shared = transcript ? std::make_shared<FrameChannel::Transcript>() : nullptr;
  FrameChannel ch(stream, FrameChannel::Direction::AliceToBob, shared);
  auto res = run_alice_endpoint(ch, params, bases, bits);
  if (transcript) *transcript = std::move(*shared);
  return res;
}

EndpointResult run_bob_over_stream(ByteStream& stream, const SessionParams& params,
                                   FrameChannel::Transcript* transcript) {
  validate(params);
  const auto states = recv_quantum_stream(stream, params.n_slots);
  const auto accepted = run_bob_quantum(params, params.seed, states, nullptr);
  auto shared = transcript ? std::make_shared<FrameChannel::Transcript>() : nullptr;
  FrameChannel ch(stream, FrameChannel::Direction::BobToAlice, shared);
  auto res = run_bob_endpoint(ch, params, accepted);
  if (transcript) *transcript = std::move(*shared);
  return res;
}

void write_slot_log_csv(const SessionParams& params, uint64_t seed,
                        const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << "slot,alice_basis,alice_bit,clicks,accepted_bit\n";
  const auto alice_slots = run_alice_quantum(params, seed);
  RngStream ch(seed, "channel");
  RngStream bq(seed, "bob-quantum");
  for (const auto& sl : alice_slots) {
    const auto arrived = channel_transmit(sl.pulse, params.channel, ch);
    const auto rec = bob_detect(arrived, sl.encoded, params.bob,
                                params.alice.source.pulse_period_ns, bq);
    out << sl.slot << ',' << (sl.basis == Basis::Rectilinear ? "HV" : "LR") << ','
        << int(sl.bit) << ',';
    for (unsigned c = 0; c < 4; ++c)
      if (rec.gated_mask & (1u << c)) out << to_string(static_cast<Polarization>(c));
    out << ',';
    if (rec.accepted)
      out << (rec.accepted->basis == Basis::Rectilinear ? "HV" : "LR")
          << int(rec.accepted->bit);
    out << '\n';
  }
}

}  // namespace qkd
