#ifndef QKD_SESSION_HPP
#define QKD_SESSION_HPP

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "qkd/bits.hpp"
#include "qkd/distill.hpp"
#include "qkd/optics.hpp"
#include "qkd/security.hpp"
#include "qkd/transport.hpp"

namespace qkd {

enum class Role : uint8_t { Alice = 0, Bob = 1 };
enum class Phase {
  Quantum,
  Sifting,
  Sampling,
  Reconciling,
  Amplifying,
  Done,
  Aborted,
};
enum class QberMode : uint8_t { Sampled = 0, FullCompare = 1 };

inline constexpr uint32_t kProtocolVersion = 1;

/// Everything one batch needs; both stations must hold identical values
/// (checked via the config digest in HELLO).
struct SessionParams {
  uint64_t session_id = 1;
  uint64_t seed = 1;
  uint32_t n_slots = 53000;

  AliceConfig alice{SourceModel::spp(0.014, 0.07)};
  ChannelConfig channel;
  BobConfig bob;

  QberMode qber_mode = QberMode::Sampled;
  double sample_fraction = 0.10;
  double qber_abort_threshold = 0.11;

  int cascade_passes = 4;
  double f_e = 1.0;
  bool f_e_override = false;
  PaMode pa_mode = PaMode::FormulaFraction;
  SmConvention sm_convention = SmConvention::Formula;
  double s_m_fixed = 1.9e-6;
  double pulse_rate_hz = kNominalPulseRateHz;

  uint64_t config_digest = 0;  // 0 = skip the HELLO config check

  double batch_duration_s() const {
    return double(n_slots) * alice.source.pulse_period_ns * 1e-9;
  }
  /// Multiphoton probability at the sender output under the configured
  /// convention.
  double s_m() const;
};

/// Rejects out-of-range parameters before any exchange starts.
void validate(const SessionParams& params);

struct WilsonInterval {
  double low = 0.0;
  double high = 0.0;
};
/// 95% score interval unless another z is given.
WilsonInterval wilson_interval(uint64_t errors, uint64_t n, double z = 1.96);

struct AcceptedClick {
  uint32_t slot = 0;
  Basis basis = Basis::Rectilinear;
  uint8_t bit = 0;
};

/// Output of the quantum phase: the sender's full log and the receiver's
/// accepted detections (slots with exactly one gated click).
struct QuantumRun {
  std::vector<Basis> alice_bases;  // per slot
  BitVec alice_bits;               // per slot
  std::vector<AcceptedClick> bob_accepted;
  uint64_t bob_clicked_slots = 0;  // any gated click, double clicks included
};

/// Simulate source, modulator, channel and receiver for one batch.
/// Randomness comes from named substreams of `seed`, one per physical
/// element, so the split two-process run reproduces the loopback run.
QuantumRun run_quantum_phase(const SessionParams& params, uint64_t seed);

struct SessionSummary {
  Role role = Role::Alice;
  Phase phase = Phase::Done;
  std::string abort_reason;

  uint64_t slots = 0;
  uint64_t accepted = 0;
  uint64_t sifted = 0;
  uint64_t revealed = 0;
  uint64_t sample_errors = 0;
  double qber_estimate = 0.0;
  WilsonInterval qber_ci;
  uint32_t corrections = 0;
  double e_used = 0.0;

  LeakageLedger ledger;
  bool reconciled_digest_ok = false;
  bool final_digest_ok = false;
  bool insecure = false;

  double p_exp_measured = 0.0;
  double tau_secure = 0.0;
  uint64_t final_bits = 0;
  double g_empirical = 0.0;       // final bits per pulse
  double sifted_rate_hz = 0.0;
  double final_rate_hz = 0.0;
};

struct EndpointResult {
  SessionSummary summary;
  DistilledKey key;
  // introspection for tests
  BitVec sifted_bits;                 // after sifting, before sampling removal
  std::vector<uint32_t> sifted_slots; // slot index behind each sifted bit
  BitVec kept_bits;                   // after sampling removal (pre-reconciliation)
  BitVec reconciled_bits;
  std::vector<uint32_t> sampled_indices;
};

/// Drive one endpoint of the classical protocol over an open channel.
/// Bob initiates every round; the exchange strictly alternates.
EndpointResult run_alice_endpoint(FrameChannel& channel, const SessionParams& params,
                                  const std::vector<Basis>& bases, const BitVec& bits);
EndpointResult run_bob_endpoint(FrameChannel& channel, const SessionParams& params,
                                const std::vector<AcceptedClick>& accepted);

struct SessionOutcome {
  EndpointResult alice;
  EndpointResult bob;
  FrameChannel::Transcript transcript;
};

/// Quantum phase plus both classical endpoints over an in-process loopback.
SessionOutcome run_loopback_session(const SessionParams& params);

/// Two-process mode. The sender simulates the source and streams the slot
/// states to the receiver ahead of the classical exchange (same connection,
/// quantum stream first); the receiver applies channel loss and detection.
EndpointResult run_alice_over_stream(ByteStream& stream, const SessionParams& params,
                                     FrameChannel::Transcript* transcript = nullptr);
EndpointResult run_bob_over_stream(ByteStream& stream, const SessionParams& params,
                                   FrameChannel::Transcript* transcript = nullptr);

/// Debug/characterization slot log (CSV columns
/// slot,alice_basis,alice_bit,clicks,accepted_bit).
void write_slot_log_csv(const SessionParams& params, uint64_t seed,
                        const std::string& path);

}  // namespace qkd

#endif
