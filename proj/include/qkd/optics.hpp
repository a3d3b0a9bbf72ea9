#ifndef QKD_OPTICS_HPP
#define QKD_OPTICS_HPP

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "qkd/lfsr.hpp"
#include "qkd/rng.hpp"
#include "qkd/source.hpp"

namespace qkd {

enum class Basis : uint8_t { Rectilinear = 0, Circular = 1 };
enum class Polarization : uint8_t { H = 0, V = 1, L = 2, R = 3 };

constexpr Basis basis_of(Polarization p) {
  return (p == Polarization::H || p == Polarization::V) ? Basis::Rectilinear
                                                        : Basis::Circular;
}
constexpr uint8_t bit_of(Polarization p) {
  return (p == Polarization::V || p == Polarization::R) ? 1 : 0;
}
constexpr Polarization pol_from(Basis b, uint8_t bit) {
  if (b == Basis::Rectilinear) return bit ? Polarization::V : Polarization::H;
  return bit ? Polarization::R : Polarization::L;
}
constexpr Polarization orthogonal(Polarization p) {
  switch (p) {
    case Polarization::H: return Polarization::V;
    case Polarization::V: return Polarization::H;
    case Polarization::L: return Polarization::R;
    default: return Polarization::L;
  }
}
const char* to_string(Polarization p);

/// Sender station: pulsed source feeding a polarization modulator.
///
/// `source.mu` is the mean photon number per pulse *leaving the station*,
/// the figure every downstream rate uses. The modulator loss is still a real
/// per-photon Bernoulli thinning: internally the emitter runs at
/// mu / t_eom so the thinned output lands back on the configured mu.
struct AliceConfig {
  SourceModel source;
  double t_eom = 0.65;
  /// Extra probability that the modulator encodes the orthogonal state
  /// (drive-waveform error). Default off; raises the error rate without
  /// touching click statistics.
  double dynamic_error_prob = 0.0;
};

struct ChannelConfig {
  double loss_db = 0.0;
  double transmittance() const;
};

enum class DoubleClickPolicy : uint8_t { Discard = 0, RandomAssign = 1 };

/// Receiver: passive basis choice, two polarizing splitters, four gated APDs.
struct BobConfig {
  double apd_efficiency = 0.6;
  /// Dark + ambient rates per channel, indexed by Polarization {H, V, L, R}.
  std::array<double, 4> dark_rates_hz{150.0, 180.0, 380.0, 160.0};
  double gate_width_ns = 50.0;
  double pol_error_hv = 0.012;
  double pol_error_lr = 0.032;
  DoubleClickPolicy double_click_policy = DoubleClickPolicy::Discard;

  double dark_prob_per_gate() const;  // sum over channels, linear in gate
};

/// One slot as the sender logs it.
struct AliceSlot {
  uint64_t slot = 0;
  Basis basis = Basis::Rectilinear;
  uint8_t bit = 0;
  Polarization encoded = Polarization::H;  // includes any dynamic flip
  EmittedPulse pulse;                      // post-modulator photons
};

/// One slot as the receiver records it.
struct ClickRecord {
  uint64_t slot = 0;
  uint8_t click_mask = 0;  // bit per Polarization channel
  uint8_t gated_mask = 0;  // subset of click_mask inside the time gate
  struct Accepted {
    Basis basis;
    uint8_t bit;
  };
  std::optional<Accepted> accepted;  // set iff exactly one gated click survives
};

struct GateFractions {
  double eta_g;   // captured fraction of exponential-lifetime signal
  double beta_g;  // captured fraction of uniform background
};

/// eta_g = 1 - exp(-gate/lifetime), beta_g = gate/period.
GateFractions gate_fractions(double gate_width_ns, double lifetime_ns,
                             double pulse_period_ns);

/// Station-output photon rate from the control-detector calibration:
/// photons/s leaving the station = detected_rate * t_eom / eta_control.
double alice_output_rate_hz(double detected_at_alice_hz, double t_eom,
                            double eta_control);

void validate(const AliceConfig& cfg);
void validate(const BobConfig& cfg, double pulse_period_ns);

/// Encode one slot: draw basis and bit, sample the pulse, thin through the
/// modulator. Draw order per slot: basis bit, data bit, dynamic flip,
/// photon number, offsets, per-photon modulator survival.
AliceSlot alice_emit_slot(const AliceConfig& cfg, uint64_t slot,
                          BitSource& bits, RngStream& rng);

std::vector<AliceSlot> alice_emit(const AliceConfig& cfg, uint64_t n_slots,
                                  BitSource& bits, RngStream& rng);

/// Each photon independently survives with 10^(-loss_db/10).
EmittedPulse channel_transmit(const EmittedPulse& pulse,
                              const ChannelConfig& cfg, RngStream& rng);

/// Propagate one pulse through the receiver. Photons pick an arm with
/// probability 1/2; in the matching basis they land on the wrong detector
/// with the basis misalignment probability, in the crossed basis either
/// detector is equally likely. A click is gated iff its emission offset is
/// inside the gate. Each channel may additionally fire a dark click within
/// the gate (Bernoulli, rate * gate). Double gated clicks resolve per policy.
ClickRecord bob_detect(const EmittedPulse& pulse, Polarization encoded,
                       const BobConfig& cfg, double pulse_period_ns,
                       RngStream& rng);

}  // namespace qkd

#endif
