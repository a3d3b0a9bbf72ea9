#include "qkd/optics.hpp"

#include <bit>
#include <cmath>
#include <stdexcept>

namespace qkd {

const char* to_string(Polarization p) {
  switch (p) {
    case Polarization::H: return "H";
    case Polarization::V: return "V";
    case Polarization::L: return "L";
    default: return "R";
  }
}

double ChannelConfig::transmittance() const {
  if (loss_db < 0.0) throw std::invalid_argument("ChannelConfig: loss_db must be >= 0");
  return std::pow(10.0, -loss_db / 10.0);
}

double BobConfig::dark_prob_per_gate() const {
  double p = 0.0;
  for (double d : dark_rates_hz) p += d * gate_width_ns * 1e-9;
  return p;
}

GateFractions gate_fractions(double gate_width_ns, double lifetime_ns,
                             double pulse_period_ns) {
  if (!(gate_width_ns > 0.0) || gate_width_ns > pulse_period_ns)
    throw std::invalid_argument("gate_fractions: need 0 < gate <= period");
  if (!(lifetime_ns > 0.0)) throw std::invalid_argument("gate_fractions: lifetime must be > 0");
  return {1.0 - std::exp(-gate_width_ns / lifetime_ns),
          gate_width_ns / pulse_period_ns};
}

double alice_output_rate_hz(double detected_at_alice_hz, double t_eom,
                            double eta_control) {
  if (!(eta_control > 0.0)) throw std::invalid_argument("eta_control must be > 0");
  return detected_at_alice_hz * t_eom / eta_control;
}

void validate(const AliceConfig& cfg) {
  if (!(cfg.t_eom > 0.0) || cfg.t_eom > 1.0)
    throw std::invalid_argument("AliceConfig: t_eom must be in (0, 1]");
  if (cfg.dynamic_error_prob < 0.0 || cfg.dynamic_error_prob >= 0.5)
    throw std::invalid_argument("AliceConfig: dynamic_error_prob must be in [0, 0.5)");
  // The pre-modulator emitter must itself be a valid model.
  (void)cfg.source.thinned(1.0 / cfg.t_eom);
}

void validate(const BobConfig& cfg, double pulse_period_ns) {
  if (!(cfg.apd_efficiency > 0.0) || cfg.apd_efficiency > 1.0)
    throw std::invalid_argument("BobConfig: apd_efficiency must be in (0, 1]");
  if (!(cfg.gate_width_ns > 0.0) || cfg.gate_width_ns > pulse_period_ns)
    throw std::invalid_argument("BobConfig: need 0 < gate_width <= pulse period");
  for (double d : cfg.dark_rates_hz)
    if (d < 0.0) throw std::invalid_argument("BobConfig: negative dark rate");
  if (cfg.pol_error_hv < 0.0 || cfg.pol_error_hv >= 0.5 || cfg.pol_error_lr < 0.0 ||
      cfg.pol_error_lr >= 0.5)
    throw std::invalid_argument("BobConfig: polarization errors must be in [0, 0.5)");
}

AliceSlot alice_emit_slot(const AliceConfig& cfg, uint64_t slot, BitSource& bits,
                          RngStream& rng) {
  AliceSlot s;
  s.slot = slot;
  s.basis = bits() ? Basis::Circular : Basis::Rectilinear;
  s.bit = bits() ? 1 : 0;
  s.encoded = pol_from(s.basis, s.bit);
  if (cfg.dynamic_error_prob > 0.0 && rng.bernoulli(cfg.dynamic_error_prob))
    s.encoded = orthogonal(s.encoded);

  const SourceModel emitter = cfg.source.thinned(1.0 / cfg.t_eom);
  EmittedPulse raw = sample_pulse(emitter, slot, rng);
  s.pulse.slot_index = slot;
  for (double offset : raw.emission_offsets_ns)
    if (rng.bernoulli(cfg.t_eom)) s.pulse.emission_offsets_ns.push_back(offset);
  return s;
}

std::vector<AliceSlot> alice_emit(const AliceConfig& cfg, uint64_t n_slots,
                                  BitSource& bits, RngStream& rng) {
  validate(cfg);
  std::vector<AliceSlot> out;
  out.reserve(n_slots);
  for (uint64_t i = 0; i < n_slots; ++i)
    out.push_back(alice_emit_slot(cfg, i, bits, rng));
  return out;
}

EmittedPulse channel_transmit(const EmittedPulse& pulse, const ChannelConfig& cfg,
                              RngStream& rng) {
  const double t = cfg.transmittance();
  EmittedPulse out;
  out.slot_index = pulse.slot_index;
  for (double offset : pulse.emission_offsets_ns)
    if (rng.bernoulli(t)) out.emission_offsets_ns.push_back(offset);
  return out;
}

ClickRecord bob_detect(const EmittedPulse& pulse, Polarization encoded,
                       const BobConfig& cfg, double pulse_period_ns,
                       RngStream& rng) {
  ClickRecord rec;
  rec.slot = pulse.slot_index;

  const Basis encoded_basis = basis_of(encoded);
  for (double offset : pulse.emission_offsets_ns) {
    const Basis arm = rng.bernoulli(0.5) ? Basis::Circular : Basis::Rectilinear;
    Polarization channel;
    if (arm == encoded_basis) {
      const double err =
          (arm == Basis::Rectilinear) ? cfg.pol_error_hv : cfg.pol_error_lr;
      channel = rng.bernoulli(err) ? orthogonal(encoded) : encoded;
    } else {
      channel = pol_from(arm, rng.bernoulli(0.5) ? 1 : 0);
    }
    if (!rng.bernoulli(cfg.apd_efficiency)) continue;
    const uint8_t bit = uint8_t(1u << static_cast<unsigned>(channel));
    rec.click_mask |= bit;
    if (offset < cfg.gate_width_ns) rec.gated_mask |= bit;
  }

  for (unsigned ch = 0; ch < 4; ++ch) {
    const double p = cfg.dark_rates_hz[ch] * cfg.gate_width_ns * 1e-9;
    if (rng.bernoulli(p)) {
      rec.click_mask |= uint8_t(1u << ch);
      rec.gated_mask |= uint8_t(1u << ch);
    }
  }

  const int gated = std::popcount(rec.gated_mask);
  if (gated == 1) {
    const auto ch = static_cast<Polarization>(std::countr_zero(rec.gated_mask));
    rec.accepted = ClickRecord::Accepted{basis_of(ch), bit_of(ch)};
  } else if (gated > 1 &&
             cfg.double_click_policy == DoubleClickPolicy::RandomAssign) {
    const auto pick = rng.below(static_cast<uint64_t>(gated));
    uint8_t mask = rec.gated_mask;
    for (uint64_t skip = 0; skip < pick; ++skip) mask &= uint8_t(mask - 1);
    const auto ch = static_cast<Polarization>(std::countr_zero(mask));
    rec.accepted = ClickRecord::Accepted{basis_of(ch), bit_of(ch)};
  }
  (void)pulse_period_ns;
  return rec;
}

}  // namespace qkd
