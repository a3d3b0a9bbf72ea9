#include "qkd/source.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace qkd {

namespace {

void validate(const SourceModel& m) {
  if (!(m.mu >= 0.0)) throw std::invalid_argument("SourceModel: mu must be >= 0");
  if (!(m.lifetime_ns > 0.0)) throw std::invalid_argument("SourceModel: lifetime must be > 0");
  if (!(m.pulse_period_ns > 0.0)) throw std::invalid_argument("SourceModel: period must be > 0");
  if (m.kind == SourceKind::Spp) {
    if (m.suppression_c < 0.0 || m.suppression_c > 1.0)
      throw std::invalid_argument("SourceModel: suppression_c must be in [0, 1]");
    const double p2 = m.suppression_c * m.mu * m.mu / 2.0;
    const double p1 = m.mu - 2.0 * p2;
    if (p1 < 0.0)
      throw std::invalid_argument("SourceModel: P(1) = mu - c*mu^2 < 0 for mu=" +
                                  std::to_string(m.mu));
    if (p1 + p2 > 1.0)
      throw std::invalid_argument("SourceModel: P(0) < 0; mu too large for the truncated law");
  }
}

}  // namespace

SourceModel SourceModel::wcp(double mu, double lifetime_ns, double pulse_period_ns) {
  SourceModel m{SourceKind::Wcp, mu, 1.0, lifetime_ns, pulse_period_ns};
  validate(m);
  return m;
}

SourceModel SourceModel::spp(double mu, double suppression_c, double lifetime_ns,
                             double pulse_period_ns) {
  SourceModel m{SourceKind::Spp, mu, suppression_c, lifetime_ns, pulse_period_ns};
  validate(m);
  return m;
}

SourceModel SourceModel::thinned(double transmittance) const {
  if (!(transmittance >= 0.0))
    throw std::invalid_argument("SourceModel::thinned: negative transmittance");
  SourceModel m = *this;
  m.mu = mu * transmittance;
  validate(m);
  return m;
}

double SourceModel::pair_probability() const {
  return suppression_c * mu * mu / 2.0;
}

double multiphoton_probability(const SourceModel& model) {
  validate(model);
  if (model.kind == SourceKind::Wcp) return model.mu * model.mu / 2.0;
  return model.suppression_c * model.mu * model.mu / 2.0;
}

uint32_t sample_photon_number(const SourceModel& model, RngStream& rng) {
  if (model.kind == SourceKind::Wcp) return rng.poisson(model.mu);
  const double p2 = model.pair_probability();
  const double p1 = model.mu - 2.0 * p2;
  const double u = rng.next_double();
  if (u < p2) return 2;
  if (u < p2 + p1) return 1;
  return 0;
}

std::vector<double> sample_emission_times(uint32_t count, double lifetime_ns,
                                          RngStream& rng) {
  if (!(lifetime_ns > 0.0))
    throw std::invalid_argument("sample_emission_times: lifetime must be > 0");
  std::vector<double> out(count);
  for (auto& t : out) t = rng.exponential(lifetime_ns);
  return out;
}

EmittedPulse sample_pulse(const SourceModel& model, uint64_t slot_index,
                          RngStream& rng) {
  const uint32_t n = sample_photon_number(model, rng);
  EmittedPulse p;
  p.slot_index = slot_index;
  p.emission_offsets_ns = sample_emission_times(n, model.lifetime_ns, rng);
  return p;
}

}  // namespace qkd
