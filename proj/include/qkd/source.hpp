#ifndef QKD_SOURCE_HPP
#define QKD_SOURCE_HPP

#include <cstdint>
#include <vector>

#include "qkd/rng.hpp"

namespace qkd {

enum class SourceKind { Wcp, Spp };

/// Photon-number and emission-time model of a pulsed source.
///
/// `mu` is the mean photon number per pulse at the plane where the model is
/// evaluated. A weak coherent pulse draws Poisson(mu). A sub-Poissonian
/// single-photon pulse is described by its zero-delay autocorrelation
/// `suppression_c` (1 = Poissonian pair statistics, 0 = ideal single-photon
/// emitter) and uses the minimal photon-number law consistent with mean mu
/// and pair probability P(2) = c*mu^2/2:
///
///   P(2) = c*mu^2/2,  P(1) = mu - 2*P(2),  P(0) = 1 - P(1) - P(2).
///
/// Orders n >= 3 are O(mu^3) and dropped. Both families are closed under
/// Bernoulli thinning (mu scales, c is invariant), so the same model type
/// describes the source at any loss plane.
struct SourceModel {
  SourceKind kind = SourceKind::Spp;
  double mu = 0.0;
  double suppression_c = 1.0;  // forced to 1 for WCP
  double lifetime_ns = 23.0;
  double pulse_period_ns = 187.5;

  static SourceModel wcp(double mu, double lifetime_ns = 23.0,
                         double pulse_period_ns = 187.5);
  static SourceModel spp(double mu, double suppression_c,
                         double lifetime_ns = 23.0,
                         double pulse_period_ns = 187.5);

  /// Same source seen through a beam splitter / lossy element of the given
  /// transmittance: mean scales, suppression is unchanged.
  SourceModel thinned(double transmittance) const;

  double pulse_rate_hz() const { return 1e9 / pulse_period_ns; }

  /// P(n == 2) of the truncated law (SPP); c*mu^2/2.
  double pair_probability() const;
};

/// What one excitation slot produced.
struct EmittedPulse {
  uint64_t slot_index = 0;
  std::vector<double> emission_offsets_ns;  // one entry per photon, >= 0

  int photon_count() const { return static_cast<int>(emission_offsets_ns.size()); }
};

/// Probability that a pulse carries two or more photons.
/// Closed form, matching the small-mu conventions used throughout the rate
/// analysis: mu^2/2 for WCP, c*mu^2/2 for SPP.
double multiphoton_probability(const SourceModel& model);

/// Draw a photon number for one pulse.
uint32_t sample_photon_number(const SourceModel& model, RngStream& rng);

/// Independent exponential emission delays after the excitation instant.
std::vector<double> sample_emission_times(uint32_t count, double lifetime_ns,
                                          RngStream& rng);

/// Convenience: sample a full pulse (photon number + offsets).
EmittedPulse sample_pulse(const SourceModel& model, uint64_t slot_index,
                          RngStream& rng);

}  // namespace qkd

#endif
