#ifndef QKD_HBT_HPP
#define QKD_HBT_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "qkd/rng.hpp"
#include "qkd/source.hpp"

namespace qkd {

/// Arrival times of one detector of the correlation setup.
struct TimestampStream {
  int detector_id = 0;
  std::vector<double> times_ns;  // sorted ascending
  double duration_s = 0.0;

  double rate_hz() const {
    return duration_s > 0.0 ? double(times_ns.size()) / duration_s : 0.0;
  }
};

struct CorrelationHistogram {
  double bin_width_ns = 1.0;
  double range_ns = 1000.0;  // delays in [-range, +range)
  std::vector<uint64_t> counts;
  // acquisition metadata
  double rate1_hz = 0.0;
  double rate2_hz = 0.0;
  double duration_s = 0.0;
  double pulse_period_ns = 187.5;

  int n_bins() const { return int(counts.size()); }
  double bin_center(int i) const { return -range_ns + (i + 0.5) * bin_width_ns; }
  uint64_t total_counts() const;
};

struct PeakReport {
  int k = 0;                    // peak index, center at k * period
  double center_ns = 0.0;
  double normalized_area = 0.0; // 1 = Poissonian coincidence level
  double amplitude = 0.0;       // fitted A of A*exp(-|t - c|/tau) + B
  double lifetime_ns = 0.0;
  double background = 0.0;      // fitted B, counts per bin
  double residual_rms = 0.0;
  bool fit_converged = false;
};

/// All start-stop pairs (t2 - t1) within [-range, +range), binned. All-pairs
/// rather than nearest-neighbor: at these count rates the difference inside
/// the range is negligible and the result does not depend on event order.
CorrelationHistogram build_histogram(const TimestampStream& s1,
                                     const TimestampStream& s2,
                                     double bin_width_ns, double range_ns,
                                     double pulse_period_ns);

/// Two-sided exponential fit A*exp(-|t-c|/tau) + B for every peak whose
/// +-period/2 window lies inside the histogram range. A and B solve linearly
/// for fixed tau; tau is found by golden-section search. Histograms narrower
/// than three peaks are rejected.
std::vector<PeakReport> fit_peaks(const CorrelationHistogram& hist,
                                  double initial_lifetime_ns);

/// Peak areas against the Poissonian expectation N1*N2*T_acq*period.
/// Counts are integrated over +-period/2 around each peak; the fitted
/// exponentials move tail mass that leaks across window edges back to the
/// peak it belongs to (and fitted background is excluded). Falls back to raw
/// window counts when the fit does not converge.
std::vector<PeakReport> normalize_peak_areas(const CorrelationHistogram& hist);

/// Correlation-bench source simulation: a pulsed emitter split 50/50 onto
/// two detectors of the given efficiency. Empty slots are skipped
/// geometrically, so simulated seconds cost ~rate, not ~clock.
struct HbtSimConfig {
  SourceModel source;                 // model at the correlation bench input
  double detector_efficiency = 0.6;
  double duration_s = 166.0;
  double dark_rate_hz = 0.0;          // per detector, uniform in time
};

std::pair<TimestampStream, TimestampStream> simulate_hbt(const HbtSimConfig& cfg,
                                                         RngStream& rng);

/// Source mean photon number that produces the target per-detector rate.
double hbt_mu_for_apd_rate(double apd_rate_hz, double pulse_rate_hz,
                           double detector_efficiency);

/// Timestamp file: one "detector_id time_ns" pair per line.
void write_timestamps(const TimestampStream& s, const std::string& path);
/// Reads one detector's stream back; lines are sorted on load. duration_s
/// falls back to the last arrival when the caller passes 0.
TimestampStream read_timestamps(const std::string& path, double duration_s = 0.0);
/// Histogram CSV: "delay_ns,count" rows, comment lines prefixed '#'.
void write_histogram_csv(const CorrelationHistogram& hist, const std::string& path,
                         const std::string& header_comment);

}  // namespace qkd

#endif
