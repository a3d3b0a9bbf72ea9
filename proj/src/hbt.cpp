#include "qkd/hbt.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace qkd {

uint64_t CorrelationHistogram::total_counts() const {
  uint64_t n = 0;
  for (uint64_t c : counts) n += c;
  return n;
}

CorrelationHistogram build_histogram(const TimestampStream& s1,
                                     const TimestampStream& s2,
                                     double bin_width_ns, double range_ns,
                                     double pulse_period_ns) {
  if (!(bin_width_ns > 0.0) || !(range_ns > 0.0))
    throw std::invalid_argument("build_histogram: bin width and range must be > 0");
  CorrelationHistogram hist;
  hist.bin_width_ns = bin_width_ns;
  hist.range_ns = range_ns;
  hist.pulse_period_ns = pulse_period_ns;
  hist.rate1_hz = s1.rate_hz();
  hist.rate2_hz = s2.rate_hz();
  hist.duration_s = std::max(s1.duration_s, s2.duration_s);
  const auto bins = size_t(std::ceil(2.0 * range_ns / bin_width_ns));
  hist.counts.assign(bins, 0);

  const auto& t1 = s1.times_ns;
  const auto& t2 = s2.times_ns;
  size_t lo = 0;
  for (const double a : t1) {
    while (lo < t2.size() && t2[lo] < a - range_ns) ++lo;
    for (size_t j = lo; j < t2.size() && t2[j] < a + range_ns; ++j) {
      const double d = t2[j] - a;
      const auto bin = size_t((d + range_ns) / bin_width_ns);
      if (bin < bins) ++hist.counts[bin];
    }
  }
  return hist;
}

namespace {

struct Window {
  int first_bin;
  int last_bin;  // inclusive
};

std::vector<int> peak_indices(const CorrelationHistogram& hist) {
  const double period = hist.pulse_period_ns;
  const int kmax = int(std::floor((hist.range_ns - period / 2.0) / period));
  std::vector<int> ks;
  for (int k = -kmax; k <= kmax; ++k) ks.push_back(k);
  return ks;
}

Window peak_window(const CorrelationHistogram& hist, int k) {
  const double period = hist.pulse_period_ns;
  const double lo = k * period - period / 2.0;
  const double hi = k * period + period / 2.0;
  int first = int(std::ceil((lo + hist.range_ns) / hist.bin_width_ns - 0.5));
  int last = int(std::floor((hi + hist.range_ns) / hist.bin_width_ns - 0.5));
  first = std::max(first, 0);
  last = std::min(last, hist.n_bins() - 1);
  return {first, last};
}

struct ExpFit {
  double a = 0.0, tau = 0.0, b = 0.0, rms = 0.0;
  bool ok = false;
};

// Least squares of y ~ A exp(-|t-c|/tau) + B on a window. For fixed tau the
// problem is linear in (A, B); the tau line search is golden section.
ExpFit fit_two_sided_exponential(const CorrelationHistogram& geom,
                                 const std::vector<double>& y, const Window& w,
                                 double center_ns, double tau_lo, double tau_hi) {
  const int n = w.last_bin - w.first_bin + 1;
  if (n < 5) return {};

  auto solve_ab = [&](double tau, double& a, double& b, double& sse) {
    double sf = 0, sff = 0, sy = 0, sfy = 0;
    for (int i = w.first_bin; i <= w.last_bin; ++i) {
      const double f = std::exp(-std::abs(geom.bin_center(i) - center_ns) / tau);
      sf += f;
      sff += f * f;
      sy += y[i];
      sfy += f * y[i];
    }
    const double det = sff * n - sf * sf;
    if (std::abs(det) < 1e-12) {
      a = 0;
      b = sy / n;
    } else {
      a = (sfy * n - sf * sy) / det;
      b = (sff * sy - sf * sfy) / det;
    }
    sse = 0;
    for (int i = w.first_bin; i <= w.last_bin; ++i) {
      const double f = std::exp(-std::abs(geom.bin_center(i) - center_ns) / tau);
      const double r = y[i] - (a * f + b);
      sse += r * r;
    }
  };

  const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
  double lo = tau_lo, hi = tau_hi;
  double x1 = hi - gr * (hi - lo), x2 = lo + gr * (hi - lo);
  double a, b, s1, s2;
  solve_ab(x1, a, b, s1);
  solve_ab(x2, a, b, s2);
  for (int it = 0; it < 120 && (hi - lo) > 1e-4; ++it) {
    if (s1 < s2) {
      hi = x2;
      x2 = x1;
      s2 = s1;
      x1 = hi - gr * (hi - lo);
      solve_ab(x1, a, b, s1);
    } else {
      lo = x1;
      x1 = x2;
      s1 = s2;
      x2 = lo + gr * (hi - lo);
      solve_ab(x2, a, b, s2);
    }
  }
  ExpFit fit;
  fit.tau = 0.5 * (lo + hi);
  double sse;
  solve_ab(fit.tau, fit.a, fit.b, sse);
  fit.rms = std::sqrt(sse / n);
  // A flat or empty window drives A to ~0; that is a valid fit of "no peak".
  // Hitting the tau search bounds is not.
  fit.ok = fit.tau > tau_lo * 1.01 && fit.tau < tau_hi * 0.99;
  return fit;
}

}  // namespace

std::vector<PeakReport> fit_peaks(const CorrelationHistogram& hist,
                                  double initial_lifetime_ns) {
  if (!(initial_lifetime_ns > 0.0))
    throw std::invalid_argument("fit_peaks: initial lifetime must be > 0");
  const auto ks = peak_indices(hist);
  if (ks.size() < 3)
    throw std::invalid_argument("fit_peaks: need at least 3 peaks inside the range");

  const double tau_lo = std::max(hist.bin_width_ns / 4.0, initial_lifetime_ns / 50.0);
  const double tau_hi = std::min(hist.pulse_period_ns * 2.0, initial_lifetime_ns * 50.0);

  std::vector<PeakReport> out;
  for (int k : ks) {
    PeakReport r;
    r.k = k;
    r.center_ns = k * hist.pulse_period_ns;
    out.push_back(r);
  }

  // Peaks overlap through their exponential tails, which an isolated window
  // fit misreads as background. Fit each peak on the histogram minus the
  // other peaks' current profiles and iterate; couplings are percent-level,
  // so this settles in a few rounds.
  std::vector<double> residual(hist.n_bins());
  for (int round = 0; round < 3; ++round) {
    for (auto& r : out) {
      const Window w = peak_window(hist, r.k);
      for (int i = w.first_bin; i <= w.last_bin; ++i) {
        double others = 0.0;
        for (const auto& o : out) {
          if (o.k == r.k || o.amplitude <= 0.0 || o.lifetime_ns <= 0.0) continue;
          others += o.amplitude *
                    std::exp(-std::abs(hist.bin_center(i) - o.center_ns) / o.lifetime_ns);
        }
        residual[i] = double(hist.counts[i]) - others;
      }
      const auto fit =
          fit_two_sided_exponential(hist, residual, w, r.center_ns, tau_lo, tau_hi);
      r.amplitude = fit.a;
      r.lifetime_ns = fit.tau;
      r.background = fit.b;
      r.residual_rms = fit.rms;
      r.fit_converged = fit.ok;
    }
  }
  return out;
}

namespace {

// Joint linear solve of counts ~ sum_k A_k f_k(x) + B over the whole peak
// region, with the lifetimes held fixed. One shared baseline pinned by every
// valley removes the per-window amplitude/background degeneracy.
struct GlobalPeak {
  double center_ns;
  double tau_ns;
};

struct GlobalModel {
  std::vector<double> amplitude;  // per model peak
  double background = 0.0;
  bool ok = false;
};

GlobalModel solve_global_amplitudes(const CorrelationHistogram& hist,
                                    const std::vector<GlobalPeak>& peaks,
                                    int first_bin, int last_bin) {
  const size_t np = peaks.size();
  const size_t dim = np + 1;

  std::vector<double> ata(dim * dim, 0.0), aty(dim, 0.0), row(dim);
  for (int i = first_bin; i <= last_bin; ++i) {
    const double x = hist.bin_center(i);
    for (size_t k = 0; k < np; ++k)
      row[k] = std::exp(-std::abs(x - peaks[k].center_ns) / peaks[k].tau_ns);
    row[np] = 1.0;
    const double y = double(hist.counts[i]);
    for (size_t a = 0; a < dim; ++a) {
      aty[a] += row[a] * y;
      for (size_t b = 0; b < dim; ++b) ata[a * dim + b] += row[a] * row[b];
    }
  }

  // Gaussian elimination with partial pivoting; the system is tiny.
  GlobalModel model;
  model.amplitude.assign(np, 0.0);
  for (size_t col = 0; col < dim; ++col) {
    size_t pivot = col;
    for (size_t r = col + 1; r < dim; ++r)
      if (std::abs(ata[r * dim + col]) > std::abs(ata[pivot * dim + col])) pivot = r;
    if (std::abs(ata[pivot * dim + col]) < 1e-12) return model;
    if (pivot != col) {
      for (size_t c = 0; c < dim; ++c) std::swap(ata[pivot * dim + c], ata[col * dim + c]);
      std::swap(aty[pivot], aty[col]);
    }
    for (size_t r = col + 1; r < dim; ++r) {
      const double factor = ata[r * dim + col] / ata[col * dim + col];
      for (size_t c = col; c < dim; ++c) ata[r * dim + c] -= factor * ata[col * dim + c];
      aty[r] -= factor * aty[col];
    }
  }
  std::vector<double> x(dim);
  for (size_t r = dim; r-- > 0;) {
    double v = aty[r];
    for (size_t c = r + 1; c < dim; ++c) v -= ata[r * dim + c] * x[c];
    x[r] = v / ata[r * dim + r];
  }
  for (size_t k = 0; k < np; ++k) model.amplitude[k] = x[k];
  model.background = x[np];
  model.ok = true;
  return model;
}

}  // namespace

std::vector<PeakReport> normalize_peak_areas(const CorrelationHistogram& hist) {
  if (!(hist.rate1_hz > 0.0) || !(hist.rate2_hz > 0.0))
    throw std::invalid_argument("normalize_peak_areas: zero detector rate");
  const double expected_per_peak = hist.rate1_hz * hist.rate2_hz *
                                   hist.duration_s * hist.pulse_period_ns * 1e-9;
  if (!(expected_per_peak > 0.0))
    throw std::invalid_argument("normalize_peak_areas: empty acquisition");

  std::vector<PeakReport> reports;
  bool fits_ok = false;
  try {
    reports = fit_peaks(hist, 23.0);
    fits_ok = true;
  } catch (const std::invalid_argument&) {
    for (int k : peak_indices(hist)) {
      PeakReport r;
      r.k = k;
      r.center_ns = k * hist.pulse_period_ns;
      r.lifetime_ns = 23.0;
      reports.push_back(r);
    }
  }

  // The tail factors exp(-T/2tau) amplify per-peak lifetime noise, and the
  // emitter has a single physical lifetime, so the overlap arithmetic pools
  // the side-peak estimates (amplitude-weighted) into one tau.
  double pooled_tau = 0.0;
  GlobalModel model;
  std::vector<GlobalPeak> model_peaks;
  if (fits_ok) {
    double wsum = 0.0;
    for (const auto& r : reports) {
      if (r.k == 0 || !r.fit_converged || r.amplitude <= 0.0) continue;
      pooled_tau += r.amplitude * r.lifetime_ns;
      wsum += r.amplitude;
    }
    pooled_tau = wsum > 0.0 ? pooled_tau / wsum : 23.0;
    // Guard peaks just outside the range keep their inward-leaking tails out
    // of the fitted baseline.
    const int kmax = reports.back().k;
    model_peaks.push_back({-(kmax + 1) * hist.pulse_period_ns, pooled_tau});
    for (const auto& r : reports) model_peaks.push_back({r.center_ns, pooled_tau});
    model_peaks.push_back({(kmax + 1) * hist.pulse_period_ns, pooled_tau});
    model = solve_global_amplitudes(hist, model_peaks,
                                    peak_window(hist, reports.front().k).first_bin,
                                    peak_window(hist, reports.back().k).last_bin);
  }

  const double half = hist.pulse_period_ns / 2.0;
  for (size_t k = 0; k < reports.size(); ++k) {
    auto& r = reports[k];
    const Window w = peak_window(hist, r.k);
    double counts = 0;
    for (int i = w.first_bin; i <= w.last_bin; ++i) counts += double(hist.counts[i]);

    double corrected = counts;
    if (model.ok) {
      const size_t self = k + 1;  // offset for the leading guard peak
      const double nbins = w.last_bin - w.first_bin + 1;
      corrected -= model.background * nbins;
      for (size_t j = 0; j < model_peaks.size(); ++j) {
        const double amp = model.amplitude[j];
        if (amp <= 0.0) continue;
        const double mass = amp * pooled_tau / hist.bin_width_ns;
        if (j == self) {
          // this peak's own tails beyond the window belong to it
          corrected += mass * 2.0 * std::exp(-half / pooled_tau);
        } else {
          // neighbor mass leaking into this window does not
          const double d = std::abs(r.center_ns - model_peaks[j].center_ns);
          corrected -= mass * (std::exp(-(d - half) / pooled_tau) -
                               std::exp(-(d + half) / pooled_tau));
        }
      }
    }
    r.normalized_area = std::max(0.0, corrected) / expected_per_peak;
  }
  return reports;
}

std::pair<TimestampStream, TimestampStream> simulate_hbt(const HbtSimConfig& cfg,
                                                         RngStream& rng) {
  const SourceModel& src = cfg.source;
  const double period = src.pulse_period_ns;
  const auto n_slots = uint64_t(cfg.duration_s * 1e9 / period);

  double p0;
  if (src.kind == SourceKind::Wcp) {
    p0 = std::exp(-src.mu);
  } else {
    const double p2 = src.pair_probability();
    p0 = 1.0 - (src.mu - 2.0 * p2) - p2;
  }

  TimestampStream d1{1, {}, cfg.duration_s};
  TimestampStream d2{2, {}, cfg.duration_s};

  auto emit_photon = [&](double t_ns) {
    if (!rng.bernoulli(cfg.detector_efficiency)) return;
    (rng.bernoulli(0.5) ? d1 : d2).times_ns.push_back(t_ns);
  };

  const double log_p0 = std::log(p0);
  uint64_t slot = 0;
  while (slot < n_slots) {
    if (p0 >= 1.0) break;
    if (p0 > 0.0) {
      // geometric skip over empty slots
      const double u = std::max(rng.next_double(), 1e-300);
      slot += uint64_t(std::log(u) / log_p0);
      if (slot >= n_slots) break;
    }
    uint32_t n = 0;
    if (src.kind == SourceKind::Wcp) {
      // Poisson conditioned on n >= 1 by inversion
      double u = rng.next_double() * (1.0 - p0);
      double term = p0 * src.mu;  // P(n = 1)
      n = 1;
      while (u >= term && n < 64) {
        u -= term;
        ++n;
        term *= src.mu / n;
      }
    } else {
      const double p2 = src.pair_probability();
      const double p1 = src.mu - 2.0 * p2;
      n = (rng.next_double() * (p1 + p2) < p2) ? 2 : 1;
    }
    const double base = double(slot) * period;
    for (uint32_t i = 0; i < n; ++i)
      emit_photon(base + rng.exponential(src.lifetime_ns));
    ++slot;
  }

  if (cfg.dark_rate_hz > 0.0) {
    for (auto* d : {&d1, &d2}) {
      double t = 0.0;
      const double mean_gap_ns = 1e9 / cfg.dark_rate_hz;
      while (true) {
        t += rng.exponential(mean_gap_ns);
        if (t >= cfg.duration_s * 1e9) break;
        d->times_ns.push_back(t);
      }
    }
  }

  std::sort(d1.times_ns.begin(), d1.times_ns.end());
  std::sort(d2.times_ns.begin(), d2.times_ns.end());
  return {std::move(d1), std::move(d2)};
}

double hbt_mu_for_apd_rate(double apd_rate_hz, double pulse_rate_hz,
                           double detector_efficiency) {
  return 2.0 * apd_rate_hz / (pulse_rate_hz * detector_efficiency);
}

void write_timestamps(const TimestampStream& s, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  for (double t : s.times_ns) out << s.detector_id << ' ' << t << '\n';
}

TimestampStream read_timestamps(const std::string& path, double duration_s) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  TimestampStream s;
  s.duration_s = duration_s;
  int id;
  double t;
  while (in >> id >> t) {
    s.detector_id = id;
    s.times_ns.push_back(t);
  }
  std::sort(s.times_ns.begin(), s.times_ns.end());
  if (duration_s <= 0.0 && !s.times_ns.empty())
    s.duration_s = s.times_ns.back() * 1e-9;
  return s;
}

void write_histogram_csv(const CorrelationHistogram& hist, const std::string& path,
                         const std::string& header_comment) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  if (!header_comment.empty()) out << header_comment;
  out << "delay_ns,count\n";
  for (int i = 0; i < hist.n_bins(); ++i)
    out << hist.bin_center(i) << ',' << hist.counts[i] << '\n';
}

}  // namespace qkd
