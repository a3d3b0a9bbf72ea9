#include "qkd/security.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "qkd/optics.hpp"

namespace qkd {

double binary_entropy_bits(double e) {
  if (e < 0.0 || e > 1.0) throw std::invalid_argument("binary_entropy_bits: e outside [0, 1]");
  if (e == 0.0 || e == 1.0) return 0.0;
  return -(e * std::log2(e) + (1.0 - e) * std::log2(1.0 - e));
}

namespace {

void validate(const OperatingPoint& op) {
  if (!(op.p_exp > 0.0) || op.p_exp > 1.0)
    throw std::invalid_argument("OperatingPoint: p_exp must be in (0, 1]");
  if (op.s_m < 0.0) throw std::invalid_argument("OperatingPoint: s_m must be >= 0");
  if (op.e < 0.0 || op.e >= 0.5)
    throw std::invalid_argument("OperatingPoint: e must be in [0, 0.5)");
  if (op.f_e < 1.0) throw std::invalid_argument("OperatingPoint: f_e must be >= 1");
  if (op.f_e > 1.0 && op.e > 0.05 && !op.f_e_override)
    throw std::invalid_argument(
        "OperatingPoint: f_e > 1 is only valid for e <= 5% (set the override to force)");
}

}  // namespace

namespace {

// First bracket term; negative sentinel when the point is outside the
// formula's validity region (all-multiphoton or renormalized error >= 1/2,
// where the eavesdropper can know everything).
double privacy_term(const OperatingPoint& op) {
  if (op.s_m >= op.p_exp) return -1.0;
  const double single_fraction = (op.p_exp - op.s_m) / op.p_exp;
  const double renorm_error = op.e / single_fraction;
  if (renorm_error >= 0.5) return -1.0;
  const double collision_arg =
      1.0 + 4.0 * renorm_error - 4.0 * renorm_error * renorm_error;
  return single_fraction * (1.0 - std::log2(collision_arg));
}

}  // namespace

GainResult secure_gain(const OperatingPoint& op) {
  validate(op);
  const double privacy = privacy_term(op);
  if (privacy < 0.0) return {0.0, true};
  const double correction = op.f_e * binary_entropy_bits(op.e);
  const double g = 0.5 * op.p_exp * (privacy - correction);
  if (g <= 0.0) return {0.0, true};
  return {g, false};
}

double secure_fraction(const OperatingPoint& op) {
  return 2.0 * secure_gain(op).gain / op.p_exp;
}

double privacy_fraction(const OperatingPoint& op) {
  validate(op);
  const double privacy = privacy_term(op);
  return privacy > 0.0 ? privacy : 0.0;
}

LinkModel LinkModel::paper_spp() {
  LinkModel link;
  const GateFractions gf = gate_fractions(50.0, 23.0, kDefaultPulsePeriodNs);
  link.kind = SourceKind::Spp;
  link.mu = 0.014;
  link.suppression_c = 0.07;
  link.eta_bob = 0.6;
  link.dark_prob_per_gate = (150.0 + 180.0 + 380.0 + 160.0) * 50.0 * 1e-9;
  link.misalignment = 0.5 * (0.012 + 0.032);
  link.eta_g = gf.eta_g;
  link.beta_g = gf.beta_g;
  return link;
}

LinkModel LinkModel::paper_wcp(double mu) {
  LinkModel link = paper_spp();
  link.kind = SourceKind::Wcp;
  link.mu = mu;
  link.suppression_c = 1.0;
  link.eta_g = 1.0;
  link.beta_g = 2.0 / kDefaultPulsePeriodNs;
  return link;
}

double link_signal_prob(const LinkModel& link) {
  const double t = std::pow(10.0, -link.loss_db / 10.0);
  return link.mu * t * link.eta_bob * link.eta_g;
}

OperatingPoint operating_point_from_link(const LinkModel& link) {
  if (link.loss_db < 0.0) throw std::invalid_argument("LinkModel: loss_db must be >= 0");
  if (link.mu < 0.0) throw std::invalid_argument("LinkModel: mu must be >= 0");
  const double p_signal = link_signal_prob(link);
  const double p_dark = link.dark_prob_per_gate;
  const double p_exp = 1.0 - (1.0 - p_signal) * (1.0 - p_dark);
  if (!(p_exp > 0.0))
    throw std::invalid_argument("operating_point_from_link: no clicks at this link");

  OperatingPoint op;
  op.p_exp = p_exp;
  op.e = (link.misalignment * p_signal + 0.5 * p_dark) / p_exp;
  op.s_m = (link.sm_convention == SmConvention::Fixed)
               ? link.s_m_fixed
               : ((link.kind == SourceKind::Wcp ? 1.0 : link.suppression_c) *
                  link.mu * link.mu / 2.0);
  op.f_e = link.f_e;
  op.f_e_override = link.f_e_override;
  op.pulse_rate_hz = link.pulse_rate_hz;
  return op;
}

namespace {

double gain_at_loss(LinkModel link, double loss_db) {
  link.loss_db = loss_db;
  return secure_gain(operating_point_from_link(link)).gain;
}

}  // namespace

double max_tolerable_loss(const LinkModel& link, double g_threshold) {
  if (!(g_threshold > 0.0))
    throw std::invalid_argument("max_tolerable_loss: threshold must be > 0");
  const double g0 = gain_at_loss(link, 0.0);
  if (g0 <= g_threshold)
    throw std::domain_error("max_tolerable_loss: already below threshold at 0 dB");

  double hi = 1.0;
  while (gain_at_loss(link, hi) > g_threshold) {
    hi *= 2.0;
    if (hi > 400.0)
      throw std::domain_error("max_tolerable_loss: threshold never reached");
  }

  // G must decay monotonically over the bracket for bisection to be valid.
  double prev = g0;
  for (int i = 1; i <= 64; ++i) {
    const double g = gain_at_loss(link, hi * i / 64.0);
    if (g > prev * (1.0 + 1e-9))
      throw std::domain_error("max_tolerable_loss: gain not monotone in loss");
    prev = g;
  }

  double lo = 0.0;
  for (int iter = 0; iter < 80; ++iter) {
    const double mid = 0.5 * (lo + hi);
    const double g = gain_at_loss(link, mid);
    if (g > 0.0 && std::abs(g - g_threshold) / g_threshold < 1e-6) return mid;
    if (g > g_threshold)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

RateCurve sweep_curve(const LinkModel& link_template, RateCurve::Abscissa kind,
                      double lo, double hi, int steps) {
  if (steps < 2) throw std::invalid_argument("sweep_curve: steps must be >= 2");
  if (hi < lo) throw std::invalid_argument("sweep_curve: hi < lo");
  RateCurve curve;
  curve.kind = kind;
  curve.samples.reserve(steps);
  for (int i = 0; i < steps; ++i) {
    const double x = lo + (hi - lo) * i / (steps - 1);
    LinkModel link = link_template;
    if (kind == RateCurve::Abscissa::LossDb)
      link.loss_db = x;
    else
      link.mu = x;
    double g = 0.0;
    try {
      g = secure_gain(operating_point_from_link(link)).gain;
    } catch (const std::invalid_argument&) {
      g = 0.0;  // degenerate sample (no clicks) plots as zero gain
    }
    curve.samples.emplace_back(x, g);
  }
  std::ostringstream meta;
  meta << (link_template.kind == SourceKind::Wcp ? "wcp" : "spp")
       << " mu=" << link_template.mu << " c=" << link_template.suppression_c
       << " eta_bob=" << link_template.eta_bob
       << " dark_per_gate=" << link_template.dark_prob_per_gate
       << " misalignment=" << link_template.misalignment
       << " eta_g=" << link_template.eta_g << " f_e=" << link_template.f_e
       << (kind == RateCurve::Abscissa::LossDb
               ? " x=loss_db"
               : " x=mu, loss_db=" + std::to_string(link_template.loss_db));
  curve.metadata = meta.str();
  return curve;
}

}  // namespace qkd
