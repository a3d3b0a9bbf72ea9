#ifndef QKD_CONFIG_HPP
#define QKD_CONFIG_HPP

#include <cstdint>
#include <string>

#include "qkd/hbt.hpp"
#include "qkd/session.hpp"

namespace qkd {

enum class ExperimentKind { Session, Sweep, MaxLoss, Hbt, EvalG };

/// Full run description. Every physical default is the reference setup's
/// value: mu 0.014, C(0) 0.07, T_EOM 0.65, eta 0.6, dark rates
/// 150/180/380/160 Hz, 50 ns gate, 187.5 ns period, 23 ns lifetime,
/// polarization errors 1.2% / 3.2%.
struct RunConfig {
  uint64_t seed = 1;

  // source / alice
  SourceKind source_kind = SourceKind::Spp;
  double mu = 0.014;
  double suppression_c = 0.07;
  double lifetime_ns = 23.0;
  double pulse_period_ns = 187.5;
  double t_eom = 0.65;
  double dynamic_error_prob = 0.0;

  // channel / bob
  double loss_db = 0.0;
  double apd_efficiency = 0.6;
  double dark_h_hz = 150.0, dark_v_hz = 180.0, dark_l_hz = 380.0, dark_r_hz = 160.0;
  double gate_width_ns = 50.0;
  double pol_error_hv = 0.012;
  double pol_error_lr = 0.032;
  std::string double_click_policy = "discard";  // or "random"

  // session
  uint32_t slots_per_batch = 53000;
  uint32_t batches = 1;
  std::string qber_mode = "sampled";  // or "full"
  double sample_fraction = 0.10;
  double qber_abort_threshold = 0.11;
  bool write_slot_log = false;

  // distill
  int cascade_passes = 4;
  std::string pa_mode = "formula";  // or "ledger"

  // security
  double f_e = 1.0;
  bool allow_f_e_above_5pct = false;
  std::string s_m_convention = "formula";  // or "fixed"
  double s_m_fixed = 1.9e-6;
  double pulse_rate_hz = kNominalPulseRateHz;

  // sweep / maxloss
  std::string sweep_x = "loss";  // or "mu"
  double sweep_lo = 0.0;
  double sweep_hi = 16.0;
  int sweep_steps = 81;
  double g_threshold = 1e-6;

  // hbt
  double hbt_duration_s = 166.0;
  double hbt_apd_rate_hz = 3.5e4;
  double hbt_mu_override = 0.0;  // 0 = derive from target rate
  double hbt_bin_width_ns = 1.0;
  double hbt_range_ns = 1000.0;
  double hbt_detector_efficiency = 0.6;
  double hbt_dark_rate_hz = 0.0;

  SessionParams session_params() const;
  LinkModel link_model() const;
  HbtSimConfig hbt_config() const;

  /// Stable digest of the dumped text; embedded in artifacts and checked in
  /// the session handshake.
  uint64_t digest() const;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Parse `section.key = value` lines ('#' comments). Unknown keys, duplicate
/// keys and unparsable values are errors naming the line. An empty document
/// yields the full default configuration.
RunConfig load_config_text(const std::string& text);
RunConfig load_config_file(const std::string& path);

/// Apply one "section.key=value" override.
void apply_override(RunConfig& cfg, const std::string& assignment);

/// Canonical text form; load(dump(c)) == c.
std::string dump_config(const RunConfig& cfg);

}  // namespace qkd

#endif
