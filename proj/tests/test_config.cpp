#include <doctest.h>

#include <string>

#include "qkd/config.hpp"
#include "qkd/report.hpp"

using namespace qkd;

TEST_CASE("empty text yields the full reference-default configuration") {
  const RunConfig cfg = load_config_text("");
  CHECK(cfg.mu == 0.014);
  CHECK(cfg.suppression_c == 0.07);
  CHECK(cfg.t_eom == 0.65);
  CHECK(cfg.apd_efficiency == 0.6);
  CHECK(cfg.dark_h_hz == 150.0);
  CHECK(cfg.dark_v_hz == 180.0);
  CHECK(cfg.dark_l_hz == 380.0);
  CHECK(cfg.dark_r_hz == 160.0);
  CHECK(cfg.gate_width_ns == 50.0);
  CHECK(cfg.pulse_period_ns == 187.5);
  CHECK(cfg.lifetime_ns == 23.0);
  CHECK(cfg.pol_error_hv == 0.012);
  CHECK(cfg.pol_error_lr == 0.032);
  CHECK(cfg.slots_per_batch == 53000);
  CHECK(cfg.source_kind == SourceKind::Spp);
  CHECK(cfg.f_e == 1.0);
}

TEST_CASE("a single key overrides only that field") {
  const RunConfig cfg = load_config_text("bob.gate_width_ns = 2\n");
  CHECK(cfg.gate_width_ns == 2.0);
  const RunConfig defaults;
  CHECK(cfg.mu == defaults.mu);
  CHECK(cfg.dark_h_hz == defaults.dark_h_hz);
}

TEST_CASE("config errors name the line and key") {
  try {
    load_config_text("source.mu = 0.014\nbob.gate_width_ns = fifty\n");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    const std::string what = e.what();
    CHECK(what.find("line 2") != std::string::npos);
    CHECK(what.find("bob.gate_width_ns") != std::string::npos);
  }
  CHECK_THROWS_AS(load_config_text("bob.gait_width_ns = 2\n"), ConfigError);
  CHECK_THROWS_AS(load_config_text("source.mu = 1\nsource.mu = 2\n"), ConfigError);
  CHECK_THROWS_AS(load_config_text("source.mu\n"), ConfigError);
  CHECK_THROWS_AS(load_config_text("source.kind = laser\n"), ConfigError);
}

TEST_CASE("comments and blank lines are ignored") {
  const RunConfig cfg = load_config_text(
      "# reference values\n\n  source.mu = 0.02  # bumped\n\n");
  CHECK(cfg.mu == 0.02);
}

TEST_CASE("dump/load round-trips to an identical configuration") {
  RunConfig cfg;
  cfg.seed = 99;
  cfg.mu = 0.0137;
  cfg.source_kind = SourceKind::Wcp;
  cfg.double_click_policy = "random";
  cfg.sample_fraction = 0.25;
  cfg.pa_mode = "ledger";
  const std::string text = dump_config(cfg);
  const RunConfig back = load_config_text(text);
  CHECK(dump_config(back) == text);
  CHECK(back.digest() == cfg.digest());
  CHECK(back.mu == cfg.mu);
  CHECK(back.double_click_policy == "random");
}

TEST_CASE("digest tracks content") {
  RunConfig a, b;
  CHECK(a.digest() == b.digest());
  b.mu = 0.015;
  CHECK(a.digest() != b.digest());
}

TEST_CASE("overrides use the same parser as files") {
  RunConfig cfg;
  apply_override(cfg, "channel.loss_db=12.5");
  CHECK(cfg.loss_db == 12.5);
  CHECK_THROWS_AS(apply_override(cfg, "channel.loss_db"), ConfigError);
  CHECK_THROWS_AS(apply_override(cfg, "nope=1"), ConfigError);
}

TEST_CASE("derived session and link structures wire the right fields") {
  RunConfig cfg;
  cfg.double_click_policy = "random";
  cfg.qber_mode = "full";
  const SessionParams p = cfg.session_params();
  CHECK(p.bob.double_click_policy == DoubleClickPolicy::RandomAssign);
  CHECK(p.qber_mode == QberMode::FullCompare);
  CHECK(p.alice.source.mu == 0.014);
  CHECK(p.config_digest == cfg.digest());

  const LinkModel spp_link = cfg.link_model();
  CHECK(spp_link.eta_g == doctest::Approx(0.886269).epsilon(1e-4));
  CHECK(spp_link.dark_prob_per_gate == doctest::Approx(4.35e-5).epsilon(1e-9));
  CHECK(spp_link.misalignment == doctest::Approx(0.022));

  RunConfig wcp = cfg;
  wcp.source_kind = SourceKind::Wcp;
  const LinkModel wcp_link = wcp.link_model();
  CHECK(wcp_link.eta_g == 1.0);
  CHECK(wcp_link.beta_g == doctest::Approx(2.0 / 187.5));
  // the comparison keeps the measured per-gate dark probability
  CHECK(wcp_link.dark_prob_per_gate == spp_link.dark_prob_per_gate);
  CHECK(wcp_link.suppression_c == 1.0);
}

TEST_CASE("identical configs serialize identical sweep artifacts") {
  RunConfig cfg;
  cfg.source_kind = SourceKind::Wcp;
  cfg.mu = 0.1;
  auto render = [&] {
    const auto curve = sweep_curve(cfg.link_model(), RateCurve::Abscissa::LossDb,
                                   cfg.sweep_lo, cfg.sweep_hi, cfg.sweep_steps);
    return rate_curve_csv(curve, cfg.seed, cfg.digest());
  };
  const std::string a = render();
  const std::string b = render();
  CHECK(a == b);
  CHECK(a.find("# seed = 1") != std::string::npos);
  CHECK(a.find("config_digest") != std::string::npos);
}

TEST_CASE("hbt config derives the bench mean from the target rate") {
  RunConfig cfg;
  const HbtSimConfig h = cfg.hbt_config();
  // 2 * 3.5e4 / (pulse_rate * 0.6) with the 187.5 ns repetition period
  CHECK(h.source.mu == doctest::Approx(0.021875).epsilon(1e-9));
  CHECK(h.duration_s == 166.0);
  RunConfig ov = cfg;
  ov.hbt_mu_override = 0.05;
  CHECK(ov.hbt_config().source.mu == 0.05);
}
