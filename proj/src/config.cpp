#include "qkd/config.hpp"

#include <cinttypes>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace qkd {

SessionParams RunConfig::session_params() const {
  SessionParams p;
  p.seed = seed;
  p.n_slots = slots_per_batch;
  p.alice.source = source_kind == SourceKind::Wcp
                       ? SourceModel::wcp(mu, lifetime_ns, pulse_period_ns)
                       : SourceModel::spp(mu, suppression_c, lifetime_ns,
                                          pulse_period_ns);
  p.alice.t_eom = t_eom;
  p.alice.dynamic_error_prob = dynamic_error_prob;
  p.channel.loss_db = loss_db;
  p.bob.apd_efficiency = apd_efficiency;
  p.bob.dark_rates_hz = {dark_h_hz, dark_v_hz, dark_l_hz, dark_r_hz};
  p.bob.gate_width_ns = gate_width_ns;
  p.bob.pol_error_hv = pol_error_hv;
  p.bob.pol_error_lr = pol_error_lr;
  p.bob.double_click_policy = double_click_policy == "random"
                                  ? DoubleClickPolicy::RandomAssign
                                  : DoubleClickPolicy::Discard;
  p.qber_mode = qber_mode == "full" ? QberMode::FullCompare : QberMode::Sampled;
  p.sample_fraction = sample_fraction;
  p.qber_abort_threshold = qber_abort_threshold;
  p.cascade_passes = cascade_passes;
  p.f_e = f_e;
  p.pa_mode = pa_mode == "ledger" ? PaMode::LedgerExact : PaMode::FormulaFraction;
  p.sm_convention =
      s_m_convention == "fixed" ? SmConvention::Fixed : SmConvention::Formula;
  p.s_m_fixed = s_m_fixed;
  p.pulse_rate_hz = pulse_rate_hz;
  p.f_e_override = allow_f_e_above_5pct;
  p.config_digest = digest();
  return p;
}

LinkModel RunConfig::link_model() const {
  LinkModel link;
  link.kind = source_kind;
  link.mu = mu;
  link.suppression_c = source_kind == SourceKind::Wcp ? 1.0 : suppression_c;
  link.eta_bob = apd_efficiency;
  link.misalignment = 0.5 * (pol_error_hv + pol_error_lr);
  const double sum_dark = dark_h_hz + dark_v_hz + dark_l_hz + dark_r_hz;
  link.dark_prob_per_gate = sum_dark * gate_width_ns * 1e-9;
  if (source_kind == SourceKind::Wcp) {
    // Comparison convention: the laser pulse fits the gate entirely, but the
    // receiver's measured per-gate dark probability is kept as-is.
    link.eta_g = 1.0;
    link.beta_g = 2.0 / pulse_period_ns;
  } else {
    const GateFractions gf = gate_fractions(gate_width_ns, lifetime_ns, pulse_period_ns);
    link.eta_g = gf.eta_g;
    link.beta_g = gf.beta_g;
  }
  link.loss_db = loss_db;
  link.f_e = f_e;
  link.f_e_override = allow_f_e_above_5pct;
  link.sm_convention =
      s_m_convention == "fixed" ? SmConvention::Fixed : SmConvention::Formula;
  link.s_m_fixed = s_m_fixed;
  link.pulse_rate_hz = pulse_rate_hz;
  return link;
}

HbtSimConfig RunConfig::hbt_config() const {
  HbtSimConfig cfg;
  const double pulse_rate = 1e9 / pulse_period_ns;
  const double bench_mu =
      hbt_mu_override > 0.0
          ? hbt_mu_override
          : hbt_mu_for_apd_rate(hbt_apd_rate_hz, pulse_rate, hbt_detector_efficiency);
  cfg.source = source_kind == SourceKind::Wcp
                   ? SourceModel::wcp(bench_mu, lifetime_ns, pulse_period_ns)
                   : SourceModel::spp(bench_mu, suppression_c, lifetime_ns,
                                      pulse_period_ns);
  cfg.detector_efficiency = hbt_detector_efficiency;
  cfg.duration_s = hbt_duration_s;
  cfg.dark_rate_hz = hbt_dark_rate_hz;
  return cfg;
}

uint64_t RunConfig::digest() const { return stable_hash64(dump_config(*this)); }

namespace {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct Field {
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

[[noreturn]] void fail(const std::string& what) { throw ConfigError(what); }

double parse_double(const std::string& v) {
  char* end = nullptr;
  const double d = std::strtod(v.c_str(), &end);
  if (end == v.c_str() || *end != '\0') fail("expected a number, got '" + v + "'");
  return d;
}

int64_t parse_int(const std::string& v) {
  char* end = nullptr;
  const long long i = std::strtoll(v.c_str(), &end, 0);
  if (end == v.c_str() || *end != '\0') fail("expected an integer, got '" + v + "'");
  return i;
}

uint64_t parse_u64(const std::string& v) {
  char* end = nullptr;
  const unsigned long long i = std::strtoull(v.c_str(), &end, 0);
  if (end == v.c_str() || *end != '\0') fail("expected an unsigned integer, got '" + v + "'");
  return i;
}

bool parse_bool(const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  fail("expected true/false, got '" + v + "'");
}

Field f_double(double RunConfig::*m) {
  return {[m](RunConfig& c, const std::string& v) { c.*m = parse_double(v); },
          [m](const RunConfig& c) { return fmt_double(c.*m); }};
}
Field f_u64(uint64_t RunConfig::*m) {
  return {[m](RunConfig& c, const std::string& v) { c.*m = parse_u64(v); },
          [m](const RunConfig& c) { return std::to_string(c.*m); }};
}
Field f_u32(uint32_t RunConfig::*m) {
  return {[m](RunConfig& c, const std::string& v) {
            const int64_t i = parse_int(v);
            if (i < 0 || i > int64_t(UINT32_MAX)) fail("value out of range: " + v);
            c.*m = uint32_t(i);
          },
          [m](const RunConfig& c) { return std::to_string(c.*m); }};
}
Field f_int(int RunConfig::*m, int lo, int hi) {
  return {[m, lo, hi](RunConfig& c, const std::string& v) {
            const int64_t i = parse_int(v);
            if (i < lo || i > hi) fail("value out of range: " + v);
            c.*m = int(i);
          },
          [m](const RunConfig& c) { return std::to_string(c.*m); }};
}
Field f_bool(bool RunConfig::*m) {
  return {[m](RunConfig& c, const std::string& v) { c.*m = parse_bool(v); },
          [m](const RunConfig& c) { return (c.*m) ? "true" : "false"; }};
}
Field f_choice(std::string RunConfig::*m, std::vector<std::string> allowed) {
  return {[m, allowed](RunConfig& c, const std::string& v) {
            for (const auto& a : allowed)
              if (v == a) {
                c.*m = v;
                return;
              }
            fail("invalid value '" + v + "'");
          },
          [m](const RunConfig& c) { return c.*m; }};
}
Field f_source_kind() {
  return {[](RunConfig& c, const std::string& v) {
            if (v == "spp")
              c.source_kind = SourceKind::Spp;
            else if (v == "wcp")
              c.source_kind = SourceKind::Wcp;
            else
              fail("source.kind must be spp or wcp");
          },
          [](const RunConfig& c) {
            return std::string(c.source_kind == SourceKind::Wcp ? "wcp" : "spp");
          }};
}

// Order here is the canonical dump order.
const std::vector<std::pair<std::string, Field>>& field_table() {
  static const auto* table = new std::vector<std::pair<std::string, Field>>{
      {"run.seed", f_u64(&RunConfig::seed)},
      {"source.kind", f_source_kind()},
      {"source.mu", f_double(&RunConfig::mu)},
      {"source.suppression_c", f_double(&RunConfig::suppression_c)},
      {"source.lifetime_ns", f_double(&RunConfig::lifetime_ns)},
      {"source.pulse_period_ns", f_double(&RunConfig::pulse_period_ns)},
      {"alice.t_eom", f_double(&RunConfig::t_eom)},
      {"alice.dynamic_error_prob", f_double(&RunConfig::dynamic_error_prob)},
      {"channel.loss_db", f_double(&RunConfig::loss_db)},
      {"bob.apd_efficiency", f_double(&RunConfig::apd_efficiency)},
      {"bob.dark_rate_h_hz", f_double(&RunConfig::dark_h_hz)},
      {"bob.dark_rate_v_hz", f_double(&RunConfig::dark_v_hz)},
      {"bob.dark_rate_l_hz", f_double(&RunConfig::dark_l_hz)},
      {"bob.dark_rate_r_hz", f_double(&RunConfig::dark_r_hz)},
      {"bob.gate_width_ns", f_double(&RunConfig::gate_width_ns)},
      {"bob.pol_error_hv", f_double(&RunConfig::pol_error_hv)},
      {"bob.pol_error_lr", f_double(&RunConfig::pol_error_lr)},
      {"bob.double_click_policy",
       f_choice(&RunConfig::double_click_policy, {"discard", "random"})},
      {"session.slots_per_batch", f_u32(&RunConfig::slots_per_batch)},
      {"session.batches", f_u32(&RunConfig::batches)},
      {"session.qber_mode", f_choice(&RunConfig::qber_mode, {"sampled", "full"})},
      {"session.sample_fraction", f_double(&RunConfig::sample_fraction)},
      {"session.qber_abort_threshold", f_double(&RunConfig::qber_abort_threshold)},
      {"session.write_slot_log", f_bool(&RunConfig::write_slot_log)},
      {"distill.cascade_passes", f_int(&RunConfig::cascade_passes, 1, 16)},
      {"distill.pa_mode", f_choice(&RunConfig::pa_mode, {"formula", "ledger"})},
      {"security.f_e", f_double(&RunConfig::f_e)},
      {"security.allow_f_e_above_5pct", f_bool(&RunConfig::allow_f_e_above_5pct)},
      {"security.s_m_convention",
       f_choice(&RunConfig::s_m_convention, {"formula", "fixed"})},
      {"security.s_m_fixed", f_double(&RunConfig::s_m_fixed)},
      {"security.pulse_rate_hz", f_double(&RunConfig::pulse_rate_hz)},
      {"sweep.x", f_choice(&RunConfig::sweep_x, {"loss", "mu"})},
      {"sweep.lo", f_double(&RunConfig::sweep_lo)},
      {"sweep.hi", f_double(&RunConfig::sweep_hi)},
      {"sweep.steps", f_int(&RunConfig::sweep_steps, 2, 1000000)},
      {"maxloss.g_threshold", f_double(&RunConfig::g_threshold)},
      {"hbt.duration_s", f_double(&RunConfig::hbt_duration_s)},
      {"hbt.apd_rate_hz", f_double(&RunConfig::hbt_apd_rate_hz)},
      {"hbt.mu_override", f_double(&RunConfig::hbt_mu_override)},
      {"hbt.bin_width_ns", f_double(&RunConfig::hbt_bin_width_ns)},
      {"hbt.range_ns", f_double(&RunConfig::hbt_range_ns)},
      {"hbt.detector_efficiency", f_double(&RunConfig::hbt_detector_efficiency)},
      {"hbt.dark_rate_hz", f_double(&RunConfig::hbt_dark_rate_hz)},
  };
  return *table;
}

const Field* find_field(const std::string& key) {
  for (const auto& [k, f] : field_table())
    if (k == key) return &f;
  return nullptr;
}

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r");
  size_t e = s.find_last_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, e - b + 1);
}

}  // namespace

RunConfig load_config_text(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  std::map<std::string, int> seen;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      fail("line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const Field* field = find_field(key);
    if (!field) fail("line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    if (seen.count(key))
      fail("line " + std::to_string(lineno) + ": duplicate key '" + key +
           "' (first at line " + std::to_string(seen[key]) + ")");
    seen[key] = lineno;
    try {
      field->set(cfg, value);
    } catch (const ConfigError& e) {
      fail("line " + std::to_string(lineno) + ", key '" + key + "': " + e.what());
    }
  }
  return cfg;
}

RunConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return load_config_text(ss.str());
}

void apply_override(RunConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos)
    fail("override must look like section.key=value: " + assignment);
  const std::string key = trim(assignment.substr(0, eq));
  const std::string value = trim(assignment.substr(eq + 1));
  const Field* field = find_field(key);
  if (!field) fail("unknown key '" + key + "'");
  field->set(cfg, value);
}

std::string dump_config(const RunConfig& cfg) {
  std::ostringstream out;
  for (const auto& [key, field] : field_table())
    out << key << " = " << field.get(cfg) << "\n";
  return out.str();
}

}  // namespace qkd
