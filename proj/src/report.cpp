#include "qkd/report.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace qkd {

namespace {

std::string sig12(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

std::string hex64(uint64_t v) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "0x%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

std::string rate_curve_csv(const RateCurve& curve, uint64_t seed,
                           uint64_t config_digest) {
  std::ostringstream out;
  out << "# " << curve.metadata << "\n";
  out << "# seed = " << seed << "\n";
  out << "# config_digest = " << hex64(config_digest) << "\n";
  out << (curve.kind == RateCurve::Abscissa::LossDb ? "loss_db" : "mu") << ",G\n";
  for (const auto& [x, g] : curve.samples) out << sig12(x) << ',' << sig12(g) << '\n';
  return out.str();
}

std::string max_loss_curve_csv(const std::vector<std::pair<double, double>>& samples,
                               const std::string& metadata, uint64_t seed,
                               uint64_t config_digest) {
  std::ostringstream out;
  out << "# " << metadata << "\n";
  out << "# seed = " << seed << "\n";
  out << "# config_digest = " << hex64(config_digest) << "\n";
  out << "mu,max_loss_db\n";
  for (const auto& [x, l] : samples) out << sig12(x) << ',' << sig12(l) << '\n';
  return out.str();
}

std::string session_summary_json(const SessionSummary& s, uint64_t seed,
                                 uint64_t config_digest) {
  nlohmann::ordered_json j;
  j["role"] = s.role == Role::Alice ? "alice" : "bob";
  j["phase"] = s.phase == Phase::Done ? "done" : "aborted";
  if (!s.abort_reason.empty()) j["abort_reason"] = s.abort_reason;
  j["seed"] = seed;
  j["config_digest"] = hex64(config_digest);
  j["slots"] = s.slots;
  j["accepted"] = s.accepted;
  j["sifted"] = s.sifted;
  j["revealed"] = s.revealed;
  j["sample_errors"] = s.sample_errors;
  j["qber"] = s.qber_estimate;
  j["qber_ci_low"] = s.qber_ci.low;
  j["qber_ci_high"] = s.qber_ci.high;
  j["corrections"] = s.corrections;
  j["e_used"] = s.e_used;
  j["leakage_parity_bits"] = s.ledger.parity_bits_disclosed;
  j["leakage_sampled_bits"] = s.ledger.sampled_bits_disclosed;
  j["multiphoton_fraction"] = s.ledger.multiphoton_fraction;
  j["f_e_used"] = s.ledger.f_e_used;
  j["reconciled_digest_ok"] = s.reconciled_digest_ok;
  j["final_digest_ok"] = s.final_digest_ok;
  j["insecure"] = s.insecure;
  j["p_exp_measured"] = s.p_exp_measured;
  j["tau_secure"] = s.tau_secure;
  j["final_bits"] = s.final_bits;
  j["G_empirical"] = s.g_empirical;
  j["sifted_rate_hz"] = s.sifted_rate_hz;
  j["final_rate_hz"] = s.final_rate_hz;
  return j.dump(2) + "\n";
}

std::string peak_report_text(const std::vector<PeakReport>& peaks) {
  std::ostringstream out;
  out << "peak  center_ns  norm_area  amplitude  lifetime_ns  background  "
         "residual_rms  converged\n";
  for (const auto& p : peaks) {
    out << p.k << "  " << sig12(p.center_ns) << "  " << sig12(p.normalized_area)
        << "  " << sig12(p.amplitude) << "  " << sig12(p.lifetime_ns) << "  "
        << sig12(p.background) << "  " << sig12(p.residual_rms) << "  "
        << (p.fit_converged ? "yes" : "no") << "\n";
  }
  return out.str();
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << content;
}

}  // namespace qkd
