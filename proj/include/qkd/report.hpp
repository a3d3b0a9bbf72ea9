#ifndef QKD_REPORT_HPP
#define QKD_REPORT_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "qkd/hbt.hpp"
#include "qkd/security.hpp"
#include "qkd/session.hpp"

namespace qkd {

/// CSV with '#' comment header (run metadata, seed, config digest), a column
/// header row, and one x,G row per sample at 12 significant digits.
std::string rate_curve_csv(const RateCurve& curve, uint64_t seed,
                           uint64_t config_digest);

/// Same layout for a max-tolerable-loss curve (mu, max_loss_db).
std::string max_loss_curve_csv(const std::vector<std::pair<double, double>>& samples,
                               const std::string& metadata, uint64_t seed,
                               uint64_t config_digest);

std::string session_summary_json(const SessionSummary& summary, uint64_t seed,
                                 uint64_t config_digest);

std::string peak_report_text(const std::vector<PeakReport>& peaks);

void write_text_file(const std::string& path, const std::string& content);

}  // namespace qkd

#endif
