// qkdsim: BB84 desk simulator and rate-analysis CLI.
//
// Subcommands: session, sweep, maxloss, hbt, evalg. Configuration comes from
// paper-equivalent defaults, optionally a --config file, then --set overrides.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <tuple>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "qkd/config.hpp"
#include "qkd/report.hpp"

namespace fs = std::filesystem;
using namespace qkd;

namespace {

struct CommonOpts {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string out_dir = ".";
  int64_t seed = -1;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("--config", opts.config_path, "configuration file");
  cmd->add_option("--set", opts.overrides, "override: section.key=value")
      ->take_all();
  cmd->add_option("--out", opts.out_dir, "output directory for artifacts");
  cmd->add_option("--seed", opts.seed, "override run.seed");
}

RunConfig resolve_config(const CommonOpts& opts) {
  RunConfig cfg;
  if (!opts.config_path.empty()) cfg = load_config_file(opts.config_path);
  for (const auto& o : opts.overrides) apply_override(cfg, o);
  if (opts.seed >= 0) cfg.seed = uint64_t(opts.seed);
  return cfg;
}

fs::path prepare_out_dir(const CommonOpts& opts, const RunConfig& cfg) {
  fs::path dir(opts.out_dir);
  fs::create_directories(dir);
  write_text_file((dir / "effective_config.txt").string(), dump_config(cfg));
  return dir;
}

int run_session(const CommonOpts& opts, double duration_ms, const std::string& role,
                const std::string& connect, uint16_t listen_port) {
  RunConfig cfg = resolve_config(opts);
  if (duration_ms > 0.0)
    cfg.slots_per_batch = uint32_t(duration_ms * 1e-3 * cfg.pulse_rate_hz + 0.5);
  const fs::path dir = prepare_out_dir(opts, cfg);
  const uint64_t digest = cfg.digest();

  if (!role.empty()) {
    // Two-process demo: one station per invocation, single batch.
    SessionParams params = cfg.session_params();
    FrameChannel::Transcript transcript;
    EndpointResult res;
    if (role == "alice") {
      const auto colon = connect.find(':');
      if (colon == std::string::npos)
        throw ConfigError("--connect must be HOST:PORT");
      auto stream = TcpStream::connect(connect.substr(0, colon),
                                       uint16_t(std::stoi(connect.substr(colon + 1))));
      res = run_alice_over_stream(*stream, params, &transcript);
    } else if (role == "bob") {
      TcpListener listener(listen_port);
      std::cout << "listening on 127.0.0.1:" << listener.port() << "\n";
      auto stream = listener.accept();
      res = run_bob_over_stream(*stream, params, &transcript);
    } else {
      throw ConfigError("--role must be alice or bob");
    }
    write_text_file((dir / ("session_summary_" + role + ".json")).string(),
                    session_summary_json(res.summary, cfg.seed, digest));
    write_transcript(transcript, (dir / "session.transcript").string());
    std::cout << session_summary_json(res.summary, cfg.seed, digest);
    return res.summary.phase == Phase::Done ? 0 : 2;
  }

  // Loopback: both stations in-process, possibly several batches.
  nlohmann::ordered_json batches = nlohmann::ordered_json::array();
  double sum_sifted = 0, sum_final = 0, sum_qber = 0, sum_e_used = 0;
  uint32_t done = 0;
  for (uint32_t b = 0; b < cfg.batches; ++b) {
    SessionParams params = cfg.session_params();
    params.session_id = 1 + b;
    params.seed = RngStream(cfg.seed, "batch-" + std::to_string(b)).next_u64();
    const SessionOutcome outcome = run_loopback_session(params);
    if (b == 0)
      write_transcript(outcome.transcript, (dir / "session.transcript").string());
    if (cfg.write_slot_log && b == 0)
      write_slot_log_csv(params, params.seed, (dir / "slot_log.csv").string());
    const auto& s = outcome.bob.summary;
    batches.push_back(nlohmann::ordered_json::parse(
        session_summary_json(s, params.seed, digest)));
    if (s.phase == Phase::Done) {
      ++done;
      sum_sifted += double(s.sifted);
      sum_final += double(s.final_bits);
      sum_qber += s.qber_estimate;
      sum_e_used += s.e_used;
    }
  }
  char digest_hex[24];
  std::snprintf(digest_hex, sizeof digest_hex, "0x%016llx",
                static_cast<unsigned long long>(digest));
  nlohmann::ordered_json j;
  j["seed"] = cfg.seed;
  j["config_digest"] = digest_hex;
  j["batches_run"] = cfg.batches;
  j["batches_done"] = done;
  if (done > 0) {
    j["mean_sifted_bits"] = sum_sifted / done;
    j["mean_final_bits"] = sum_final / done;
    j["mean_qber_estimate"] = sum_qber / done;
    j["mean_e_used"] = sum_e_used / done;
    const double dur = double(cfg.slots_per_batch) * cfg.pulse_period_ns * 1e-9;
    j["mean_sifted_rate_hz"] = sum_sifted / done / dur;
    j["mean_final_rate_hz"] = sum_final / done / dur;
  }
  j["batches"] = batches;
  const std::string text = j.dump(2) + "\n";
  write_text_file((dir / "session_summary.json").string(), text);
  std::cout << text;
  return done == cfg.batches ? 0 : 2;
}

int run_sweep(const CommonOpts& opts) {
  RunConfig cfg = resolve_config(opts);
  const fs::path dir = prepare_out_dir(opts, cfg);
  const auto kind = cfg.sweep_x == "mu" ? RateCurve::Abscissa::Mu
                                        : RateCurve::Abscissa::LossDb;
  const RateCurve curve =
      sweep_curve(cfg.link_model(), kind, cfg.sweep_lo, cfg.sweep_hi, cfg.sweep_steps);
  const std::string csv = rate_curve_csv(curve, cfg.seed, cfg.digest());
  write_text_file((dir / "sweep.csv").string(), csv);
  std::cout << "wrote " << (dir / "sweep.csv").string() << " (" << curve.samples.size()
            << " samples)\n";
  return 0;
}

int run_maxloss(const CommonOpts& opts, bool curve) {
  RunConfig cfg = resolve_config(opts);
  const fs::path dir = prepare_out_dir(opts, cfg);
  const LinkModel link = cfg.link_model();
  const double at_mu = max_tolerable_loss(link, cfg.g_threshold);
  std::printf("max tolerable loss at mu=%g: %.4f dB (G threshold %g)\n", link.mu,
              at_mu, cfg.g_threshold);
  if (curve) {
    std::vector<std::pair<double, double>> samples;
    for (int i = 0; i < cfg.sweep_steps; ++i) {
      const double mu =
          cfg.sweep_lo + (cfg.sweep_hi - cfg.sweep_lo) * i / (cfg.sweep_steps - 1);
      LinkModel l = link;
      l.mu = mu;
      double loss = 0.0;
      try {
        loss = max_tolerable_loss(l, cfg.g_threshold);
      } catch (const std::domain_error&) {
        loss = 0.0;  // below threshold already at 0 dB
      }
      samples.emplace_back(mu, loss);
    }
    const std::string csv = max_loss_curve_csv(
        samples, "max loss at G=" + std::to_string(cfg.g_threshold), cfg.seed,
        cfg.digest());
    write_text_file((dir / "maxloss.csv").string(), csv);
    std::cout << "wrote " << (dir / "maxloss.csv").string() << "\n";
  }
  return 0;
}

int run_hbt(const CommonOpts& opts, const std::vector<std::string>& timestamp_files,
            bool dump_timestamps) {
  RunConfig cfg = resolve_config(opts);
  const fs::path dir = prepare_out_dir(opts, cfg);
  TimestampStream d1, d2;
  if (!timestamp_files.empty()) {
    if (timestamp_files.size() != 2)
      throw ConfigError("--timestamps needs exactly two files");
    d1 = read_timestamps(timestamp_files[0], cfg.hbt_duration_s);
    d2 = read_timestamps(timestamp_files[1], cfg.hbt_duration_s);
  } else {
    RngStream rng(cfg.seed, "hbt");
    std::tie(d1, d2) = simulate_hbt(cfg.hbt_config(), rng);
    if (dump_timestamps) {
      write_timestamps(d1, (dir / "timestamps_det1.txt").string());
      write_timestamps(d2, (dir / "timestamps_det2.txt").string());
    }
  }
  const auto hist = build_histogram(d1, d2, cfg.hbt_bin_width_ns, cfg.hbt_range_ns,
                                    cfg.pulse_period_ns);
  char comment[256];
  std::snprintf(comment, sizeof comment,
                "# rates %.6g / %.6g Hz, duration %.6g s, seed %llu\n",
                hist.rate1_hz, hist.rate2_hz, hist.duration_s,
                static_cast<unsigned long long>(cfg.seed));
  write_histogram_csv(hist, (dir / "histogram.csv").string(), comment);
  const auto peaks = normalize_peak_areas(hist);
  write_text_file((dir / "peaks.txt").string(), peak_report_text(peaks));
  for (const auto& p : peaks)
    if (p.k == 0)
      std::printf("central peak normalized area: %.4f\n", p.normalized_area);
  std::cout << "wrote " << (dir / "histogram.csv").string() << " and "
            << (dir / "peaks.txt").string() << "\n";
  return 0;
}

int run_evalg(double p_exp, double s_m, double e, double f, double rate_hz,
              bool allow_f_override) {
  OperatingPoint op{p_exp, s_m, e, f, rate_hz, allow_f_override};
  const GainResult g = secure_gain(op);
  std::printf("G = %.6g bits/pulse%s\n", g.gain, g.insecure ? " (insecure regime)" : "");
  std::printf("N_QKD = %.6g bits/s at %.6g pulses/s\n", g.bits_per_second(rate_hz),
              rate_hz);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"BB84 single-photon QKD simulator and rate analysis"};
  app.require_subcommand(1);

  CommonOpts session_opts, sweep_opts, maxloss_opts, hbt_opts;
  double duration_ms = 0.0;
  std::string role, connect;
  uint16_t listen_port = 0;
  bool maxloss_curve = false;
  double p_exp = 7.4e-3, s_m = 1.9e-6, e = 0.046, f = 1.0,
         rate_hz = kNominalPulseRateHz;
  bool allow_f_override = false;

  auto* session = app.add_subcommand("session", "run a full key exchange");
  add_common(session, session_opts);
  session->add_option("--duration-ms", duration_ms, "batch length in milliseconds");
  session->add_option("--role", role, "two-process mode: alice or bob");
  session->add_option("--connect", connect, "alice: HOST:PORT of the listening bob");
  session->add_option("--listen", listen_port, "bob: TCP port (0 = ephemeral)");

  auto* sweep = app.add_subcommand("sweep", "gain curve over loss or mu");
  add_common(sweep, sweep_opts);
  std::string sweep_x, sweep_source;
  double sweep_mu = -1.0;
  sweep->add_option("--x", sweep_x, "abscissa: loss or mu");
  sweep->add_option("--source", sweep_source, "source kind: spp or wcp");
  sweep->add_option("--mu", sweep_mu, "mean photon number per pulse");

  auto* maxloss = app.add_subcommand("maxloss", "largest loss with G above threshold");
  add_common(maxloss, maxloss_opts);
  maxloss->add_flag("--curve", maxloss_curve, "also sweep mu and write maxloss.csv");

  auto* hbt = app.add_subcommand("hbt", "correlation histogram and peak analysis");
  add_common(hbt, hbt_opts);
  std::vector<std::string> timestamp_files;
  bool dump_timestamps = false;
  hbt->add_option("--timestamps", timestamp_files,
                  "analyze two recorded timestamp files instead of simulating")
      ->expected(2);
  hbt->add_flag("--write-timestamps", dump_timestamps,
                "also write the simulated timestamp streams");

  auto* evalg = app.add_subcommand("evalg", "evaluate the secure gain formula");
  evalg->add_option("--p-exp", p_exp, "click probability per gate");
  evalg->add_option("--s-m", s_m, "multiphoton probability at the sender");
  evalg->add_option("--e", e, "quantum bit error rate");
  evalg->add_option("--f", f, "reconciliation factor f[e]");
  evalg->add_option("--rate", rate_hz, "pulse rate in Hz");
  evalg->add_flag("--allow-f-override", allow_f_override,
                  "allow f > 1 beyond its 5% validity range");

  CLI11_PARSE(app, argc, argv);

  try {
    if (session->parsed())
      return run_session(session_opts, duration_ms, role, connect, listen_port);
    if (sweep->parsed()) {
      if (!sweep_x.empty()) sweep_opts.overrides.push_back("sweep.x=" + sweep_x);
      if (!sweep_source.empty())
        sweep_opts.overrides.push_back("source.kind=" + sweep_source);
      if (sweep_mu >= 0.0)
        sweep_opts.overrides.push_back("source.mu=" + std::to_string(sweep_mu));
      return run_sweep(sweep_opts);
    }
    if (maxloss->parsed()) return run_maxloss(maxloss_opts, maxloss_curve);
    if (hbt->parsed()) return run_hbt(hbt_opts, timestamp_files, dump_timestamps);
    if (evalg->parsed())
      return run_evalg(p_exp, s_m, e, f, rate_hz, allow_f_override);
  } catch (const ConfigError& ex) {
    std::cerr << "config error: " << ex.what() << "\n";
    return 1;
  } catch (const CLI::Error& ex) {
    std::cerr << ex.what() << "\n";
    return 1;
  } catch (const std::invalid_argument& ex) {
    std::cerr << "invalid argument: " << ex.what() << "\n";
    return 1;
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return 2;
  }
  return 1;
}
