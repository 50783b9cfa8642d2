#include <algorithm>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mdiqkd/runner.hpp"

namespace {

// --config accepts a config file path or the literal "preset N".
mdiqkd::RunConfig load_config(const std::string& config, int preset_id) {
  if (preset_id > 0) return mdiqkd::preset(preset_id);
  if (config.empty())
    throw std::runtime_error("pass --config <file> or --preset <1..5>");
  if (config.rfind("preset", 0) == 0) {
    const std::string rest = config.substr(6);
    return mdiqkd::preset(std::stoi(rest));
  }
  return mdiqkd::parse_config_file(config);
}

void print_rows(const std::vector<mdiqkd::PointResult>& rows) {
  for (const mdiqkd::PointResult& r : rows) {
    std::printf(
        "loss %6.2f dB (%6.1f km)  mu %.3f  sigma %.3f  nu %.3f  "
        "S_per_gate %.4g  S_per_sec %.4g%s\n",
        r.loss_db, r.distance_km(), r.levels.mu_a, r.levels.mu_b, r.levels.nu,
        std::max(0.0, r.s_per_gate), r.s_per_sec,
        r.s_per_gate > 0.0 ? "" : "  [no positive key]");
    if (!r.decoy_valid)
      std::printf("  note: %s\n", r.decoy_message.c_str());
  }
}

int run_simulate(const std::string& config, int preset_id,
                 const std::vector<double>& sweep_db, const std::string& mode,
                 long long pairs, std::uint64_t seed, bool seed_given,
                 double qubit_rate, const std::string& out) {
  mdiqkd::RunConfig cfg = load_config(config, preset_id);
  if (!sweep_db.empty()) cfg.loss_sweep_db = sweep_db;
  if (mode == "analytic")
    cfg.mode = mdiqkd::RunMode::Analytic;
  else if (mode == "mc")
    cfg.mode = mdiqkd::RunMode::MonteCarlo;
  else if (!mode.empty())
    throw std::runtime_error("mode must be 'analytic' or 'mc'");
  if (pairs > 0) cfg.pairs_per_cell = pairs;
  if (seed_given) cfg.seed = seed;
  if (qubit_rate > 0.0) cfg.qubit_rate_hz = qubit_rate;
  if (!out.empty()) cfg.output_path = out;

  const std::vector<mdiqkd::PointResult> rows = mdiqkd::sweep(cfg);
  print_rows(rows);
  mdiqkd::write_csv(rows, cfg.output_path);
  std::printf("wrote %s\n", cfg.output_path.c_str());
  return 0;
}

int run_optimize(int preset_id, double loss_db, std::uint64_t seed,
                 bool seed_given) {
  mdiqkd::RunConfig cfg = mdiqkd::preset(preset_id);
  if (seed_given) cfg.seed = seed;
  const mdiqkd::OptimizeResult res = mdiqkd::optimize_point(cfg, loss_db);
  std::printf("loss %.2f dB: mu_a %.4f  mu_b %.4f  nu %.4f  S_per_gate %.6g%s\n",
              loss_db, res.levels.mu_a, res.levels.mu_b, res.levels.nu,
              std::max(0.0, res.s),
              res.positive ? "" : "  [no positive key at any setting]");
  return 0;
}

int run_drift_demo(const std::string& drift_preset, int hardware, double loss_db,
                   double duration, bool loops_off, std::uint64_t seed,
                   bool seed_given, const std::string& out) {
  mdiqkd::RunConfig cfg = mdiqkd::preset(hardware);
  if (drift_preset == "deployed") {
    cfg.drift = mdiqkd::DriftModel::deployed();
    cfg.drift_enabled = true;
  } else if (drift_preset == "off") {
    cfg.drift = mdiqkd::DriftModel::off();
    cfg.drift_enabled = false;
  } else {
    throw std::runtime_error("unknown drift preset '" + drift_preset + "'");
  }
  if (seed_given) cfg.seed = seed;
  const double loss = loss_db >= 0.0 ? loss_db : cfg.loss_sweep_db.front();
  if (cfg.optimize) {
    cfg.levels = mdiqkd::optimize_point(cfg, loss).levels;
    cfg.optimize = false;
  }

  const mdiqkd::TimelineResult res =
      mdiqkd::run_drift_timeline(cfg, loss, !loops_off, duration);

  std::ofstream file(out);
  if (!file) throw std::runtime_error("cannot open output file: " + out);
  file << "t_s,temperature_c,delta_arrival_s,pol_overlap,freq_diff_hz,lambda,"
          "S_per_gate\n";
  char buf[256];
  for (const mdiqkd::TimelineSample& s : res.samples) {
    std::snprintf(buf, sizeof buf, "%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g\n",
                  s.t, s.temperature_c, s.delta_arrival, s.pol_overlap,
                  s.freq_diff, s.lambda, s.s_per_gate);
    file << buf;
  }
  if (!file) throw std::runtime_error("write failed: " + out);

  std::printf("simulated %.0f s at %.2f dB, feedback loops %s\n", duration, loss,
              loops_off ? "off" : "on");
  std::printf("time-averaged S_per_gate %.4g, final sample %.4g\n",
              std::max(0.0, res.averaged.s_per_gate),
              std::max(0.0, res.s_per_gate_final));
  std::printf("wrote %s\n", out.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Decoy-state MDI-QKD key-rate simulator"};
  app.require_subcommand(1);

  std::string config;
  int preset_id = 0;
  std::vector<double> sweep_db;
  std::string mode;
  long long pairs = 0;
  std::uint64_t seed = 0;
  double qubit_rate = 0.0;
  std::string out;

  CLI::App* sim = app.add_subcommand("simulate", "Sweep loss points, write CSV");
  sim->add_option("--config", config, "config file, or the literal 'preset N'");
  sim->add_option("--preset", preset_id, "built-in hardware configuration 1..5");
  sim->add_option("--sweep", sweep_db, "loss points in dB")->delimiter(',');
  sim->add_option("--mode", mode, "analytic or mc");
  sim->add_option("--pairs", pairs, "Monte Carlo pairs per intensity cell");
  CLI::Option* sim_seed = sim->add_option("--seed", seed, "RNG seed");
  sim->add_option("--qubit-rate", qubit_rate, "emission clock in Hz");
  sim->add_option("--out", out, "output CSV path");

  int opt_preset = 0;
  double opt_loss = 16.0;
  CLI::App* opt = app.add_subcommand("optimize", "Search intensities at one loss");
  opt->add_option("--preset", opt_preset, "built-in hardware configuration 1..5")
      ->required();
  opt->add_option("--loss", opt_loss, "total channel loss in dB")->required();
  CLI::Option* opt_seed = opt->add_option("--seed", seed, "RNG seed");

  std::string drift_preset = "deployed";
  int hardware = 1;
  double demo_loss = -1.0;
  double duration = 3600.0;
  bool loops_off = false;
  std::string demo_out = "drift_timeline.csv";
  CLI::App* demo =
      app.add_subcommand("drift-demo", "Emit a drifting-link time series CSV");
  demo->add_option("--preset", drift_preset, "drift preset: deployed or off");
  demo->add_option("--hardware", hardware, "built-in hardware configuration 1..5");
  demo->add_option("--loss", demo_loss, "total channel loss in dB");
  demo->add_option("--duration", duration, "simulated span in seconds");
  demo->add_flag("--loops-off", loops_off, "disable all feedback loops");
  CLI::Option* demo_seed = demo->add_option("--seed", seed, "RNG seed");
  demo->add_option("--out", demo_out, "output CSV path");

  CLI11_PARSE(app, argc, argv);

  try {
    if (sim->parsed())
      return run_simulate(config, preset_id, sweep_db, mode, pairs, seed,
                          sim_seed->count() > 0, qubit_rate, out);
    if (opt->parsed())
      return run_optimize(opt_preset, opt_loss, seed, opt_seed->count() > 0);
    if (demo->parsed())
      return run_drift_demo(drift_preset, hardware, demo_loss, duration,
                            loops_off, seed, demo_seed->count() > 0, demo_out);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
