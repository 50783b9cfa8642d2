#include "mdiqkd/runner.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace mdiqkd {

namespace {

double evaluate_levels(const RunConfig& cfg, double loss_db,
                       const DriftState& state, const IntensityLevels& levels) {
  const CellGainsSet g = analytic_gains(cfg, loss_db, state, levels);
  const DecoyEstimate est = decoy_estimate(g.z, g.x, levels);
  KeyRateInputs in;
  in.q11_z_lower = est.q11_z_lower;
  in.e11_x_upper = est.e11_x_upper;
  in.q_musigma_z = g.z.q[0][0];
  in.e_musigma_z = g.z.e[0][0];
  in.f = cfg.f_ec;
  return key_rate_decoy(in);
}

IntensityLevels choose_levels(const RunConfig& cfg, double loss_db) {
  if (!cfg.optimize || cfg.signal_only) return cfg.levels;
  return optimize_point(cfg, loss_db).levels;
}

}  // namespace

OptimizeResult optimize_point(const RunConfig& cfg, double loss_db) {
  const DriftState ref = reference_state(cfg);
  return optimize_intensities([&](const IntensityLevels& l) {
    return evaluate_levels(cfg, loss_db, ref, l);
  });
}

PointResult finish_analytic(const RunConfig& cfg, double loss_db,
                            const IntensityLevels& levels,
                            const AnalyticPoint& ap) {
  PointResult r;
  r.loss_db = loss_db;
  r.config_id = cfg.config_id;
  r.levels = levels;
  r.q_z = ap.gains.z.q[0][0];
  r.e_z = ap.gains.z.e[0][0];
  r.q_x = ap.gains.x.q[0][0];
  r.e_x = ap.gains.x.e[0][0];
  r.q11_true = ap.truth.q11_z;
  r.e11_true = ap.truth.e11_x;
  r.singles_rate_hz = ap.singles_rate_hz;

  if (cfg.signal_only) {
    r.s_per_gate = key_rate_basic(r.q_z, r.e_x, r.e_z, cfg.f_ec);
  } else {
    const DecoyEstimate est = decoy_estimate(ap.gains.z, ap.gains.x, levels);
    r.q11_lower = est.q11_z_lower;
    r.e11_upper = est.e11_x_upper;
    r.decoy_valid = est.valid;
    r.decoy_message = est.message;
    KeyRateInputs in;
    in.q11_z_lower = est.q11_z_lower;
    in.e11_x_upper = est.e11_x_upper;
    in.q_musigma_z = r.q_z;
    in.e_musigma_z = r.e_z;
    in.f = cfg.f_ec;
    r.s_per_gate = key_rate_decoy(in);
  }

  const double clock = effective_clock(cfg.qubit_rate_hz, cfg.detector);
  const double duty = cfg.feedback.duty_cycle();
  const double dtf = dead_time_factor(
      std::max(ap.singles_rate_hz[0], ap.singles_rate_hz[1]), cfg.detector);
  r.s_per_sec = bits_per_second(std::max(0.0, r.s_per_gate), clock, duty, dtf);
  return r;
}

PointResult run_point(const RunConfig& cfg, double loss_db, int point_index) {
  cfg.validate();
  if (!(loss_db >= 0.0))
    throw std::invalid_argument("loss must be >= 0 dB");

  const IntensityLevels levels = choose_levels(cfg, loss_db);

  if (cfg.mode == RunMode::MonteCarlo)
    return mc_point(cfg, loss_db, point_index, levels);

  if (cfg.drift_enabled) {
    RunConfig frozen = cfg;
    frozen.levels = levels;
    frozen.optimize = false;
    const TimelineResult t =
        run_drift_timeline(frozen, loss_db, true, cfg.drift_duration_s);
    return t.averaged;
  }

  const AnalyticPoint ap =
      analytic_point(cfg, loss_db, reference_state(cfg), levels);
  return finish_analytic(cfg, loss_db, levels, ap);
}

std::vector<PointResult> sweep(const RunConfig& cfg) {
  cfg.validate();
  std::vector<double> losses = cfg.loss_sweep_db;
  std::sort(losses.begin(), losses.end());
  std::vector<PointResult> rows;
  rows.reserve(losses.size());
  for (std::size_t i = 0; i < losses.size(); ++i)
    rows.push_back(run_point(cfg, losses[i], static_cast<int>(i)));
  return rows;
}

std::string csv_header() {
  return "loss_db,config_id,basis,mu,sigma,nu,Q_z,e_z,Q_x,e_x,Q11_lower,"
         "e11_upper,Q11_true,e11_true,S_per_gate,S_per_sec,err_S,distance_km";
}

std::string csv_row(const PointResult& r) {
  char buf[640];
  std::snprintf(buf, sizeof buf,
                "%.10g,%d,Z,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,"
                "%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g",
                r.loss_db, r.config_id, r.levels.mu_a, r.levels.mu_b,
                r.levels.nu, r.q_z, r.e_z, r.q_x, r.e_x, r.q11_lower,
                r.e11_upper, r.q11_true, r.e11_true, r.s_per_gate, r.s_per_sec,
                r.err_s, r.distance_km());
  return buf;
}

void write_csv(const std::vector<PointResult>& rows, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open output file: " + path);
  out << csv_header() << '\n';
  for (const PointResult& r : rows) out << csv_row(r) << '\n';
  if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace mdiqkd
