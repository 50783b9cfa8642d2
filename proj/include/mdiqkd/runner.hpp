#pragma once

#include <array>
#include <string>
#include <vector>

#include "mdiqkd/channel.hpp"
#include "mdiqkd/feedback.hpp"
#include "mdiqkd/postprocess.hpp"

namespace mdiqkd {

enum class RunMode { Analytic, MonteCarlo };

/// Full description of one experiment: hardware preset, channel sweep,
/// engine selection and determinism seed.
struct RunConfig {
  int config_id = 0;  // 1..5 for the built-in presets, 0 for custom
  std::vector<double> loss_sweep_db{16.0};
  double qubit_rate_hz = 250e6;
  RunMode mode = RunMode::Analytic;
  long long pairs_per_cell = 200000;  // Monte Carlo pairs per (basis, cell)
  std::uint64_t seed = 1;

  /// Monte Carlo runs as independent acquisition segments (own detectors and
  /// RNG streams), merged in index order; results do not depend on how many
  /// threads execute them.
  int mc_timelines = 8;
  /// false: cyclic block schedule over the intensity grid (batch operation);
  /// true: every slot draws bases and intensities independently.
  bool random_schedule = false;

  bool optimize = true;  // search mu/sigma/nu per loss point (analytic model)
  IntensityLevels levels{0.45, 0.45, 0.09};

  StateParams states = StateParams::ideal();
  DetectorModel detector = DetectorModel::ideal();

  DriftModel drift = DriftModel::off();
  bool drift_enabled = false;
  double drift_duration_s = 3600.0;  // simulated span when drift is on
  FeedbackConfig feedback;

  bool use_psi_plus = false;  // announce only the singlet by default
  bool phase_randomized = true;
  bool signal_only = false;  // restrict the schedule to signal x signal
  double f_ec = 1.16;
  std::string output_path = "results.csv";

  void validate() const;
};

/// Built-in hardware configurations 1..5. Throws on unknown ids.
RunConfig preset(int config_id);

/// Link state of a stabilized system: no arrival or frequency offset and the
/// polarization at its post-correction residual.
DriftState reference_state(const RunConfig& cfg);

struct CellGainsSet {
  BasisGains z;
  BasisGains x;
};

/// Exact (1,1)-photon reference values computed by photon-number
/// decomposition, not by decoy bounds.
struct SinglePhotonTruth {
  double q11_z = 0.0;
  double y11_z = 0.0;
  double e11_z = 0.0;
  double q11_x = 0.0;
  double y11_x = 0.0;
  double e11_x = 0.0;
};

/// Closed-form model evaluation at a frozen link state.
struct AnalyticPoint {
  CellGainsSet gains;
  SinglePhotonTruth truth;
  std::array<double, 2> singles_rate_hz{0.0, 0.0};
  SlotContext ctx{};  // afterpulse-adjusted context used for the gains
};

/// Evaluates all 18 intensity-cell gains (plus the single-photon reference)
/// at one loss point and link state. Afterpulsing is handled by a two-pass
/// scheme: singles rates from a clean pass set the elevated dark level of
/// the second pass.
AnalyticPoint analytic_point(const RunConfig& cfg, double loss_db,
                             const DriftState& state, const IntensityLevels& levels);

/// Gains only (afterpulse pass included, single-photon reference skipped);
/// used inside the intensity optimizer.
CellGainsSet analytic_gains(const RunConfig& cfg, double loss_db,
                            const DriftState& state,
                            const IntensityLevels& levels);

/// One output row. The CSV schema is fixed; distance is appended as a
/// derived secondary axis (0.2 dB per km).
struct PointResult {
  double loss_db = 0.0;
  int config_id = 0;
  IntensityLevels levels;
  double q_z = 0.0;
  double e_z = 0.0;
  double q_x = 0.0;
  double e_x = 0.0;
  double q11_lower = 0.0;
  double e11_upper = 0.0;
  double q11_true = 0.0;
  double e11_true = 0.0;
  double s_per_gate = 0.0;  // raw, may be negative
  double s_per_sec = 0.0;   // clamped at zero, derated by duty and dead time
  double err_s = 0.0;       // 1 sigma counting-statistics propagation
  bool decoy_valid = true;
  std::string decoy_message;

  // Monte Carlo diagnostics (not part of the CSV schema).
  std::array<long long, 2> singles_clicks{0, 0};
  double simulated_seconds = 0.0;
  std::array<double, 2> singles_rate_hz{0.0, 0.0};
  TallyCounters counters;

  double distance_km() const { return loss_db / 0.2; }
};

/// Evaluates one loss point with the configured engine. point_index feeds
/// stream derivation so every point is independently deterministic.
PointResult run_point(const RunConfig& cfg, double loss_db, int point_index = 0);

/// Slot-by-slot engine for one loss point at fixed intensity levels.
PointResult mc_point(const RunConfig& cfg, double loss_db, int point_index,
                     const IntensityLevels& levels);

/// Turns raw analytic gains into a finished output row: decoy bounds, key
/// rates, throughput derating.
PointResult finish_analytic(const RunConfig& cfg, double loss_db,
                            const IntensityLevels& levels,
                            const AnalyticPoint& ap);

/// All loss points, ascending, one PointResult each.
std::vector<PointResult> sweep(const RunConfig& cfg);

/// Best (mu_a, mu_b, nu) for one loss point under the analytic model at the
/// stabilized link state.
OptimizeResult optimize_point(const RunConfig& cfg, double loss_db);

std::string csv_header();
std::string csv_row(const PointResult& r);
void write_csv(const std::vector<PointResult>& rows, const std::string& path);

/// One sampled instant of a drifting-link simulation.
struct TimelineSample {
  double t = 0.0;
  double temperature_c = 0.0;
  double delta_arrival = 0.0;
  double pol_overlap = 0.0;
  double freq_diff = 0.0;
  double lambda = 0.0;
  double s_per_gate = 0.0;
};

struct TimelineResult {
  std::vector<TimelineSample> samples;
  PointResult averaged;       // key rates from time-averaged gains
  double s_per_gate_final = 0.0;  // from the last sampled instant
};

/// Simulates the drifting link for duration_s, applying the enabled
/// feedback loops on their cadences, evaluating the analytic model at every
/// sample instant and from the time-averaged gains.
TimelineResult run_drift_timeline(const RunConfig& cfg, double loss_db,
                                  bool feedback_on, double duration_s,
                                  double sample_dt_s = 10.0);

/// Loads a RunConfig from a flat INI-style file (sections in brackets,
/// key = value lines, '#' comments). Unknown keys are errors.
RunConfig parse_config_file(const std::string& path);

}  // namespace mdiqkd
