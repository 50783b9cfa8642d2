#include "mdiqkd/runner.hpp"

#include <stdexcept>

namespace mdiqkd {

void RunConfig::validate() const {
  if (loss_sweep_db.empty())
    throw std::invalid_argument("loss sweep must contain at least one point");
  for (double l : loss_sweep_db)
    if (!(l >= 0.0)) throw std::invalid_argument("loss points must be >= 0 dB");
  if (pairs_per_cell <= 0)
    throw std::invalid_argument("pairs_per_cell must be > 0");
  if (mc_timelines <= 0)
    throw std::invalid_argument("mc_timelines must be > 0");
  if (!(qubit_rate_hz > 0.0))
    throw std::invalid_argument("qubit_rate_hz must be > 0");
  if (!(f_ec >= 1.0))
    throw std::invalid_argument("error-correction efficiency must be >= 1");
  states.validate();
  if (signal_only) {
    if (!(levels.mu_a > 0.0) || !(levels.mu_b > 0.0))
      throw std::invalid_argument("signal intensities must be > 0");
  } else if (!optimize) {
    levels.validate();
  }
}

RunConfig preset(int config_id) {
  RunConfig cfg;
  cfg.config_id = config_id;
  cfg.states = StateParams::awg();
  cfg.qubit_rate_hz = 250e6;
  cfg.mode = RunMode::Analytic;
  cfg.optimize = true;
  cfg.use_psi_plus = false;  // only the singlet is announced
  cfg.phase_randomized = true;

  switch (config_id) {
    case 1:  // two lasers, deployed link with environmental drift
      cfg.detector = DetectorModel::id201();
      cfg.loss_sweep_db = {9.0};
      cfg.drift = DriftModel::deployed();
      cfg.drift_enabled = true;
      cfg.feedback.single_laser = false;
      break;
    case 2:  // two lasers, spooled fiber in the lab
      cfg.detector = DetectorModel::id201();
      cfg.loss_sweep_db = {9.1, 13.7, 18.2};
      cfg.feedback.single_laser = false;
      break;
    case 3:  // one laser, spooled fiber, low-noise gated detectors
      cfg.detector = DetectorModel::id210();
      cfg.loss_sweep_db = {13.7, 20.0};
      cfg.feedback.single_laser = true;
      break;
    case 4:  // one laser, attenuator channel, nanowire detectors
      cfg.detector = DetectorModel::snspd();
      cfg.loss_sweep_db = {16.0, 40.0, 60.0};
      cfg.feedback.single_laser = true;
      break;
    case 5:  // square-pulse source variant of configuration 4
      cfg.states = StateParams::sg();
      cfg.detector = DetectorModel::snspd();
      cfg.loss_sweep_db = {16.0};
      cfg.qubit_rate_hz = 20e6;
      cfg.feedback.single_laser = true;
      break;
    default:
      throw std::invalid_argument("unknown preset id (valid: 1..5)");
  }
  cfg.feedback.mode_width_fwhm = cfg.states.mode_width_fwhm;
  return cfg;
}

DriftState reference_state(const RunConfig& cfg) {
  DriftState s;
  s.delta_arrival = 0.0;
  s.pol_overlap = cfg.feedback.pol_residual_overlap;
  s.freq_diff = 0.0;
  s.temperature = cfg.drift.temp_mean_c;
  return s;
}

}  // namespace mdiqkd
