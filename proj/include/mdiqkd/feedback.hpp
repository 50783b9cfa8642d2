#pragma once

#include "mdiqkd/bsm.hpp"
#include "mdiqkd/channel.hpp"
#include "mdiqkd/rng.hpp"

namespace mdiqkd {

/// Settings for the three stabilization loops that keep the two senders'
/// photons indistinguishable at the measurement station.
struct FeedbackConfig {
  bool temporal_enabled = true;
  bool polarization_enabled = true;
  bool frequency_enabled = true;

  /// One shared laser distributes light to both senders; the frequency
  /// difference is structurally zero and the frequency loop never fires.
  bool single_laser = false;

  double temporal_interval_s = 120.0;
  double temporal_deadband_s = 30e-12;
  int temporal_samples = 256;
  double tdc_jitter_s = 50e-12;
  double mode_width_fwhm = 250e-12;

  double pol_interval_s = 10.0;
  double pol_pause_s = 0.25;  // qubit transmission halts during measurement
  double pol_residual_overlap = 0.99;

  double freq_threshold_hz = 10e6;
  double freq_meas_sigma_hz = 1e6;

  /// Fraction of emission slots kept after the polarization measurement
  /// pauses are subtracted.
  double duty_cycle() const {
    if (!polarization_enabled || pol_interval_s <= 0.0) return 1.0;
    return 1.0 - pol_pause_s / pol_interval_s;
  }
};

/// Shot-noise-limited estimate of the arrival-time difference between the
/// two senders' pulses. The per-sample jitter combines the optical mode
/// width with the time-tagger resolution; the standard error shrinks as
/// 1/sqrt(n_samples).
double measure_arrival_difference(const DriftState& state, const DetectorModel& det,
                                  const FeedbackConfig& cfg, int n_samples,
                                  RngStream& rng);

/// Applies a delay correction of -estimate to the arrival difference.
/// Estimates inside the dead band are ignored, and a correction that would
/// enlarge the residual is rejected, so the loop never makes things worse.
DriftState temporal_feedback(double estimate, const DriftState& state,
                             const FeedbackConfig& cfg);

/// Resets the polarization overlap to the given post-correction residual
/// (never below the current value).
DriftState polarization_feedback(const DriftState& state, double residual_overlap);

/// If the measured frequency difference exceeds the trigger threshold, shifts
/// one sender's frequency by the measured amount, leaving a residual set by
/// the measurement error.
DriftState frequency_feedback(const DriftState& state, const FeedbackConfig& cfg,
                              RngStream& rng);

}  // namespace mdiqkd
