#include "mdiqkd/feedback.hpp"

#include <cmath>
#include <stdexcept>

namespace mdiqkd {

double measure_arrival_difference(const DriftState& state, const DetectorModel& det,
                                  const FeedbackConfig& cfg, int n_samples,
                                  RngStream& rng) {
  (void)det;  // detector gating does not limit the arrival estimator here
  if (n_samples <= 0) throw std::invalid_argument("n_samples must be > 0");
  const double sigma_mode =
      cfg.mode_width_fwhm / (2.0 * std::sqrt(2.0 * std::log(2.0)));
  const double per_sample =
      std::sqrt(sigma_mode * sigma_mode + cfg.tdc_jitter_s * cfg.tdc_jitter_s);
  double sum = 0.0;
  for (int i = 0; i < n_samples; ++i)
    sum += rng.gauss(state.delta_arrival, per_sample);
  return sum / n_samples;
}

DriftState temporal_feedback(double estimate, const DriftState& state,
                             const FeedbackConfig& cfg) {
  if (std::abs(estimate) <= cfg.temporal_deadband_s) return state;
  const double corrected = state.delta_arrival - estimate;
  if (std::abs(corrected) >= std::abs(state.delta_arrival)) return state;
  DriftState out = state;
  out.delta_arrival = corrected;
  return out;
}

DriftState polarization_feedback(const DriftState& state, double residual_overlap) {
  if (!(residual_overlap >= 0.0 && residual_overlap <= 1.0))
    throw std::invalid_argument("residual_overlap must be in [0,1]");
  DriftState out = state;
  out.pol_overlap = std::max(state.pol_overlap, residual_overlap);
  return out;
}

DriftState frequency_feedback(const DriftState& state, const FeedbackConfig& cfg,
                              RngStream& rng) {
  if (cfg.single_laser) return state;  // difference is structurally zero
  if (std::abs(state.freq_diff) <= cfg.freq_threshold_hz) return state;
  const double measured = state.freq_diff + rng.gauss(0.0, cfg.freq_meas_sigma_hz);
  const double corrected = state.freq_diff - measured;
  if (std::abs(corrected) >= std::abs(state.freq_diff)) return state;
  DriftState out = state;
  out.freq_diff = corrected;
  return out;
}

}  // namespace mdiqkd
