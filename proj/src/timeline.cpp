#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "mdiqkd/runner.hpp"

namespace mdiqkd {
namespace {

// Environment streams live in their own index space so a sweep sees the same
// weather at every loss point and Monte Carlo streams are never reused.
constexpr int kTimelineStreamSpace = 1 << 20;

bool crossed(double t0, double t1, double interval) {
  if (interval <= 0.0) return false;
  return std::floor(t1 / interval) > std::floor(t0 / interval);
}

struct GainAccumulator {
  CellGainsSet sum_q{};       // per-cell gain sums
  CellGainsSet sum_eq{};      // per-cell error-gain sums (e * q)
  SinglePhotonTruth truth{};  // q11/y11 sums, e11 accumulated as e * y
  std::array<double, 2> singles{0.0, 0.0};
  long long n = 0;

  void add(const AnalyticPoint& ap) {
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        sum_q.z.q[i][j] += ap.gains.z.q[i][j];
        sum_eq.z.q[i][j] += ap.gains.z.e[i][j] * ap.gains.z.q[i][j];
        sum_q.x.q[i][j] += ap.gains.x.q[i][j];
        sum_eq.x.q[i][j] += ap.gains.x.e[i][j] * ap.gains.x.q[i][j];
      }
    truth.q11_z += ap.truth.q11_z;
    truth.y11_z += ap.truth.y11_z;
    truth.e11_z += ap.truth.e11_z * ap.truth.y11_z;
    truth.q11_x += ap.truth.q11_x;
    truth.y11_x += ap.truth.y11_x;
    truth.e11_x += ap.truth.e11_x * ap.truth.y11_x;
    singles[0] += ap.singles_rate_hz[0];
    singles[1] += ap.singles_rate_hz[1];
    ++n;
  }

  AnalyticPoint mean() const {
    AnalyticPoint avg;
    if (n == 0) return avg;
    const double inv = 1.0 / static_cast<double>(n);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        avg.gains.z.q[i][j] = sum_q.z.q[i][j] * inv;
        avg.gains.z.e[i][j] =
            sum_q.z.q[i][j] > 0.0 ? sum_eq.z.q[i][j] / sum_q.z.q[i][j] : 0.0;
        avg.gains.x.q[i][j] = sum_q.x.q[i][j] * inv;
        avg.gains.x.e[i][j] =
            sum_q.x.q[i][j] > 0.0 ? sum_eq.x.q[i][j] / sum_q.x.q[i][j] : 0.0;
      }
    avg.truth.q11_z = truth.q11_z * inv;
    avg.truth.y11_z = truth.y11_z * inv;
    avg.truth.e11_z = truth.y11_z > 0.0 ? truth.e11_z / truth.y11_z : 0.0;
    avg.truth.q11_x = truth.q11_x * inv;
    avg.truth.y11_x = truth.y11_x * inv;
    avg.truth.e11_x = truth.y11_x > 0.0 ? truth.e11_x / truth.y11_x : 0.0;
    avg.singles_rate_hz = {singles[0] * inv, singles[1] * inv};
    return avg;
  }
};

}  // namespace

TimelineResult run_drift_timeline(const RunConfig& cfg, double loss_db,
                                  bool feedback_on, double duration_s,
                                  double sample_dt_s) {
  if (!(duration_s >= 0.0))
    throw std::invalid_argument("duration must be >= 0");
  if (!(sample_dt_s > 0.0))
    throw std::invalid_argument("sample interval must be > 0");

  // With the loops off there are no measurement pauses either, so the duty
  // cycle reverts to 1.
  RunConfig eff = cfg;
  if (!feedback_on) {
    eff.feedback.temporal_enabled = false;
    eff.feedback.polarization_enabled = false;
    eff.feedback.frequency_enabled = false;
  }
  const FeedbackConfig& fb = eff.feedback;

  RngStream meas_rng(derive_stream_seed(cfg.seed, kTimelineStreamSpace, 0));
  RngStream drift_rng(derive_stream_seed(cfg.seed, kTimelineStreamSpace, 1));

  DriftState state = cfg.drift.initial_state();
  TimelineResult result;
  GainAccumulator acc;

  double t_prev = 0.0;
  double t = 0.0;
  double next_sample = 0.0;
  while (true) {
    if (t > 0.0) {
      if (fb.temporal_enabled && crossed(t_prev, t, fb.temporal_interval_s)) {
        const double est = measure_arrival_difference(
            state, eff.detector, fb, fb.temporal_samples, meas_rng);
        state = temporal_feedback(est, state, fb);
      }
      if (fb.polarization_enabled && crossed(t_prev, t, fb.pol_interval_s))
        state = polarization_feedback(state, fb.pol_residual_overlap);
      if (fb.frequency_enabled && !fb.single_laser && crossed(t_prev, t, 1.0))
        state = frequency_feedback(state, fb, meas_rng);
    }

    const bool last = t >= duration_s;
    if (t >= next_sample - 1e-9 || last) {
      const AnalyticPoint ap = analytic_point(eff, loss_db, state, eff.levels);
      const PointResult pr = finish_analytic(eff, loss_db, eff.levels, ap);
      TimelineSample sample;
      sample.t = t;
      sample.temperature_c = state.temperature;
      sample.delta_arrival = state.delta_arrival;
      sample.pol_overlap = state.pol_overlap;
      sample.freq_diff = state.freq_diff;
      sample.lambda = mode_overlap(state.delta_arrival, state.freq_diff,
                                   state.pol_overlap, eff.states.mode_width_fwhm);
      sample.s_per_gate = pr.s_per_gate;
      result.samples.push_back(sample);
      acc.add(ap);
      while (next_sample <= t + 1e-9) next_sample += sample_dt_s;
    }

    if (last) break;
    const double dt = std::min(1.0, duration_s - t);
    cfg.drift.step(state, t, dt, drift_rng);
    t_prev = t;
    t += dt;
  }

  result.averaged = finish_analytic(eff, loss_db, eff.levels, acc.mean());
  result.s_per_gate_final = result.samples.back().s_per_gate;
  return result;
}

}  // namespace mdiqkd
