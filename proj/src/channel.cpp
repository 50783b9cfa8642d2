#include "mdiqkd/channel.hpp"

#include <algorithm>
#include <cmath>

namespace mdiqkd {

namespace {
constexpr double kTwoPi = 6.283185307179586476925286766559;

double reflect_into(double v, double lo, double hi) {
  // Reflect v into [lo, hi]; at most a few bounces for the step sizes used.
  const double span = hi - lo;
  while (v < lo || v > hi) {
    if (v < lo) v = lo + (lo - v);
    if (v > hi) v = hi - (v - hi);
    if (span <= 0.0) return lo;
  }
  return v;
}
}  // namespace

double transmittance(const ChannelConfig& cfg) {
  const double db = cfg.length_km * cfg.loss_per_km + cfg.extra_loss_db;
  return std::pow(10.0, -db / 10.0);
}

double DriftModel::temperature_at(double t) const {
  return temp_mean_c - temp_amplitude_c * std::cos(kTwoPi * t / temp_period_s);
}

DriftState DriftModel::initial_state() const {
  DriftState s;
  s.temperature = temperature_at(0.0);
  s.delta_arrival = 0.0;
  s.pol_overlap = 1.0;
  s.freq_diff = 0.0;
  return s;
}

void DriftModel::step(DriftState& state, double t, double dt, RngStream& rng) const {
  const double det_old = temperature_at(t);
  const double det_new = temperature_at(t + dt);
  // The OU component is whatever rides on top of the deterministic trace.
  double ou = state.temperature - det_old;
  if (ou_sigma_c > 0.0) {
    const double decay = std::exp(-ou_theta * dt);
    const double diffuse = ou_sigma_c * std::sqrt(1.0 - decay * decay);
    ou = ou * decay + diffuse * rng.gauss();
  }
  const double temp_new = det_new + ou;
  const double d_temp = temp_new - state.temperature;
  state.temperature = temp_new;

  state.delta_arrival += arrival_coupling_s_per_c * d_temp;

  if (pol_step_per_c > 0.0) {
    const double step = pol_step_per_c * std::abs(d_temp) * rng.gauss();
    state.pol_overlap = reflect_into(state.pol_overlap + step, 0.0, 1.0);
  }
  if (freq_walk_enabled && freq_sigma_hz_sqrt_s > 0.0) {
    const double step = freq_sigma_hz_sqrt_s * std::sqrt(dt) * rng.gauss();
    state.freq_diff =
        reflect_into(state.freq_diff + step, -freq_bound_hz, freq_bound_hz);
  }
}

DriftModel DriftModel::off() {
  DriftModel m;
  m.temp_mean_c = 0.0;
  m.temp_amplitude_c = 0.0;
  m.ou_sigma_c = 0.0;
  m.arrival_coupling_s_per_c = 0.0;
  m.pol_step_per_c = 0.0;
  m.freq_sigma_hz_sqrt_s = 0.0;
  m.freq_walk_enabled = false;
  return m;
}

DriftModel DriftModel::deployed() {
  DriftModel m;
  // -14 degC at t=0 rising to -4 degC at t=3h (half a 6 h period).
  m.temp_mean_c = -9.0;
  m.temp_amplitude_c = 5.0;
  m.temp_period_s = 21600.0;
  m.ou_sigma_c = 0.1;
  m.ou_theta = 1.0 / 600.0;
  m.arrival_coupling_s_per_c = 0.12e-9;
  m.pol_step_per_c = 1.5;
  m.freq_sigma_hz_sqrt_s = 0.5e6;
  m.freq_bound_hz = 30e6;
  m.freq_walk_enabled = true;
  return m;
}

PulsePair apply_channel(PulsePair pair, const ChannelConfig& cfg,
                        const DriftState& drift, Side side) {
  const double amp_scale = std::sqrt(transmittance(cfg));
  pair.amp_early *= amp_scale;
  pair.amp_late *= amp_scale;

  const double sgn = (side == Side::Alice) ? +1.0 : -1.0;
  pair.arrival_offset = sgn * 0.5 * drift.delta_arrival;
  pair.center_freq_offset = sgn * 0.5 * drift.freq_diff;

  // Split the polarisation mismatch symmetrically about the reference axis:
  // dot(s_A, s_B) = cos(chi) with (1 + cos chi)/2 = pol_overlap.
  const double c = std::clamp(2.0 * drift.pol_overlap - 1.0, -1.0, 1.0);
  const double half = 0.5 * std::acos(c);
  pair.pol_vector = {std::cos(half), sgn * std::sin(half), 0.0};
  return pair;
}

}  // namespace mdiqkd
