#pragma once

#include "mdiqkd/qubit_prep.hpp"
#include "mdiqkd/rng.hpp"

namespace mdiqkd {

enum class Side : std::uint8_t { Alice = 0, Bob = 1 };

struct ChannelConfig {
  double length_km = 0.0;
  double loss_per_km = 0.2;    // dB/km
  double extra_loss_db = 0.0;  // spool/attenuator losses entered as total dB
  bool drift_enabled = false;
};

/// Power transmittance 10^(-dB/10) of one arm.
double transmittance(const ChannelConfig& cfg);

/// Slowly varying link state shared by both arms. delta_arrival, pol_overlap
/// and freq_diff are differential Alice-vs-Bob quantities; the channel stamps
/// them onto the two pulses with opposite signs.
struct DriftState {
  double delta_arrival = 0.0;  // s, Alice arrival minus Bob arrival
  double pol_overlap = 1.0;    // [0,1] pairwise polarisation overlap
  double freq_diff = 0.0;      // Hz, Alice centre frequency minus Bob's
  double temperature = 0.0;    // deg C of the environment trace
};

/// Phenomenological environment model:
///  - temperature follows a sinusoid plus Ornstein-Uhlenbeck noise,
///  - delta_arrival integrates a term proportional to dT/dt,
///  - pol_overlap performs a bounded random walk with step size
///    proportional to |dT/dt| (reflected into [0,1]),
///  - freq_diff performs an independent bounded random walk (two-laser
///    setups only).
struct DriftModel {
  double temp_mean_c = 0.0;
  double temp_amplitude_c = 0.0;
  double temp_period_s = 21600.0;
  double ou_sigma_c = 0.0;        // stationary std-dev of the OU noise
  double ou_theta = 1.0 / 600.0;  // 1/s relaxation rate
  double arrival_coupling_s_per_c = 0.0;  // d(delta_arrival)/dT
  double pol_step_per_c = 0.0;            // pol walk sigma per |dT|
  double freq_sigma_hz_sqrt_s = 0.0;      // freq walk sigma per sqrt(s)
  double freq_bound_hz = 30e6;
  bool freq_walk_enabled = false;

  /// Deterministic part of the temperature trace at time t.
  double temperature_at(double t) const;

  /// Advances state from time t by dt. With a flat trace and zero noise the
  /// state is a fixed point.
  void step(DriftState& state, double t, double dt, RngStream& rng) const;

  /// Initial state consistent with the trace at t = 0.
  DriftState initial_state() const;

  static DriftModel off();
  /// Deployed-fiber environment: 10 degC swing over 3 h starting at -14 degC,
  /// ~1.2 ns arrival walk per 10 degC, polarisation wander reaching the full
  /// [0,1] range over a few hours.
  static DriftModel deployed();
};

/// Attenuates the pair and stamps drift: arrival time, centre frequency and
/// polarisation are offset symmetrically (+/- half the differential per
/// side). Basis, bit and the early:late amplitude ratio are preserved.
PulsePair apply_channel(PulsePair pair, const ChannelConfig& cfg,
                        const DriftState& drift, Side side);

}  // namespace mdiqkd
