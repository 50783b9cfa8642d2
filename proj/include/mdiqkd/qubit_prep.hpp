#pragma once

#include <array>
#include <complex>
#include <cstdint>

#include "mdiqkd/rng.hpp"

namespace mdiqkd {

enum class Basis : std::uint8_t { Z = 0, X = 1 };

enum class IntensityClass : std::uint8_t { Signal = 0, Decoy = 1, Vacuum = 2 };

const char* to_string(Basis b);
const char* to_string(IntensityClass c);

struct IntensitySetting {
  IntensityClass cls = IntensityClass::Signal;
  double mean_photon_number = 0.0;  // photons per pulse pair; Vacuum => 0
};

/// Source calibration: time-bin amplitude imbalances per prepared state,
/// residual background amplitude b, and the temporal mode geometry.
/// m_* give the early-bin weight of each state before normalisation:
///   amp_early ~ sqrt(m + b),  amp_late ~ e^{i phi} sqrt(1 - m + b),
/// normalised by (1 + 2b).
struct StateParams {
  double m_z0 = 1.0;      // early-bin weight of the Z bit-0 state
  double m_z1 = 0.0;      // early-bin weight of the Z bit-1 state
  double m_xplus = 0.5;   // early-bin weight of |+>
  double m_xminus = 0.5;  // early-bin weight of |->
  double b = 0.0;         // background leakage, >= 0

  double phi_z = 0.0;       // late-bin phase of Z states
  double phi_xplus = 0.0;   // late-bin phase of |+>
  double phi_xminus = 3.141592653589793;  // late-bin phase of |->

  double mode_width_fwhm = 250e-12;  // s, Gaussian intensity FWHM per bin
  double mode_separation = 2.50e-9;  // s, early-late spacing; > fwhm

  void validate() const;  // throws std::invalid_argument on violation

  /// Calibration for the arbitrary-waveform-generator source.
  static StateParams awg();
  /// Calibration for the square-pulse (FPGA-driven) source.
  static StateParams sg();
  /// Exact textbook states: no leakage, perfectly balanced X states.
  static StateParams ideal();
};

/// One attenuated pulse pair in flight. Amplitudes are in sqrt(photons):
/// |amp_early|^2 + |amp_late|^2 equals the mean photon number.
struct PulsePair {
  std::complex<double> amp_early{0.0, 0.0};
  std::complex<double> amp_late{0.0, 0.0};
  double global_phase = 0.0;  // [0, 2pi), applied multiplicatively to both bins
  Basis basis = Basis::Z;
  int bit = 0;
  IntensitySetting intensity{};
  long long slot_index = 0;
  int photon_count_tag = -1;  // sampled true photon number; oracle use only
  double center_freq_offset = 0.0;  // Hz, stamped by the channel
  std::array<double, 3> pol_vector{1.0, 0.0, 0.0};  // Stokes unit vector
  double arrival_offset = 0.0;  // s, stamped by the channel

  double mean_photons() const { return std::norm(amp_early) + std::norm(amp_late); }
};

/// Builds the pulse pair for (basis, bit) at the given intensity.
/// Throws std::invalid_argument for invalid params, bit outside {0,1},
/// or a Vacuum setting with nonzero mean photon number.
PulsePair prepare_pulse_pair(Basis basis, int bit, const IntensitySetting& intensity,
                             const StateParams& params);

/// Applies a fresh uniform global phase in [0, 2pi). With levels > 0 the
/// phase is drawn from the discrete set {2pi k / levels}. With enabled ==
/// false the phase is forced to 0 and the amplitudes are left untouched.
PulsePair randomize_phase(PulsePair pair, RngStream& rng, bool enabled = true,
                          int levels = 0);

/// Draws the true photon number (Poisson with the pair's mean) into
/// photon_count_tag. Protocol logic never reads the tag; it feeds the
/// oracle counters only. Vacuum pulses tag exactly 0.
PulsePair sample_photon_number(PulsePair pair, RngStream& rng);

}  // namespace mdiqkd
