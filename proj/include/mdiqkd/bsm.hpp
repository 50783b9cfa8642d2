#pragma once

#include <array>
#include <complex>
#include <cstdint>
#include <optional>
#include <vector>

#include "mdiqkd/qubit_prep.hpp"
#include "mdiqkd/rng.hpp"

namespace mdiqkd {

/// Threshold single-photon detector.
struct DetectorModel {
  double efficiency = 1.0;           // photon detection probability
  double dark_prob_per_ns = 0.0;     // dark-count probability per ns
  double dead_time = 0.0;            // s of blindness after a click
  std::optional<double> gate_rate;   // Hz; nullopt = free running
  double max_count_rate = 1e12;      // Hz sustained click ceiling
  double afterpulse_prob_per_ns = 0.0;
  /// Trap-release tail: for this long after each click the dark rate is
  /// elevated by afterpulse_prob_per_ns; overlapping tails stack.
  double afterpulse_span = 0.0;  // s
  double coincidence_window_ns = 1.0;  // per-bin acceptance window

  /// Dark probability per coincidence window.
  double dark_per_bin() const { return dark_prob_per_ns * coincidence_window_ns; }

  static DetectorModel id201();
  static DetectorModel id210();
  static DetectorModel snspd();
  static DetectorModel ideal();
};

/// Mean photon numbers leaving the beam splitter, per detector and bin.
struct BinMeans {
  double d1_early = 0.0;
  double d1_late = 0.0;
  double d2_early = 0.0;
  double d2_late = 0.0;
  double total() const { return d1_early + d1_late + d2_early + d2_late; }
};

/// Click pattern of one pulse-pair slot, encoded bitwise:
/// bit0 = D1 early, bit1 = D1 late, bit2 = D2 early, bit3 = D2 late.
struct ClickPattern {
  unsigned bits = 0;
  bool d1_early() const { return bits & 1u; }
  bool d1_late() const { return bits & 2u; }
  bool d2_early() const { return bits & 4u; }
  bool d2_late() const { return bits & 8u; }
};

enum class BellOutcome : std::uint8_t { None = 0, PsiMinus = 1, PsiPlus = 2 };

const char* to_string(BellOutcome o);

/// Scalar indistinguishability of the two incoming pulses:
/// lambda = sqrt(pol_overlap) * exp(-dt^2/(4 sigma^2)) * exp(-(pi dnu)^2 sigma^2)
/// with sigma the Gaussian mode width (fwhm / 2 sqrt(2 ln 2)).
double mode_overlap(double delta_t, double delta_freq, double pol_overlap,
                    double mode_width_fwhm);

/// Overlap computed from the stamps two pulses carry.
double mode_overlap(const PulsePair& a, const PulsePair& b, double mode_width_fwhm);

/// 50:50 beam-splitter output means for partially indistinguishable coherent
/// amplitudes. delta_theta is an extra relative phase applied to b on top of
/// whatever phases the amplitudes already carry:
///   n_d1_k = |a_k + lambda e^{i dt} b_k|^2 / 2 + (1 - lambda^2) |b_k|^2 / 2
///   n_d2_k = |a_k - lambda e^{i dt} b_k|^2 / 2 + (1 - lambda^2) |b_k|^2 / 2
BinMeans interfere(const PulsePair& a, const PulsePair& b, double lambda,
                   double delta_theta);

/// Accounting window that enforces a detector's sustained max count rate.
constexpr double kCountQuotaWindowSeconds = 1e-3;

/// Cross-slot detector bookkeeping for Monte Carlo timelines: dead time,
/// afterpulse trap-release tails, and the sustained max-count-rate quota.
struct DetectorTimeline {
  /// Click history depth; covers tails up to kClickRing dead times long.
  static constexpr int kClickRing = 16;

  double dead_until = -1e300;
  double last_click = -1e300;
  std::array<double, kClickRing> clicks{};
  int click_head = 0;
  int click_count = 0;  // saturates at kClickRing
  double window_start = 0.0;
  long long window_count = 0;

  bool live(double t, const DetectorModel& det) const;
  double extra_dark(double t, const DetectorModel& det) const;
  void record_click(double t, const DetectorModel& det);
};

/// Per-slot detector availability, derived from DetectorTimeline by the
/// caller (index 0 = D1, 1 = D2).
struct SlotContext {
  std::array<bool, 2> live{true, true};
  std::array<double, 2> extra_dark{0.0, 0.0};
};

/// Threshold click probability for a bin carrying mean photon number n:
/// p = 1 - (1 - d) exp(-efficiency * n).
double click_probability(double mean_photons, const DetectorModel& det,
                         double extra_dark = 0.0);

/// Samples one click pattern from bin means (Monte Carlo detection). A click
/// blinds its detector for the dead time, which masks the same pair's late
/// bin whenever dead_time > mode_separation.
ClickPattern detect(const BinMeans& means, const DetectorModel& det1,
                    const DetectorModel& det2, double mode_separation,
                    const SlotContext& ctx, RngStream& rng);

/// Exact probabilities of all 16 click patterns for fixed bin means.
std::array<double, 16> detect_probabilities(const BinMeans& means,
                                            const DetectorModel& det1,
                                            const DetectorModel& det2,
                                            double mode_separation,
                                            const SlotContext& ctx);

/// Pattern -> Bell outcome. PsiMinus requires exactly {D1e, D2l} or
/// {D1l, D2e}; PsiPlus exactly {D1e, D1l} or {D2e, D2l}. With veto_extra
/// (default) any further click yields None; without it the required clicks
/// merely need to be present.
BellOutcome classify(const ClickPattern& pattern, bool veto_extra = true);

struct BellProbs {
  double psi_minus = 0.0;
  double psi_plus = 0.0;
  double none = 1.0;
};

struct PhaseAverageOptions {
  int initial_nodes = 64;
  int max_nodes = 4096;
  double abs_tol = 1e-12;
  double rel_tol = 1e-9;
};

/// All 16 click-pattern probabilities for two coherent pulse pairs,
/// numerically averaged over a uniform relative phase (node-doubling
/// trapezoid rule, exact for periodic integrands once resolved). Throws
/// std::runtime_error when the quadrature fails to converge within
/// max_nodes.
std::array<double, 16> pattern_probabilities_averaged(
    const PulsePair& a, const PulsePair& b, double lambda,
    const DetectorModel& det1, const DetectorModel& det2, double mode_separation,
    const SlotContext& ctx = {}, const PhaseAverageOptions& opts = {});

/// Bell-outcome probabilities for two coherent pulse pairs, numerically
/// averaged over a uniform relative phase. Throws std::runtime_error when the
/// phase quadrature fails to converge within max_nodes.
BellProbs bell_event_probabilities(const PulsePair& a, const PulsePair& b,
                                   double lambda, const DetectorModel& det1,
                                   const DetectorModel& det2,
                                   double mode_separation,
                                   const SlotContext& ctx = {},
                                   const PhaseAverageOptions& opts = {});

/// Same, at one fixed relative phase (no averaging); used when phase
/// randomisation is disabled.
BellProbs bell_event_probabilities_fixed_phase(
    const PulsePair& a, const PulsePair& b, double lambda, double delta_theta,
    const DetectorModel& det1, const DetectorModel& det2, double mode_separation,
    const SlotContext& ctx = {});

/// ---- Photon-number-exact interference ----
/// A pulse pair that arrived with a definite photon count occupies the
/// normalised two-bin mode (amp_early, amp_late)/sqrt(mean). These routines
/// compute the exact joint photon distribution over the four detector bins
/// for kA photons in Alice's mode and kB in Bob's, with scalar overlap
/// lambda between the two within-bin wavepackets. Multi-photon bunching
/// (Hong-Ou-Mandel) is exact; the result is independent of any global phase.

struct FockOutcome {
  std::array<int, 4> cells{0, 0, 0, 0};  // D1e, D1l, D2e, D2l photon counts
  double prob = 0.0;
};

/// Joint distribution over detector-bin photon counts. alpha/beta are the
/// normalised bin amplitudes of the arriving A and B modes (ignored for
/// k = 0 on that side). Throws std::invalid_argument for k < 0 or a k > 0
/// with a null mode.
std::vector<FockOutcome> fock_cell_distribution(int k_a, int k_b,
                                                std::complex<double> alpha_early,
                                                std::complex<double> alpha_late,
                                                std::complex<double> beta_early,
                                                std::complex<double> beta_late,
                                                double lambda);

/// Bell-outcome probabilities for definite arriving photon numbers,
/// including detection efficiency, dark counts and intra-pair dead time.
BellProbs fock_bell_probabilities(int k_a, int k_b,
                                  std::complex<double> alpha_early,
                                  std::complex<double> alpha_late,
                                  std::complex<double> beta_early,
                                  std::complex<double> beta_late, double lambda,
                                  const DetectorModel& det1,
                                  const DetectorModel& det2,
                                  double mode_separation,
                                  const SlotContext& ctx = {});

/// Samples the click pattern for known photon counts in the four bins,
/// honoring liveness, extra darks and the intra-pair dead-time mask.
ClickPattern sample_cell_clicks(const std::array<int, 4>& counts,
                                const DetectorModel& det1,
                                const DetectorModel& det2, double mode_separation,
                                const SlotContext& ctx, RngStream& rng);

/// Samples a click pattern for definite arriving photon numbers.
ClickPattern fock_detect(int k_a, int k_b, std::complex<double> alpha_early,
                         std::complex<double> alpha_late,
                         std::complex<double> beta_early,
                         std::complex<double> beta_late, double lambda,
                         const DetectorModel& det1, const DetectorModel& det2,
                         double mode_separation, const SlotContext& ctx,
                         RngStream& rng);

}  // namespace mdiqkd
