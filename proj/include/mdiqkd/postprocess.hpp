#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>

#include "mdiqkd/bsm.hpp"
#include "mdiqkd/channel.hpp"
#include "mdiqkd/qubit_prep.hpp"

namespace mdiqkd {

/// Signal/decoy/vacuum mean photon numbers for the two senders. The decoy
/// level is shared; vacuum is exactly zero.
struct IntensityLevels {
  double mu_a = 0.5;
  double mu_b = 0.5;
  double nu = 0.1;

  double value(Side side, IntensityClass cls) const;
  IntensitySetting setting(Side side, IntensityClass cls) const;
  void validate() const;  // requires 0 < nu < min(mu_a, mu_b)
};

/// One announced measurement event together with both preparations.
struct DetectionEvent {
  Basis basis_a = Basis::Z;
  Basis basis_b = Basis::Z;
  int bit_a = 0;
  int bit_b = 0;
  IntensityClass intensity_a = IntensityClass::Signal;
  IntensityClass intensity_b = IntensityClass::Signal;
  BellOutcome outcome = BellOutcome::None;
  int tag_a = -1;  // emitted photon number, -1 when untracked
  int tag_b = -1;
};

/// A kept event after basis reconciliation and the announced-outcome bit flip.
struct SiftedRecord {
  Basis basis = Basis::Z;
  int alice_bit = 0;
  int bob_bit_after_flip = 0;
  IntensityClass intensity_a = IntensityClass::Signal;
  IntensityClass intensity_b = IntensityClass::Signal;
  BellOutcome outcome = BellOutcome::PsiMinus;
  int tag_a = -1;
  int tag_b = -1;

  bool is_error() const { return alice_bit != bob_bit_after_flip; }
};

/// Applies sifting to one event: discards basis mismatches and inconclusive
/// outcomes, then flips Bob's bit. The singlet projection anti-correlates
/// both bases, so Bob flips unconditionally; the triplet projection
/// anti-correlates only the time bins, so Bob flips in Z alone.
std::optional<SiftedRecord> sift(const DetectionEvent& event,
                                 bool use_psi_plus = true);

/// Counting cell for one (basis, intensity_a, intensity_b) combination,
/// with a parallel set restricted to events tagged as (1,1) photon emissions.
struct CellTally {
  std::int64_t sent = 0;
  std::int64_t projections = 0;
  std::int64_t errors = 0;
  std::int64_t sent_11 = 0;
  std::int64_t projections_11 = 0;
  std::int64_t errors_11 = 0;
};

struct CellRates {
  double q = 0.0;
  double e = 0.0;
  bool e_defined = false;
};

/// Tag-(1,1) reference quantities measured directly from tagged events.
struct Rates11 {
  double q11 = 0.0;  // (1,1) projections per sent pair in the cell
  double y11 = 0.0;  // (1,1) projections per (1,1) pair
  double e11 = 0.0;
  bool defined = false;
};

/// Mergeable counters over the 2 x 3 x 3 (basis, intensity, intensity) grid.
struct TallyCounters {
  std::array<std::array<std::array<CellTally, 3>, 3>, 2> cells{};

  static int index(IntensityClass cls) { return static_cast<int>(cls); }
  CellTally& at(Basis basis, IntensityClass a, IntensityClass b);
  const CellTally& at(Basis basis, IntensityClass a, IntensityClass b) const;

  /// Counts an emitted pair. Pairs with mismatched bases belong to no cell.
  void record_sent(Basis basis_a, Basis basis_b, IntensityClass a,
                   IntensityClass b, int tag_a = -1, int tag_b = -1);
  void record_projection(const SiftedRecord& rec);
  void merge(const TallyCounters& other);

  CellRates rates(Basis basis, IntensityClass a, IntensityClass b) const;
  Rates11 rates_11(Basis basis, IntensityClass a, IntensityClass b) const;
};

/// Per-basis gain and error-rate table indexed [intensity_a][intensity_b]
/// in the order signal, decoy, vacuum. Cells with no projections carry e = 0,
/// which keeps the error gain e*q exact (it is then exactly zero).
struct BasisGains {
  std::array<std::array<double, 3>, 3> q{};
  std::array<std::array<double, 3>, 3> e{};
};

BasisGains gains_from(const TallyCounters& counters, Basis basis);

double binary_entropy(double x);

/// Raw key rate per gate from overall gain and error rates; negative values
/// are preserved (clamping happens at the reporting layer).
double key_rate_basic(double q_z, double e_x, double e_z, double f);

struct KeyRateInputs {
  double q11_z_lower = 0.0;
  double e11_x_upper = 0.0;
  double q_musigma_z = 0.0;
  double e_musigma_z = 0.0;
  double f = 1.16;
};

double key_rate_decoy(const KeyRateInputs& in);

/// 1-sigma uncertainty of key_rate_decoy under independent Gaussian errors
/// on its four rate inputs (linear propagation).
double key_rate_decoy_sigma(const KeyRateInputs& in, double sigma_q11,
                            double sigma_e11, double sigma_qz, double sigma_ez);

/// Three-intensity bounds on the single-photon contribution.
struct DecoyEstimate {
  double y11_z_lower = 0.0;
  double y11_x_lower = 0.0;
  double q11_z_lower = 0.0;
  double e11_x_upper = 0.0;
  bool valid = true;     // false when a bound degenerated (see message)
  std::string message;
};

/// Lower-bounds the single-photon gain and upper-bounds the single-photon
/// X error rate from the nine-cell gain tables of each basis.
///
/// Writing the measured gain as Q(x, y) = sum_{n,m} P_n(x) P_m(y) Y_nm with
/// Poissonian P_n, the combination
///   G(x, y) = e^{x+y} [Q(x,y) - e^{-x} Q(0,y) - e^{-y} Q(x,0) + e^{-x-y} Q(0,0)]
///           = sum_{n,m >= 1} x^n y^m / (n! m!) Y_nm
/// removes every term with a vacuum component. Dropping the (arm-wise
/// smallest) tail with ratio r = nu/mu < 1 gives
///   Y_11 >= [G(nu_a, nu_b) - r_a r_b max(r_a, r_b) G(mu_a, mu_b)]
///           / (nu_a nu_b (1 - max(r_a, r_b)))
/// and the same combination of error gains e*Q upper-bounds e_11 Y_11.
DecoyEstimate decoy_estimate(const BasisGains& z_gains, const BasisGains& x_gains,
                             const IntensityLevels& levels);
DecoyEstimate decoy_estimate(const TallyCounters& counters,
                             const IntensityLevels& levels);

/// Secret bits per second from the per-gate rate. The caller supplies the
/// effective clock (already clamped to the detector gate rate) and the
/// duty-cycle and dead-time derating factors.
double bits_per_second(double s_gate, double effective_rate_hz, double duty,
                       double dead_time_factor);

/// Clock actually usable with the given detector: gated detectors cap the
/// qubit rate at their gate rate.
double effective_clock(double qubit_rate_hz, const DetectorModel& det);

/// Fraction of detection opportunities that survive the detector's count
/// ceiling: clicks cannot exceed min(max_count_rate, 1/dead_time).
double dead_time_factor(double singles_rate_hz, const DetectorModel& det);

struct OptimizeConfig {
  double mu_min = 0.05;
  double mu_max = 1.2;
  double nu_min = 0.01;
  double nu_max = 0.30;
  int grid = 8;
  int refine_rounds = 4;
};

struct OptimizeResult {
  IntensityLevels levels;
  double s = 0.0;
  bool positive = false;
};

/// Maximizes the evaluator over (mu_a, mu_b, nu) with nu constrained below
/// both signal levels: coarse grid followed by shrinking coordinate scans.
OptimizeResult optimize_intensities(
    const std::function<double(const IntensityLevels&)>& evaluate,
    const OptimizeConfig& cfg = {});

}  // namespace mdiqkd
