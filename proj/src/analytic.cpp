#include <cmath>

#include "mdiqkd/runner.hpp"

namespace mdiqkd {

namespace {

const IntensityClass kOrder[3] = {IntensityClass::Signal, IntensityClass::Decoy,
                                  IntensityClass::Vacuum};

/// Does the announced outcome leave Alice and Bob with differing bits after
/// Bob's flip rule?
bool outcome_error(Basis basis, int a_bit, int b_raw, BellOutcome o) {
  const bool flip = o == BellOutcome::PsiMinus ||
                    (o == BellOutcome::PsiPlus && basis == Basis::Z);
  const int after = flip ? 1 - b_raw : b_raw;
  return a_bit != after;
}

struct PatternSums {
  double psi_minus = 0.0;
  double psi_plus = 0.0;
  double d1_click = 0.0;
  double d2_click = 0.0;
};

PatternSums sums_of(const std::array<double, 16>& p) {
  PatternSums s;
  for (unsigned pat = 0; pat < 16; ++pat) {
    switch (classify(ClickPattern{pat})) {
      case BellOutcome::PsiMinus: s.psi_minus += p[pat]; break;
      case BellOutcome::PsiPlus: s.psi_plus += p[pat]; break;
      case BellOutcome::None: break;
    }
    if (pat & 0b0011u) s.d1_click += p[pat];
    if (pat & 0b1100u) s.d2_click += p[pat];
  }
  return s;
}

struct CellEval {
  double q = 0.0;         // announced projections per emitted pair
  double err_gain = 0.0;  // erroneous projections per emitted pair
  double d1_click = 0.0;  // per-slot click probability, detector 1
  double d2_click = 0.0;
};

CellEval eval_cell(const RunConfig& cfg, Basis basis, IntensityClass cls_a,
                   IntensityClass cls_b, const IntensityLevels& levels,
                   const ChannelConfig& ch, const DriftState& state,
                   const SlotContext& ctx) {
  CellEval out;
  const double sep = cfg.states.mode_separation;
  for (int a_bit = 0; a_bit < 2; ++a_bit) {
    for (int b_bit = 0; b_bit < 2; ++b_bit) {
      PulsePair pa = apply_channel(
          prepare_pulse_pair(basis, a_bit, levels.setting(Side::Alice, cls_a),
                             cfg.states),
          ch, state, Side::Alice);
      PulsePair pb = apply_channel(
          prepare_pulse_pair(basis, b_bit, levels.setting(Side::Bob, cls_b),
                             cfg.states),
          ch, state, Side::Bob);
      const double lambda = mode_overlap(pa, pb, cfg.states.mode_width_fwhm);

      // The relative phase only matters when both pulses carry light.
      const bool phase_matters = cfg.phase_randomized &&
                                 pa.mean_photons() > 0.0 &&
                                 pb.mean_photons() > 0.0;
      const std::array<double, 16> pat =
          phase_matters
              ? pattern_probabilities_averaged(pa, pb, lambda, cfg.detector,
                                               cfg.detector, sep, ctx)
              : detect_probabilities(interfere(pa, pb, lambda, 0.0),
                                     cfg.detector, cfg.detector, sep, ctx);
      const PatternSums s = sums_of(pat);

      double q = s.psi_minus;
      double eg = s.psi_minus *
                  (outcome_error(basis, a_bit, b_bit, BellOutcome::PsiMinus) ? 1.0
                                                                             : 0.0);
      if (cfg.use_psi_plus) {
        q += s.psi_plus;
        eg += s.psi_plus *
              (outcome_error(basis, a_bit, b_bit, BellOutcome::PsiPlus) ? 1.0
                                                                        : 0.0);
      }
      out.q += 0.25 * q;
      out.err_gain += 0.25 * eg;
      out.d1_click += 0.25 * s.d1_click;
      out.d2_click += 0.25 * s.d2_click;
    }
  }
  return out;
}

struct GainsPass {
  CellGainsSet gains;
  double d1_click = 0.0;  // schedule-averaged per-slot click probabilities
  double d2_click = 0.0;
};

GainsPass gains_pass(const RunConfig& cfg, double loss_db,
                     const DriftState& state, const IntensityLevels& levels,
                     const SlotContext& ctx) {
  GainsPass out;
  const ChannelConfig ch{0.0, 0.2, loss_db / 2.0, cfg.drift_enabled};

  double weight_total = 0.0;
  for (int bi = 0; bi < 2; ++bi) {
    const Basis basis = bi == 0 ? Basis::Z : Basis::X;
    BasisGains& g = bi == 0 ? out.gains.z : out.gains.x;
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) {
        if (cfg.signal_only && (i != 0 || j != 0)) continue;
        const CellEval cell = eval_cell(cfg, basis, kOrder[i], kOrder[j], levels,
                                        ch, state, ctx);
        g.q[i][j] = cell.q;
        g.e[i][j] = cell.q > 0.0 ? cell.err_gain / cell.q : 0.0;
        out.d1_click += cell.d1_click;
        out.d2_click += cell.d2_click;
        weight_total += 1.0;
      }
    }
  }
  out.d1_click /= weight_total;
  out.d2_click /= weight_total;
  return out;
}

SinglePhotonTruth truth_pass(const RunConfig& cfg, double loss_db,
                             const DriftState& state,
                             const IntensityLevels& levels,
                             const SlotContext& ctx) {
  SinglePhotonTruth truth;
  const double t_arm = transmittance({0.0, 0.2, loss_db / 2.0, false});
  const double lambda =
      mode_overlap(state.delta_arrival, state.freq_diff, state.pol_overlap,
                   cfg.states.mode_width_fwhm);
  const double sep = cfg.states.mode_separation;

  for (int bi = 0; bi < 2; ++bi) {
    const Basis basis = bi == 0 ? Basis::Z : Basis::X;
    double y = 0.0;
    double err = 0.0;
    for (int a_bit = 0; a_bit < 2; ++a_bit) {
      for (int b_bit = 0; b_bit < 2; ++b_bit) {
        const PulsePair pa = prepare_pulse_pair(
            basis, a_bit, IntensitySetting{IntensityClass::Signal, 1.0},
            cfg.states);
        const PulsePair pb = prepare_pulse_pair(
            basis, b_bit, IntensitySetting{IntensityClass::Signal, 1.0},
            cfg.states);
        // Each emitted photon survives its arm independently.
        for (int ja = 0; ja <= 1; ++ja) {
          for (int jb = 0; jb <= 1; ++jb) {
            const double w = (ja ? t_arm : 1.0 - t_arm) *
                             (jb ? t_arm : 1.0 - t_arm) * 0.25;
            const BellProbs p = fock_bell_probabilities(
                ja, jb, pa.amp_early, pa.amp_late, pb.amp_early, pb.amp_late,
                lambda, cfg.detector, cfg.detector, sep, ctx);
            double q = p.psi_minus;
            double eg =
                p.psi_minus *
                (outcome_error(basis, a_bit, b_bit, BellOutcome::PsiMinus) ? 1.0
                                                                           : 0.0);
            if (cfg.use_psi_plus) {
              q += p.psi_plus;
              eg += p.psi_plus *
                    (outcome_error(basis, a_bit, b_bit, BellOutcome::PsiPlus)
                         ? 1.0
                         : 0.0);
            }
            y += w * q;
            err += w * eg;
          }
        }
      }
    }
    const double p11 = levels.mu_a * std::exp(-levels.mu_a) * levels.mu_b *
                       std::exp(-levels.mu_b);
    if (bi == 0) {
      truth.y11_z = y;
      truth.q11_z = p11 * y;
      truth.e11_z = y > 0.0 ? err / y : 0.0;
    } else {
      truth.y11_x = y;
      truth.q11_x = p11 * y;
      truth.e11_x = y > 0.0 ? err / y : 0.0;
    }
  }
  return truth;
}

}  // namespace

namespace {

// First pass sets the singles rates; the afterpulse level they imply feeds
// the second pass as an elevated dark probability. A live slot sits inside
// the release tails of the clicks from the preceding (span - dead_time) of
// operation, so the expected number of stacked tails is
// rate * (span - dead_time).
GainsPass loaded_pass(const RunConfig& cfg, double loss_db,
                      const DriftState& state, const IntensityLevels& levels,
                      SlotContext& ctx) {
  GainsPass pass = gains_pass(cfg, loss_db, state, levels, SlotContext{});
  if (cfg.detector.afterpulse_prob_per_ns <= 0.0 ||
      cfg.detector.afterpulse_span <= 0.0)
    return pass;

  const double slots_per_s =
      effective_clock(cfg.qubit_rate_hz, cfg.detector) *
      cfg.feedback.duty_cycle();
  double cap = cfg.detector.max_count_rate;
  if (cfg.detector.dead_time > 0.0)
    cap = std::min(cap, 1.0 / cfg.detector.dead_time);
  const double live_tail =
      std::max(0.0, cfg.detector.afterpulse_span - cfg.detector.dead_time);
  const double per_bin = cfg.detector.afterpulse_prob_per_ns *
                         cfg.detector.coincidence_window_ns;
  ctx.extra_dark[0] =
      std::min(pass.d1_click * slots_per_s, cap) * live_tail * per_bin;
  ctx.extra_dark[1] =
      std::min(pass.d2_click * slots_per_s, cap) * live_tail * per_bin;
  if (ctx.extra_dark[0] > 0.0 || ctx.extra_dark[1] > 0.0)
    pass = gains_pass(cfg, loss_db, state, levels, ctx);
  return pass;
}

}  // namespace

CellGainsSet analytic_gains(const RunConfig& cfg, double loss_db,
                            const DriftState& state,
                            const IntensityLevels& levels) {
  SlotContext ctx;
  return loaded_pass(cfg, loss_db, state, levels, ctx).gains;
}

AnalyticPoint analytic_point(const RunConfig& cfg, double loss_db,
                             const DriftState& state,
                             const IntensityLevels& levels) {
  AnalyticPoint out;
  const double slots_per_s =
      effective_clock(cfg.qubit_rate_hz, cfg.detector) *
      cfg.feedback.duty_cycle();

  GainsPass pass = loaded_pass(cfg, loss_db, state, levels, out.ctx);
  out.gains = pass.gains;
  out.singles_rate_hz[0] = pass.d1_click * slots_per_s;
  out.singles_rate_hz[1] = pass.d2_click * slots_per_s;
  out.truth = truth_pass(cfg, loss_db, state, levels, out.ctx);
  return out;
}

}  // namespace mdiqkd
