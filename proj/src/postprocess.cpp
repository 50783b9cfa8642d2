#include "mdiqkd/postprocess.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mdiqkd {

namespace {

double h2_derivative(double x) {
  const double c = std::clamp(x, 1e-12, 1.0 - 1e-12);
  return std::log2((1.0 - c) / c);
}

}  // namespace

double IntensityLevels::value(Side side, IntensityClass cls) const {
  switch (cls) {
    case IntensityClass::Signal: return side == Side::Alice ? mu_a : mu_b;
    case IntensityClass::Decoy: return nu;
    case IntensityClass::Vacuum: return 0.0;
  }
  return 0.0;
}

IntensitySetting IntensityLevels::setting(Side side, IntensityClass cls) const {
  return IntensitySetting{cls, value(side, cls)};
}

void IntensityLevels::validate() const {
  if (!(mu_a > 0.0) || !(mu_b > 0.0))
    throw std::invalid_argument("signal intensities must be > 0");
  if (!(nu > 0.0)) throw std::invalid_argument("decoy intensity must be > 0");
  if (!(nu < mu_a && nu < mu_b))
    throw std::invalid_argument("decoy intensity must lie below both signals");
}

std::optional<SiftedRecord> sift(const DetectionEvent& event, bool use_psi_plus) {
  if (event.outcome == BellOutcome::None) return std::nullopt;
  if (event.basis_a != event.basis_b) return std::nullopt;
  if (event.outcome == BellOutcome::PsiPlus && !use_psi_plus) return std::nullopt;

  SiftedRecord rec;
  rec.basis = event.basis_a;
  rec.alice_bit = event.bit_a;
  rec.intensity_a = event.intensity_a;
  rec.intensity_b = event.intensity_b;
  rec.outcome = event.outcome;
  rec.tag_a = event.tag_a;
  rec.tag_b = event.tag_b;

  const bool flip = event.outcome == BellOutcome::PsiMinus ||
                    (event.outcome == BellOutcome::PsiPlus && rec.basis == Basis::Z);
  rec.bob_bit_after_flip = flip ? 1 - event.bit_b : event.bit_b;
  return rec;
}

CellTally& TallyCounters::at(Basis basis, IntensityClass a, IntensityClass b) {
  return cells[basis == Basis::Z ? 0 : 1][index(a)][index(b)];
}

const CellTally& TallyCounters::at(Basis basis, IntensityClass a,
                                   IntensityClass b) const {
  return cells[basis == Basis::Z ? 0 : 1][index(a)][index(b)];
}

void TallyCounters::record_sent(Basis basis_a, Basis basis_b, IntensityClass a,
                                IntensityClass b, int tag_a, int tag_b) {
  if (basis_a != basis_b) return;
  CellTally& cell = at(basis_a, a, b);
  ++cell.sent;
  if (tag_a == 1 && tag_b == 1) ++cell.sent_11;
}

void TallyCounters::record_projection(const SiftedRecord& rec) {
  CellTally& cell = at(rec.basis, rec.intensity_a, rec.intensity_b);
  ++cell.projections;
  const bool err = rec.is_error();
  if (err) ++cell.errors;
  if (rec.tag_a == 1 && rec.tag_b == 1) {
    ++cell.projections_11;
    if (err) ++cell.errors_11;
  }
}

void TallyCounters::merge(const TallyCounters& other) {
  for (int b = 0; b < 2; ++b)
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        CellTally& dst = cells[b][i][j];
        const CellTally& src = other.cells[b][i][j];
        dst.sent += src.sent;
        dst.projections += src.projections;
        dst.errors += src.errors;
        dst.sent_11 += src.sent_11;
        dst.projections_11 += src.projections_11;
        dst.errors_11 += src.errors_11;
      }
}

CellRates TallyCounters::rates(Basis basis, IntensityClass a,
                               IntensityClass b) const {
  const CellTally& cell = at(basis, a, b);
  CellRates r;
  if (cell.sent > 0) r.q = static_cast<double>(cell.projections) / cell.sent;
  if (cell.projections > 0) {
    r.e = static_cast<double>(cell.errors) / cell.projections;
    r.e_defined = true;
  }
  return r;
}

Rates11 TallyCounters::rates_11(Basis basis, IntensityClass a,
                                IntensityClass b) const {
  const CellTally& cell = at(basis, a, b);
  Rates11 r;
  if (cell.sent > 0)
    r.q11 = static_cast<double>(cell.projections_11) / cell.sent;
  if (cell.sent_11 > 0)
    r.y11 = static_cast<double>(cell.projections_11) / cell.sent_11;
  if (cell.projections_11 > 0) {
    r.e11 = static_cast<double>(cell.errors_11) / cell.projections_11;
    r.defined = true;
  }
  return r;
}

BasisGains gains_from(const TallyCounters& counters, Basis basis) {
  BasisGains g;
  const IntensityClass order[3] = {IntensityClass::Signal, IntensityClass::Decoy,
                                   IntensityClass::Vacuum};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      const CellRates r = counters.rates(basis, order[i], order[j]);
      g.q[i][j] = r.q;
      g.e[i][j] = r.e_defined ? r.e : 0.0;
    }
  return g;
}

double binary_entropy(double x) {
  if (!(x >= 0.0 && x <= 1.0))
    throw std::invalid_argument("binary_entropy argument outside [0,1]");
  if (x == 0.0 || x == 1.0) return 0.0;
  return -x * std::log2(x) - (1.0 - x) * std::log2(1.0 - x);
}

double key_rate_basic(double q_z, double e_x, double e_z, double f) {
  const double e_ph = std::min(e_x, 0.5);  // no key beyond a half error rate
  return q_z * (1.0 - binary_entropy(e_ph)) - q_z * f * binary_entropy(e_z);
}

double key_rate_decoy(const KeyRateInputs& in) {
  // A phase-error bound at or above 1/2 yields no single-photon key. The
  // entropy argument is clamped so a vacuous bound reads as zero credit
  // rather than riding h2 back down on the far side of 1/2.
  const double e_ph = std::min(in.e11_x_upper, 0.5);
  return in.q11_z_lower * (1.0 - binary_entropy(e_ph)) -
         in.q_musigma_z * in.f * binary_entropy(in.e_musigma_z);
}

double key_rate_decoy_sigma(const KeyRateInputs& in, double sigma_q11,
                            double sigma_e11, double sigma_qz, double sigma_ez) {
  const double e_ph = std::min(in.e11_x_upper, 0.5);
  const double d_q11 = 1.0 - binary_entropy(e_ph);
  const double d_e11 =
      in.e11_x_upper < 0.5 ? -in.q11_z_lower * h2_derivative(e_ph) : 0.0;
  const double d_qz = -in.f * binary_entropy(in.e_musigma_z);
  const double d_ez = -in.q_musigma_z * in.f * h2_derivative(in.e_musigma_z);
  const double v = d_q11 * d_q11 * sigma_q11 * sigma_q11 +
                   d_e11 * d_e11 * sigma_e11 * sigma_e11 +
                   d_qz * d_qz * sigma_qz * sigma_qz +
                   d_ez * d_ez * sigma_ez * sigma_ez;
  return std::sqrt(v);
}

namespace {

/// e^{x+y} [Q(x,y) - e^{-x} Q(0,y) - e^{-y} Q(x,0) + e^{-x-y} Q(0,0)]
/// for the 3x3 table t indexed (row = sender A level, col = sender B level)
/// at levels (a_row, b_col), rows/cols: 0 signal, 1 decoy, 2 vacuum.
double vacuum_subtracted(const std::array<std::array<double, 3>, 3>& t, int row,
                         int col, double x, double y) {
  const double combo = t[row][col] - std::exp(-x) * t[2][col] -
                       std::exp(-y) * t[row][2] + std::exp(-x - y) * t[2][2];
  return std::exp(x + y) * combo;
}

std::array<std::array<double, 3>, 3> error_gains(const BasisGains& g) {
  std::array<std::array<double, 3>, 3> t{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) t[i][j] = g.e[i][j] * g.q[i][j];
  return t;
}

}  // namespace

DecoyEstimate decoy_estimate(const BasisGains& z_gains, const BasisGains& x_gains,
                             const IntensityLevels& levels) {
  levels.validate();
  const double mu_a = levels.mu_a;
  const double mu_b = levels.mu_b;
  const double nu = levels.nu;
  const double r_a = nu / mu_a;
  const double r_b = nu / mu_b;
  const double r_max = std::max(r_a, r_b);
  const double rho = r_a * r_b * r_max;
  const double denom = nu * nu * (1.0 - r_max);
  DecoyEstimate est;
  if (!(denom > 0.0)) {
    est.valid = false;
    est.message = "yield bound denominator is not positive";
    return est;
  }

  // Y_11 >= [G(nu, nu) - rho G(mu_a, mu_b)] / (nu^2 (1 - r_max)), per basis.
  auto y11_lower = [&](const BasisGains& g) {
    const double g_nu = vacuum_subtracted(g.q, 1, 1, nu, nu);
    const double g_mu = vacuum_subtracted(g.q, 0, 0, mu_a, mu_b);
    return (g_nu - rho * g_mu) / denom;
  };
  est.y11_z_lower = std::max(0.0, y11_lower(z_gains));
  est.y11_x_lower = std::max(0.0, y11_lower(x_gains));
  est.q11_z_lower = mu_a * mu_b * std::exp(-mu_a - mu_b) * est.y11_z_lower;

  // nu^2 e_11 Y_11 <= W(nu, nu) since every surviving term is non-negative.
  const double w = vacuum_subtracted(error_gains(x_gains), 1, 1, nu, nu);
  if (est.y11_x_lower > 0.0 && w >= 0.0) {
    est.e11_x_upper = std::min(1.0, w / (nu * nu * est.y11_x_lower));
  } else if (w < 0.0) {
    est.e11_x_upper = 0.0;
    est.valid = false;
    est.message = "error-gain combination is negative (statistical fluctuation)";
  } else {
    est.e11_x_upper = 1.0;
    est.valid = false;
    est.message = "single-photon X yield bound is zero; error bound is vacuous";
  }
  return est;
}

DecoyEstimate decoy_estimate(const TallyCounters& counters,
                             const IntensityLevels& levels) {
  const IntensityClass order[3] = {IntensityClass::Signal, IntensityClass::Decoy,
                                   IntensityClass::Vacuum};
  for (Basis basis : {Basis::Z, Basis::X})
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        if (counters.at(basis, order[i], order[j]).sent == 0)
          throw std::invalid_argument(
              "decoy estimation needs data in all nine intensity cells per basis");
  return decoy_estimate(gains_from(counters, Basis::Z),
                        gains_from(counters, Basis::X), levels);
}

double bits_per_second(double s_gate, double effective_rate_hz, double duty,
                       double dead_time_factor) {
  return s_gate * effective_rate_hz * duty * dead_time_factor;
}

double effective_clock(double qubit_rate_hz, const DetectorModel& det) {
  if (det.gate_rate) return std::min(qubit_rate_hz, *det.gate_rate);
  return qubit_rate_hz;
}

double dead_time_factor(double singles_rate_hz, const DetectorModel& det) {
  double cap = det.max_count_rate;
  if (det.dead_time > 0.0) cap = std::min(cap, 1.0 / det.dead_time);
  if (singles_rate_hz <= cap || singles_rate_hz <= 0.0) return 1.0;
  return cap / singles_rate_hz;
}

OptimizeResult optimize_intensities(
    const std::function<double(const IntensityLevels&)>& evaluate,
    const OptimizeConfig& cfg) {
  auto clamp_levels = [&](IntensityLevels l) {
    l.mu_a = std::clamp(l.mu_a, cfg.mu_min, cfg.mu_max);
    l.mu_b = std::clamp(l.mu_b, cfg.mu_min, cfg.mu_max);
    const double nu_cap = std::min({cfg.nu_max, 0.9 * l.mu_a, 0.9 * l.mu_b});
    l.nu = std::clamp(l.nu, cfg.nu_min, std::max(cfg.nu_min, nu_cap));
    return l;
  };

  IntensityLevels best{};
  double best_s = -1e300;
  bool have = false;

  auto consider = [&](IntensityLevels l) {
    l = clamp_levels(l);
    if (!(l.nu < l.mu_a && l.nu < l.mu_b)) return;
    const double s = evaluate(l);
    if (!have || s > best_s) {
      have = true;
      best_s = s;
      best = l;
    }
  };

  const int n = std::max(2, cfg.grid);
  for (int i = 0; i < n; ++i) {
    const double mu_a =
        cfg.mu_min + (cfg.mu_max - cfg.mu_min) * i / double(n - 1);
    for (int j = 0; j < n; ++j) {
      const double mu_b =
          cfg.mu_min + (cfg.mu_max - cfg.mu_min) * j / double(n - 1);
      for (int k = 0; k < n; ++k) {
        const double nu =
            cfg.nu_min + (cfg.nu_max - cfg.nu_min) * k / double(n - 1);
        consider({mu_a, mu_b, nu});
      }
    }
  }
  if (!have) {
    consider({std::max(cfg.mu_min, 0.5), std::max(cfg.mu_min, 0.5),
              std::max(cfg.nu_min, 0.05)});
  }

  double span_mu = (cfg.mu_max - cfg.mu_min) / double(n - 1);
  double span_nu = (cfg.nu_max - cfg.nu_min) / double(n - 1);
  for (int round = 0; round < cfg.refine_rounds; ++round) {
    for (int coord = 0; coord < 3; ++coord) {
      const double span = coord == 2 ? span_nu : span_mu;
      const IntensityLevels center = best;
      for (int step = -4; step <= 4; ++step) {
        if (step == 0) continue;
        IntensityLevels l = center;
        const double delta = span * step / 2.0;
        if (coord == 0) l.mu_a += delta;
        else if (coord == 1) l.mu_b += delta;
        else l.nu += delta;
        consider(l);
      }
    }
    span_mu *= 0.45;
    span_nu *= 0.45;
  }

  OptimizeResult out;
  out.levels = best;
  out.s = best_s;
  out.positive = best_s > 0.0;
  return out;
}

}  // namespace mdiqkd
