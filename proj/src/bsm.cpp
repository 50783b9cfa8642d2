#include "mdiqkd/bsm.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_map>

namespace mdiqkd {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;
constexpr int kMaxPhotonsPerSide = 12;  // Poisson tail beyond is negligible

double factorial_d(int n) {
  static const auto table = [] {
    std::array<double, 25> t{};
    t[0] = 1.0;
    for (int i = 1; i < 25; ++i) t[i] = t[i - 1] * i;
    return t;
  }();
  return table[n];
}

/// Per-detector click outcome probabilities {none, early only, late only,
/// both}. When the dead time exceeds the bin separation an early click masks
/// the late bin.
std::array<double, 4> detector_outcomes(double p_early, double p_late, bool mask_late) {
  std::array<double, 4> out{};
  if (mask_late) {
    out[0] = (1.0 - p_early) * (1.0 - p_late);
    out[1] = p_early;
    out[2] = (1.0 - p_early) * p_late;
    out[3] = 0.0;
  } else {
    out[0] = (1.0 - p_early) * (1.0 - p_late);
    out[1] = p_early * (1.0 - p_late);
    out[2] = (1.0 - p_early) * p_late;
    out[3] = p_early * p_late;
  }
  return out;
}

/// Adds weight * P(pattern) to out[16] given the four cell click
/// probabilities (order D1e, D1l, D2e, D2l).
void accumulate_patterns(double weight, const std::array<double, 4>& p_cell,
                         bool mask1, bool mask2, std::array<double, 16>& out) {
  const auto d1 = detector_outcomes(p_cell[0], p_cell[1], mask1);
  const auto d2 = detector_outcomes(p_cell[2], p_cell[3], mask2);
  for (int o1 = 0; o1 < 4; ++o1) {
    if (d1[o1] == 0.0) continue;
    for (int o2 = 0; o2 < 4; ++o2) {
      if (d2[o2] == 0.0) continue;
      out[static_cast<unsigned>(o1) | (static_cast<unsigned>(o2) << 2)] +=
          weight * d1[o1] * d2[o2];
    }
  }
}

std::array<double, 4> cell_click_probs_from_means(const BinMeans& means,
                                                  const DetectorModel& det1,
                                                  const DetectorModel& det2,
                                                  const SlotContext& ctx) {
  std::array<double, 4> p{};
  p[0] = ctx.live[0] ? click_probability(means.d1_early, det1, ctx.extra_dark[0]) : 0.0;
  p[1] = ctx.live[0] ? click_probability(means.d1_late, det1, ctx.extra_dark[0]) : 0.0;
  p[2] = ctx.live[1] ? click_probability(means.d2_early, det2, ctx.extra_dark[1]) : 0.0;
  p[3] = ctx.live[1] ? click_probability(means.d2_late, det2, ctx.extra_dark[1]) : 0.0;
  return p;
}

BellProbs classify_pattern_probs(const std::array<double, 16>& probs) {
  BellProbs b;
  b.psi_minus = 0.0;
  b.psi_plus = 0.0;
  b.none = 0.0;
  for (unsigned pat = 0; pat < 16; ++pat) {
    ClickPattern cp{pat};
    switch (classify(cp)) {
      case BellOutcome::PsiMinus: b.psi_minus += probs[pat]; break;
      case BellOutcome::PsiPlus: b.psi_plus += probs[pat]; break;
      case BellOutcome::None: b.none += probs[pat]; break;
    }
  }
  return b;
}

/// Output-mode amplitude vectors of the two input modes after the 50:50
/// beam splitter. Mode index: det*4 + bin*2 + chan, chan 0 = component
/// matched to Alice's wavepacket, chan 1 = orthogonal remainder.
struct OutputModes {
  std::array<std::complex<double>, 8> f{};  // image of Alice's mode
  std::array<std::complex<double>, 8> g{};  // image of Bob's mode
};

OutputModes output_modes(std::complex<double> alpha_early,
                         std::complex<double> alpha_late,
                         std::complex<double> beta_early,
                         std::complex<double> beta_late, double lambda) {
  const double inv_sqrt2 = 0.70710678118654752440;
  const double s = std::sqrt(std::max(0.0, 1.0 - lambda * lambda));
  OutputModes m;
  const std::complex<double> a[2] = {alpha_early, alpha_late};
  const std::complex<double> b[2] = {beta_early, beta_late};
  for (int det = 0; det < 2; ++det) {
    const double sign = det == 0 ? 1.0 : -1.0;
    for (int bin = 0; bin < 2; ++bin) {
      m.f[det * 4 + bin * 2 + 0] = a[bin] * inv_sqrt2;
      m.g[det * 4 + bin * 2 + 0] = b[bin] * (sign * lambda * inv_sqrt2);
      m.g[det * 4 + bin * 2 + 1] = b[bin] * (sign * s * inv_sqrt2);
    }
  }
  return m;
}

/// Recursively enumerates compositions of k photons over the support of X,
/// calling fn(occupation, amplitude_term) with term = sqrt(k!) prod X^occ/occ!.
template <typename Fn>
void enumerate_splits(const std::array<std::complex<double>, 8>& x, int k,
                      int mode, std::array<int, 8>& occ, std::complex<double> term,
                      Fn&& fn) {
  if (mode == 8) {
    if (k == 0) fn(occ, term);
    return;
  }
  if (x[mode] == std::complex<double>(0.0, 0.0)) {
    enumerate_splits(x, k, mode + 1, occ, term, fn);
    return;
  }
  std::complex<double> power{1.0, 0.0};
  for (int n = 0; n <= k; ++n) {
    occ[mode] = n;
    enumerate_splits(x, k - n, mode + 1, occ, term * power / factorial_d(n), fn);
    power *= x[mode];
  }
  occ[mode] = 0;
}

std::uint32_t pack8(const std::array<int, 8>& occ) {
  std::uint32_t key = 0;
  for (int i = 0; i < 8; ++i) key |= static_cast<std::uint32_t>(occ[i] & 0xF) << (4 * i);
  return key;
}

}  // namespace

const char* to_string(BellOutcome o) {
  switch (o) {
    case BellOutcome::None: return "none";
    case BellOutcome::PsiMinus: return "psi_minus";
    case BellOutcome::PsiPlus: return "psi_plus";
  }
  return "?";
}

/// InGaAs trap-release tail. Carrier detrapping at 223 K outlasts the 10 us
/// dead time; the tail length is calibrated so the simulated maximum reach
/// of each detector matches its measured value.
constexpr double kInGaAsTrapTailSeconds = 50e-6;

DetectorModel DetectorModel::id201() {
  DetectorModel d;
  d.efficiency = 0.15;
  d.dark_prob_per_ns = 1e-4;
  d.dead_time = 10e-6;
  d.gate_rate = 8e6;
  d.max_count_rate = 0.1e6;
  d.afterpulse_prob_per_ns = 1e-5;
  d.afterpulse_span = kInGaAsTrapTailSeconds;
  d.coincidence_window_ns = 1.0;
  return d;
}

DetectorModel DetectorModel::id210() {
  DetectorModel d = id201();
  d.dark_prob_per_ns = 1e-5;
  d.gate_rate = 100e6;
  return d;
}

DetectorModel DetectorModel::snspd() {
  DetectorModel d;
  d.efficiency = 0.50;
  d.dark_prob_per_ns = 1e-7;
  d.dead_time = 40e-9;
  d.gate_rate.reset();
  d.max_count_rate = 2e6;
  d.afterpulse_prob_per_ns = 0.0;
  d.coincidence_window_ns = 1.0;
  return d;
}

DetectorModel DetectorModel::ideal() {
  DetectorModel d;
  d.efficiency = 1.0;
  d.dark_prob_per_ns = 0.0;
  d.dead_time = 0.0;
  d.gate_rate.reset();
  d.max_count_rate = 1e15;
  d.afterpulse_prob_per_ns = 0.0;
  d.coincidence_window_ns = 1.0;
  return d;
}

double mode_overlap(double delta_t, double delta_freq, double pol_overlap,
                    double mode_width_fwhm) {
  if (!(mode_width_fwhm > 0.0))
    throw std::invalid_argument("mode_width_fwhm must be > 0");
  const double sigma = mode_width_fwhm / (2.0 * std::sqrt(2.0 * std::log(2.0)));
  const double pol_amp = std::sqrt(std::clamp(pol_overlap, 0.0, 1.0));
  const double temporal = std::exp(-delta_t * delta_t / (4.0 * sigma * sigma));
  const double spectral_arg = 3.141592653589793 * delta_freq * sigma;
  const double spectral = std::exp(-spectral_arg * spectral_arg);
  return std::clamp(pol_amp * temporal * spectral, 0.0, 1.0);
}

double mode_overlap(const PulsePair& a, const PulsePair& b, double mode_width_fwhm) {
  const double dot = a.pol_vector[0] * b.pol_vector[0] +
                     a.pol_vector[1] * b.pol_vector[1] +
                     a.pol_vector[2] * b.pol_vector[2];
  const double pol = 0.5 * (1.0 + std::clamp(dot, -1.0, 1.0));
  return mode_overlap(a.arrival_offset - b.arrival_offset,
                      a.center_freq_offset - b.center_freq_offset, pol,
                      mode_width_fwhm);
}

BinMeans interfere(const PulsePair& a, const PulsePair& b, double lambda,
                   double delta_theta) {
  if (!(lambda >= 0.0 && lambda <= 1.0))
    throw std::invalid_argument("lambda must be in [0,1]");
  const std::complex<double> rot = std::polar(1.0, delta_theta);
  const double residual = 0.5 * (1.0 - lambda * lambda);
  BinMeans m;
  const std::complex<double> be = b.amp_early * rot;
  const std::complex<double> bl = b.amp_late * rot;
  m.d1_early = 0.5 * std::norm(a.amp_early + lambda * be) + residual * std::norm(be);
  m.d2_early = 0.5 * std::norm(a.amp_early - lambda * be) + residual * std::norm(be);
  m.d1_late = 0.5 * std::norm(a.amp_late + lambda * bl) + residual * std::norm(bl);
  m.d2_late = 0.5 * std::norm(a.amp_late - lambda * bl) + residual * std::norm(bl);
  return m;
}

bool DetectorTimeline::live(double t, const DetectorModel& det) const {
  if (t < dead_until) return false;
  if (t < window_start + kCountQuotaWindowSeconds &&
      static_cast<double>(window_count) >=
          det.max_count_rate * kCountQuotaWindowSeconds)
    return false;
  return true;
}

double DetectorTimeline::extra_dark(double t, const DetectorModel& det) const {
  if (det.afterpulse_prob_per_ns <= 0.0 || det.afterpulse_span <= 0.0)
    return 0.0;
  if (t - last_click >= det.afterpulse_span) return 0.0;
  int covering = 0;
  for (int i = 0; i < click_count; ++i) {
    const double c = clicks[i];
    if (c <= t && t - c < det.afterpulse_span) ++covering;
  }
  return covering * det.afterpulse_prob_per_ns * det.coincidence_window_ns;
}

void DetectorTimeline::record_click(double t, const DetectorModel& det) {
  dead_until = t + det.dead_time;
  last_click = t;
  clicks[click_head] = t;
  click_head = (click_head + 1) % kClickRing;
  if (click_count < kClickRing) ++click_count;
  if (t >= window_start + kCountQuotaWindowSeconds) {
    window_start = t;
    window_count = 0;
  }
  ++window_count;
}

double click_probability(double mean_photons, const DetectorModel& det,
                         double extra_dark) {
  const double dark = std::min(1.0, det.dark_per_bin() + extra_dark);
  // 1 - (1 - d) exp(-eta n), written via expm1 for small arguments.
  const double p_photon = -std::expm1(-det.efficiency * mean_photons);
  return dark + (1.0 - dark) * p_photon;
}

ClickPattern detect(const BinMeans& means, const DetectorModel& det1,
                    const DetectorModel& det2, double mode_separation,
                    const SlotContext& ctx, RngStream& rng) {
  const auto p = cell_click_probs_from_means(means, det1, det2, ctx);
  const bool mask1 = det1.dead_time > mode_separation;
  const bool mask2 = det2.dead_time > mode_separation;
  unsigned bits = 0;
  const bool d1e = rng.bernoulli(p[0]);
  const bool d2e = rng.bernoulli(p[2]);
  const bool d1l = (d1e && mask1) ? false : rng.bernoulli(p[1]);
  const bool d2l = (d2e && mask2) ? false : rng.bernoulli(p[3]);
  if (d1e) bits |= 1u;
  if (d1l) bits |= 2u;
  if (d2e) bits |= 4u;
  if (d2l) bits |= 8u;
  return ClickPattern{bits};
}

std::array<double, 16> detect_probabilities(const BinMeans& means,
                                            const DetectorModel& det1,
                                            const DetectorModel& det2,
                                            double mode_separation,
                                            const SlotContext& ctx) {
  std::array<double, 16> out{};
  const auto p = cell_click_probs_from_means(means, det1, det2, ctx);
  accumulate_patterns(1.0, p, det1.dead_time > mode_separation,
                      det2.dead_time > mode_separation, out);
  return out;
}

BellOutcome classify(const ClickPattern& pattern, bool veto_extra) {
  const unsigned bits = pattern.bits & 0xFu;
  if (veto_extra) {
    if (bits == 0b1001u || bits == 0b0110u) return BellOutcome::PsiMinus;
    if (bits == 0b0011u || bits == 0b1100u) return BellOutcome::PsiPlus;
    return BellOutcome::None;
  }
  if ((bits & 0b1001u) == 0b1001u || (bits & 0b0110u) == 0b0110u)
    return BellOutcome::PsiMinus;
  if ((bits & 0b0011u) == 0b0011u || (bits & 0b1100u) == 0b1100u)
    return BellOutcome::PsiPlus;
  return BellOutcome::None;
}

BellProbs bell_event_probabilities_fixed_phase(
    const PulsePair& a, const PulsePair& b, double lambda, double delta_theta,
    const DetectorModel& det1, const DetectorModel& det2, double mode_separation,
    const SlotContext& ctx) {
  const BinMeans means = interfere(a, b, lambda, delta_theta);
  return classify_pattern_probs(
      detect_probabilities(means, det1, det2, mode_separation, ctx));
}

std::array<double, 16> pattern_probabilities_averaged(
    const PulsePair& a, const PulsePair& b, double lambda,
    const DetectorModel& det1, const DetectorModel& det2, double mode_separation,
    const SlotContext& ctx, const PhaseAverageOptions& opts) {
  auto average = [&](int nodes) {
    std::array<double, 16> acc{};
    for (int j = 0; j < nodes; ++j) {
      const double theta = kTwoPi * j / nodes;
      const BinMeans means = interfere(a, b, lambda, theta);
      const auto p = detect_probabilities(means, det1, det2, mode_separation, ctx);
      for (int i = 0; i < 16; ++i) acc[i] += p[i];
    }
    for (double& v : acc) v /= nodes;
    return acc;
  };

  std::array<double, 16> prev = average(opts.initial_nodes);
  for (int nodes = 2 * opts.initial_nodes; nodes <= opts.max_nodes; nodes *= 2) {
    const std::array<double, 16> cur = average(nodes);
    bool ok = true;
    for (int i = 0; i < 16 && ok; ++i)
      ok = std::abs(cur[i] - prev[i]) <=
           opts.abs_tol + opts.rel_tol * std::max(cur[i], prev[i]);
    if (ok) return cur;
    prev = cur;
  }
  throw std::runtime_error("relative-phase average did not converge");
}

BellProbs bell_event_probabilities(const PulsePair& a, const PulsePair& b,
                                   double lambda, const DetectorModel& det1,
                                   const DetectorModel& det2,
                                   double mode_separation, const SlotContext& ctx,
                                   const PhaseAverageOptions& opts) {
  return classify_pattern_probs(pattern_probabilities_averaged(
      a, b, lambda, det1, det2, mode_separation, ctx, opts));
}

std::vector<FockOutcome> fock_cell_distribution(int k_a, int k_b,
                                                std::complex<double> alpha_early,
                                                std::complex<double> alpha_late,
                                                std::complex<double> beta_early,
                                                std::complex<double> beta_late,
                                                double lambda) {
  if (k_a < 0 || k_b < 0) throw std::invalid_argument("photon counts must be >= 0");
  if (!(lambda >= 0.0 && lambda <= 1.0))
    throw std::invalid_argument("lambda must be in [0,1]");
  k_a = std::min(k_a, kMaxPhotonsPerSide);
  k_b = std::min(k_b, kMaxPhotonsPerSide);
  const double na = std::norm(alpha_early) + std::norm(alpha_late);
  const double nb = std::norm(beta_early) + std::norm(beta_late);
  if (k_a > 0 && !(na > 0.0))
    throw std::invalid_argument("k_a > 0 requires a nonzero A mode");
  if (k_b > 0 && !(nb > 0.0))
    throw std::invalid_argument("k_b > 0 requires a nonzero B mode");
  if (k_a > 0) {
    const double inv = 1.0 / std::sqrt(na);
    alpha_early *= inv;
    alpha_late *= inv;
  }
  if (k_b > 0) {
    const double inv = 1.0 / std::sqrt(nb);
    beta_early *= inv;
    beta_late *= inv;
  }

  const OutputModes modes =
      output_modes(alpha_early, alpha_late, beta_early, beta_late, lambda);

  // Amplitude of each joint occupation n over the 8 output modes:
  //   amp(n) = sum_{p+q=n} sqrt(kA!) prod F^p / p! * sqrt(kB!) prod G^q / q!
  // and P(n) = |amp(n)|^2 * prod n!.
  std::unordered_map<std::uint32_t, std::complex<double>> amps;
  amps.reserve(64);
  std::array<int, 8> occ_a{};
  enumerate_splits(modes.f, k_a, 0, occ_a,
                   std::complex<double>(std::sqrt(factorial_d(k_a)), 0.0),
                   [&](const std::array<int, 8>& pa, std::complex<double> term_a) {
                     std::array<int, 8> occ_b{};
                     enumerate_splits(
                         modes.g, k_b, 0, occ_b,
                         std::complex<double>(std::sqrt(factorial_d(k_b)), 0.0),
                         [&](const std::array<int, 8>& pb,
                             std::complex<double> term_b) {
                           std::array<int, 8> n;
                           for (int i = 0; i < 8; ++i) n[i] = pa[i] + pb[i];
                           amps[pack8(n)] += term_a * term_b;
                         });
                   });

  // Marginalise the matched/orthogonal channels into the four detector bins.
  std::unordered_map<std::uint32_t, double> cells;
  cells.reserve(amps.size());
  for (const auto& [key, amp] : amps) {
    double fact = 1.0;
    std::array<int, 4> cell{0, 0, 0, 0};
    for (int i = 0; i < 8; ++i) {
      const int n = static_cast<int>((key >> (4 * i)) & 0xFu);
      fact *= factorial_d(n);
      cell[i / 2] += n;
    }
    const double p = std::norm(amp) * fact;
    if (p <= 0.0) continue;
    std::uint32_t ckey = 0;
    for (int i = 0; i < 4; ++i)
      ckey |= static_cast<std::uint32_t>(cell[i] & 0xFF) << (8 * i);
    cells[ckey] += p;
  }

  std::vector<FockOutcome> out;
  out.reserve(cells.size());
  for (const auto& [key, p] : cells) {
    FockOutcome o;
    for (int i = 0; i < 4; ++i)
      o.cells[i] = static_cast<int>((key >> (8 * i)) & 0xFFu);
    o.prob = p;
    out.push_back(o);
  }
  // Deterministic ordering for reproducible sampling.
  std::sort(out.begin(), out.end(), [](const FockOutcome& a, const FockOutcome& b) {
    return a.cells < b.cells;
  });
  return out;
}

namespace {

std::array<double, 4> cell_click_probs_from_counts(const std::array<int, 4>& n,
                                                   const DetectorModel& det1,
                                                   const DetectorModel& det2,
                                                   const SlotContext& ctx) {
  auto p_of = [](int count, const DetectorModel& det, double extra, bool live) {
    if (!live) return 0.0;
    const double dark = std::min(1.0, det.dark_per_bin() + extra);
    const double miss = std::pow(1.0 - det.efficiency, count);
    return 1.0 - (1.0 - dark) * miss;
  };
  return {p_of(n[0], det1, ctx.extra_dark[0], ctx.live[0]),
          p_of(n[1], det1, ctx.extra_dark[0], ctx.live[0]),
          p_of(n[2], det2, ctx.extra_dark[1], ctx.live[1]),
          p_of(n[3], det2, ctx.extra_dark[1], ctx.live[1])};
}

}  // namespace

BellProbs fock_bell_probabilities(int k_a, int k_b,
                                  std::complex<double> alpha_early,
                                  std::complex<double> alpha_late,
                                  std::complex<double> beta_early,
                                  std::complex<double> beta_late, double lambda,
                                  const DetectorModel& det1,
                                  const DetectorModel& det2,
                                  double mode_separation, const SlotContext& ctx) {
  const auto dist = fock_cell_distribution(k_a, k_b, alpha_early, alpha_late,
                                           beta_early, beta_late, lambda);
  const bool mask1 = det1.dead_time > mode_separation;
  const bool mask2 = det2.dead_time > mode_separation;
  std::array<double, 16> pattern{};
  for (const auto& o : dist) {
    const auto p = cell_click_probs_from_counts(o.cells, det1, det2, ctx);
    accumulate_patterns(o.prob, p, mask1, mask2, pattern);
  }
  return classify_pattern_probs(pattern);
}

ClickPattern sample_cell_clicks(const std::array<int, 4>& counts,
                                const DetectorModel& det1,
                                const DetectorModel& det2, double mode_separation,
                                const SlotContext& ctx, RngStream& rng) {
  const auto p = cell_click_probs_from_counts(counts, det1, det2, ctx);
  const bool mask1 = det1.dead_time > mode_separation;
  const bool mask2 = det2.dead_time > mode_separation;
  unsigned bits = 0;
  const bool d1e = rng.bernoulli(p[0]);
  const bool d2e = rng.bernoulli(p[2]);
  const bool d1l = (d1e && mask1) ? false : rng.bernoulli(p[1]);
  const bool d2l = (d2e && mask2) ? false : rng.bernoulli(p[3]);
  if (d1e) bits |= 1u;
  if (d1l) bits |= 2u;
  if (d2e) bits |= 4u;
  if (d2l) bits |= 8u;
  return ClickPattern{bits};
}

ClickPattern fock_detect(int k_a, int k_b, std::complex<double> alpha_early,
                         std::complex<double> alpha_late,
                         std::complex<double> beta_early,
                         std::complex<double> beta_late, double lambda,
                         const DetectorModel& det1, const DetectorModel& det2,
                         double mode_separation, const SlotContext& ctx,
                         RngStream& rng) {
  std::array<int, 4> counts{0, 0, 0, 0};
  if (k_a + k_b > 0) {
    const auto dist = fock_cell_distribution(k_a, k_b, alpha_early, alpha_late,
                                             beta_early, beta_late, lambda);
    double u = rng.uniform();
    counts = dist.back().cells;  // rounding remainder lands on the last entry
    for (const auto& o : dist) {
      u -= o.prob;
      if (u < 0.0) {
        counts = o.cells;
        break;
      }
    }
  }
  return sample_cell_clicks(counts, det1, det2, mode_separation, ctx, rng);
}

}  // namespace mdiqkd
