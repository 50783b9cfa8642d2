#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "mdiqkd/bsm.hpp"
#include "mdiqkd/rng.hpp"
#include "mdiqkd/runner.hpp"

namespace mdiqkd {
namespace {

constexpr int kBlockSlots = 512;      // slots per visit of the cyclic schedule
constexpr int kMaxCachedPhotons = 8;  // per-side cache bound; higher counts are rare

// RngStream::poisson with the exponential hoisted out of the slot loop.
// Draw-for-draw identical to the library sampler.
inline int poisson_hoisted(RngStream& rng, double mean, double p0) {
  if (mean <= 0.0) return 0;
  const double u = rng.uniform();
  double p = p0;
  double cdf = p;
  int k = 0;
  while (u >= cdf && k < 200) {
    ++k;
    p *= mean / k;
    cdf += p;
  }
  return k;
}

struct ScheduleCell {
  Basis basis = Basis::Z;
  IntensityClass ia = IntensityClass::Signal;
  IntensityClass ib = IntensityClass::Signal;
};

std::vector<ScheduleCell> build_schedule(bool signal_only) {
  std::vector<ScheduleCell> cells;
  for (Basis basis : {Basis::Z, Basis::X}) {
    if (signal_only) {
      cells.push_back({basis, IntensityClass::Signal, IntensityClass::Signal});
      continue;
    }
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b)
        cells.push_back({basis, static_cast<IntensityClass>(a),
                         static_cast<IntensityClass>(b)});
  }
  return cells;
}

// Joint photon distribution over the four detector bins for one
// (state_a, state_b, k_a, k_b) combination, stored as a cumulative table.
// State index = basis * 2 + bit.
struct CachedDist {
  bool ready = false;
  std::vector<double> cum;
  std::vector<std::array<int, 4>> counts;
};

struct TimelineOutput {
  TallyCounters counters;
  std::array<long long, 2> singles{0, 0};
  long long slots = 0;
  std::string error;  // non-empty when the timeline aborted
};

/// One independent acquisition segment: its own RNG streams, detector
/// history and link state, simulated slot by slot from t = 0.
class Timeline {
 public:
  Timeline(const RunConfig& cfg, double loss_db, const IntensityLevels& levels,
           int point_index, int timeline_index, long long pairs_per_cell)
      : cfg_(cfg),
        levels_(levels),
        rng_(derive_stream_seed(cfg.seed, point_index, 2 * timeline_index)),
        drift_rng_(
            derive_stream_seed(cfg.seed, point_index, 2 * timeline_index + 1)),
        pairs_per_cell_(pairs_per_cell) {
    channel_.length_km = 0.0;
    channel_.extra_loss_db = loss_db / 2.0;  // total loss split across the arms
    channel_.drift_enabled = cfg.drift_enabled;
    t_arm_ = transmittance(channel_);
    clock_ = effective_clock(cfg.qubit_rate_hz, cfg.detector);
    slot_dt_ = 1.0 / clock_;
    sep_ = cfg.states.mode_separation;
    quota_cap_ = cfg.detector.max_count_rate * kCountQuotaWindowSeconds;
    ap_span_ = cfg.detector.afterpulse_span;
    no_afterpulse_ = cfg.detector.afterpulse_prob_per_ns == 0.0 ||
                     cfg.detector.afterpulse_span == 0.0;
    state_ = cfg.drift_enabled ? cfg.drift.initial_state() : reference_state(cfg);

    for (int side = 0; side < 2; ++side)
      for (int cls = 0; cls < 3; ++cls) {
        mu_[side][cls] = levels_.value(static_cast<Side>(side),
                                       static_cast<IntensityClass>(cls));
        p0_[side][cls] = std::exp(-mu_[side][cls]);
      }

    const auto dark =
        detect_probabilities(BinMeans{}, cfg.detector, cfg.detector, sep_, {});
    double c = 0.0;
    for (int i = 0; i < 16; ++i) {
      c += dark[i];
      dark_cum_[i] = c;
    }

    cache_.resize(4 * 4 * (kMaxCachedPhotons + 1) * (kMaxCachedPhotons + 1));
    refresh_link();
  }

  TimelineOutput run() {
    TimelineOutput out;
    try {
      if (cfg_.random_schedule)
        run_random();
      else
        run_blocks();
      out.counters = counters_;
      out.singles = singles_;
      out.slots = slot_;
    } catch (const std::exception& e) {
      out.error = "slot " + std::to_string(slot_) + ": " + e.what();
    }
    return out;
  }

 private:
  static int state_index(Basis basis, int bit) {
    return static_cast<int>(basis) * 2 + bit;
  }

  void run_blocks() {
    const std::vector<ScheduleCell> cells = build_schedule(cfg_.signal_only);
    std::vector<long long> remaining(cells.size(), pairs_per_cell_);
    bool more = pairs_per_cell_ > 0;
    while (more) {
      more = false;
      for (std::size_t i = 0; i < cells.size(); ++i) {
        if (remaining[i] <= 0) continue;
        const long long n = std::min<long long>(kBlockSlots, remaining[i]);
        run_cell_block(cells[i], n);
        remaining[i] -= n;
        if (remaining[i] > 0) more = true;
        advance_environment();
      }
    }
  }

  void run_cell_block(const ScheduleCell& cell, long long n) {
    CellTally* tally = &counters_.at(cell.basis, cell.ia, cell.ib);
    if (cfg_.phase_randomized) {
      for (long long i = 0; i < n; ++i)
        slot_fock(cell.basis, cell.basis, cell.ia, cell.ib, tally, -1, -1);
    } else {
      for (long long i = 0; i < n; ++i)
        slot_coherent(cell.basis, cell.basis, cell.ia, cell.ib, tally, -1, -1);
    }
  }

  void run_random() {
    const long long cells = cfg_.signal_only ? 2 : 18;
    long long left = pairs_per_cell_ * cells;
    while (left > 0) {
      const long long n = std::min<long long>(kBlockSlots, left);
      for (long long i = 0; i < n; ++i) random_slot();
      left -= n;
      advance_environment();
    }
  }

  void random_slot() {
    const std::uint64_t r = rng_.raw();
    const Basis ba = (r & 1u) ? Basis::X : Basis::Z;
    const Basis bb = (r & 2u) ? Basis::X : Basis::Z;
    const int bit_a = static_cast<int>((r >> 2) & 1u);
    const int bit_b = static_cast<int>((r >> 3) & 1u);
    IntensityClass ia = IntensityClass::Signal;
    IntensityClass ib = IntensityClass::Signal;
    if (!cfg_.signal_only) {
      ia = static_cast<IntensityClass>(rng_.below(3));
      ib = static_cast<IntensityClass>(rng_.below(3));
    }
    if (cfg_.phase_randomized)
      slot_fock(ba, bb, ia, ib, nullptr, bit_a, bit_b);
    else
      slot_coherent(ba, bb, ia, ib, nullptr, bit_a, bit_b);
  }

  // Phase-randomized emission: Poisson photon-number tag at the source,
  // binomial channel thinning, exact interference of the arriving numbers.
  void slot_fock(Basis ba, Basis bb, IntensityClass ia, IntensityClass ib,
                 CellTally* tally, int bit_a, int bit_b) {
    const double t = static_cast<double>(slot_) * slot_dt_;
    ++slot_;
    const int ia_i = static_cast<int>(ia);
    const int ib_i = static_cast<int>(ib);
    const int tag_a = poisson_hoisted(rng_, mu_[0][ia_i], p0_[0][ia_i]);
    const int tag_b = poisson_hoisted(rng_, mu_[1][ib_i], p0_[1][ib_i]);
    if (tally) {
      ++tally->sent;
      if (tag_a == 1 && tag_b == 1) ++tally->sent_11;
    } else {
      counters_.record_sent(ba, bb, ia, ib, tag_a, tag_b);
    }
    const int ka = tag_a > 0 ? rng_.binomial(tag_a, t_arm_) : 0;
    const int kb = tag_b > 0 ? rng_.binomial(tag_b, t_arm_) : 0;
    const bool c1 = clean(tl_[0], t);
    const bool c2 = clean(tl_[1], t);
    ClickPattern pat;
    if (ka == 0 && kb == 0) {
      if (c1 && c2) {
        // no photons, undisturbed detectors: one draw against the
        // precomputed dark-pattern table
        const double u = rng_.uniform();
        unsigned bits = 0;
        while (bits < 15u && u >= dark_cum_[bits]) ++bits;
        pat.bits = bits;
      } else {
        pat = sample_cell_clicks({0, 0, 0, 0}, cfg_.detector, cfg_.detector,
                                 sep_, dirty_ctx(t), rng_);
      }
    } else {
      if (bit_a < 0) {
        const std::uint64_t rb = rng_.raw();
        bit_a = static_cast<int>(rb & 1u);
        bit_b = static_cast<int>((rb >> 1) & 1u);
      }
      const int sa = state_index(ba, bit_a);
      const int sb = state_index(bb, bit_b);
      CachedDist scratch;
      const CachedDist* d;
      if (ka <= kMaxCachedPhotons && kb <= kMaxCachedPhotons) {
        d = &cached_dist(sa, sb, ka, kb);
      } else {
        build_dist(scratch, sa, sb, ka, kb);
        d = &scratch;
      }
      const double u = rng_.uniform();
      std::size_t i = 0;
      while (i + 1 < d->cum.size() && u >= d->cum[i]) ++i;
      const SlotContext ctx = (c1 && c2) ? SlotContext{} : dirty_ctx(t);
      pat = sample_cell_clicks(d->counts[i], cfg_.detector, cfg_.detector, sep_,
                               ctx, rng_);
    }
    finish_slot(t, pat, ba, bb, bit_a, bit_b, ia, ib, tag_a, tag_b, tally);
  }

  // Phase-locked emission: coherent amplitudes interfere at a fixed relative
  // phase; photon numbers are never resolved, so no tags.
  void slot_coherent(Basis ba, Basis bb, IntensityClass ia, IntensityClass ib,
                     CellTally* tally, int bit_a, int bit_b) {
    const double t = static_cast<double>(slot_) * slot_dt_;
    ++slot_;
    if (tally) {
      ++tally->sent;
    } else {
      counters_.record_sent(ba, bb, ia, ib);
    }
    if (bit_a < 0) {
      const std::uint64_t rb = rng_.raw();
      bit_a = static_cast<int>(rb & 1u);
      bit_b = static_cast<int>((rb >> 1) & 1u);
    }
    PulsePair pa = base_[0][state_index(ba, bit_a)];
    PulsePair pb = base_[1][state_index(bb, bit_b)];
    const double wa = std::sqrt(mu_[0][static_cast<int>(ia)]);
    const double wb = std::sqrt(mu_[1][static_cast<int>(ib)]);
    pa.amp_early *= wa;
    pa.amp_late *= wa;
    pb.amp_early *= wb;
    pb.amp_late *= wb;
    const bool c1 = clean(tl_[0], t);
    const bool c2 = clean(tl_[1], t);
    const SlotContext ctx = (c1 && c2) ? SlotContext{} : dirty_ctx(t);
    const ClickPattern pat = detect(interfere(pa, pb, lambda_, 0.0),
                                    cfg_.detector, cfg_.detector, sep_, ctx, rng_);
    finish_slot(t, pat, ba, bb, bit_a, bit_b, ia, ib, -1, -1, tally);
  }

  void finish_slot(double t, ClickPattern pat, Basis ba, Basis bb, int bit_a,
                   int bit_b, IntensityClass ia, IntensityClass ib, int tag_a,
                   int tag_b, CellTally* tally) {
    if (pat.bits == 0) return;
    const DetectorModel& det = cfg_.detector;
    if (pat.d1_early()) {
      tl_[0].record_click(t, det);
      ++singles_[0];
    }
    if (pat.d1_late()) {
      tl_[0].record_click(t + sep_, det);
      ++singles_[0];
    }
    if (pat.d2_early()) {
      tl_[1].record_click(t, det);
      ++singles_[1];
    }
    if (pat.d2_late()) {
      tl_[1].record_click(t + sep_, det);
      ++singles_[1];
    }
    const BellOutcome outcome = classify(pat);
    if (outcome == BellOutcome::None) return;
    if (bit_a < 0) {
      const std::uint64_t rb = rng_.raw();
      bit_a = static_cast<int>(rb & 1u);
      bit_b = static_cast<int>((rb >> 1) & 1u);
    }
    DetectionEvent ev;
    ev.basis_a = ba;
    ev.basis_b = bb;
    ev.bit_a = bit_a;
    ev.bit_b = bit_b;
    ev.intensity_a = ia;
    ev.intensity_b = ib;
    ev.outcome = outcome;
    ev.tag_a = tag_a;
    ev.tag_b = tag_b;
    const std::optional<SiftedRecord> rec = sift(ev, cfg_.use_psi_plus);
    if (!rec) return;
    if (tally) {
      ++tally->projections;
      if (rec->is_error()) ++tally->errors;
      if (tag_a == 1 && tag_b == 1) {
        ++tally->projections_11;
        if (rec->is_error()) ++tally->errors_11;
      }
    } else {
      counters_.record_projection(*rec);
    }
  }

  // Live with no elevated dark level; mirrors DetectorTimeline::live plus
  // extra_dark == 0 without the function-call overhead.
  bool clean(const DetectorTimeline& tl, double t) const {
    if (t < tl.dead_until) return false;
    if (!no_afterpulse_ && t - tl.last_click < ap_span_) return false;
    if (static_cast<double>(tl.window_count) >= quota_cap_ &&
        t < tl.window_start + kCountQuotaWindowSeconds)
      return false;
    return true;
  }

  SlotContext dirty_ctx(double t) const {
    SlotContext ctx;
    ctx.live = {tl_[0].live(t, cfg_.detector), tl_[1].live(t, cfg_.detector)};
    ctx.extra_dark = {tl_[0].extra_dark(t, cfg_.detector),
                      tl_[1].extra_dark(t, cfg_.detector)};
    return ctx;
  }

  const CachedDist& cached_dist(int sa, int sb, int ka, int kb) {
    CachedDist& d =
        cache_[((sa * 4 + sb) * (kMaxCachedPhotons + 1) + ka) *
                   (kMaxCachedPhotons + 1) +
               kb];
    if (!d.ready) build_dist(d, sa, sb, ka, kb);
    return d;
  }

  void build_dist(CachedDist& d, int sa, int sb, int ka, int kb) {
    const PulsePair& a = base_[0][sa];
    const PulsePair& b = base_[1][sb];
    const std::vector<FockOutcome> outcomes = fock_cell_distribution(
        ka, kb, a.amp_early, a.amp_late, b.amp_early, b.amp_late, lambda_);
    d.cum.clear();
    d.counts.clear();
    d.cum.reserve(outcomes.size());
    d.counts.reserve(outcomes.size());
    double c = 0.0;
    for (const FockOutcome& o : outcomes) {
      c += o.prob;
      d.cum.push_back(c);
      d.counts.push_back(o.cells);
    }
    d.ready = true;
  }

  // Re-derives the channel-stamped reference pulses and the mode overlap
  // after any link-state change. A changed overlap invalidates the cache.
  void refresh_link() {
    for (int s = 0; s < 4; ++s) {
      const Basis basis = s < 2 ? Basis::Z : Basis::X;
      const int bit = s & 1;
      const IntensitySetting unit{IntensityClass::Signal, 1.0};
      base_[0][s] = apply_channel(prepare_pulse_pair(basis, bit, unit, cfg_.states),
                                  channel_, state_, Side::Alice);
      base_[1][s] = apply_channel(prepare_pulse_pair(basis, bit, unit, cfg_.states),
                                  channel_, state_, Side::Bob);
    }
    const double lam =
        mode_overlap(base_[0][0], base_[1][0], cfg_.states.mode_width_fwhm);
    if (lam != lambda_) {
      lambda_ = lam;
      for (CachedDist& d : cache_) d.ready = false;
    }
  }

  static bool crossed(double t0, double t1, double interval) {
    if (interval <= 0.0) return false;
    return std::floor(t1 / interval) > std::floor(t0 / interval);
  }

  void advance_environment() {
    if (!cfg_.drift_enabled) return;
    const double t_now = static_cast<double>(slot_) * slot_dt_;
    const FeedbackConfig& fb = cfg_.feedback;
    if (fb.temporal_enabled && crossed(t_env_, t_now, fb.temporal_interval_s)) {
      const double est = measure_arrival_difference(
          state_, cfg_.detector, fb, fb.temporal_samples, drift_rng_);
      state_ = temporal_feedback(est, state_, fb);
    }
    if (fb.polarization_enabled && crossed(t_env_, t_now, fb.pol_interval_s))
      state_ = polarization_feedback(state_, fb.pol_residual_overlap);
    if (fb.frequency_enabled && !fb.single_laser && crossed(t_env_, t_now, 1.0))
      state_ = frequency_feedback(state_, fb, drift_rng_);
    cfg_.drift.step(state_, t_env_, t_now - t_env_, drift_rng_);
    t_env_ = t_now;
    refresh_link();
  }

  const RunConfig& cfg_;
  IntensityLevels levels_;
  RngStream rng_;
  RngStream drift_rng_;
  long long pairs_per_cell_ = 0;

  ChannelConfig channel_;
  double t_arm_ = 1.0;
  double clock_ = 1.0;
  double slot_dt_ = 1.0;
  double sep_ = 2.5e-9;
  double quota_cap_ = 0.0;
  double ap_span_ = 0.0;
  bool no_afterpulse_ = true;

  DriftState state_;
  double t_env_ = 0.0;
  double lambda_ = -1.0;
  std::array<std::array<PulsePair, 4>, 2> base_{};
  std::array<std::array<double, 3>, 2> mu_{};
  std::array<std::array<double, 3>, 2> p0_{};
  std::array<double, 16> dark_cum_{};
  std::vector<CachedDist> cache_;

  std::array<DetectorTimeline, 2> tl_{};
  TallyCounters counters_;
  std::array<long long, 2> singles_{0, 0};
  long long slot_ = 0;
};

}  // namespace

PointResult mc_point(const RunConfig& cfg, double loss_db, int point_index,
                     const IntensityLevels& levels) {
  const int n_timelines = cfg.mc_timelines;
  const long long base = cfg.pairs_per_cell / n_timelines;
  const long long rem = cfg.pairs_per_cell % n_timelines;

  std::vector<TimelineOutput> outs(n_timelines);
  auto run_one = [&](int k) {
    const long long quota = base + (k < rem ? 1 : 0);
    Timeline timeline(cfg, loss_db, levels, point_index, k, quota);
    outs[k] = timeline.run();
  };

  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  const int workers = static_cast<int>(
      std::min<unsigned>(hw, static_cast<unsigned>(n_timelines)));
  if (workers <= 1) {
    for (int k = 0; k < n_timelines; ++k) run_one(k);
  } else {
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (int k = next.fetch_add(1); k < n_timelines; k = next.fetch_add(1))
          run_one(k);
      });
    for (std::thread& th : pool) th.join();
  }

  TallyCounters counters;
  std::array<long long, 2> singles{0, 0};
  long long slots = 0;
  for (int k = 0; k < n_timelines; ++k) {
    const TimelineOutput& o = outs[k];
    if (!o.error.empty())
      throw std::runtime_error("timeline " + std::to_string(k) + ", " + o.error);
    counters.merge(o.counters);
    singles[0] += o.singles[0];
    singles[1] += o.singles[1];
    slots += o.slots;
  }

  const double clock = effective_clock(cfg.qubit_rate_hz, cfg.detector);
  PointResult r;
  r.loss_db = loss_db;
  r.config_id = cfg.config_id;
  r.levels = levels;

  const CellRates zss =
      counters.rates(Basis::Z, IntensityClass::Signal, IntensityClass::Signal);
  const CellRates xss =
      counters.rates(Basis::X, IntensityClass::Signal, IntensityClass::Signal);
  r.q_z = zss.q;
  r.e_z = zss.e;
  r.q_x = xss.q;
  r.e_x = xss.e;
  const Rates11 z11 = counters.rates_11(Basis::Z, IntensityClass::Signal,
                                        IntensityClass::Signal);
  const Rates11 x11 = counters.rates_11(Basis::X, IntensityClass::Signal,
                                        IntensityClass::Signal);
  if (z11.defined) r.q11_true = z11.q11;
  if (x11.defined) r.e11_true = x11.e11;

  if (cfg.signal_only) {
    r.s_per_gate = key_rate_basic(r.q_z, r.e_x, r.e_z, cfg.f_ec);
  } else {
    const DecoyEstimate est = decoy_estimate(counters, levels);
    r.q11_lower = est.q11_z_lower;
    r.e11_upper = est.e11_x_upper;
    r.decoy_valid = est.valid;
    r.decoy_message = est.message;
    KeyRateInputs in;
    in.q11_z_lower = est.q11_z_lower;
    in.e11_x_upper = est.e11_x_upper;
    in.q_musigma_z = r.q_z;
    in.e_musigma_z = r.e_z;
    in.f = cfg.f_ec;
    r.s_per_gate = key_rate_decoy(in);

    // Counting-statistics propagation; the decoy-decoy cells dominate the
    // bound uncertainties, the signal cell the measured-rate ones.
    const CellTally& zdd =
        counters.at(Basis::Z, IntensityClass::Decoy, IntensityClass::Decoy);
    const CellTally& xdd =
        counters.at(Basis::X, IntensityClass::Decoy, IntensityClass::Decoy);
    const CellTally& zs =
        counters.at(Basis::Z, IntensityClass::Signal, IntensityClass::Signal);
    const double n_zdd = static_cast<double>(std::max<long long>(1, zdd.projections));
    const double n_xdd = static_cast<double>(std::max<long long>(1, xdd.errors));
    const double n_zs = static_cast<double>(std::max<long long>(1, zs.projections));
    const double sig_q11 = est.q11_z_lower / std::sqrt(n_zdd);
    const double sig_e11 = est.e11_x_upper / std::sqrt(n_xdd);
    const double sig_qz =
        std::sqrt(n_zs) / static_cast<double>(std::max<long long>(1, zs.sent));
    const double sig_ez = std::sqrt(r.e_z * (1.0 - r.e_z) / n_zs);
    r.err_s = key_rate_decoy_sigma(in, sig_q11, sig_e11, sig_qz, sig_ez);
  }

  // Dead time and the count quota act inside the simulation, so the only
  // throughput derating left is the feedback duty cycle.
  r.s_per_sec = bits_per_second(std::max(0.0, r.s_per_gate), clock,
                                cfg.feedback.duty_cycle(), 1.0);
  r.singles_clicks = singles;
  r.simulated_seconds = static_cast<double>(slots) / clock;
  if (r.simulated_seconds > 0.0)
    r.singles_rate_hz = {static_cast<double>(singles[0]) / r.simulated_seconds,
                         static_cast<double>(singles[1]) / r.simulated_seconds};
  r.counters = counters;
  return r;
}

}  // namespace mdiqkd
