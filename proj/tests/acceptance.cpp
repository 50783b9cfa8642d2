// Acceptance gate for the simulator: eight end-to-end criteria, each
// printed as a single [PASS]/[FAIL] line. Run `acceptance N` for one
// criterion or `acceptance all` for the full gate.
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstring>
#include <string>
#include <vector>

#include "mdiqkd/bsm.hpp"
#include "mdiqkd/postprocess.hpp"
#include "mdiqkd/runner.hpp"

using namespace mdiqkd;

namespace {

struct Checker {
  int failures = 0;
  void require(bool ok, const std::string& what) {
    if (!ok) {
      ++failures;
      std::printf("  [FAIL] %s\n", what.c_str());
    }
  }
};

void report(int n, bool ok, const std::string& summary) {
  std::printf("[%s] criterion %d: %s\n", ok ? "PASS" : "FAIL", n,
              summary.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

// Criterion 1: the nanowire configuration still produces key through a
// 60 dB channel under optimized intensities.
bool criterion_1() {
  Checker c;
  const RunConfig cfg = preset(4);
  const PointResult r = run_point(cfg, 60.0);
  c.require(r.s_per_gate > 0.0, "per-gate rate must be positive at 60 dB");
  c.require(r.decoy_valid, "decoy bounds must be usable at 60 dB");
  const bool ok = c.failures == 0;
  report(1, ok, fmt("60 dB loss gives S_per_gate = %.3e > 0", r.s_per_gate));
  return ok;
}

// Criterion 2: absolute throughput anchor. The nanowire configuration at
// 16 dB with a 20 MHz clock lands within a factor of three of 623 bits/s.
bool criterion_2() {
  Checker c;
  RunConfig cfg = preset(4);
  cfg.qubit_rate_hz = 20e6;
  const PointResult r = run_point(cfg, 16.0);
  c.require(r.s_per_sec >= 623.0 / 3.0, "throughput below a third of anchor");
  c.require(r.s_per_sec <= 623.0 * 3.0, "throughput above three times anchor");
  const bool ok = c.failures == 0;
  report(2, ok,
         fmt("16 dB at 20 MHz gives %.0f bits/s (anchor 623, factor %.2f)",
             r.s_per_sec, r.s_per_sec > 623.0 ? r.s_per_sec / 623.0
                                              : 623.0 / r.s_per_sec));
  return ok;
}

// Criterion 3: zero-key cutoff losses sit in the expected band for each
// detector family and are strictly ordered by detector quality.
bool criterion_3() {
  Checker c;
  auto first_nonpositive = [](const RunConfig& cfg, double lo, double hi) {
    for (double loss = lo; loss <= hi + 0.5; loss += 1.0)
      if (!(run_point(cfg, loss).s_per_gate > 0.0)) return loss;
    return hi + 1.0;
  };

  const double cut_201 = first_nonpositive(preset(2), 12.0, 22.0);
  c.require(run_point(preset(2), 12.0).s_per_gate > 0.0,
            "id201 must have key at 12 dB");
  c.require(cut_201 > 12.0 && cut_201 <= 22.0,
            fmt("id201 cutoff %.0f dB outside [12, 22]", cut_201));

  const double cut_210 = first_nonpositive(preset(3), 20.0, 30.0);
  c.require(run_point(preset(3), 20.0).s_per_gate > 0.0,
            "id210 must have key at 20 dB");
  c.require(cut_210 > 20.0 && cut_210 <= 30.0,
            fmt("id210 cutoff %.0f dB outside [20, 30]", cut_210));

  const double snspd_60 = run_point(preset(4), 60.0).s_per_gate;
  c.require(snspd_60 > 0.0, "nanowire cutoff must exceed 60 dB");

  c.require(cut_201 < cut_210 && cut_210 < 60.0,
            "cutoffs must be strictly ordered id201 < id210 < nanowire");
  const bool ok = c.failures == 0;
  report(3, ok,
         fmt("cutoffs: id201 %.0f dB in [12,22], id210 %.0f dB in [20,30], "
             "nanowire > 60 dB, strictly ordered",
             cut_201, cut_210));
  return ok;
}

// Criterion 4: with ideal states, perfect indistinguishability and noiseless
// detectors, the coherent-pulse X error floor converges to 1/4 while the
// tagged single-photon X error stays at zero; Monte Carlo and the
// closed-form model agree.
bool criterion_4() {
  Checker c;
  RunConfig cfg;
  cfg.detector = DetectorModel::ideal();
  cfg.states = StateParams::ideal();
  cfg.feedback.mode_width_fwhm = cfg.states.mode_width_fwhm;
  cfg.feedback.pol_residual_overlap = 1.0;  // lambda = 1 at the reference
  cfg.signal_only = true;
  cfg.optimize = false;
  cfg.levels = IntensityLevels{0.3, 0.3, 0.1};
  cfg.qubit_rate_hz = 1e6;
  cfg.mode = RunMode::MonteCarlo;
  cfg.pairs_per_cell = 4000000;
  cfg.mc_timelines = 4;
  cfg.seed = 3;

  const PointResult mc = run_point(cfg, 10.0);
  RunConfig acfg = cfg;
  acfg.mode = RunMode::Analytic;
  const PointResult an = run_point(acfg, 10.0);

  c.require(std::abs(mc.e_x - 0.25) <= 0.02,
            fmt("Monte Carlo e_x = %.4f outside 0.25 +/- 0.02", mc.e_x));
  c.require(std::abs(an.e_x - 0.25) <= 0.02,
            fmt("analytic e_x = %.4f outside 0.25 +/- 0.02", an.e_x));
  c.require(mc.e11_true <= 0.01,
            fmt("tagged single-photon X error %.4f above 0.01", mc.e11_true));
  c.require(an.e11_true <= 0.01,
            fmt("analytic single-photon X error %.4f above 0.01", an.e11_true));
  c.require(std::abs(mc.e_x - an.e_x) <= 0.01,
            "Monte Carlo and analytic e_x must agree within 0.01");
  const bool ok = c.failures == 0;
  report(4, ok,
         fmt("e_x floor %.4f (MC) / %.4f (analytic), tagged e11_x %.4f",
             mc.e_x, an.e_x, mc.e11_true));
  return ok;
}

// Criterion 5: tagged (1,1)-photon events with perfect overlap and no noise
// never click the same time bin on both detectors.
bool criterion_5() {
  Checker c;
  const StateParams params = StateParams::ideal();
  const IntensitySetting unit{IntensityClass::Signal, 1.0};
  PulsePair states[4];
  states[0] = prepare_pulse_pair(Basis::Z, 0, unit, params);
  states[1] = prepare_pulse_pair(Basis::Z, 1, unit, params);
  states[2] = prepare_pulse_pair(Basis::X, 0, unit, params);
  states[3] = prepare_pulse_pair(Basis::X, 1, unit, params);

  const DetectorModel det = DetectorModel::ideal();
  const SlotContext ctx;
  RngStream rng(777);
  const long long trials = 1000000;
  long long same_bin = 0;
  long long bell = 0;
  for (long long i = 0; i < trials; ++i) {
    const PulsePair& a = states[rng.below(4)];
    const PulsePair& b = states[rng.below(4)];
    const ClickPattern p =
        fock_detect(1, 1, a.amp_early, a.amp_late, b.amp_early, b.amp_late,
                    1.0, det, det, params.mode_separation, ctx, rng);
    if ((p.d1_early() && p.d2_early()) || (p.d1_late() && p.d2_late()))
      ++same_bin;
    if (classify(p) != BellOutcome::None) ++bell;
  }
  c.require(same_bin == 0,
            fmt("%lld same-bin cross-detector coincidences (expected 0)",
                same_bin));
  c.require(bell > trials / 3, "projection statistics implausibly low");
  const bool ok = c.failures == 0;
  report(5, ok,
         fmt("%lld trials, %lld same-bin coincidences, %lld projections",
             trials, same_bin, bell));
  return ok;
}

// Criterion 6: the decoy bounds bracket the tagged single-photon truth in at
// least 99 of 100 independent Monte Carlo runs of 1e6 pairs per cell.
bool criterion_6() {
  Checker c;
  RunConfig cfg;
  cfg.detector = DetectorModel::snspd();
  cfg.states = StateParams::awg();
  cfg.feedback.mode_width_fwhm = cfg.states.mode_width_fwhm;
  cfg.feedback.pol_residual_overlap = 0.95;
  cfg.mode = RunMode::MonteCarlo;
  cfg.optimize = false;
  cfg.levels = IntensityLevels{0.6, 0.6, 0.25};
  cfg.qubit_rate_hz = 1e6;
  cfg.pairs_per_cell = 1000000;

  int good = 0;
  for (int seed = 1; seed <= 100; ++seed) {
    cfg.seed = static_cast<std::uint64_t>(seed);
    const PointResult r = run_point(cfg, 8.0);
    const bool bracket =
        r.q11_lower <= r.q11_true && r.e11_upper >= r.e11_true;
    if (bracket) ++good;
  }
  c.require(good >= 99, fmt("bracketing held in only %d/100 runs", good));
  const bool ok = c.failures == 0;
  report(6, ok, fmt("bracketing held in %d/100 seeded runs", good));
  return ok;
}

// Criterion 7: under the drifting-environment model the stabilization loops
// hold the key rate within 10% of the static link, and with the loops off
// the rate collapses to zero inside one simulated hour.
bool criterion_7() {
  Checker c;
  RunConfig cfg;
  cfg.detector = DetectorModel::snspd();
  cfg.states = StateParams::awg();
  cfg.feedback.mode_width_fwhm = cfg.states.mode_width_fwhm;
  cfg.feedback.pol_interval_s = 5.0;
  cfg.feedback.temporal_deadband_s = 10e-12;
  cfg.feedback.temporal_samples = 1024;
  cfg.qubit_rate_hz = 1e6;
  cfg.seed = 7;

  const double loss = 10.0;
  const OptimizeResult best = optimize_point(cfg, loss);
  cfg.optimize = false;
  cfg.levels = best.levels;

  const PointResult still = run_point(cfg, loss);
  c.require(still.s_per_gate > 0.0, "static link must produce key");

  cfg.drift = DriftModel::deployed();
  cfg.drift_enabled = true;

  const TimelineResult on = run_drift_timeline(cfg, loss, true, 3600.0);
  const double ratio = on.averaged.s_per_gate / still.s_per_gate;
  c.require(ratio >= 0.9 && ratio <= 1.1,
            fmt("stabilized/static rate ratio %.4f outside [0.9, 1.1]", ratio));

  const TimelineResult off = run_drift_timeline(cfg, loss, false, 3600.0);
  double die_time = -1.0;
  for (const TimelineSample& s : off.samples)
    if (s.s_per_gate <= 0.0) {
      die_time = s.t;
      break;
    }
  c.require(die_time >= 0.0, "unstabilized rate never reached zero");
  c.require(off.s_per_gate_final <= 0.0,
            "unstabilized rate must end the hour at zero");
  const bool ok = c.failures == 0;
  report(7, ok,
         fmt("loops on: %.1f%% of static rate; loops off: dead after %.0f s",
             100.0 * ratio, die_time));
  return ok;
}

// Criterion 8: entropy landmarks are exact, the two key-rate formulas match
// independently computed references to 1e-12, and simulated click rates
// respect both the dead-time ceiling and the configured count caps.
bool criterion_8() {
  Checker c;
  c.require(binary_entropy(0.5) == 1.0, "h2(1/2) must equal 1 exactly");
  c.require(binary_entropy(0.0) == 0.0, "h2(0) must equal 0 exactly");

  const double basic = key_rate_basic(0.01, 0.02, 0.02, 1.14);
  c.require(std::abs(basic - 0.006973172389605038) <= 1e-12,
            fmt("raw key rate %.18f off its reference", basic));
  KeyRateInputs in;
  in.q11_z_lower = 0.005;
  in.e11_x_upper = 0.02;
  in.q_musigma_z = 0.01;
  in.e_musigma_z = 0.01;
  in.f = 1.16;
  const double decoy = key_rate_decoy(in);
  c.require(std::abs(decoy - 0.003355596910898327) <= 1e-12,
            fmt("decoy key rate %.18f off its reference", decoy));

  // Count-rate caps, measured over long Monte Carlo spans under heavy load.
  auto max_singles_rate = [](DetectorModel det, double qubit_rate) {
    RunConfig cfg;
    cfg.detector = det;
    cfg.states = StateParams::awg();
    cfg.feedback.mode_width_fwhm = cfg.states.mode_width_fwhm;
    cfg.mode = RunMode::MonteCarlo;
    cfg.optimize = false;
    cfg.levels = IntensityLevels{1.2, 1.2, 0.3};
    cfg.qubit_rate_hz = qubit_rate;
    cfg.pairs_per_cell = 1000000;
    cfg.mc_timelines = 1;
    cfg.seed = 1;
    const PointResult r = run_point(cfg, 0.0);
    return std::max(r.singles_rate_hz[0], r.singles_rate_hz[1]);
  };
  auto cap_of = [](const DetectorModel& det) {
    double cap = det.max_count_rate;
    if (det.dead_time > 0.0) cap = std::min(cap, 1.0 / det.dead_time);
    return cap;
  };

  struct CapCase {
    const char* name;
    DetectorModel det;
    double qubit_rate;
  };
  DetectorModel slow = DetectorModel::ideal();
  slow.dead_time = 1e-6;
  const CapCase cases[] = {
      {"nanowire", DetectorModel::snspd(), 100e6},
      {"id210", DetectorModel::id210(), 25e6},
      {"id201", DetectorModel::id201(), 25e6},
      {"1 us dead time", slow, 50e6},
  };
  std::string rates;
  for (const CapCase& cc : cases) {
    const double rate = max_singles_rate(cc.det, cc.qubit_rate);
    const double cap = cap_of(cc.det);
    c.require(rate <= cap * 1.01,
              fmt("%s singles rate %.3e exceeds cap %.3e", cc.name, rate, cap));
    c.require(rate > 0.0, fmt("%s saw no clicks under bright load", cc.name));
    rates += fmt(" %s %.2e<=%.1e", cc.name, rate, cap);
  }
  const bool ok = c.failures == 0;
  report(8, ok, fmt("entropy and rate references exact;%s", rates.c_str()));
  return ok;
}

}  // namespace

int main(int argc, char** argv) {
  const std::string which = argc > 1 ? argv[1] : "all";
  bool (*const criteria[8])() = {criterion_1, criterion_2, criterion_3,
                                 criterion_4, criterion_5, criterion_6,
                                 criterion_7, criterion_8};
  if (which == "all") {
    bool ok = true;
    for (auto* fn : criteria) ok = fn() && ok;
    return ok ? 0 : 1;
  }
  if (which.size() == 1 && which[0] >= '1' && which[0] <= '8')
    return criteria[which[0] - '1']() ? 0 : 1;
  std::fprintf(stderr, "usage: %s [1-8|all]\n", argv[0]);
  return 2;
}
