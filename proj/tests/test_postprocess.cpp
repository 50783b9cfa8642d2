#include <array>
#include <cmath>
#include <stdexcept>

#include "doctest.h"
#include "mdiqkd/postprocess.hpp"

using namespace mdiqkd;

namespace {

double poisson_pmf(int k, double mean) {
  double p = std::exp(-mean);
  for (int i = 1; i <= k; ++i) p *= mean / i;
  return p;
}

// Toy photon-number-resolved link: dark floor plus independent per-photon
// detection on each arm. Everything downstream of the estimator can be
// computed from this in closed form.
double toy_yield(int n, int m) {
  return 1.0 - 0.999 * std::pow(0.9, n) * std::pow(0.92, m);
}

double toy_error(int n, int m) { return 0.02 + 0.28 / (1.0 + n + m); }

// Exact Poisson-mixture gain of the toy link at mean intensities (x, y).
double toy_gain(double x, double y, bool weight_by_error) {
  double s = 0.0;
  for (int n = 0; n < 60; ++n)
    for (int m = 0; m < 60; ++m) {
      double w = poisson_pmf(n, x) * poisson_pmf(m, y) * toy_yield(n, m);
      if (weight_by_error) w *= toy_error(n, m);
      s += w;
    }
  return s;
}

BasisGains toy_gains(const IntensityLevels& lv) {
  const double a[3] = {lv.mu_a, lv.nu, 0.0};
  const double b[3] = {lv.mu_b, lv.nu, 0.0};
  BasisGains g;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      g.q[i][j] = toy_gain(a[i], b[j], false);
      g.e[i][j] = toy_gain(a[i], b[j], true) / g.q[i][j];
    }
  return g;
}

DetectionEvent make_event(Basis basis, int bit_a, int bit_b, BellOutcome out) {
  DetectionEvent ev;
  ev.basis_a = basis;
  ev.basis_b = basis;
  ev.bit_a = bit_a;
  ev.bit_b = bit_b;
  ev.outcome = out;
  return ev;
}

}  // namespace

TEST_CASE("binary entropy hits its landmarks exactly") {
  CHECK(binary_entropy(0.0) == 0.0);
  CHECK(binary_entropy(1.0) == 0.0);
  CHECK(binary_entropy(0.5) == 1.0);

  for (double x : {0.01, 0.11, 0.3, 0.49}) {
    CHECK(binary_entropy(x) ==
          doctest::Approx(binary_entropy(1.0 - x)).epsilon(1e-14));
  }

  CHECK(binary_entropy(0.01) == doctest::Approx(0.08079313589591117).epsilon(1e-12));
  CHECK(binary_entropy(0.02) == doctest::Approx(0.14144054254182065).epsilon(1e-12));
  CHECK(binary_entropy(0.11) == doctest::Approx(0.49991595816452800).epsilon(1e-12));
  CHECK(binary_entropy(0.25) == doctest::Approx(0.81127812445913286).epsilon(1e-12));

  CHECK_THROWS_AS(binary_entropy(-0.1), std::invalid_argument);
  CHECK_THROWS_AS(binary_entropy(1.1), std::invalid_argument);
}

TEST_CASE("raw key rate matches a hand-computed point and clamps at half") {
  CHECK(key_rate_basic(0.01, 0.02, 0.02, 1.14) ==
        doctest::Approx(0.006973172389605038).epsilon(1e-12));

  // Error-correction cost can push the rate negative; that sign must survive.
  CHECK(key_rate_basic(0.01, 0.01, 0.25, 1.16) < 0.0);

  // Phase error at or beyond one half earns zero single-photon credit. The
  // entropy term must not come back down on the far side of the peak.
  const double at_half = key_rate_basic(0.01, 0.5, 0.02, 1.14);
  CHECK(key_rate_basic(0.01, 0.7, 0.02, 1.14) == at_half);
  CHECK(key_rate_basic(0.01, 1.0, 0.02, 1.14) == at_half);
  CHECK(at_half == -0.01 * 1.14 * binary_entropy(0.02));
}

TEST_CASE("decoy key rate matches a hand-computed point and clamps at half") {
  KeyRateInputs in;
  in.q11_z_lower = 0.005;
  in.e11_x_upper = 0.02;
  in.q_musigma_z = 0.01;
  in.e_musigma_z = 0.01;
  in.f = 1.16;
  CHECK(key_rate_decoy(in) ==
        doctest::Approx(0.003355596910898327).epsilon(1e-12));

  KeyRateInputs vacuous = in;
  vacuous.e11_x_upper = 1.0;
  CHECK(key_rate_decoy(vacuous) == -in.q_musigma_z * in.f * binary_entropy(in.e_musigma_z));
  KeyRateInputs half = in;
  half.e11_x_upper = 0.5;
  KeyRateInputs beyond = in;
  beyond.e11_x_upper = 0.73;
  CHECK(key_rate_decoy(beyond) == key_rate_decoy(half));
}

TEST_CASE("decoy key rate uncertainty propagates linearly") {
  KeyRateInputs in;
  in.q11_z_lower = 0.004;
  in.e11_x_upper = 0.03;
  in.q_musigma_z = 0.012;
  in.e_musigma_z = 0.015;
  in.f = 1.16;

  CHECK(key_rate_decoy_sigma(in, 0, 0, 0, 0) == 0.0);

  // A single active input reproduces |partial derivative| times sigma.
  const double s_q11 = key_rate_decoy_sigma(in, 2e-4, 0, 0, 0);
  CHECK(s_q11 == doctest::Approx((1.0 - binary_entropy(0.03)) * 2e-4).epsilon(1e-12));
  const double s_qz = key_rate_decoy_sigma(in, 0, 0, 3e-4, 0);
  CHECK(s_qz == doctest::Approx(in.f * binary_entropy(0.015) * 3e-4).epsilon(1e-12));

  // Doubling one sigma doubles its contribution.
  CHECK(key_rate_decoy_sigma(in, 4e-4, 0, 0, 0) ==
        doctest::Approx(2.0 * s_q11).epsilon(1e-12));

  // Independent contributions add in quadrature.
  const double s_e11 = key_rate_decoy_sigma(in, 0, 1e-3, 0, 0);
  const double s_ez = key_rate_decoy_sigma(in, 0, 0, 0, 5e-4);
  const double all = key_rate_decoy_sigma(in, 2e-4, 1e-3, 3e-4, 5e-4);
  CHECK(all * all == doctest::Approx(s_q11 * s_q11 + s_e11 * s_e11 +
                                     s_qz * s_qz + s_ez * s_ez)
                         .epsilon(1e-12));

  // Past the clamp the phase-error input no longer moves the rate.
  KeyRateInputs clamped = in;
  clamped.e11_x_upper = 0.7;
  CHECK(key_rate_decoy_sigma(clamped, 0, 1e-3, 0, 0) == 0.0);
}

TEST_CASE("sifting keeps matched bases and flips the announced correlation") {
  // Singlet projection anti-correlates both bases: Bob always flips.
  auto z_minus = sift(make_event(Basis::Z, 0, 0, BellOutcome::PsiMinus));
  REQUIRE(z_minus.has_value());
  CHECK(z_minus->alice_bit == 0);
  CHECK(z_minus->bob_bit_after_flip == 1);
  CHECK(z_minus->is_error());
  CHECK_FALSE(sift(make_event(Basis::Z, 0, 1, BellOutcome::PsiMinus))->is_error());
  CHECK(sift(make_event(Basis::X, 1, 1, BellOutcome::PsiMinus))->is_error());
  CHECK_FALSE(sift(make_event(Basis::X, 1, 0, BellOutcome::PsiMinus))->is_error());

  // Triplet projection anti-correlates the time bins only: flip in Z alone.
  CHECK(sift(make_event(Basis::Z, 1, 1, BellOutcome::PsiPlus))->is_error());
  CHECK_FALSE(sift(make_event(Basis::Z, 1, 0, BellOutcome::PsiPlus))->is_error());
  CHECK_FALSE(sift(make_event(Basis::X, 0, 0, BellOutcome::PsiPlus))->is_error());
  CHECK(sift(make_event(Basis::X, 0, 1, BellOutcome::PsiPlus))->is_error());

  // Mismatched bases and inconclusive outcomes are dropped.
  DetectionEvent mixed = make_event(Basis::Z, 0, 0, BellOutcome::PsiMinus);
  mixed.basis_b = Basis::X;
  CHECK_FALSE(sift(mixed).has_value());
  CHECK_FALSE(sift(make_event(Basis::Z, 0, 0, BellOutcome::None)).has_value());

  // Protocols that announce only the singlet drop the triplet entirely.
  CHECK_FALSE(sift(make_event(Basis::Z, 0, 1, BellOutcome::PsiPlus), false).has_value());
  CHECK(sift(make_event(Basis::Z, 0, 1, BellOutcome::PsiMinus), false).has_value());

  // Intensity classes and photon tags ride through untouched.
  DetectionEvent tagged = make_event(Basis::X, 0, 1, BellOutcome::PsiMinus);
  tagged.intensity_a = IntensityClass::Decoy;
  tagged.intensity_b = IntensityClass::Vacuum;
  tagged.tag_a = 1;
  tagged.tag_b = 3;
  auto rec = sift(tagged);
  REQUIRE(rec.has_value());
  CHECK(rec->intensity_a == IntensityClass::Decoy);
  CHECK(rec->intensity_b == IntensityClass::Vacuum);
  CHECK(rec->tag_a == 1);
  CHECK(rec->tag_b == 3);
  CHECK(rec->outcome == BellOutcome::PsiMinus);
}

TEST_CASE("tally counters accumulate, merge, and report rates") {
  TallyCounters t;

  for (int i = 0; i < 10; ++i)
    t.record_sent(Basis::Z, Basis::Z, IntensityClass::Signal,
                  IntensityClass::Signal, 1, 1);
  for (int i = 0; i < 6; ++i)
    t.record_sent(Basis::Z, Basis::Z, IntensityClass::Signal,
                  IntensityClass::Signal, 0, 1);
  // Basis-mismatched pairs belong to no cell.
  t.record_sent(Basis::Z, Basis::X, IntensityClass::Signal,
                IntensityClass::Signal, 1, 1);
  CHECK(t.at(Basis::Z, IntensityClass::Signal, IntensityClass::Signal).sent == 16);
  CHECK(t.at(Basis::Z, IntensityClass::Signal, IntensityClass::Signal).sent_11 == 10);

  SiftedRecord hit;
  hit.basis = Basis::Z;
  hit.alice_bit = 0;
  hit.bob_bit_after_flip = 0;
  hit.intensity_a = IntensityClass::Signal;
  hit.intensity_b = IntensityClass::Signal;
  hit.tag_a = 1;
  hit.tag_b = 1;
  SiftedRecord miss = hit;
  miss.bob_bit_after_flip = 1;
  miss.tag_b = 2;
  t.record_projection(hit);
  t.record_projection(hit);
  t.record_projection(miss);

  const CellRates r =
      t.rates(Basis::Z, IntensityClass::Signal, IntensityClass::Signal);
  CHECK(r.q == doctest::Approx(3.0 / 16.0).epsilon(1e-14));
  CHECK(r.e == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
  CHECK(r.e_defined);

  const Rates11 r11 =
      t.rates_11(Basis::Z, IntensityClass::Signal, IntensityClass::Signal);
  CHECK(r11.defined);
  CHECK(r11.q11 == doctest::Approx(2.0 / 16.0).epsilon(1e-14));
  CHECK(r11.y11 == doctest::Approx(2.0 / 10.0).epsilon(1e-14));
  CHECK(r11.e11 == 0.0);

  // Untouched cells report zero gain and an undefined error rate.
  const CellRates empty =
      t.rates(Basis::X, IntensityClass::Decoy, IntensityClass::Vacuum);
  CHECK(empty.q == 0.0);
  CHECK_FALSE(empty.e_defined);
  CHECK_FALSE(t.rates_11(Basis::X, IntensityClass::Decoy,
                         IntensityClass::Vacuum).defined);

  // Merging adds every field of every cell.
  TallyCounters other;
  for (int i = 0; i < 4; ++i)
    other.record_sent(Basis::Z, Basis::Z, IntensityClass::Signal,
                      IntensityClass::Signal, 1, 1);
  other.record_projection(miss);
  TallyCounters merged = t;
  merged.merge(other);
  const CellTally& cell =
      merged.at(Basis::Z, IntensityClass::Signal, IntensityClass::Signal);
  CHECK(cell.sent == 20);
  CHECK(cell.sent_11 == 14);
  CHECK(cell.projections == 4);
  CHECK(cell.errors == 2);
  CHECK(cell.projections_11 == 2);
  CHECK(cell.errors_11 == 0);
  CHECK(cell.errors <= cell.projections);
  CHECK(cell.projections <= cell.sent);

  // The gain table mirrors the per-cell rates, with e = 0 where undefined.
  const BasisGains g = gains_from(merged, Basis::Z);
  CHECK(g.q[0][0] == doctest::Approx(4.0 / 20.0).epsilon(1e-14));
  CHECK(g.e[0][0] == doctest::Approx(2.0 / 4.0).epsilon(1e-14));
  CHECK(g.q[1][2] == 0.0);
  CHECK(g.e[1][2] == 0.0);
}

TEST_CASE("decoy bounds bracket a synthetic photon-number model") {
  const IntensityLevels lv{0.6, 0.5, 0.15};
  const BasisGains g = toy_gains(lv);
  const DecoyEstimate est = decoy_estimate(g, g, lv);

  const double y11_true = toy_yield(1, 1);
  const double e11_true = toy_error(1, 1);
  const double q11_true =
      lv.mu_a * lv.mu_b * std::exp(-lv.mu_a - lv.mu_b) * y11_true;

  CHECK(est.valid);
  CHECK(est.message.empty());

  // Lower bounds sit below the exact single-photon quantities, upper bounds
  // above, and none of them degenerate to the trivial value.
  CHECK(est.y11_z_lower <= y11_true + 1e-12);
  CHECK(est.y11_x_lower <= y11_true + 1e-12);
  CHECK(est.y11_z_lower > 0.6 * y11_true);
  CHECK(est.q11_z_lower <= q11_true + 1e-12);
  CHECK(est.q11_z_lower > 0.0);
  CHECK(est.e11_x_upper >= e11_true - 1e-12);
  CHECK(est.e11_x_upper < 0.3);

  // The single-photon gain bound is the yield bound dressed with the
  // Poissonian (1,1) emission probability at the signal settings.
  CHECK(est.q11_z_lower ==
        doctest::Approx(lv.mu_a * lv.mu_b * std::exp(-lv.mu_a - lv.mu_b) *
                        est.y11_z_lower)
            .epsilon(1e-14));

  // Both bases run through the same arithmetic.
  CHECK(est.y11_x_lower == doctest::Approx(est.y11_z_lower).epsilon(1e-14));
}

TEST_CASE("decoy bound failure modes are flagged, not hidden") {
  const IntensityLevels lv{0.6, 0.5, 0.15};
  const BasisGains toy = toy_gains(lv);

  // Zero X-basis gains make the yield bound zero and the error bound vacuous.
  BasisGains flat{};
  DecoyEstimate vac = decoy_estimate(toy, flat, lv);
  CHECK_FALSE(vac.valid);
  CHECK(vac.e11_x_upper == 1.0);
  CHECK(vac.y11_x_lower == 0.0);
  CHECK_FALSE(vac.message.empty());
  // The Z side is untouched by the X-side failure.
  CHECK(vac.y11_z_lower > 0.0);

  // An error-gain combination driven negative (as finite statistics can do)
  // is reported as invalid with the error bound collapsed to zero.
  BasisGains skew = toy;
  skew.e[1][1] = 0.0;
  CHECK(skew.e[1][2] > 0.0);
  DecoyEstimate neg = decoy_estimate(toy, skew, lv);
  CHECK_FALSE(neg.valid);
  CHECK(neg.e11_x_upper == 0.0);
  CHECK_FALSE(neg.message.empty());
  CHECK(neg.message != vac.message);

  // Intensity levels that break the decoy ordering are rejected outright.
  CHECK_THROWS_AS(decoy_estimate(toy, toy, IntensityLevels{0.5, 0.5, 0.5}),
                  std::invalid_argument);
  CHECK_THROWS_AS(decoy_estimate(toy, toy, IntensityLevels{0.5, 0.5, 0.6}),
                  std::invalid_argument);
  CHECK_THROWS_AS((IntensityLevels{0.0, 0.5, 0.1}.validate()),
                  std::invalid_argument);
  CHECK_THROWS_AS((IntensityLevels{0.5, 0.5, 0.0}.validate()),
                  std::invalid_argument);

  // The counter-based overload refuses to estimate from incomplete data.
  TallyCounters sparse;
  sparse.record_sent(Basis::Z, Basis::Z, IntensityClass::Signal,
                     IntensityClass::Signal);
  CHECK_THROWS_AS(decoy_estimate(sparse, lv), std::invalid_argument);
}

TEST_CASE("clock, duty, and dead-time deratings multiply into bits per second") {
  CHECK(bits_per_second(1e-3, 1e6, 0.9, 0.5) == doctest::Approx(450.0).epsilon(1e-14));
  CHECK(bits_per_second(0.0, 1e6, 1.0, 1.0) == 0.0);

  // Gated detectors cap the usable clock; free-running ones pass it through.
  const DetectorModel gated = DetectorModel::id201();
  REQUIRE(gated.gate_rate.has_value());
  CHECK(effective_clock(20e6, gated) == *gated.gate_rate);
  CHECK(effective_clock(1e6, gated) == 1e6);
  const DetectorModel free_running = DetectorModel::snspd();
  CHECK_FALSE(free_running.gate_rate.has_value());
  CHECK(effective_clock(250e6, free_running) == 250e6);

  // Count ceiling: unity below the cap, cap/rate above it.
  DetectorModel det = DetectorModel::ideal();
  det.dead_time = 1e-6;
  CHECK(dead_time_factor(0.0, det) == 1.0);
  CHECK(dead_time_factor(5e5, det) == 1.0);
  CHECK(dead_time_factor(2e6, det) == doctest::Approx(0.5).epsilon(1e-14));
  det.max_count_rate = 1e5;
  CHECK(dead_time_factor(1e6, det) == doctest::Approx(0.1).epsilon(1e-14));
  // The factor never exceeds one and decreases with load.
  CHECK(dead_time_factor(4e6, det) < dead_time_factor(2e6, det));
}

TEST_CASE("intensity optimization climbs a smooth bowl") {
  auto bowl = [](const IntensityLevels& l) {
    const double da = l.mu_a - 0.7;
    const double db = l.mu_b - 0.55;
    const double dn = l.nu - 0.12;
    return 1.0 - da * da - db * db - 0.5 * dn * dn;
  };
  const OptimizeResult res = optimize_intensities(bowl);
  CHECK(res.positive);
  CHECK(res.s == doctest::Approx(1.0).epsilon(1e-3));
  CHECK(std::abs(res.levels.mu_a - 0.7) < 0.03);
  CHECK(std::abs(res.levels.mu_b - 0.55) < 0.03);
  CHECK(std::abs(res.levels.nu - 0.12) < 0.03);
  CHECK(res.levels.nu < res.levels.mu_a);
  CHECK(res.levels.nu < res.levels.mu_b);

  // The decoy level stays strictly inside the signal levels even when the
  // objective rewards pushing it up against them.
  const OptimizeResult greedy =
      optimize_intensities([](const IntensityLevels& l) { return l.nu; });
  CHECK(greedy.levels.nu < greedy.levels.mu_a);
  CHECK(greedy.levels.nu < greedy.levels.mu_b);
  CHECK(greedy.levels.nu <= 0.30 + 1e-12);

  // A uniformly negative objective still reports its (negative) best.
  const OptimizeResult flat =
      optimize_intensities([](const IntensityLevels&) { return -2.0; });
  CHECK_FALSE(flat.positive);
  CHECK(flat.s == doctest::Approx(-2.0).epsilon(1e-14));
}
