#include "mdiqkd/qubit_prep.hpp"

#include <cmath>
#include <stdexcept>

namespace mdiqkd {

namespace {
constexpr double kPi = 3.141592653589793238462643383279502884;
constexpr double kTwoPi = 2.0 * kPi;

void check_unit(double v, const char* name) {
  if (!(v >= 0.0 && v <= 1.0))
    throw std::invalid_argument(std::string(name) + " must be in [0,1]");
}
}  // namespace

const char* to_string(Basis b) { return b == Basis::Z ? "Z" : "X"; }

const char* to_string(IntensityClass c) {
  switch (c) {
    case IntensityClass::Signal: return "signal";
    case IntensityClass::Decoy: return "decoy";
    case IntensityClass::Vacuum: return "vacuum";
  }
  return "?";
}

void StateParams::validate() const {
  check_unit(m_z0, "m_z0");
  check_unit(m_z1, "m_z1");
  check_unit(m_xplus, "m_xplus");
  check_unit(m_xminus, "m_xminus");
  if (!(b >= 0.0)) throw std::invalid_argument("b must be >= 0");
  if (!(mode_width_fwhm > 0.0))
    throw std::invalid_argument("mode_width_fwhm must be > 0");
  if (!(mode_separation > mode_width_fwhm))
    throw std::invalid_argument("mode_separation must exceed mode_width_fwhm");
}

StateParams StateParams::awg() {
  StateParams p;
  p.m_z0 = 0.986;
  p.m_z1 = 0.0;
  p.m_xplus = 0.4963;
  p.m_xminus = 0.4963;
  p.b = 5.34e-5;
  p.phi_z = 0.0;
  p.phi_xplus = 0.0;
  p.phi_xminus = kPi + 0.075;
  p.mode_width_fwhm = 250e-12;
  p.mode_separation = 2.50e-9;
  return p;
}

StateParams StateParams::sg() {
  StateParams p = awg();
  p.m_z0 = 0.982;
  p.b = 2.57e-5;
  p.mode_width_fwhm = 290e-12;
  return p;
}

StateParams StateParams::ideal() {
  StateParams p;
  p.m_z0 = 1.0;
  p.m_z1 = 0.0;
  p.m_xplus = 0.5;
  p.m_xminus = 0.5;
  p.b = 0.0;
  p.phi_z = 0.0;
  p.phi_xplus = 0.0;
  p.phi_xminus = kPi;
  p.mode_width_fwhm = 250e-12;
  p.mode_separation = 2.50e-9;
  return p;
}

PulsePair prepare_pulse_pair(Basis basis, int bit, const IntensitySetting& intensity,
                             const StateParams& params) {
  params.validate();
  if (bit != 0 && bit != 1) throw std::invalid_argument("bit must be 0 or 1");
  if (!(intensity.mean_photon_number >= 0.0))
    throw std::invalid_argument("mean photon number must be >= 0");
  if (intensity.cls == IntensityClass::Vacuum && intensity.mean_photon_number != 0.0)
    throw std::invalid_argument("vacuum setting must carry zero mean photon number");

  double m = 0.0;
  double phi = 0.0;
  if (basis == Basis::Z) {
    m = (bit == 0) ? params.m_z0 : params.m_z1;
    phi = params.phi_z;
  } else {
    m = (bit == 0) ? params.m_xplus : params.m_xminus;
    phi = (bit == 0) ? params.phi_xplus : params.phi_xminus;
  }

  const double norm = 1.0 + 2.0 * params.b;
  const double mu = intensity.mean_photon_number;
  const double early = std::sqrt(mu * (m + params.b) / norm);
  const double late = std::sqrt(mu * (1.0 - m + params.b) / norm);

  PulsePair pair;
  pair.amp_early = {early, 0.0};
  pair.amp_late = std::polar(late, phi);
  pair.basis = basis;
  pair.bit = bit;
  pair.intensity = intensity;
  return pair;
}

PulsePair randomize_phase(PulsePair pair, RngStream& rng, bool enabled, int levels) {
  if (!enabled) {
    pair.global_phase = 0.0;
    return pair;
  }
  double theta = 0.0;
  if (levels > 0) {
    theta = kTwoPi * static_cast<double>(rng.below(static_cast<std::uint64_t>(levels))) /
            static_cast<double>(levels);
  } else {
    theta = kTwoPi * rng.uniform();
  }
  const std::complex<double> rot = std::polar(1.0, theta);
  pair.amp_early *= rot;
  pair.amp_late *= rot;
  pair.global_phase = theta;
  return pair;
}

PulsePair sample_photon_number(PulsePair pair, RngStream& rng) {
  if (pair.intensity.cls == IntensityClass::Vacuum) {
    pair.photon_count_tag = 0;
    return pair;
  }
  pair.photon_count_tag = rng.poisson(pair.intensity.mean_photon_number);
  return pair;
}

}  // namespace mdiqkd
