#include <cctype>
#include <cstdlib>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mdiqkd/runner.hpp"

namespace mdiqkd {
namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

struct Parser {
  std::string path;
  int line_no = 0;

  [[noreturn]] void fail(const std::string& msg) const {
    throw std::runtime_error(path + ":" + std::to_string(line_no) + ": " + msg);
  }

  double num(const std::string& v) const {
    const char* s = v.c_str();
    char* end = nullptr;
    const double x = std::strtod(s, &end);
    if (end == s || *end != '\0') fail("expected a number, got '" + v + "'");
    return x;
  }

  long long integer(const std::string& v) const {
    const char* s = v.c_str();
    char* end = nullptr;
    const long long x = std::strtoll(s, &end, 10);
    if (end == s || *end != '\0') fail("expected an integer, got '" + v + "'");
    return x;
  }

  std::uint64_t unsigned_integer(const std::string& v) const {
    const char* s = v.c_str();
    char* end = nullptr;
    const std::uint64_t x = std::strtoull(s, &end, 10);
    if (end == s || *end != '\0') fail("expected an integer, got '" + v + "'");
    return x;
  }

  bool boolean(const std::string& v) const {
    if (v == "true" || v == "yes" || v == "on" || v == "1") return true;
    if (v == "false" || v == "no" || v == "off" || v == "0") return false;
    fail("expected a boolean, got '" + v + "'");
  }

  std::vector<double> number_list(const std::string& v) const {
    std::vector<double> out;
    std::string token;
    for (char c : v + ",") {
      if (c == ',' || std::isspace(static_cast<unsigned char>(c))) {
        if (!token.empty()) {
          out.push_back(num(token));
          token.clear();
        }
      } else {
        token += c;
      }
    }
    if (out.empty()) fail("expected at least one number");
    return out;
  }
};

}  // namespace

RunConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);

  Parser p;
  p.path = path;
  RunConfig cfg;
  std::string section;
  bool any_key_seen = false;

  std::string raw;
  while (std::getline(in, raw)) {
    ++p.line_no;
    const std::size_t cut = raw.find_first_of("#;");
    if (cut != std::string::npos) raw.erase(cut);
    const std::string line = trim(raw);
    if (line.empty()) continue;

    if (line.front() == '[') {
      if (line.back() != ']') p.fail("unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      if (section != "run" && section != "intensities" && section != "detector" &&
          section != "states" && section != "drift" && section != "feedback")
        p.fail("unknown section [" + section + "]");
      continue;
    }

    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) p.fail("expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) p.fail("empty key");
    if (value.empty()) p.fail("empty value for '" + key + "'");
    if (section.empty()) p.fail("key '" + key + "' appears before any section");

    if (section == "run") {
      if (key == "preset") {
        if (any_key_seen)
          p.fail("preset replaces the whole configuration and must come first");
        cfg = preset(static_cast<int>(p.integer(value)));
      } else if (key == "mode") {
        if (value == "analytic")
          cfg.mode = RunMode::Analytic;
        else if (value == "mc" || value == "montecarlo")
          cfg.mode = RunMode::MonteCarlo;
        else
          p.fail("mode must be 'analytic' or 'mc'");
      } else if (key == "loss") {
        cfg.loss_sweep_db = p.number_list(value);
      } else if (key == "pairs") {
        cfg.pairs_per_cell = p.integer(value);
      } else if (key == "seed") {
        cfg.seed = p.unsigned_integer(value);
      } else if (key == "qubit_rate") {
        cfg.qubit_rate_hz = p.num(value);
      } else if (key == "optimize") {
        cfg.optimize = p.boolean(value);
      } else if (key == "psi_plus") {
        cfg.use_psi_plus = p.boolean(value);
      } else if (key == "phase_randomized") {
        cfg.phase_randomized = p.boolean(value);
      } else if (key == "signal_only") {
        cfg.signal_only = p.boolean(value);
      } else if (key == "random_schedule") {
        cfg.random_schedule = p.boolean(value);
      } else if (key == "timelines") {
        cfg.mc_timelines = static_cast<int>(p.integer(value));
      } else if (key == "f") {
        cfg.f_ec = p.num(value);
      } else if (key == "out") {
        cfg.output_path = value;
      } else if (key == "config_id") {
        cfg.config_id = static_cast<int>(p.integer(value));
      } else {
        p.fail("unknown key '" + key + "' in [run]");
      }
    } else if (section == "intensities") {
      if (key == "mu_a")
        cfg.levels.mu_a = p.num(value);
      else if (key == "mu_b" || key == "sigma")
        cfg.levels.mu_b = p.num(value);
      else if (key == "nu")
        cfg.levels.nu = p.num(value);
      else
        p.fail("unknown key '" + key + "' in [intensities]");
    } else if (section == "detector") {
      if (key == "type") {
        if (value == "id201")
          cfg.detector = DetectorModel::id201();
        else if (value == "id210")
          cfg.detector = DetectorModel::id210();
        else if (value == "snspd")
          cfg.detector = DetectorModel::snspd();
        else if (value == "ideal")
          cfg.detector = DetectorModel::ideal();
        else
          p.fail("unknown detector type '" + value + "'");
      } else if (key == "efficiency") {
        cfg.detector.efficiency = p.num(value);
      } else if (key == "dark_per_ns") {
        cfg.detector.dark_prob_per_ns = p.num(value);
      } else if (key == "dead_time") {
        cfg.detector.dead_time = p.num(value);
      } else if (key == "gate_rate") {
        if (value == "free")
          cfg.detector.gate_rate.reset();
        else
          cfg.detector.gate_rate = p.num(value);
      } else if (key == "max_count_rate") {
        cfg.detector.max_count_rate = p.num(value);
      } else if (key == "afterpulse_per_ns") {
        cfg.detector.afterpulse_prob_per_ns = p.num(value);
      } else if (key == "afterpulse_span") {
        cfg.detector.afterpulse_span = p.num(value);
      } else if (key == "window_ns") {
        cfg.detector.coincidence_window_ns = p.num(value);
      } else {
        p.fail("unknown key '" + key + "' in [detector]");
      }
    } else if (section == "states") {
      if (key == "type") {
        if (value == "awg")
          cfg.states = StateParams::awg();
        else if (value == "sg")
          cfg.states = StateParams::sg();
        else if (value == "ideal")
          cfg.states = StateParams::ideal();
        else
          p.fail("unknown state type '" + value + "'");
      } else if (key == "fwhm") {
        cfg.states.mode_width_fwhm = p.num(value);
      } else if (key == "separation") {
        cfg.states.mode_separation = p.num(value);
      } else {
        p.fail("unknown key '" + key + "' in [states]");
      }
    } else if (section == "drift") {
      if (key == "preset") {
        if (value == "off") {
          cfg.drift = DriftModel::off();
          cfg.drift_enabled = false;
        } else if (value == "deployed") {
          cfg.drift = DriftModel::deployed();
          cfg.drift_enabled = true;
        } else {
          p.fail("unknown drift preset '" + value + "'");
        }
      } else if (key == "enabled") {
        cfg.drift_enabled = p.boolean(value);
      } else if (key == "duration") {
        cfg.drift_duration_s = p.num(value);
      } else {
        p.fail("unknown key '" + key + "' in [drift]");
      }
    } else if (section == "feedback") {
      if (key == "temporal")
        cfg.feedback.temporal_enabled = p.boolean(value);
      else if (key == "polarization")
        cfg.feedback.polarization_enabled = p.boolean(value);
      else if (key == "frequency")
        cfg.feedback.frequency_enabled = p.boolean(value);
      else if (key == "single_laser")
        cfg.feedback.single_laser = p.boolean(value);
      else if (key == "temporal_interval")
        cfg.feedback.temporal_interval_s = p.num(value);
      else if (key == "temporal_deadband")
        cfg.feedback.temporal_deadband_s = p.num(value);
      else if (key == "temporal_samples")
        cfg.feedback.temporal_samples = static_cast<int>(p.integer(value));
      else if (key == "tdc_jitter")
        cfg.feedback.tdc_jitter_s = p.num(value);
      else if (key == "pol_interval")
        cfg.feedback.pol_interval_s = p.num(value);
      else if (key == "pol_pause")
        cfg.feedback.pol_pause_s = p.num(value);
      else if (key == "pol_residual")
        cfg.feedback.pol_residual_overlap = p.num(value);
      else if (key == "freq_threshold")
        cfg.feedback.freq_threshold_hz = p.num(value);
      else if (key == "freq_sigma")
        cfg.feedback.freq_meas_sigma_hz = p.num(value);
      else
        p.fail("unknown key '" + key + "' in [feedback]");
    }
    any_key_seen = true;
  }

  cfg.feedback.mode_width_fwhm = cfg.states.mode_width_fwhm;
  return cfg;
}

}  // namespace mdiqkd
