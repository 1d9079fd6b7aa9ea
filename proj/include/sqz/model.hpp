#pragma once
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "sqz/errors.hpp"
#include "sqz/units.hpp"

namespace sqz {

// Optical cavity mode. Rates are angular (rad/s); kappa() == kappa_e + kappa_i
// holds exactly because only the two partial rates are stored.
struct CavityParams {
  double resonance_wavelength = 0;  // m
  double kappa_e = 0;               // external coupling rate, rad/s
  double kappa_i = 0;               // intrinsic loss rate, rad/s
  double detuning = 0;              // pump-resonance detuning, rad/s
  double fsr = hz_to_angular(5.7e9);  // free spectral range, rad/s

  double kappa() const { return kappa_e + kappa_i; }
  double escape_efficiency() const { return kappa_e / kappa(); }
  double omega0() const { return wavelength_to_angular(resonance_wavelength); }
  double q_tot() const { return omega0() / kappa(); }
  double q_int() const { return omega0() / kappa_i; }

  void validate() const {
    if (resonance_wavelength <= 0) throw domain_error("cavity: resonance wavelength must be > 0");
    if (kappa_e <= 0) throw domain_error("cavity: external coupling rate must be > 0");
    if (kappa_i < 0) throw domain_error("cavity: intrinsic loss rate must be >= 0");
    if (fsr <= 0) throw domain_error("cavity: free spectral range must be > 0");
  }
};

// Build cavity rates from quality factors: kappa = w0/Q_tot, kappa_i = w0/Q_int,
// kappa_e = kappa - kappa_i. Q_tot > Q_int is unphysical (negative coupling).
// assume_undercoupled records which Lorentzian-depth branch produced Q_int when
// it came from a fit; with both Q's given it does not change the split.
inline CavityParams derive_rates(double q_tot, double q_int, double lambda_m,
                                 bool assume_undercoupled = true,
                                 double fsr_hz = 5.7e9) {
  (void)assume_undercoupled;
  if (q_tot <= 0 || q_int <= 0) throw domain_error("derive_rates: quality factors must be > 0");
  if (q_tot > q_int)
    throw domain_error("derive_rates: Q_tot > Q_int implies negative external coupling");
  if (lambda_m <= 0) throw domain_error("derive_rates: wavelength must be > 0");
  const double w0 = wavelength_to_angular(lambda_m);
  const double kappa = w0 / q_tot;
  const double kappa_i = w0 / q_int;
  CavityParams cav;
  cav.resonance_wavelength = lambda_m;
  cav.kappa_i = kappa_i;
  cav.kappa_e = kappa - kappa_i;
  cav.fsr = hz_to_angular(fsr_hz);
  cav.validate();
  return cav;
}

// Pump drive of the parametric interaction. pump_ratio = |beta|/|beta|_threshold
// = 4 g |beta| / kappa for the cavity the state was built against.
struct PumpState {
  double g = 0;          // single-photon coupling, sqrt(Hz) scale
  double beta_mag = 0;   // pump amplitude |beta|, sqrt(photon flux)
  double pump_phase = -pi / 2;  // arg(beta)
  double ratio = 0;      // |beta| / |beta|_thr
  double sh_power = 0;   // optical pump power when known, W

  // ratio-only construction: g carries the whole drive, |beta| normalized to 1
  static PumpState from_ratio(double x, double phase, const CavityParams& cav) {
    if (x < 0) throw domain_error("pump: ratio must be >= 0");
    PumpState p;
    p.ratio = x;
    p.pump_phase = phase;
    p.beta_mag = 1.0;
    p.g = x * cav.kappa() / 4.0;
    return p;
  }

  static PumpState from_amplitudes(double g, double beta_mag, double phase,
                                   const CavityParams& cav) {
    if (g <= 0 || beta_mag < 0) throw domain_error("pump: g must be > 0 and |beta| >= 0");
    PumpState p;
    p.g = g;
    p.beta_mag = beta_mag;
    p.pump_phase = phase;
    p.ratio = 4.0 * g * beta_mag / cav.kappa();
    return p;
  }

  // 2 g |beta|: the parametric amplification rate entering the quadrature dynamics
  double parametric_rate(const CavityParams& cav) const { return ratio * cav.kappa() / 2.0; }
};

// Detection efficiency chain. `escape` is the cavity escape efficiency
// kappa_e/kappa; the remaining factors sit between chip and detected signal.
struct LossChain {
  double escape = 1.0;
  double path_transmission = 1.0;
  double detector_qe = 1.0;
  std::vector<std::pair<std::string, double>> extra;

  double total() const {
    double t = escape * path_transmission * detector_qe;
    for (const auto& [name, v] : extra) t *= v;
    return t;
  }

  // product of everything downstream of the cavity (escape excluded); this is
  // what a physical two-port cavity simulation must apply, since escape is
  // already in the cavity dynamics
  double downstream() const {
    double t = path_transmission * detector_qe;
    for (const auto& [name, v] : extra) t *= v;
    return t;
  }

  void validate() const {
    if (escape <= 0 || escape > 1) throw domain_error("loss chain: escape efficiency not in (0,1]");
    auto chk = [](double v, const std::string& what) {
      if (v < 0 || v > 1) throw domain_error("loss chain: " + what + " not in [0,1]");
    };
    chk(path_transmission, "path transmission");
    chk(detector_qe, "detector quantum efficiency");
    for (const auto& [name, v] : extra) chk(v, name);
  }

  static LossChain from_cavity(const CavityParams& cav, double path, double qe,
                               std::vector<std::pair<std::string, double>> extras = {}) {
    LossChain c;
    c.escape = cav.escape_efficiency();
    c.path_transmission = path;
    c.detector_qe = qe;
    c.extra = std::move(extras);
    c.validate();
    return c;
  }
};

inline double total_efficiency(const LossChain& chain) {
  chain.validate();
  return chain.total();
}

// Pump laser noise: white frequency noise with phase variance C|t|,
// Lorentzian field lineshape of FWHM C (rad/s), linewidth C/2pi in Hz.
struct LaserNoiseModel {
  double white_noise_rate = 0;  // C, rad^2/s
  double carrier_wavelength = 1544.4e-9;

  double linewidth_hz() const { return white_noise_rate / (2.0 * pi); }
  static LaserNoiseModel from_linewidth_hz(double lw_hz, double lambda_m = 1544.4e-9) {
    if (lw_hz <= 0) throw domain_error("laser noise: linewidth must be > 0");
    LaserNoiseModel m;
    m.white_noise_rate = 2.0 * pi * lw_hz;
    m.carrier_wavelength = lambda_m;
    return m;
  }
};

// A sampled spectrum: frequency axis in Hz, strictly increasing.
struct SpectrumTrace {
  std::vector<double> freq_hz;
  std::vector<double> value;
  std::string unit;  // e.g. "linear_psd_two_sided", "db_rel_shot"
  std::map<std::string, std::string> metadata;

  SpectrumTrace() = default;
  SpectrumTrace(std::vector<double> f, std::vector<double> v, std::string u)
      : freq_hz(std::move(f)), value(std::move(v)), unit(std::move(u)) {
    validate();
  }

  void validate() const {
    if (freq_hz.size() != value.size())
      throw data_error("spectrum trace: frequency and value lengths differ");
    for (size_t i = 1; i < freq_hz.size(); ++i)
      if (!(freq_hz[i] > freq_hz[i - 1]))
        throw data_error("spectrum trace: frequency axis must be strictly increasing");
  }

  size_t size() const { return freq_hz.size(); }
};

}  // namespace sqz
