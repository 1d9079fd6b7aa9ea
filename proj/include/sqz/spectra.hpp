#pragma once
#include <cmath>
#include <complex>
#include <utility>
#include <vector>

#include "sqz/model.hpp"

// Output-field squeezing spectra of the sub-threshold degenerate parametric
// oscillator, in the good-cavity (lossless output coupling) convention: these
// closed forms use the total rate kappa only; intrinsic loss and detection
// inefficiency belong in LossChain.

namespace sqz {

struct TransferPair {
  std::complex<double> u;  // multiplies a_in(omega)
  std::complex<double> v;  // multiplies a_in^dag(-omega)
};

namespace detail {
inline void require_subthreshold(double x, const char* who) {
  if (x < 0) throw domain_error(std::string(who) + ": pump ratio must be >= 0");
  if (x >= 1) throw above_threshold_error(std::string(who) +
                                          ": pump ratio >= 1, oscillation threshold reached");
}
}  // namespace detail

// Frequency-domain output transfer a_out = u a_in + v a_in^dag(-omega).
// Lossless: |u|^2 - |v|^2 == 1 for all omega (symplectic), and the quadrature
// extrema obey (|u| -+ |v|)^2 == S_-+.
inline TransferPair output_transfer(const CavityParams& cav, const PumpState& pump,
                                    double omega) {
  detail::require_subthreshold(pump.ratio, "output_transfer");
  const double k = cav.kappa();
  const double gb = pump.ratio * k / 4.0;  // g|beta|
  const std::complex<double> i(0.0, 1.0);
  const double gb2 = 4.0 * gb * gb;
  const std::complex<double> den_u = std::pow(k / 2.0 - i * omega, 2) - gb2;
  const std::complex<double> den_v = std::pow(k / 2.0 + i * omega, 2) - gb2;
  TransferPair t;
  t.u = (k * k / 4.0 + omega * omega + gb2) / den_u;
  t.v = -2.0 * i * gb * std::exp(i * pump.pump_phase) * k / den_v;
  return t;
}

// Spectrum of the rotated output quadrature at analysis frequency omega.
// Extremal in the LO angle at sin(2 phi_out + phi_beta) = +/-1.
inline double quadrature_spectrum(const CavityParams& cav, const PumpState& pump,
                                  double phi_out, double omega) {
  detail::require_subthreshold(pump.ratio, "quadrature_spectrum");
  const double k = cav.kappa();
  const double gb = pump.ratio * k / 4.0;
  const double a = gb * k / (std::pow(k / 2.0 - 2.0 * gb, 2) + omega * omega);
  const double b = gb * k / (std::pow(k / 2.0 + 2.0 * gb, 2) + omega * omega);
  const double s = std::sin(2.0 * phi_out + pump.pump_phase);
  return 1.0 + a * (2.0 + 2.0 * s) + b * (-2.0 + 2.0 * s);
}

struct SqueezePair {
  double s_minus;  // squeezed-quadrature spectrum, <= 1
  double s_plus;   // anti-squeezed-quadrature spectrum, >= 1
};

// On-resonance lossless extrema: S_-+ = 1 -+ 4x / ((1 +- x)^2 + 4(omega/kappa)^2).
// Product identity: S_- * S_+ == 1.
inline SqueezePair squeeze_antisqueeze(const CavityParams& cav, double x, double omega) {
  detail::require_subthreshold(x, "squeeze_antisqueeze");
  const double z = 4.0 * std::pow(omega / cav.kappa(), 2);
  SqueezePair s;
  s.s_minus = 1.0 - 4.0 * x / (std::pow(1.0 + x, 2) + z);
  s.s_plus = 1.0 + 4.0 * x / (std::pow(1.0 - x, 2) + z);
  return s;
}

struct MeasuredPair {
  double s_minus, s_plus;        // linear, relative to shot noise
  double s_minus_db, s_plus_db;  // 10*log10
};

// Detected extrema after the efficiency chain eta: vacuum admixture pulls both
// branches toward 1. Product becomes 1 + eta(1-eta)(S_+ - 1)(1 - S_-) >= 1.
inline MeasuredPair measured_spectrum(const CavityParams& cav, double x,
                                      const LossChain& chain, double omega) {
  chain.validate();
  const double eta = chain.total();
  const SqueezePair s = squeeze_antisqueeze(cav, x, omega);
  MeasuredPair m;
  m.s_minus = 1.0 - eta * (1.0 - s.s_minus);
  m.s_plus = 1.0 + eta * (s.s_plus - 1.0);
  m.s_minus_db = db_from_linear(m.s_minus);
  m.s_plus_db = db_from_linear(m.s_plus);
  return m;
}

struct SpectrumCurves {
  SpectrumTrace s_minus_db;
  SpectrumTrace s_plus_db;
};

inline SpectrumCurves spectrum_curve(const CavityParams& cav, double x,
                                     const LossChain& chain,
                                     const std::vector<double>& freq_hz) {
  std::vector<double> lo(freq_hz.size()), hi(freq_hz.size());
  for (size_t i = 0; i < freq_hz.size(); ++i) {
    const MeasuredPair m = measured_spectrum(cav, x, chain, hz_to_angular(freq_hz[i]));
    lo[i] = m.s_minus_db;
    hi[i] = m.s_plus_db;
  }
  SpectrumCurves c;
  c.s_minus_db = SpectrumTrace(freq_hz, std::move(lo), "db_rel_shot");
  c.s_plus_db = SpectrumTrace(std::vector<double>(freq_hz), std::move(hi), "db_rel_shot");
  return c;
}

// Invert the measured squeezed branch for the pump ratio:
// 1 - eta*4x/((1+x)^2 + z) = target, taking the sub-threshold root.
// Returns the pump ratio; throws data_error when the target is infeasible.
inline double pump_ratio_for_squeezing(double target_linear, double eta,
                                       double omega_over_kappa) {
  if (eta <= 0 || eta > 1) throw domain_error("pump_ratio_for_squeezing: eta not in (0,1]");
  if (target_linear >= 1.0)
    throw data_error("pump_ratio_for_squeezing: target is not below shot noise");
  const double z = 4.0 * omega_over_kappa * omega_over_kappa;
  const double m = (1.0 - target_linear) / eta;  // = 4x/((1+x)^2 + z)
  // m x^2 + (2m - 4) x + m(1 + z) = 0
  const double disc = std::pow(2.0 * m - 4.0, 2) - 4.0 * m * m * (1.0 + z);
  if (disc < 0)
    throw data_error("pump_ratio_for_squeezing: target squeezing infeasible for this eta");
  const double x = ((4.0 - 2.0 * m) - std::sqrt(disc)) / (2.0 * m);
  if (!(x >= 0 && x < 1))
    throw data_error("pump_ratio_for_squeezing: no sub-threshold solution");
  return x;
}

}  // namespace sqz
