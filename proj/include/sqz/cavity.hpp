#pragma once
#include <algorithm>
#include <cmath>
#include <complex>
#include <vector>

#include "sqz/model.hpp"

// Probe transmission past the cavity under parametric gain, plus the linewidth
// diagnostics built on it. The probe couples to a non-degenerate signal/idler
// pair, so its gain parameter is g|beta| (not the degenerate 2 g|beta|), and
// the gain/loss ratio G = g|beta| / (kappa/2) reaches 1 exactly when the
// on-resonance denominator pole collapses.

namespace sqz {

// Complex transmission amplitude t(Delta) = 1 + kappa_e (i Delta - kappa/2) /
// (Delta^2 + kappa^2/4 - (g|beta|)^2).
inline std::complex<double> transmission_amplitude(const CavityParams& cav, double g_beta,
                                                   double delta) {
  const double k = cav.kappa();
  if (g_beta < 0) throw domain_error("transmission: g|beta| must be >= 0");
  if (g_beta >= k / 2.0)
    throw above_threshold_error("transmission: g|beta| >= kappa/2, probe pair above threshold");
  const double den = delta * delta + k * k / 4.0 - g_beta * g_beta;
  const std::complex<double> i(0.0, 1.0);
  return 1.0 + cav.kappa_e * (i * delta - k / 2.0) / den;
}

struct TransmissionPoint {
  double transmittance;  // |t|^2
  double phase;          // arg t, rad
};

inline TransmissionPoint transmission_with_gain(const CavityParams& cav, double g_beta,
                                                double delta) {
  const std::complex<double> t = transmission_amplitude(cav, g_beta, delta);
  return {std::norm(t), std::arg(t)};
}

struct TransmissionCurve {
  std::vector<double> detuning;  // rad/s
  std::vector<double> transmittance;
  std::vector<double> phase;  // rad
};

inline TransmissionCurve transmission_curve(const CavityParams& cav, double g_beta,
                                            const std::vector<double>& detunings) {
  TransmissionCurve c;
  c.detuning = detunings;
  c.transmittance.resize(detunings.size());
  c.phase.resize(detunings.size());
  for (size_t i = 0; i < detunings.size(); ++i) {
    const TransmissionPoint p = transmission_with_gain(cav, g_beta, detunings[i]);
    c.transmittance[i] = p.transmittance;
    c.phase[i] = p.phase;
  }
  return c;
}

// Full width of a single dip (at half depth) or peak (at half height above the
// baseline), the baseline taken from the curve edges. The crossing on each
// flank is refined by linear interpolation inside its grid interval, so the
// result resolves far below the grid spacing.
inline double fwhm_numeric(const std::vector<double>& x, const std::vector<double>& y) {
  const size_t n = x.size();
  if (n != y.size() || n < 8) throw data_error("fwhm: need matching arrays of at least 8 points");
  for (size_t i = 1; i < n; ++i)
    if (!(x[i] > x[i - 1])) throw data_error("fwhm: abscissa must be strictly increasing");

  const double base = 0.5 * (y.front() + y.back());
  size_t i0 = 0;
  double dev = 0;
  for (size_t i = 0; i < n; ++i) {
    const double d = std::abs(y[i] - base);
    if (d > dev) {
      dev = d;
      i0 = i;
    }
  }
  const double scale = std::max({std::abs(y.front()), std::abs(y.back()), std::abs(y[i0])});
  if (dev <= 1e-9 * std::max(scale, 1e-300))
    throw data_error("fwhm: curve is flat, no extremum to measure");
  if (i0 == 0 || i0 == n - 1)
    throw data_error("fwhm: extremum at the grid edge, lineshape not bracketed");

  const double level = 0.5 * (y[i0] + base);
  auto crossing = [&](int step) -> double {
    size_t i = i0;
    while ((step > 0 && i + 1 < n) || (step < 0 && i > 0)) {
      const size_t j = i + step;
      if ((y[i] - level) * (y[j] - level) <= 0) {
        const double f = (level - y[i]) / (y[j] - y[i]);
        return x[i] + f * (x[j] - x[i]);
      }
      i = j;
    }
    throw data_error("fwhm: half level not crossed inside the grid");
  };
  const double right = crossing(+1);
  const double left = crossing(-1);

  // a second comparable extremum beyond the crossings means the lineshape is ambiguous
  for (size_t i = 0; i < n; ++i) {
    if (x[i] > left && x[i] < right) continue;
    if (std::abs(y[i] - base) > 0.5 * dev)
      throw data_error("fwhm: multiple extrema, lineshape ambiguous");
  }
  return right - left;
}

inline double fwhm_numeric(const TransmissionCurve& c) {
  return fwhm_numeric(c.detuning, c.transmittance);
}

// Pole-model narrowing: a cold width and a gain-narrowed width give
// G = sqrt(1 - (hot/cold)^2). Valid for widths measured in the same units.
inline double gain_loss_from_linewidth(double cold_fwhm, double hot_fwhm) {
  if (cold_fwhm <= 0 || hot_fwhm <= 0) throw domain_error("gain_loss: widths must be > 0");
  if (hot_fwhm > cold_fwhm)
    throw domain_error("gain_loss: pumped linewidth exceeds cold linewidth, no narrowing");
  const double r = hot_fwhm / cold_fwhm;
  return std::sqrt(1.0 - r * r);
}

struct QFromLinewidth {
  double q;        // lambda0 / dlambda
  double fwhm_hz;  // c dlambda / lambda0^2
};

inline QFromLinewidth q_from_linewidth(double lambda0_m, double dlambda_m) {
  if (lambda0_m <= 0 || dlambda_m <= 0)
    throw domain_error("q_from_linewidth: wavelengths must be > 0");
  QFromLinewidth r;
  r.fwhm_hz = speed_of_light * dlambda_m / (lambda0_m * lambda0_m);
  r.q = (speed_of_light / lambda0_m) / r.fwhm_hz;
  return r;
}

// Thermo-optic tuning: one FSR of detuning per `degrees_per_fsr` of temperature,
// wrapped into (-fsr/2, fsr/2]. fsr in rad/s; result in rad/s.
inline double detuning_from_temperature(double temp_c, double ref_temp_c, double fsr,
                                        double degrees_per_fsr = 1.2) {
  if (degrees_per_fsr <= 0) throw domain_error("detuning_from_temperature: slope must be > 0");
  if (fsr <= 0) throw domain_error("detuning_from_temperature: fsr must be > 0");
  double d = (temp_c - ref_temp_c) / degrees_per_fsr * fsr;
  d = std::fmod(d, fsr);
  if (d > fsr / 2.0) d -= fsr;
  if (d <= -fsr / 2.0) d += fsr;
  return d;
}

}  // namespace sqz
