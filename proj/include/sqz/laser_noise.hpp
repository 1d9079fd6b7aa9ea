#pragma once
#include <cmath>
#include <limits>
#include <vector>

#include "sqz/model.hpp"
#include "sqz/units.hpp"

// Laser noise: white-frequency-noise phase diffusion, the Lorentzian lineshape
// it produces, direct-detection intensity noise, and the imbalanced
// Mach-Zehnder interferometer used to read the phase noise spectrum out of an
// intensity measurement.

namespace sqz {

// Phase diffusion under white frequency noise: Var[phi(t+tau) - phi(t)] = C |tau|.
inline double phase_variance(const LaserNoiseModel& m, double tau_s) {
  if (m.white_noise_rate < 0) throw domain_error("phase_variance: C must be >= 0");
  return m.white_noise_rate * std::abs(tau_s);
}

// Field PSD of a phase-diffusing carrier with photon flux |alpha|^2:
// a Lorentzian 4 C |alpha|^2 / (C^2 + 4 omega^2), FWHM C in rad/s.
inline double lineshape_white_noise(const LaserNoiseModel& m, double flux, double omega) {
  if (m.white_noise_rate <= 0) throw domain_error("lineshape: C must be > 0");
  if (flux < 0) throw domain_error("lineshape: flux must be >= 0");
  const double c = m.white_noise_rate;
  return 4.0 * c * flux / (c * c + 4.0 * omega * omega);
}

// Direct detection of a beam with relative intensity noise S_NN:
// shot floor eta^2 |alpha|^2 plus the excess eta^2 |alpha|^4 S_NN.
inline double intensity_psd(double flux, double eta, double s_nn) {
  if (flux < 0 || eta < 0) throw domain_error("intensity_psd: flux and eta must be >= 0");
  return eta * eta * flux + eta * eta * flux * flux * s_nn;
}

// Phase PSD of white frequency noise, S_phiphi(Omega) = C / Omega^2.
inline double white_frequency_phase_psd(const LaserNoiseModel& m, double omega) {
  if (omega == 0) throw domain_error("phase psd: omega must be nonzero");
  return m.white_noise_rate / (omega * omega);
}

// Imbalanced Mach-Zehnder: path difference L of group index n delays one arm
// by tau = n L / c, giving fringes spaced by fsr = 1/tau in Fourier frequency.
struct MziSetup {
  double path_imbalance_m = 0.0;
  double group_index = 1.0;
  double operating_phase = pi / 2.0;  // bias point of the slow fringe

  double delay_s() const { return group_index * path_imbalance_m / speed_of_light; }
  double fsr_hz() const {
    const double tau = delay_s();
    if (tau <= 0) throw domain_error("mzi: delay must be > 0");
    return 1.0 / tau;
  }

  static MziSetup from_index(double length_m, double group_index, double op = pi / 2.0) {
    if (length_m <= 0 || group_index <= 0) throw domain_error("mzi: length and index must be > 0");
    return MziSetup{length_m, group_index, op};
  }

  // fix the group index from an observed fringe spacing
  static MziSetup from_fsr(double length_m, double fsr_hz, double op = pi / 2.0) {
    if (length_m <= 0 || fsr_hz <= 0) throw domain_error("mzi: length and fsr must be > 0");
    const double n = speed_of_light / (length_m * fsr_hz);
    return MziSetup{length_m, n, op};
  }
};

// Shot floor of the interferometer output.
inline double mzi_shot_level(const MziSetup& s, double flux, double eta) {
  const double h = std::sin(s.operating_phase / 2.0);
  return eta * eta * flux * h * h;
}

// Multiplier mapping S_phiphi(Omega) into the output intensity PSD.
inline double mzi_phase_transfer(const MziSetup& s, double flux, double eta, double freq_hz) {
  const double arm = std::sin(pi * freq_hz / s.fsr_hz());
  const double bias = std::sin(s.operating_phase);
  return 16.0 * eta * eta * flux * flux * bias * bias * arm * arm;
}

// Output intensity PSD of the interferometer fed with phase noise S_phiphi.
inline double mzi_intensity_psd(const MziSetup& s, double flux, double eta, double freq_hz,
                                double s_phiphi) {
  return mzi_shot_level(s, flux, eta) + mzi_phase_transfer(s, flux, eta, freq_hz) * s_phiphi;
}

struct PhaseExtraction {
  std::vector<double> freq_hz;
  std::vector<double> s_phiphi;   // rad^2/Hz, NaN where masked
  std::vector<bool> masked;       // true near multiples of the fringe spacing
  double flux = 0.0;              // photon flux recovered from the shot reference
};

// Invert an interferometer intensity PSD into the phase PSD. Bins within
// guard_frac of a fringe null (f near k * fsr, including DC) have no phase
// sensitivity and are masked rather than divided out.
inline PhaseExtraction extract_phase_psd(const MziSetup& s, const std::vector<double>& freq_hz,
                                         const std::vector<double>& s_ii, double shot_ref,
                                         double eta = 1.0, double guard_frac = 0.05) {
  if (freq_hz.size() != s_ii.size()) throw data_error("extract_phase_psd: size mismatch");
  if (shot_ref <= 0) throw domain_error("extract_phase_psd: shot reference must be > 0");
  if (eta <= 0) throw domain_error("extract_phase_psd: eta must be > 0");
  if (guard_frac < 0 || guard_frac >= 0.5)
    throw domain_error("extract_phase_psd: guard fraction must be in [0, 0.5)");
  const double h = std::sin(s.operating_phase / 2.0);
  if (h == 0) throw domain_error("extract_phase_psd: operating phase has no shot floor");

  PhaseExtraction out;
  out.freq_hz = freq_hz;
  out.flux = shot_ref / (eta * eta * h * h);
  out.s_phiphi.resize(freq_hz.size());
  out.masked.resize(freq_hz.size());
  const double fsr = s.fsr_hz();
  for (size_t i = 0; i < freq_hz.size(); ++i) {
    const double f = freq_hz[i];
    const double frac = std::abs(f / fsr - std::round(f / fsr));
    out.masked[i] = frac < guard_frac;
    if (out.masked[i]) {
      out.s_phiphi[i] = std::numeric_limits<double>::quiet_NaN();
      continue;
    }
    const double transfer = mzi_phase_transfer(s, out.flux, eta, f);
    out.s_phiphi[i] = (s_ii[i] - shot_ref) / transfer;
  }
  return out;
}

// White-frequency-noise rate from an extracted phase PSD: each unmasked bin
// gives C_i = S_phiphi Omega^2, averaged into one rate. Returns C in rad/s.
inline double noise_rate_from_phase_psd(const std::vector<double>& freq_hz,
                                        const std::vector<double>& s_phiphi,
                                        const std::vector<bool>& masked = {}) {
  if (freq_hz.size() != s_phiphi.size())
    throw data_error("noise_rate_from_phase_psd: size mismatch");
  double sum = 0;
  size_t count = 0;
  for (size_t i = 0; i < freq_hz.size(); ++i) {
    if (!masked.empty() && masked[i]) continue;
    if (freq_hz[i] <= 0 || !std::isfinite(s_phiphi[i])) continue;
    const double omega = hz_to_angular(freq_hz[i]);
    sum += s_phiphi[i] * omega * omega;
    ++count;
  }
  if (count == 0) throw data_error("noise_rate_from_phase_psd: no usable bins");
  return sum / static_cast<double>(count);
}

inline double linewidth_from_phase_psd(const std::vector<double>& freq_hz,
                                       const std::vector<double>& s_phiphi,
                                       const std::vector<bool>& masked = {}) {
  return noise_rate_from_phase_psd(freq_hz, s_phiphi, masked) / (2.0 * pi);
}

}  // namespace sqz
