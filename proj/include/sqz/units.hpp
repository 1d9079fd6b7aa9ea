#pragma once
#include <cmath>

// Unit conventions used throughout:
//  - internal math runs on angular frequencies (rad/s)
//  - public entry points take Hz and meters
//  - powers in W, photon flux in photons/s, dB means 10*log10

namespace sqz {

inline constexpr double speed_of_light = 299792458.0;      // m/s
inline constexpr double planck_constant = 6.62607015e-34;  // J s
inline constexpr double reduced_planck = 1.054571817e-34;  // J s
inline constexpr double pi = 3.14159265358979323846;

inline double hz_to_angular(double f_hz) { return 2.0 * pi * f_hz; }
inline double angular_to_hz(double w) { return w / (2.0 * pi); }

inline double wavelength_to_frequency(double lambda_m) { return speed_of_light / lambda_m; }
inline double frequency_to_wavelength(double f_hz) { return speed_of_light / f_hz; }
inline double wavelength_to_angular(double lambda_m) {
  return 2.0 * pi * speed_of_light / lambda_m;
}

inline double photon_energy(double lambda_m) {
  return planck_constant * speed_of_light / lambda_m;  // J
}

inline double db_from_linear(double s) { return 10.0 * std::log10(s); }
inline double linear_from_db(double db) { return std::pow(10.0, db / 10.0); }

}  // namespace sqz
