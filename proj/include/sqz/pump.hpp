#pragma once
#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "sqz/model.hpp"
#include "sqz/spectra.hpp"
#include "sqz/units.hpp"

// Pump budget: second-harmonic generation from the fundamental drive, the
// parametric-oscillation threshold inferred from it, and sweeps of expected
// squeezing versus pump power.

namespace sqz {

// Quadratic SHG response P_SH = eta_shg * P_in^2 in the undepleted regime.
struct ShgModel {
  double efficiency = 0.0;  // 1/W

  double sh_power(double pump_in_w) const {
    if (pump_in_w < 0) throw domain_error("shg: pump power must be >= 0");
    return efficiency * pump_in_w * pump_in_w;
  }

  double pump_for_sh(double sh_w) const {
    if (sh_w < 0) throw domain_error("shg: second-harmonic power must be >= 0");
    if (efficiency <= 0) throw domain_error("shg: efficiency must be > 0");
    return std::sqrt(sh_w / efficiency);
  }
};

// Threshold budget. The pump ratio follows x = sqrt(P_SH / P_th), so P_th
// alone fixes the mapping from intracavity second-harmonic power to x.
struct ThresholdModel {
  double threshold_w = 0.0;  // second-harmonic power at threshold

  double ratio_from_sh(double sh_w) const {
    if (threshold_w <= 0) throw domain_error("threshold: P_th must be > 0");
    if (sh_w < 0) throw domain_error("threshold: P_SH must be >= 0");
    return std::sqrt(sh_w / threshold_w);
  }

  double sh_from_ratio(double x) const {
    if (threshold_w <= 0) throw domain_error("threshold: P_th must be > 0");
    if (x < 0) throw domain_error("threshold: ratio must be >= 0");
    return x * x * threshold_w;
  }
};

// Photon-flux calibration of the single-photon coupling: at threshold the
// intracavity pump amplitude satisfies |beta|_thr = kappa / (4 g), and the
// circulating photon number |beta|^2 equals P / E_photon per unit rate, so a
// known (P_th, kappa, pump wavelength) pair pins g.
struct ThresholdCalibration {
  double g = 0.0;         // rad/s per photon amplitude
  double beta_thr = 0.0;  // photon amplitude at threshold
};

inline ThresholdCalibration calibrate_threshold(const CavityParams& cav, double threshold_w,
                                                double pump_wavelength_m) {
  if (threshold_w <= 0) throw domain_error("calibrate_threshold: P_th must be > 0");
  const double e_ph = photon_energy(pump_wavelength_m);
  ThresholdCalibration c;
  c.beta_thr = std::sqrt(threshold_w / e_ph);
  c.g = cav.kappa() / (4.0 * c.beta_thr);
  return c;
}

inline PumpState pump_state_from_power(const CavityParams& cav, const ThresholdModel& thr,
                                       double sh_w, double pump_phase = -pi / 2.0) {
  const double x = thr.ratio_from_sh(sh_w);
  if (x >= 1.0) throw above_threshold_error("pump_state_from_power: P_SH at or above threshold");
  return PumpState::from_ratio(x, pump_phase, cav);
}

struct PowerSweepPoint {
  double sh_power_w;
  double ratio;
  double squeeze_db;      // measured, NaN above threshold
  double antisqueeze_db;  // measured, NaN above threshold
  bool above_threshold;
};

inline std::vector<PowerSweepPoint> power_sweep_curve(const CavityParams& cav,
                                                      const ThresholdModel& thr,
                                                      const LossChain& chain, double omega,
                                                      const std::vector<double>& sh_powers_w) {
  std::vector<PowerSweepPoint> out;
  out.reserve(sh_powers_w.size());
  for (double p : sh_powers_w) {
    PowerSweepPoint pt;
    pt.sh_power_w = p;
    pt.ratio = thr.ratio_from_sh(p);
    pt.above_threshold = pt.ratio >= 1.0;
    if (pt.above_threshold) {
      pt.squeeze_db = std::numeric_limits<double>::quiet_NaN();
      pt.antisqueeze_db = std::numeric_limits<double>::quiet_NaN();
    } else {
      const MeasuredPair m = measured_spectrum(cav, pt.ratio, chain, omega);
      pt.squeeze_db = m.s_minus_db;
      pt.antisqueeze_db = m.s_plus_db;
    }
    out.push_back(pt);
  }
  return out;
}

// Threshold scaling for a design change: P_th ~ (kappa kappa_b)^2 / g^2 with
// the pump mode linewidth kappa_b folded into the single knob below, so a
// proposal is scored by linewidth and coupling ratios alone.
//
// P_th' = P_th * (kappa'/kappa)^2 * (kappa_b'/kappa_b)^2 * (g/g')^2
struct ThresholdProjection {
  double threshold_w;
  double kappa_scale;
  double pump_linewidth_scale;
  double coupling_scale;
};

inline ThresholdProjection projected_threshold(double base_threshold_w, double kappa_scale,
                                               double pump_linewidth_scale = 1.0,
                                               double coupling_scale = 1.0) {
  if (base_threshold_w <= 0) throw domain_error("projected_threshold: base P_th must be > 0");
  if (kappa_scale <= 0 || pump_linewidth_scale <= 0 || coupling_scale <= 0)
    throw domain_error("projected_threshold: scale factors must be > 0");
  ThresholdProjection p;
  p.kappa_scale = kappa_scale;
  p.pump_linewidth_scale = pump_linewidth_scale;
  p.coupling_scale = coupling_scale;
  p.threshold_w = base_threshold_w * kappa_scale * kappa_scale * pump_linewidth_scale *
                  pump_linewidth_scale / (coupling_scale * coupling_scale);
  return p;
}

}  // namespace sqz
