#pragma once
#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sqz/model.hpp"
#include "sqz/spectra.hpp"

// Parameter estimation: a small damped least-squares core plus the fits the
// instrument work needs (cavity scans, SHG response, squeezing-versus-loss
// models, coupling diagnosis from a complex scan).

namespace sqz {

struct FitResult {
  Eigen::VectorXd params;
  bool converged = false;
  int iterations = 0;
  double residual_rms = 0.0;
  std::string message;
};

using ResidualFn = std::function<void(const Eigen::VectorXd&, Eigen::VectorXd&)>;
using JacobianFn = std::function<void(const Eigen::VectorXd&, Eigen::MatrixXd&)>;

struct LmOptions {
  int max_iterations = 200;
  double tolerance = 1e-10;
  Eigen::VectorXd lower;  // empty = unbounded
  Eigen::VectorXd upper;
};

namespace detail {

inline void clamp_params(Eigen::VectorXd& p, const LmOptions& opt) {
  if (opt.lower.size() == p.size()) p = p.cwiseMax(opt.lower);
  if (opt.upper.size() == p.size()) p = p.cwiseMin(opt.upper);
}

inline JacobianFn finite_difference_jacobian(const ResidualFn& fn) {
  return [fn](const Eigen::VectorXd& p, Eigen::MatrixXd& jac) {
    Eigen::VectorXd r0;
    fn(p, r0);
    jac.resize(r0.size(), p.size());
    Eigen::VectorXd pp = p;
    Eigen::VectorXd rp, rm;
    for (Eigen::Index j = 0; j < p.size(); ++j) {
      const double h = 1e-7 * std::max(1.0, std::abs(p(j)));
      pp(j) = p(j) + h;
      fn(pp, rp);
      pp(j) = p(j) - h;
      fn(pp, rm);
      pp(j) = p(j);
      jac.col(j) = (rp - rm) / (2.0 * h);
    }
  };
}

}  // namespace detail

// Levenberg-Marquardt with multiplicative damping. Convergence requires both
// the relative step and the relative cost change to drop below tolerance.
inline FitResult fit_least_squares(const ResidualFn& fn, const JacobianFn& jac_fn,
                                   Eigen::VectorXd p0, const LmOptions& opt = {}) {
  FitResult result;
  detail::clamp_params(p0, opt);
  Eigen::VectorXd p = p0;
  Eigen::VectorXd r;
  fn(p, r);
  double cost = r.squaredNorm();
  Eigen::MatrixXd jac;
  double lambda = 1e-3;

  for (int iter = 0; iter < opt.max_iterations; ++iter) {
    result.iterations = iter + 1;
    jac_fn(p, jac);
    const Eigen::MatrixXd jtj = jac.transpose() * jac;
    const Eigen::VectorXd jtr = jac.transpose() * r;

    bool accepted = false;
    Eigen::VectorXd p_new;
    double cost_new = cost;
    for (int tries = 0; tries < 12; ++tries) {
      Eigen::MatrixXd damped = jtj;
      damped.diagonal() += lambda * jtj.diagonal().cwiseMax(1e-12);
      const Eigen::VectorXd step = damped.ldlt().solve(-jtr);
      p_new = p + step;
      detail::clamp_params(p_new, opt);
      Eigen::VectorXd r_new;
      fn(p_new, r_new);
      cost_new = r_new.squaredNorm();
      if (cost_new <= cost && std::isfinite(cost_new)) {
        r = r_new;
        accepted = true;
        lambda = std::max(lambda / 3.0, 1e-12);
        break;
      }
      lambda *= 10.0;
    }
    if (!accepted) {
      result.params = p;
      result.residual_rms = std::sqrt(cost / std::max<Eigen::Index>(1, r.size()));
      result.message = "damping saturated without cost reduction";
      return result;
    }

    const double step_norm = (p_new - p).norm();
    const double rel_step = step_norm / std::max(1e-300, p.norm());
    const double rel_cost = std::abs(cost - cost_new) / std::max(1e-300, cost);
    p = p_new;
    cost = cost_new;
    if (rel_step < opt.tolerance && rel_cost < opt.tolerance) {
      result.converged = true;
      break;
    }
  }

  result.params = p;
  result.residual_rms = std::sqrt(cost / std::max<Eigen::Index>(1, r.size()));
  if (!result.converged && result.message.empty())
    result.message = "iteration limit reached";
  return result;
}

inline FitResult fit_least_squares(const ResidualFn& fn, Eigen::VectorXd p0,
                                   const LmOptions& opt = {}) {
  return fit_least_squares(fn, detail::finite_difference_jacobian(fn), std::move(p0), opt);
}

struct LorentzianFit {
  double baseline = 0;
  double amplitude = 0;  // signed: negative for a dip
  double center = 0;
  double fwhm = 0;
  FitResult detail;
};

// y = baseline + amplitude * (f/2)^2 / ((x - c)^2 + (f/2)^2), analytic Jacobian.
inline LorentzianFit fit_lorentzian(const std::vector<double>& x, const std::vector<double>& y) {
  const size_t n = x.size();
  if (n != y.size() || n < 8) throw data_error("fit_lorentzian: need at least 8 points");

  const double b0 = 0.5 * (y.front() + y.back());
  size_t i0 = 0;
  for (size_t i = 0; i < n; ++i)
    if (std::abs(y[i] - b0) > std::abs(y[i0] - b0)) i0 = i;
  const double a0 = y[i0] - b0;
  if (a0 == 0) throw data_error("fit_lorentzian: flat data");
  const double level = b0 + 0.5 * a0;
  double xr = x.back(), xl = x.front();
  for (size_t i = i0; i + 1 < n; ++i)
    if ((y[i] - level) * (y[i + 1] - level) <= 0) {
      xr = x[i] + (level - y[i]) / (y[i + 1] - y[i]) * (x[i + 1] - x[i]);
      break;
    }
  for (size_t i = i0; i > 0; --i)
    if ((y[i] - level) * (y[i - 1] - level) <= 0) {
      xl = x[i] + (level - y[i]) / (y[i - 1] - y[i]) * (x[i - 1] - x[i]);
      break;
    }
  const double f0 = std::max(xr - xl, (x.back() - x.front()) / static_cast<double>(n));

  auto residuals = [&](const Eigen::VectorXd& p, Eigen::VectorXd& r) {
    r.resize(static_cast<Eigen::Index>(n));
    const double h = p(3) / 2.0;
    for (size_t i = 0; i < n; ++i) {
      const double dx = x[i] - p(2);
      r(static_cast<Eigen::Index>(i)) = p(0) + p(1) * h * h / (dx * dx + h * h) - y[i];
    }
  };
  auto jacobian = [&](const Eigen::VectorXd& p, Eigen::MatrixXd& jac) {
    jac.resize(static_cast<Eigen::Index>(n), 4);
    const double h = p(3) / 2.0;
    for (size_t i = 0; i < n; ++i) {
      const double dx = x[i] - p(2);
      const double den = dx * dx + h * h;
      const auto row = static_cast<Eigen::Index>(i);
      jac(row, 0) = 1.0;
      jac(row, 1) = h * h / den;
      jac(row, 2) = p(1) * h * h * 2.0 * dx / (den * den);
      jac(row, 3) = p(1) * h * dx * dx / (den * den);
    }
  };

  Eigen::VectorXd p0(4);
  p0 << b0, a0, x[i0], f0;
  LmOptions opt;
  opt.lower = Eigen::VectorXd(4);
  opt.lower << -1e30, -1e30, x.front(), (x.back() - x.front()) * 1e-9;
  opt.upper = Eigen::VectorXd(4);
  opt.upper << 1e30, 1e30, x.back(), (x.back() - x.front()) * 10.0;

  LorentzianFit fit;
  fit.detail = fit_least_squares(residuals, jacobian, p0, opt);
  fit.baseline = fit.detail.params(0);
  fit.amplitude = fit.detail.params(1);
  fit.center = fit.detail.params(2);
  fit.fwhm = std::abs(fit.detail.params(3));
  return fit;
}

struct CavityScanResult {
  double q_tot = 0;
  double q_int = 0;
  double coupling_ratio = 0;  // kappa_e / kappa
  double fwhm_hz = 0;
  double floor_transmittance = 0;  // dip floor relative to the baseline
  LorentzianFit fit;
};

// Cavity parameters from a cold transmission scan around one resonance. The
// dip floor fixes |1 - 2 kappa_e/kappa| only, so the caller states which side
// of critical coupling the device sits on.
inline CavityScanResult cavity_from_scan(const std::vector<double>& freq_offset_hz,
                                         const std::vector<double>& transmittance,
                                         double carrier_freq_hz, bool undercoupled = true) {
  if (carrier_freq_hz <= 0) throw domain_error("cavity_from_scan: carrier must be > 0");
  CavityScanResult r;
  r.fit = fit_lorentzian(freq_offset_hz, transmittance);
  if (r.fit.amplitude >= 0) throw data_error("cavity_from_scan: expected a transmission dip");
  r.fwhm_hz = r.fit.fwhm;
  r.floor_transmittance =
      std::clamp((r.fit.baseline + r.fit.amplitude) / r.fit.baseline, 0.0, 1.0);
  const double root = std::sqrt(r.floor_transmittance);
  r.coupling_ratio = undercoupled ? (1.0 - root) / 2.0 : (1.0 + root) / 2.0;
  r.q_tot = carrier_freq_hz / r.fwhm_hz;
  r.q_int = r.q_tot / (1.0 - r.coupling_ratio);
  return r;
}

// Quadratic response through the origin, y = eta x^2, least squares.
inline double fit_shg_quadratic(const std::vector<double>& pump_w,
                                const std::vector<double>& sh_w) {
  if (pump_w.size() != sh_w.size() || pump_w.empty())
    throw data_error("fit_shg_quadratic: need matching nonempty arrays");
  double num = 0, den = 0;
  for (size_t i = 0; i < pump_w.size(); ++i) {
    const double x2 = pump_w[i] * pump_w[i];
    num += x2 * sh_w[i];
    den += x2 * x2;
  }
  if (den == 0) throw data_error("fit_shg_quadratic: all pump powers are zero");
  return num / den;
}

struct LinearFit {
  double slope = 0;
  double intercept = 0;
};

inline LinearFit fit_linear(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw data_error("fit_linear: need at least 2 points");
  const auto n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
  }
  const double den = n * sxx - sx * sx;
  if (den == 0) throw data_error("fit_linear: degenerate abscissa");
  LinearFit f;
  f.slope = (n * sxy - sx * sy) / den;
  f.intercept = (sy - f.slope * sx) / n;
  return f;
}

struct SqueezingFitData {
  std::vector<double> freq_hz;
  std::vector<double> squeeze_db;      // measured minimum-noise points
  std::vector<double> antisqueeze_db;  // measured maximum-noise points
};

struct SqueezingFit {
  double ratio = 0;       // pump amplitude over threshold
  double efficiency = 0;  // total detection efficiency
  FitResult detail;
};

// Joint (pump ratio, efficiency) fit to squeeze/antisqueeze levels versus
// frequency. Starts from the closed-form inversion of the lowest-frequency
// pair; data with no visible squeezing or antisqueezing is flagged rather
// than forced through the optimizer.
inline SqueezingFit fit_squeezing_model(const CavityParams& cav, const SqueezingFitData& data) {
  const size_t n = data.freq_hz.size();
  if (n == 0 || data.squeeze_db.size() != n || data.antisqueeze_db.size() != n)
    throw data_error("fit_squeezing_model: need matching nonempty arrays");

  SqueezingFit out;
  const double k = cav.kappa();

  size_t ilo = 0;
  for (size_t i = 1; i < n; ++i)
    if (data.freq_hz[i] < data.freq_hz[ilo]) ilo = i;
  const double u = 1.0 - linear_from_db(data.squeeze_db[ilo]);
  const double w = linear_from_db(data.antisqueeze_db[ilo]) - 1.0;
  if (u <= 0 || w <= 0) {
    out.detail.message = "no squeezing or antisqueezing visible in the data";
    return out;
  }

  const double zlo = 4.0 * std::pow(hz_to_angular(data.freq_hz[ilo]) / k, 2);
  double x0 = 0.3, eta0 = 0.5;
  if (w > u) {
    const double disc = (w + u) * (w + u) - (w - u) * (w - u) * (1.0 + zlo);
    if (disc > 0) {
      x0 = ((w + u) - std::sqrt(disc)) / (w - u);
      eta0 = u * ((1.0 + x0) * (1.0 + x0) + zlo) / (4.0 * x0);
    }
  }
  x0 = std::clamp(x0, 1e-4, 0.999);
  eta0 = std::clamp(eta0, 1e-4, 1.0);

  auto residuals = [&](const Eigen::VectorXd& p, Eigen::VectorXd& r) {
    r.resize(static_cast<Eigen::Index>(2 * n));
    const double x = p(0);
    const double eta = p(1);
    for (size_t i = 0; i < n; ++i) {
      const double z = 4.0 * std::pow(hz_to_angular(data.freq_hz[i]) / k, 2);
      const double sm = 1.0 - eta * 4.0 * x / ((1.0 + x) * (1.0 + x) + z);
      const double sp = 1.0 + eta * 4.0 * x / ((1.0 - x) * (1.0 - x) + z);
      r(static_cast<Eigen::Index>(2 * i)) = db_from_linear(sm) - data.squeeze_db[i];
      r(static_cast<Eigen::Index>(2 * i + 1)) = db_from_linear(sp) - data.antisqueeze_db[i];
    }
  };

  LmOptions opt;
  opt.lower = Eigen::VectorXd(2);
  opt.lower << 1e-6, 1e-6;
  opt.upper = Eigen::VectorXd(2);
  opt.upper << 0.9999, 1.0;
  Eigen::VectorXd p0(2);
  p0 << x0, eta0;
  out.detail = fit_least_squares(residuals, p0, opt);
  out.ratio = out.detail.params(0);
  out.efficiency = out.detail.params(1);
  return out;
}

// Remove 2 pi jumps from a sampled phase record.
inline std::vector<double> unwrap(const std::vector<double>& phase) {
  std::vector<double> out(phase.size());
  if (phase.empty()) return out;
  out[0] = phase[0];
  double offset = 0;
  for (size_t i = 1; i < phase.size(); ++i) {
    double d = phase[i] - phase[i - 1];
    if (d > pi) offset -= 2.0 * pi;
    if (d < -pi) offset += 2.0 * pi;
    out[i] = phase[i] + offset;
  }
  return out;
}

enum class CouplingRegime { undercoupled, overcoupled, critical };

inline const char* to_string(CouplingRegime r) {
  switch (r) {
    case CouplingRegime::undercoupled: return "undercoupled";
    case CouplingRegime::overcoupled: return "overcoupled";
    case CouplingRegime::critical: return "critical";
  }
  return "unknown";
}

struct CouplingDiagnostic {
  CouplingRegime regime = CouplingRegime::critical;
  double phase_excursion = 0;  // rad, from the unwrapped phase across the scan
  double coupling_ratio = 0.5;
  double floor_transmittance = 0;
  LorentzianFit fit;
};

// Decide which side of critical coupling a resonance sits on. The dip depth
// alone is two-valued; the phase winding across resonance breaks the tie
// (below pi for undercoupled, above for overcoupled). A floor within 1% of
// zero is reported as critical, where the two branches coincide.
inline CouplingDiagnostic coupling_diagnostic(const std::vector<double>& freq_offset_hz,
                                              const std::vector<double>& transmittance,
                                              const std::vector<double>& phase_rad) {
  if (freq_offset_hz.size() != phase_rad.size())
    throw data_error("coupling_diagnostic: size mismatch");
  CouplingDiagnostic d;
  d.fit = fit_lorentzian(freq_offset_hz, transmittance);
  if (d.fit.amplitude >= 0) throw data_error("coupling_diagnostic: expected a transmission dip");
  d.floor_transmittance =
      std::clamp((d.fit.baseline + d.fit.amplitude) / d.fit.baseline, 0.0, 1.0);

  const std::vector<double> ph = unwrap(phase_rad);
  const auto [lo, hi] = std::minmax_element(ph.begin(), ph.end());
  d.phase_excursion = *hi - *lo;

  if (d.floor_transmittance < 1e-2) {
    d.regime = CouplingRegime::critical;
    d.coupling_ratio = 0.5;
    return d;
  }
  const double root = std::sqrt(d.floor_transmittance);
  if (d.phase_excursion > pi) {
    d.regime = CouplingRegime::overcoupled;
    d.coupling_ratio = (1.0 + root) / 2.0;
  } else {
    d.regime = CouplingRegime::undercoupled;
    d.coupling_ratio = (1.0 - root) / 2.0;
  }
  return d;
}

}  // namespace sqz
