#pragma once
#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include "sqz/model.hpp"
#include "sqz/random.hpp"
#include "sqz/spectra.hpp"
#include "sqz/welch.hpp"

// Time-domain simulation of the cavity output and its balanced homodyne
// detection. The cavity quadratures follow a linear SDE driven by vacuum at
// both ports; each step jointly samples the end-of-step state and the
// time-integrated output field, so the sampled record y_k = O_k / dt carries
// the exact continuous-time output statistics at any step size. Shot noise is
// normalized to a two-sided PSD of 1 before the detection chain.

namespace sqz {

enum class Stepper { exact, euler };

struct SimConfig {
  double dt_s = 0;        // 0: derived as 0.01 * (2 pi / kappa)
  double duration_s = 0;  // 0: derived to cover min_segments Welch segments
  size_t min_segments = 100;
  uint64_t seed = 1;
  Stepper stepper = Stepper::exact;
  size_t chunk_samples = 1 << 16;

  double resolved_dt(const CavityParams& cav) const {
    const double limit = 0.01 * 2.0 * pi / cav.kappa();
    if (dt_s == 0) return limit;
    if (dt_s < 0) throw config_error("sim: dt must be > 0");
    if (dt_s > limit + 1e-18)
      throw config_error("sim: dt too coarse, must resolve the cavity decay (dt <= 0.01 * 2pi/kappa)");
    return dt_s;
  }

  size_t resolved_samples(const WelchConfig& welch, double dt) const {
    const size_t n = welch.segment_length;
    const size_t hop = std::max<size_t>(
        1, n - static_cast<size_t>(std::round(welch.overlap * static_cast<double>(n))));
    const size_t for_segments = n + (std::max<size_t>(min_segments, 1) - 1) * hop;
    if (duration_s == 0) return for_segments;
    if (duration_s < 0) throw config_error("sim: duration must be > 0");
    const auto requested = static_cast<size_t>(std::ceil(duration_s / dt));
    return std::max(requested, for_segments);
  }
};

// Drift matrix of the intracavity quadratures under parametric drive:
// the pump phase picks which quadrature the gain term deamplifies.
inline Eigen::Matrix2d quadrature_drift(const CavityParams& cav, const PumpState& pump) {
  const double k = cav.kappa();
  const double eps = pump.parametric_rate(cav);
  const double c = std::cos(pump.pump_phase);
  const double s = std::sin(pump.pump_phase);
  const double d = cav.detuning;
  Eigen::Matrix2d m;
  m << -k / 2.0 + eps * s, d - eps * c, -d - eps * c, -k / 2.0 - eps * s;
  return m;
}

// One-step propagator and joint state/output noise for the augmented system
// z = (a, O), dO = (sqrt(kappa_e) a - a_in,e) dt. Discretized once, reused per
// step. The Euler variant exists to cross-check the exact one.
class CavityStepper {
 public:
  CavityStepper(const CavityParams& cav, const PumpState& pump, double dt,
                Stepper method = Stepper::exact)
      : dt_(dt), method_(method), kappa_(cav.kappa()), kappa_e_(cav.kappa_e) {
    if (dt <= 0) throw config_error("stepper: dt must be > 0");
    detail::require_subthreshold(pump.ratio, "stepper");
    m_ = quadrature_drift(cav, pump);
    if (method_ == Stepper::exact) build_exact();
  }

  // draw the initial state from the stationary intracavity covariance
  void seed_stationary(GaussianStream& rng) {
    const Eigen::Matrix2d v = stationary_covariance();
    Eigen::LLT<Eigen::Matrix2d> llt(v);
    Eigen::Matrix2d l;
    if (llt.info() == Eigen::Success) {
      l = llt.matrixL();
    } else {
      Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(v);
      l = es.eigenvectors() *
          es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
    }
    a_ = l * Eigen::Vector2d(rng.normal(), rng.normal());
  }

  Eigen::Matrix2d stationary_covariance() const {
    // solve M V + V M^T = -kappa I via the 4x4 vectorized system
    Eigen::Matrix4d lhs = Eigen::Matrix4d::Zero();
    const Eigen::Matrix2d eye = Eigen::Matrix2d::Identity();
    lhs.block<2, 2>(0, 0) = m_ + m_(0, 0) * eye;
    lhs.block<2, 2>(0, 2) = m_(0, 1) * eye;
    lhs.block<2, 2>(2, 0) = m_(1, 0) * eye;
    lhs.block<2, 2>(2, 2) = m_ + m_(1, 1) * eye;
    Eigen::Vector4d rhs(-kappa_, 0.0, 0.0, -kappa_);
    const Eigen::Vector4d vecv = lhs.fullPivLu().solve(rhs);
    Eigen::Matrix2d v;
    v << vecv(0), vecv(2), vecv(1), vecv(3);
    return 0.5 * (v + v.transpose());
  }

  // advance one step; returns the output quadrature record O_k / dt
  Eigen::Vector2d step(GaussianStream& rng) {
    if (method_ == Stepper::euler) return step_euler(rng);
    Eigen::Vector4d z(rng.normal(), rng.normal(), rng.normal(), rng.normal());
    Eigen::Vector4d next = phi_.block<4, 2>(0, 0) * a_ + chol_ * z;
    a_ = next.head<2>();
    return next.tail<2>() / dt_;
  }

  Eigen::Vector2d state() const { return a_; }
  double dt() const { return dt_; }

 private:
  void build_exact() {
    Eigen::Matrix4d a = Eigen::Matrix4d::Zero();
    a.block<2, 2>(0, 0) = m_;
    a.block<2, 2>(2, 0) = std::sqrt(kappa_e_) * Eigen::Matrix2d::Identity();
    Eigen::Matrix4d qc = Eigen::Matrix4d::Zero();
    qc.block<2, 2>(0, 0) = kappa_ * Eigen::Matrix2d::Identity();
    qc.block<2, 2>(0, 2) = -std::sqrt(kappa_e_) * Eigen::Matrix2d::Identity();
    qc.block<2, 2>(2, 0) = -std::sqrt(kappa_e_) * Eigen::Matrix2d::Identity();
    qc.block<2, 2>(2, 2) = Eigen::Matrix2d::Identity();

    Eigen::Matrix<double, 8, 8> c = Eigen::Matrix<double, 8, 8>::Zero();
    c.block<4, 4>(0, 0) = -a;
    c.block<4, 4>(0, 4) = qc;
    c.block<4, 4>(4, 4) = a.transpose();
    const Eigen::Matrix<double, 8, 8> f = (c * dt_).exp();
    phi_ = f.block<4, 4>(4, 4).transpose();
    Eigen::Matrix4d qd = phi_ * f.block<4, 4>(0, 4);
    qd = 0.5 * (qd + qd.transpose());

    Eigen::LLT<Eigen::Matrix4d> llt(qd);
    if (llt.info() == Eigen::Success) {
      chol_ = llt.matrixL();
    } else {
      Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> es(qd);
      chol_ = es.eigenvectors() *
              es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
    }
  }

  Eigen::Vector2d step_euler(GaussianStream& rng) {
    const double sdt = std::sqrt(dt_);
    const Eigen::Vector2d we(sdt * rng.normal(), sdt * rng.normal());
    const Eigen::Vector2d wi(sdt * rng.normal(), sdt * rng.normal());
    const Eigen::Vector2d out = std::sqrt(kappa_e_) * a_ - we / dt_;
    a_ += m_ * a_ * dt_ + std::sqrt(kappa_e_) * we + std::sqrt(kappa_ - kappa_e_) * wi;
    return out;
  }

  double dt_;
  Stepper method_;
  double kappa_;
  double kappa_e_;
  Eigen::Matrix2d m_;
  Eigen::Matrix4d phi_ = Eigen::Matrix4d::Zero();
  Eigen::Matrix4d chol_ = Eigen::Matrix4d::Zero();
  Eigen::Vector2d a_ = Eigen::Vector2d::Zero();
};

struct QuadratureTrace {
  double dt = 0;
  std::vector<double> x;  // output quadrature records, shot-normalized
  std::vector<double> y;
};

inline QuadratureTrace simulate_cavity(const CavityParams& cav, const PumpState& pump,
                                       size_t samples, double dt,
                                       GaussianStream& rng, Stepper method = Stepper::exact) {
  CavityStepper stepper(cav, pump, dt, method);
  stepper.seed_stationary(rng);
  QuadratureTrace t;
  t.dt = dt;
  t.x.resize(samples);
  t.y.resize(samples);
  for (size_t i = 0; i < samples; ++i) {
    const Eigen::Vector2d o = stepper.step(rng);
    t.x[i] = o(0);
    t.y[i] = o(1);
  }
  return t;
}

// Balanced receiver after the cavity: local-oscillator phase selects the
// measured quadrature, losses after the output coupler mix in fresh vacuum,
// a single-pole low-pass stands in for the detector response, the result is
// scaled to output units, and a flat dark-noise floor is added. The cavity
// escape efficiency is already part of the simulated output record, so the
// efficiency here must cover only the downstream losses.
struct DetectionChain {
  double lo_angle = 0.0;              // rad
  double downstream_efficiency = 1.0; // propagation and detector, not escape
  double lpf_bandwidth_hz = 450e6;    // 0 disables the filter
  double detector_gain = 1.0;
  double lo_power_w = 1.3e-3;
  double ref_power_w = 1.3e-3;        // LO power the dark-noise ratio is quoted at
  double electronic_ratio = 3.3;      // shot-to-dark PSD ratio at ref_power_w
  bool electronic_enabled = true;

  static double angle_from_voltage(double volts, double v_pi = 35.0) {
    if (v_pi <= 0) throw domain_error("detection: V_pi must be > 0");
    return pi * volts / v_pi;
  }

  void validate() const {
    if (downstream_efficiency <= 0 || downstream_efficiency > 1)
      throw config_error("detection: downstream efficiency must be in (0, 1]");
    if (lpf_bandwidth_hz < 0) throw config_error("detection: bandwidth must be >= 0");
    if (detector_gain <= 0 || lo_power_w <= 0 || ref_power_w <= 0)
      throw config_error("detection: gain and powers must be > 0");
    if (electronic_enabled && electronic_ratio <= 0)
      throw config_error("detection: dark-noise ratio must be > 0");
  }

  double scale() const { return std::sqrt(detector_gain * lo_power_w / ref_power_w); }

  double lpf_alpha(double dt) const {
    return lpf_bandwidth_hz > 0 ? std::exp(-2.0 * pi * lpf_bandwidth_hz * dt) : 0.0;
  }

  // |H(f)|^2 of the sampled one-pole filter, unity at DC
  double lpf_gain_sq(double freq_hz, double dt) const {
    const double alpha = lpf_alpha(dt);
    if (alpha == 0) return 1.0;
    const double w = 2.0 * pi * freq_hz * dt;
    return (1.0 - alpha) * (1.0 - alpha) / (1.0 + alpha * alpha - 2.0 * alpha * std::cos(w));
  }

  // one-sided PSD the chain produces for pure shot noise, excluding dark noise
  double shot_psd(double freq_hz, double dt) const {
    return 2.0 * scale() * scale() * lpf_gain_sq(freq_hz, dt);
  }

  // one-sided dark-noise PSD in output units, flat and independent of the LO
  double electronic_psd() const {
    return electronic_enabled ? 2.0 / electronic_ratio : 0.0;
  }

  double output_psd(double freq_hz, double dt, double theory_rel_shot) const {
    return shot_psd(freq_hz, dt) * theory_rel_shot + electronic_psd();
  }
};

// Stateful detection pipeline so long traces can stream through in chunks.
class DetectionFilter {
 public:
  DetectionFilter(const DetectionChain& chain, double dt) : chain_(chain), dt_(dt) {
    chain.validate();
    cos_ = std::cos(chain.lo_angle);
    sin_ = std::sin(chain.lo_angle);
    eta_ = chain.downstream_efficiency;
    alpha_ = chain.lpf_alpha(dt);
    scale_ = chain.scale();
    sigma_vac_ = std::sqrt((1.0 - eta_) / dt);
    sigma_elec_ = chain.electronic_enabled ? std::sqrt(1.0 / (chain.electronic_ratio * dt)) : 0.0;
  }

  void process(const double* x, const double* y, size_t n, GaussianStream& vacuum,
               GaussianStream& electronic, double* out) {
    const double sqrt_eta = std::sqrt(eta_);
    for (size_t i = 0; i < n; ++i) {
      double v = cos_ * x[i] + sin_ * y[i];
      v = sqrt_eta * v + sigma_vac_ * vacuum.normal();
      if (alpha_ > 0) {
        lpf_ = (1.0 - alpha_) * v + alpha_ * lpf_;
        v = lpf_;
      }
      v *= scale_;
      if (sigma_elec_ > 0) v += sigma_elec_ * electronic.normal();
      out[i] = v;
    }
  }

  double dt() const { return dt_; }

 private:
  DetectionChain chain_;
  double dt_;
  double cos_ = 1, sin_ = 0, eta_ = 1, alpha_ = 0, scale_ = 1;
  double sigma_vac_ = 0, sigma_elec_ = 0;
  double lpf_ = 0;
};

inline std::vector<double> balanced_detect(const QuadratureTrace& trace,
                                           const DetectionChain& chain, GaussianStream& vacuum,
                                           GaussianStream& electronic) {
  DetectionFilter filter(chain, trace.dt);
  std::vector<double> out(trace.x.size());
  filter.process(trace.x.data(), trace.y.data(), trace.x.size(), vacuum, electronic, out.data());
  return out;
}

enum class RunKind { signal, shot, electronic };

// Per-run random streams derived from the user seed: run k draws its cavity,
// vacuum, and dark-noise samples from streams 3k, 3k+1, 3k+2. Runs are
// reproducible independently and in any order.
struct RunRequest {
  RunKind kind = RunKind::signal;
  CavityParams cavity;
  PumpState pump;
  DetectionChain chain;
  SimConfig sim;
  WelchConfig welch;  // sample_rate_hz is overwritten with 1/dt
  uint64_t run_index = 0;
};

inline PsdEstimate run_psd(const RunRequest& req) {
  const double dt = req.sim.resolved_dt(req.cavity);
  WelchConfig welch = req.welch;
  welch.sample_rate_hz = 1.0 / dt;
  const size_t samples = req.sim.resolved_samples(welch, dt);

  GaussianStream cavity_rng(req.sim.seed, 3 * req.run_index);
  GaussianStream vacuum_rng(req.sim.seed, 3 * req.run_index + 1);
  GaussianStream electronic_rng(req.sim.seed, 3 * req.run_index + 2);

  WelchAccumulator acc(welch);
  DetectionFilter filter(req.chain, dt);
  const size_t chunk = std::max<size_t>(req.sim.chunk_samples, 1024);
  std::vector<double> bx(chunk), by(chunk), bout(chunk);

  CavityStepper* stepper = nullptr;
  CavityStepper stepper_storage =
      req.kind == RunKind::signal
          ? CavityStepper(req.cavity, req.pump, dt, req.sim.stepper)
          : CavityStepper(req.cavity, PumpState::from_ratio(0.0, req.pump.pump_phase, req.cavity),
                          dt, Stepper::exact);
  if (req.kind == RunKind::signal) {
    stepper = &stepper_storage;
    stepper->seed_stationary(cavity_rng);
  }

  const double inv_sqrt_dt = 1.0 / std::sqrt(dt);
  size_t done = 0;
  while (done < samples) {
    const size_t n = std::min(chunk, samples - done);
    switch (req.kind) {
      case RunKind::signal:
        for (size_t i = 0; i < n; ++i) {
          const Eigen::Vector2d o = stepper->step(cavity_rng);
          bx[i] = o(0);
          by[i] = o(1);
        }
        filter.process(bx.data(), by.data(), n, vacuum_rng, electronic_rng, bout.data());
        break;
      case RunKind::shot:
        for (size_t i = 0; i < n; ++i) {
          bx[i] = inv_sqrt_dt * cavity_rng.normal();
          by[i] = inv_sqrt_dt * cavity_rng.normal();
        }
        filter.process(bx.data(), by.data(), n, vacuum_rng, electronic_rng, bout.data());
        break;
      case RunKind::electronic: {
        const double sigma = req.chain.electronic_enabled
                                 ? std::sqrt(1.0 / (req.chain.electronic_ratio * dt))
                                 : 0.0;
        for (size_t i = 0; i < n; ++i) bout[i] = sigma * electronic_rng.normal();
        break;
      }
    }
    acc.push(bout.data(), n);
    done += n;
  }
  return acc.estimate();
}

// Run fn(i) for i in [0, n) across worker threads. SQZLAB_THREADS overrides
// the thread count; results must not depend on scheduling (they don't: every
// run owns its random streams).
inline void parallel_for(size_t n, const std::function<void(size_t)>& fn) {
  size_t workers = std::thread::hardware_concurrency();
  if (const char* env = std::getenv("SQZLAB_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && v > 0) workers = static_cast<size_t>(v);
  }
  workers = std::max<size_t>(1, std::min(workers, n));
  if (workers <= 1) {
    for (size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  std::atomic<size_t> next{0};
  for (size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

struct PhaseSweepPoint {
  double lo_angle;       // rad
  double noise_db;       // band-averaged, relative to shot
};

// Band-averaged detected noise versus local-oscillator angle, each point
// normalized by the chain's analytic shot response so the filter drops out.
// Dark noise is disabled for the sweep.
inline std::vector<PhaseSweepPoint> phase_sweep(const CavityParams& cav, const PumpState& pump,
                                                const DetectionChain& chain, const SimConfig& sim,
                                                const WelchConfig& welch,
                                                const std::vector<double>& angles, double band_lo_hz,
                                                double band_hi_hz) {
  std::vector<PhaseSweepPoint> out(angles.size());
  parallel_for(angles.size(), [&](size_t k) {
    RunRequest req;
    req.kind = RunKind::signal;
    req.cavity = cav;
    req.pump = pump;
    req.chain = chain;
    req.chain.lo_angle = angles[k];
    req.chain.electronic_enabled = false;
    req.sim = sim;
    req.welch = welch;
    req.run_index = k;
    const PsdEstimate est = run_psd(req);
    const double dt = sim.resolved_dt(cav);
    double num = 0;
    size_t count = 0;
    for (size_t i = 0; i < est.freq_hz.size(); ++i) {
      if (est.freq_hz[i] < band_lo_hz || est.freq_hz[i] > band_hi_hz) continue;
      num += est.psd[i] / req.chain.shot_psd(est.freq_hz[i], dt);
      ++count;
    }
    if (count == 0) throw data_error("phase_sweep: no bins in the requested band");
    out[k] = {angles[k], db_from_linear(num / static_cast<double>(count))};
  });
  return out;
}

struct ShotSweepPoint {
  double lo_power_w;
  double band_psd;  // output units squared per Hz
};

// Detected noise floor versus LO power with the signal port blocked. Affine
// in power: the slope is shot noise, the intercept the dark-noise floor.
inline std::vector<ShotSweepPoint> shotnoise_sweep(const CavityParams& cav,
                                                   const DetectionChain& chain,
                                                   const SimConfig& sim, const WelchConfig& welch,
                                                   const std::vector<double>& lo_powers_w,
                                                   double band_lo_hz, double band_hi_hz) {
  std::vector<ShotSweepPoint> out(lo_powers_w.size());
  parallel_for(lo_powers_w.size(), [&](size_t k) {
    RunRequest req;
    req.kind = RunKind::shot;
    req.cavity = cav;
    req.pump = PumpState::from_ratio(0.0, -pi / 2.0, cav);
    req.chain = chain;
    req.chain.lo_power_w = lo_powers_w[k];
    req.sim = sim;
    req.welch = welch;
    req.run_index = k;
    const PsdEstimate est = run_psd(req);
    out[k] = {lo_powers_w[k], band_average(est, band_lo_hz, band_hi_hz)};
  });
  return out;
}

}  // namespace sqz
