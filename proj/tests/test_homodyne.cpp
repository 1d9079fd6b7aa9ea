#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <cstdlib>
#include <numeric>
#include <vector>

#include "sqz/homodyne.hpp"

using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

const sqz::CavityParams cav = sqz::derive_rates(550e3, 950e3, 1544.4e-9);

// band-averaged detected theory on the same bins the Welch grid produces
double theory_band_linear(const sqz::CavityParams& c, const sqz::PumpState& pump, double eta,
                          double angle, const sqz::WelchConfig& welch, double dt, double f_lo,
                          double f_hi) {
  const double fs = 1.0 / dt;
  double acc = 0;
  size_t count = 0;
  for (size_t k = 0; k <= welch.segment_length / 2; ++k) {
    const double f = static_cast<double>(k) * fs / static_cast<double>(welch.segment_length);
    if (f < f_lo || f > f_hi) continue;
    const double s = sqz::quadrature_spectrum(c, pump, angle, sqz::hz_to_angular(f));
    acc += 1.0 + eta * (s - 1.0);
    ++count;
  }
  return acc / static_cast<double>(count);
}

double band_rel_shot(const sqz::PsdEstimate& est, const sqz::DetectionChain& chain, double dt,
                     double f_lo, double f_hi) {
  double acc = 0;
  size_t count = 0;
  for (size_t i = 0; i < est.freq_hz.size(); ++i) {
    if (est.freq_hz[i] < f_lo || est.freq_hz[i] > f_hi) continue;
    acc += est.psd[i] / chain.shot_psd(est.freq_hz[i], dt);
    ++count;
  }
  return acc / static_cast<double>(count);
}

}  // namespace

TEST_CASE("drift matrix damps the squeezed quadrature faster") {
  const sqz::PumpState pump = sqz::PumpState::from_ratio(0.4, -sqz::pi / 2, cav);
  const Eigen::Matrix2d m = sqz::quadrature_drift(cav, pump);
  const double k = cav.kappa();
  const double eps = 0.2 * k;
  REQUIRE_THAT(m(0, 0), WithinRel(-k / 2.0 - eps, 1e-12));
  REQUIRE_THAT(m(1, 1), WithinRel(-k / 2.0 + eps, 1e-12));
  REQUIRE_THAT(m(0, 1), WithinAbs(0.0, 1e-3));
  REQUIRE_THAT(m(1, 0), WithinAbs(0.0, 1e-3));

  sqz::CavityParams detuned = cav;
  detuned.detuning = 0.1 * k;
  const Eigen::Matrix2d md = sqz::quadrature_drift(detuned, pump);
  REQUIRE_THAT(md(0, 1), WithinRel(0.1 * k, 1e-12));
  REQUIRE_THAT(md(1, 0), WithinRel(-0.1 * k, 1e-12));
}

TEST_CASE("stationary intracavity covariance matches the closed form") {
  const double dt = 0.01 * 2.0 * sqz::pi / cav.kappa();
  const sqz::PumpState off = sqz::PumpState::from_ratio(0.0, -sqz::pi / 2, cav);
  const sqz::CavityStepper calm(cav, off, dt);
  const Eigen::Matrix2d v0 = calm.stationary_covariance();
  REQUIRE_THAT(v0(0, 0), WithinRel(1.0, 1e-10));
  REQUIRE_THAT(v0(1, 1), WithinRel(1.0, 1e-10));
  REQUIRE_THAT(v0(0, 1), WithinAbs(0.0, 1e-10));

  const sqz::PumpState pump = sqz::PumpState::from_ratio(0.5, -sqz::pi / 2, cav);
  const sqz::CavityStepper driven(cav, pump, dt);
  const Eigen::Matrix2d v = driven.stationary_covariance();
  REQUIRE_THAT(v(0, 0), WithinRel(1.0 / 1.5, 1e-10));  // 1/(1+x)
  REQUIRE_THAT(v(1, 1), WithinRel(2.0, 1e-10));        // 1/(1-x)
  REQUIRE_THAT(v(0, 1), WithinAbs(0.0, 1e-10));
}

TEST_CASE("stepper rejects unusable parameters") {
  const sqz::PumpState pump = sqz::PumpState::from_ratio(0.5, -sqz::pi / 2, cav);
  REQUIRE_THROWS_AS(sqz::CavityStepper(cav, pump, 0.0), sqz::config_error);
  const sqz::PumpState over = sqz::PumpState::from_ratio(1.0, -sqz::pi / 2, cav);
  REQUIRE_THROWS_AS(sqz::CavityStepper(cav, over, 1e-11), sqz::above_threshold_error);
}

TEST_CASE("sim config resolves step and duration") {
  sqz::SimConfig sim;
  const double limit = 0.01 * 2.0 * sqz::pi / cav.kappa();
  REQUIRE_THAT(sim.resolved_dt(cav), WithinRel(limit, 1e-12));
  sim.dt_s = 1e-9;  // far too coarse for a 350 MHz cavity
  REQUIRE_THROWS_AS(sim.resolved_dt(cav), sqz::config_error);
  sim.dt_s = limit / 2.0;
  REQUIRE_THAT(sim.resolved_dt(cav), WithinRel(limit / 2.0, 1e-12));

  sqz::WelchConfig welch;
  welch.segment_length = 8192;
  welch.overlap = 0.5;
  sim.dt_s = 0;
  sim.min_segments = 100;
  REQUIRE(sim.resolved_samples(welch, limit) == 8192 + 99 * 4096);
  sim.duration_s = 1e-9;  // shorter than the segment floor
  REQUIRE(sim.resolved_samples(welch, limit) == 8192 + 99 * 4096);
  sim.duration_s = limit * 1e6;
  REQUIRE(sim.resolved_samples(welch, limit) == 1000000);
}

TEST_CASE("detection chain knobs") {
  sqz::DetectionChain chain;
  REQUIRE_THAT(sqz::DetectionChain::angle_from_voltage(35.0), WithinRel(sqz::pi, 1e-12));
  REQUIRE_THAT(sqz::DetectionChain::angle_from_voltage(8.75), WithinRel(sqz::pi / 4, 1e-12));
  REQUIRE_THAT(chain.scale(), WithinRel(1.0, 1e-12));
  chain.lo_power_w = 2.6e-3;
  REQUIRE_THAT(chain.scale(), WithinRel(std::sqrt(2.0), 1e-12));
  const double dt = 1e-11;
  REQUIRE_THAT(chain.lpf_gain_sq(0.0, dt), WithinRel(1.0, 1e-12));
  REQUIRE(chain.lpf_gain_sq(450e6, dt) < 0.6);
  REQUIRE(chain.lpf_gain_sq(450e6, dt) > 0.4);
  REQUIRE_THAT(chain.electronic_psd(), WithinRel(2.0 / 3.3, 1e-12));
  chain.electronic_enabled = false;
  REQUIRE(chain.electronic_psd() == 0.0);
  chain.downstream_efficiency = 1.5;
  REQUIRE_THROWS_AS(chain.validate(), sqz::config_error);
}

TEST_CASE("shot-only run reproduces the analytic chain response") {
  sqz::RunRequest req;
  req.kind = sqz::RunKind::shot;
  req.cavity = cav;
  req.pump = sqz::PumpState::from_ratio(0.0, -sqz::pi / 2, cav);
  req.chain.lo_angle = 0.3;
  req.chain.downstream_efficiency = 0.8;
  req.chain.electronic_enabled = false;
  req.sim.seed = 31;
  req.sim.min_segments = 300;
  const double dt = req.sim.resolved_dt(cav);
  req.welch = sqz::WelchConfig::for_rbw(1.0 / dt, 4.5e6);
  const sqz::PsdEstimate est = sqz::run_psd(req);
  REQUIRE(est.segments >= 300);
  // flat at the shot level across very different bands, filter included
  REQUIRE_THAT(band_rel_shot(est, req.chain, dt, 20e6, 120e6), WithinRel(1.0, 0.03));
  REQUIRE_THAT(band_rel_shot(est, req.chain, dt, 300e6, 600e6), WithinRel(1.0, 0.03));
}

TEST_CASE("electronic-only run sits at the configured dark floor") {
  sqz::RunRequest req;
  req.kind = sqz::RunKind::electronic;
  req.cavity = cav;
  req.pump = sqz::PumpState::from_ratio(0.0, -sqz::pi / 2, cav);
  req.sim.seed = 33;
  req.sim.min_segments = 300;
  const double dt = req.sim.resolved_dt(cav);
  req.welch = sqz::WelchConfig::for_rbw(1.0 / dt, 4.5e6);
  const sqz::PsdEstimate est = sqz::run_psd(req);
  const double band = sqz::band_average(est, 20e6, 200e6);
  REQUIRE_THAT(band, WithinRel(2.0 / 3.3, 0.03));
}

TEST_CASE("driven cavity output spectrum matches the closed form") {
  const sqz::PumpState pump = sqz::PumpState::from_ratio(0.5, -sqz::pi / 2, cav);
  sqz::RunRequest req;
  req.kind = sqz::RunKind::signal;
  req.cavity = cav;
  req.pump = pump;
  req.chain.lo_angle = 0.0;
  req.chain.downstream_efficiency = 1.0;
  req.chain.electronic_enabled = false;
  req.sim.seed = 35;
  req.sim.min_segments = 400;
  const double dt = req.sim.resolved_dt(cav);
  req.welch = sqz::WelchConfig::for_rbw(1.0 / dt, 4.5e6);

  const sqz::PsdEstimate est = sqz::run_psd(req);
  // the intrinsic-loss port caps the detected squeezing at the escape efficiency
  const double eta = cav.escape_efficiency();
  const double measured = band_rel_shot(est, req.chain, dt, 30e6, 90e6);
  const double expected = theory_band_linear(cav, pump, eta, 0.0, req.welch, dt, 30e6, 90e6);
  REQUIRE_THAT(measured, WithinRel(expected, 0.05));

  // anti-squeezed quadrature as well
  sqz::RunRequest req2 = req;
  req2.chain.lo_angle = sqz::pi / 2;
  req2.run_index = 1;
  const sqz::PsdEstimate est2 = sqz::run_psd(req2);
  const double measured2 = band_rel_shot(est2, req2.chain, dt, 30e6, 90e6);
  const double expected2 =
      theory_band_linear(cav, pump, eta, sqz::pi / 2, req.welch, dt, 30e6, 90e6);
  REQUIRE_THAT(measured2, WithinRel(expected2, 0.05));
  REQUIRE(measured < 1.0);
  REQUIRE(measured2 > 1.0);
}

TEST_CASE("downstream loss pulls the detected spectrum toward shot noise") {
  const sqz::PumpState pump = sqz::PumpState::from_ratio(0.5, -sqz::pi / 2, cav);
  sqz::RunRequest req;
  req.kind = sqz::RunKind::signal;
  req.cavity = cav;
  req.pump = pump;
  req.chain.lo_angle = 0.0;
  req.chain.downstream_efficiency = 0.525;  // path 0.70 times detector 0.75
  req.chain.electronic_enabled = false;
  req.sim.seed = 37;
  req.sim.min_segments = 400;
  const double dt = req.sim.resolved_dt(cav);
  req.welch = sqz::WelchConfig::for_rbw(1.0 / dt, 4.5e6);

  const sqz::PsdEstimate est = sqz::run_psd(req);
  const double eta = cav.escape_efficiency() * 0.525;
  const double measured = band_rel_shot(est, req.chain, dt, 30e6, 90e6);
  const double expected = theory_band_linear(cav, pump, eta, 0.0, req.welch, dt, 30e6, 90e6);
  REQUIRE_THAT(measured, WithinRel(expected, 0.05));
}

TEST_CASE("identical requests reproduce identical spectra") {
  const sqz::PumpState pump = sqz::PumpState::from_ratio(0.3, -sqz::pi / 2, cav);
  sqz::RunRequest req;
  req.kind = sqz::RunKind::signal;
  req.cavity = cav;
  req.pump = pump;
  req.sim.seed = 41;
  req.sim.min_segments = 20;
  const double dt = req.sim.resolved_dt(cav);
  req.welch = sqz::WelchConfig::for_rbw(1.0 / dt, 10e6);

  const sqz::PsdEstimate a = sqz::run_psd(req);
  const sqz::PsdEstimate b = sqz::run_psd(req);
  REQUIRE(a.psd == b.psd);

  sqz::RunRequest other = req;
  other.sim.seed = 42;
  const sqz::PsdEstimate c = sqz::run_psd(other);
  REQUIRE(a.psd != c.psd);

  sqz::RunRequest shifted = req;
  shifted.run_index = 5;
  const sqz::PsdEstimate d = sqz::run_psd(shifted);
  REQUIRE(a.psd != d.psd);
}

TEST_CASE("euler stepper converges to the exact one") {
  const sqz::PumpState pump = sqz::PumpState::from_ratio(0.3, -sqz::pi / 2, cav);
  sqz::RunRequest req;
  req.kind = sqz::RunKind::signal;
  req.cavity = cav;
  req.pump = pump;
  req.chain.lo_angle = 0.0;
  req.chain.electronic_enabled = false;
  req.sim.seed = 43;
  req.sim.min_segments = 200;
  req.sim.stepper = sqz::Stepper::euler;
  req.sim.dt_s = 0.25 * 0.01 * 2.0 * sqz::pi / cav.kappa();
  const double dt = req.sim.resolved_dt(cav);
  req.welch = sqz::WelchConfig::for_rbw(1.0 / dt, 4.5e6);

  const sqz::PsdEstimate est = sqz::run_psd(req);
  const double eta = cav.escape_efficiency();
  const double measured = band_rel_shot(est, req.chain, dt, 30e6, 90e6);
  const double expected = theory_band_linear(cav, pump, eta, 0.0, req.welch, dt, 30e6, 90e6);
  REQUIRE_THAT(measured, WithinRel(expected, 0.07));
}

TEST_CASE("phase sweep finds the squeezed and anti-squeezed angles") {
  const sqz::PumpState pump = sqz::PumpState::from_ratio(0.5, -sqz::pi / 2, cav);
  sqz::DetectionChain chain;
  chain.downstream_efficiency = 1.0;
  sqz::SimConfig sim;
  sim.seed = 47;
  sim.min_segments = 150;
  const double dt = sim.resolved_dt(cav);
  const sqz::WelchConfig welch = sqz::WelchConfig::for_rbw(1.0 / dt, 4.5e6);

  const std::vector<double> angles{0.0, sqz::pi / 4, sqz::pi / 2};
  const auto points = sqz::phase_sweep(cav, pump, chain, sim, welch, angles, 30e6, 90e6);
  REQUIRE(points.size() == 3);

  const double eta = cav.escape_efficiency();
  for (size_t i = 0; i < angles.size(); ++i) {
    const double expected = sqz::db_from_linear(
        theory_band_linear(cav, pump, eta, angles[i], welch, dt, 30e6, 90e6));
    REQUIRE_THAT(points[i].noise_db, WithinAbs(expected, 0.4));
  }
  REQUIRE(points[0].noise_db < 0.0);
  REQUIRE(points[2].noise_db > 1.0);
  REQUIRE(points[1].noise_db > points[0].noise_db);
  REQUIRE(points[1].noise_db < points[2].noise_db);
}

TEST_CASE("shot-noise sweep is affine in the LO power") {
  sqz::DetectionChain chain;
  sqz::SimConfig sim;
  sim.seed = 49;
  sim.min_segments = 300;
  const double dt = sim.resolved_dt(cav);
  const sqz::WelchConfig welch = sqz::WelchConfig::for_rbw(1.0 / dt, 4.5e6);

  const std::vector<double> powers{0.4e-3, 0.8e-3, 1.3e-3, 1.8e-3, 2.4e-3};
  const auto points = sqz::shotnoise_sweep(cav, chain, sim, welch, powers, 30e6, 110e6);
  REQUIRE(points.size() == powers.size());

  // least squares through the points
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (const auto& p : points) {
    sx += p.lo_power_w;
    sy += p.band_psd;
    sxx += p.lo_power_w * p.lo_power_w;
    sxy += p.lo_power_w * p.band_psd;
  }
  const double n = static_cast<double>(points.size());
  const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  const double intercept = (sy - slope * sx) / n;

  REQUIRE(slope > 0.0);
  // the dark floor is LO-independent: 2/3.3 in output units
  REQUIRE_THAT(intercept, WithinRel(2.0 / 3.3, 0.2));
  double ss_res = 0, ss_tot = 0;
  const double mean = sy / n;
  for (const auto& p : points) {
    const double fit = slope * p.lo_power_w + intercept;
    ss_res += (p.band_psd - fit) * (p.band_psd - fit);
    ss_tot += (p.band_psd - mean) * (p.band_psd - mean);
  }
  REQUIRE(1.0 - ss_res / ss_tot > 0.995);
}

TEST_CASE("parallel for covers the range whatever the thread cap") {
  std::vector<int> hits(257, 0);
  sqz::parallel_for(hits.size(), [&](size_t i) { hits[i] += static_cast<int>(i); });
  for (size_t i = 0; i < hits.size(); ++i) REQUIRE(hits[i] == static_cast<int>(i));

  setenv("SQZLAB_THREADS", "2", 1);
  std::vector<int> hits2(64, -1);
  sqz::parallel_for(hits2.size(), [&](size_t i) { hits2[i] = static_cast<int>(2 * i); });
  unsetenv("SQZLAB_THREADS");
  for (size_t i = 0; i < hits2.size(); ++i) REQUIRE(hits2[i] == static_cast<int>(2 * i));
}

TEST_CASE("balanced detection streams match the one-shot helper") {
  const sqz::PumpState pump = sqz::PumpState::from_ratio(0.4, -sqz::pi / 2, cav);
  const double dt = 0.01 * 2.0 * sqz::pi / cav.kappa();
  sqz::GaussianStream rng(53, 0);
  const sqz::QuadratureTrace trace = sqz::simulate_cavity(cav, pump, 5000, dt, rng);
  REQUIRE(trace.x.size() == 5000);
  REQUIRE(trace.y.size() == 5000);

  sqz::DetectionChain chain;
  chain.lo_angle = 0.7;
  chain.downstream_efficiency = 0.9;
  sqz::GaussianStream vac1(53, 1), elec1(53, 2), vac2(53, 1), elec2(53, 2);
  const std::vector<double> whole = sqz::balanced_detect(trace, chain, vac1, elec1);

  sqz::DetectionFilter filter(chain, dt);
  std::vector<double> streamed(trace.x.size());
  const size_t split = 1234;
  filter.process(trace.x.data(), trace.y.data(), split, vac2, elec2, streamed.data());
  filter.process(trace.x.data() + split, trace.y.data() + split, trace.x.size() - split, vac2,
                 elec2, streamed.data() + split);
  REQUIRE(whole == streamed);
}
