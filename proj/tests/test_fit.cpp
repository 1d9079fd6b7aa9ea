#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <vector>

#include "sqz/cavity.hpp"
#include "sqz/fit.hpp"
#include "sqz/random.hpp"
#include "sqz/spectra.hpp"

using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

const sqz::CavityParams cav = sqz::derive_rates(550e3, 950e3, 1544.4e-9);
const double carrier_hz = 194115810670810.7;

// cold transmission scan: exactly Lorentzian in the detuning
void synth_scan(const sqz::CavityParams& c, std::vector<double>& f_hz, std::vector<double>& t,
                std::vector<double>& phase, double span_hz = 3e9, size_t n = 801) {
  f_hz.resize(n);
  t.resize(n);
  phase.resize(n);
  for (size_t i = 0; i < n; ++i) {
    f_hz[i] = -span_hz + 2.0 * span_hz * static_cast<double>(i) / static_cast<double>(n - 1);
    const sqz::TransmissionPoint p =
        sqz::transmission_with_gain(c, 0.0, sqz::hz_to_angular(f_hz[i]));
    t[i] = p.transmittance;
    phase[i] = p.phase;
  }
}

}  // namespace

TEST_CASE("damped least squares solves a smooth nonlinear model") {
  // y = a exp(-b x) on a clean grid
  std::vector<double> x(40), y(40);
  for (size_t i = 0; i < x.size(); ++i) {
    x[i] = 0.1 * static_cast<double>(i);
    y[i] = 2.5 * std::exp(-0.8 * x[i]);
  }
  auto fn = [&](const Eigen::VectorXd& p, Eigen::VectorXd& r) {
    r.resize(static_cast<Eigen::Index>(x.size()));
    for (size_t i = 0; i < x.size(); ++i)
      r(static_cast<Eigen::Index>(i)) = p(0) * std::exp(-p(1) * x[i]) - y[i];
  };
  Eigen::VectorXd p0(2);
  p0 << 1.0, 0.3;
  const sqz::FitResult res = sqz::fit_least_squares(fn, p0);
  REQUIRE(res.converged);
  REQUIRE_THAT(res.params(0), WithinRel(2.5, 1e-8));
  REQUIRE_THAT(res.params(1), WithinRel(0.8, 1e-8));
  REQUIRE(res.residual_rms < 1e-10);
}

TEST_CASE("bounds clamp the least-squares trajectory") {
  auto fn = [](const Eigen::VectorXd& p, Eigen::VectorXd& r) {
    r.resize(1);
    r(0) = p(0) - 5.0;
  };
  sqz::LmOptions opt;
  opt.lower = Eigen::VectorXd::Constant(1, -1.0);
  opt.upper = Eigen::VectorXd::Constant(1, 2.0);
  Eigen::VectorXd p0 = Eigen::VectorXd::Zero(1);
  const sqz::FitResult res = sqz::fit_least_squares(fn, p0, opt);
  REQUIRE_THAT(res.params(0), WithinAbs(2.0, 1e-9));
}

TEST_CASE("lorentzian fit recovers exact parameters") {
  std::vector<double> x(401), y(401);
  for (size_t i = 0; i < x.size(); ++i) {
    x[i] = -100.0 + 0.5 * static_cast<double>(i);
    const double dx = x[i] - 12.5;
    const double h = 9.0 / 2.0;
    y[i] = 0.75 - 0.6 * h * h / (dx * dx + h * h);
  }
  const sqz::LorentzianFit fit = sqz::fit_lorentzian(x, y);
  REQUIRE(fit.detail.converged);
  REQUIRE_THAT(fit.baseline, WithinRel(0.75, 1e-6));
  REQUIRE_THAT(fit.amplitude, WithinRel(-0.6, 1e-6));
  REQUIRE_THAT(fit.center, WithinRel(12.5, 1e-6));
  REQUIRE_THAT(fit.fwhm, WithinRel(9.0, 1e-6));
}

TEST_CASE("lorentzian fit guards") {
  REQUIRE_THROWS_AS(sqz::fit_lorentzian({1, 2, 3}, {1, 2, 3}), sqz::data_error);
  std::vector<double> x(32), flat(32, 0.4);
  for (size_t i = 0; i < x.size(); ++i) x[i] = static_cast<double>(i);
  REQUIRE_THROWS_AS(sqz::fit_lorentzian(x, flat), sqz::data_error);
}

TEST_CASE("cavity parameters from a clean cold scan") {
  std::vector<double> f, t, ph;
  synth_scan(cav, f, t, ph);
  const sqz::CavityScanResult r = sqz::cavity_from_scan(f, t, carrier_hz, true);
  REQUIRE(r.fit.detail.converged);
  REQUIRE_THAT(r.fwhm_hz, WithinRel(352937837.6, 1e-6));
  REQUIRE_THAT(r.q_tot, WithinRel(550e3, 1e-6));
  REQUIRE_THAT(r.q_int, WithinRel(950e3, 1e-6));
  REQUIRE_THAT(r.coupling_ratio, WithinRel(0.421052631578947, 1e-6));
  REQUIRE_THAT(r.floor_transmittance, WithinRel(0.0249307479224377, 1e-6));
}

TEST_CASE("cavity scan with measurement noise stays within a percent") {
  std::vector<double> f, t, ph;
  synth_scan(cav, f, t, ph);
  sqz::GaussianStream rng(61, 0);
  for (auto& v : t) v *= 1.0 + 0.01 * rng.normal();
  const sqz::CavityScanResult r = sqz::cavity_from_scan(f, t, carrier_hz, true);
  REQUIRE(r.fit.detail.converged);
  REQUIRE_THAT(r.q_tot, WithinRel(550e3, 0.01));
  REQUIRE_THAT(r.q_int, WithinRel(950e3, 0.03));
}

TEST_CASE("overcoupled branch of the scan inversion") {
  // same dip floor, other side of critical coupling
  sqz::CavityParams over = cav;
  over.kappa_e = cav.kappa_i;
  over.kappa_i = cav.kappa_e;
  std::vector<double> f, t, ph;
  synth_scan(over, f, t, ph);
  const sqz::CavityScanResult r = sqz::cavity_from_scan(f, t, carrier_hz, false);
  REQUIRE_THAT(r.coupling_ratio, WithinRel(over.escape_efficiency(), 1e-6));
  REQUIRE(r.coupling_ratio > 0.5);
}

TEST_CASE("scan inversion requires a dip") {
  std::vector<double> x(64), peak(64);
  for (size_t i = 0; i < x.size(); ++i) {
    x[i] = static_cast<double>(i);
    const double dx = x[i] - 30.0;
    peak[i] = 0.2 + 0.5 * 16.0 / (dx * dx + 16.0);
  }
  REQUIRE_THROWS_AS(sqz::cavity_from_scan(x, peak, carrier_hz, true), sqz::data_error);
}

TEST_CASE("quadratic response fit is exact on clean data") {
  std::vector<double> p(12), sh(12);
  for (size_t i = 0; i < p.size(); ++i) {
    p[i] = 5e-3 * static_cast<double>(i + 1);
    sh[i] = 10.0 * p[i] * p[i];
  }
  REQUIRE_THAT(sqz::fit_shg_quadratic(p, sh), WithinRel(10.0, 1e-12));
}

TEST_CASE("quadratic response fit with noise stays within its noise level") {
  std::vector<double> p(12), sh(12);
  sqz::GaussianStream rng(67, 0);
  for (size_t i = 0; i < p.size(); ++i) {
    p[i] = 5e-3 * static_cast<double>(i + 1);
    sh[i] = 10.0 * p[i] * p[i] * (1.0 + 0.05 * rng.normal());
  }
  REQUIRE_THAT(sqz::fit_shg_quadratic(p, sh), WithinRel(10.0, 0.05));
}

TEST_CASE("straight line fit") {
  const std::vector<double> x{0.0, 1.0, 2.0, 3.0};
  const std::vector<double> y{1.0, 3.0, 5.0, 7.0};
  const sqz::LinearFit f = sqz::fit_linear(x, y);
  REQUIRE_THAT(f.slope, WithinRel(2.0, 1e-12));
  REQUIRE_THAT(f.intercept, WithinRel(1.0, 1e-12));
  REQUIRE_THROWS_AS(sqz::fit_linear({1.0, 1.0}, {2.0, 3.0}), sqz::data_error);
}

TEST_CASE("squeezing model fit recovers drive and efficiency exactly") {
  const double x_true = 0.30983866769659335;
  const double eta_true = 0.221052631578947;
  sqz::LossChain chain;
  chain.escape = eta_true;
  sqz::SqueezingFitData data;
  for (double f = 60e6; f <= 140e6; f += 1e6) {
    const sqz::MeasuredPair m =
        sqz::measured_spectrum(cav, x_true, chain, sqz::hz_to_angular(f));
    data.freq_hz.push_back(f);
    data.squeeze_db.push_back(m.s_minus_db);
    data.antisqueeze_db.push_back(m.s_plus_db);
  }
  const sqz::SqueezingFit fit = sqz::fit_squeezing_model(cav, data);
  REQUIRE(fit.detail.converged);
  REQUIRE_THAT(fit.ratio, WithinRel(x_true, 1e-6));
  REQUIRE_THAT(fit.efficiency, WithinRel(eta_true, 1e-6));
}

TEST_CASE("squeezing model fit tolerates measurement noise") {
  const double x_true = 0.31;
  const double eta_true = 0.221;
  sqz::LossChain chain;
  chain.escape = eta_true;
  sqz::SqueezingFitData data;
  sqz::GaussianStream rng(71, 0);
  for (double f = 60e6; f <= 140e6; f += 1e6) {
    const sqz::MeasuredPair m = sqz::measured_spectrum(cav, x_true, chain, sqz::hz_to_angular(f));
    data.freq_hz.push_back(f);
    data.squeeze_db.push_back(sqz::db_from_linear(m.s_minus * (1.0 + 0.02 * rng.normal())));
    data.antisqueeze_db.push_back(sqz::db_from_linear(m.s_plus * (1.0 + 0.02 * rng.normal())));
  }
  const sqz::SqueezingFit fit = sqz::fit_squeezing_model(cav, data);
  REQUIRE(fit.detail.converged);
  REQUIRE_THAT(fit.ratio, WithinRel(x_true, 0.10));
  REQUIRE_THAT(fit.efficiency, WithinRel(eta_true, 0.10));
}

TEST_CASE("squeezing fit refuses data with no visible effect") {
  sqz::SqueezingFitData data;
  data.freq_hz = {60e6, 80e6, 100e6};
  data.squeeze_db = {0.2, 0.3, 0.1};      // above shot noise: nothing squeezed
  data.antisqueeze_db = {0.4, 0.5, 0.3};
  const sqz::SqueezingFit fit = sqz::fit_squeezing_model(cav, data);
  REQUIRE_FALSE(fit.detail.converged);
  REQUIRE(fit.detail.message == "no squeezing or antisqueezing visible in the data");
}

TEST_CASE("phase unwrap removes 2 pi jumps") {
  std::vector<double> wrapped;
  for (int i = 0; i <= 100; ++i) {
    const double truth = 0.08 * i;
    wrapped.push_back(std::remainder(truth, 2.0 * sqz::pi));
  }
  const std::vector<double> un = sqz::unwrap(wrapped);
  for (int i = 0; i <= 100; ++i) REQUIRE_THAT(un[i], WithinAbs(0.08 * i, 1e-9));
}

TEST_CASE("coupling regime diagnosis") {
  std::vector<double> f, t, ph;

  synth_scan(cav, f, t, ph);
  const sqz::CouplingDiagnostic under = sqz::coupling_diagnostic(f, t, ph);
  REQUIRE(under.regime == sqz::CouplingRegime::undercoupled);
  REQUIRE(under.phase_excursion < sqz::pi);
  REQUIRE_THAT(under.coupling_ratio, WithinRel(cav.escape_efficiency(), 1e-4));

  sqz::CavityParams over = cav;
  over.kappa_e = cav.kappa_i;
  over.kappa_i = cav.kappa_e;
  synth_scan(over, f, t, ph);
  const sqz::CouplingDiagnostic od = sqz::coupling_diagnostic(f, t, ph);
  REQUIRE(od.regime == sqz::CouplingRegime::overcoupled);
  REQUIRE(od.phase_excursion > sqz::pi);
  REQUIRE_THAT(od.coupling_ratio, WithinRel(over.escape_efficiency(), 1e-4));

  sqz::CavityParams crit = cav;
  crit.kappa_e = 0.5 * cav.kappa();
  crit.kappa_i = 0.5 * cav.kappa();
  synth_scan(crit, f, t, ph);
  const sqz::CouplingDiagnostic cd = sqz::coupling_diagnostic(f, t, ph);
  REQUIRE(cd.regime == sqz::CouplingRegime::critical);
  REQUIRE_THAT(cd.coupling_ratio, WithinAbs(0.5, 1e-12));

  REQUIRE(std::string(sqz::to_string(under.regime)) == "undercoupled");
  REQUIRE(std::string(sqz::to_string(od.regime)) == "overcoupled");
  REQUIRE(std::string(sqz::to_string(cd.regime)) == "critical");
}
