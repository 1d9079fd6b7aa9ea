#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sqz/sqz.hpp"

// sqzlab: command-line front end. Every run resolves its parameters into one
// JSON document, executes, writes CSV/JSON outputs plus a manifest, and can be
// replayed byte-identically from that manifest.

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "0.1.0";

std::vector<double> linspace(double a, double b, size_t n) {
  std::vector<double> v;
  if (n == 0) return v;
  if (n == 1 || a == b) {
    v.push_back(a);
    return v;
  }
  v.resize(n);
  for (size_t i = 0; i < n; ++i)
    v[i] = a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1);
  return v;
}

// "start:stop:count" or "v1,v2,v3"
std::vector<double> parse_grid(const std::string& text) {
  const auto parse_one = [&](const std::string& s) {
    try {
      size_t pos = 0;
      const double v = std::stod(s, &pos);
      if (pos != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      throw sqz::config_error("grid: bad number '" + s + "' in '" + text + "'");
    }
  };
  std::vector<std::string> parts;
  const char sep = text.find(':') != std::string::npos ? ':' : ',';
  size_t start = 0;
  while (true) {
    const size_t at = text.find(sep, start);
    parts.push_back(text.substr(start, at == std::string::npos ? at : at - start));
    if (at == std::string::npos) break;
    start = at + 1;
  }
  if (sep == ':') {
    if (parts.size() != 3) throw sqz::config_error("grid: expected start:stop:count, got " + text);
    const double a = parse_one(parts[0]);
    const double b = parse_one(parts[1]);
    const double n = parse_one(parts[2]);
    if (n < 1 || n != std::floor(n)) throw sqz::config_error("grid: count must be a positive integer");
    return linspace(a, b, static_cast<size_t>(n));
  }
  std::vector<double> v;
  v.reserve(parts.size());
  for (const auto& p : parts) v.push_back(parse_one(p));
  return v;
}

void write_json_atomic(const fs::path& path, const json& j) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw sqz::data_error("cannot open for writing: " + tmp.string());
    out << j.dump(2) << '\n';
    out.flush();
    if (!out) throw sqz::data_error("write failed: " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw sqz::data_error("rename failed: " + path.string() + ": " + ec.message());
}

void add_output(sqz::RunManifest& man, const fs::path& outdir, const std::string& name) {
  man.outputs[name] = sqz::hex64(sqz::fnv1a64_file((outdir / name).string()));
}

// ---- config section parsers ----

sqz::CavityParams parse_cavity(const sqz::ConfigView& root) {
  const sqz::ConfigView c = root.section("cavity");
  const double lambda = c.number("wavelength_nm") * 1e-9;
  const double fsr_hz = c.number_or("fsr_hz", 5.7e9);
  sqz::CavityParams cav;
  if (c.has("kappa_e_hz") || c.has("kappa_i_hz")) {
    cav.resonance_wavelength = lambda;
    cav.kappa_e = sqz::hz_to_angular(c.number("kappa_e_hz"));
    cav.kappa_i = sqz::hz_to_angular(c.number("kappa_i_hz"));
    cav.fsr = sqz::hz_to_angular(fsr_hz);
  } else {
    cav = sqz::derive_rates(c.number("q_tot"), c.number("q_int"), lambda,
                            c.flag_or("undercoupled", true), fsr_hz);
  }
  cav.detuning = sqz::hz_to_angular(c.number_or("detuning_hz", 0.0));
  cav.validate();
  return cav;
}

sqz::LossChain parse_losses(const sqz::CavityParams& cav, const sqz::ConfigView& root) {
  if (!root.has("losses")) return sqz::LossChain::from_cavity(cav, 1.0, 1.0);
  const sqz::ConfigView l = root.section("losses");
  std::vector<std::pair<std::string, double>> extras;
  if (l.has("extra")) {
    const json& e = l.raw()["extra"];
    if (!e.is_object()) throw sqz::config_error("config: losses.extra must be an object");
    for (auto it = e.begin(); it != e.end(); ++it) {
      if (!it.value().is_number())
        throw sqz::config_error("config: losses.extra." + it.key() + " must be a number");
      extras.emplace_back(it.key(), it.value().get<double>());
    }
  }
  return sqz::LossChain::from_cavity(cav, l.number_or("path_transmission", 1.0),
                                     l.number_or("detector_qe", 1.0), std::move(extras));
}

sqz::PumpState parse_pump(const sqz::ConfigView& root, const sqz::CavityParams& cav) {
  const sqz::ConfigView p = root.section("pump");
  const double phase = p.number_or("phase_rad", -sqz::pi / 2.0);
  if (p.has("ratio")) return sqz::PumpState::from_ratio(p.number("ratio"), phase, cav);
  const sqz::ThresholdModel thr{p.number("threshold_sh_mw") * 1e-3};
  double sh_w = 0;
  if (p.has("sh_power_mw")) {
    sh_w = p.number("sh_power_mw") * 1e-3;
  } else {
    const sqz::ShgModel shg{p.number("shg_efficiency_per_w")};
    sh_w = shg.sh_power(p.number("fh_power_mw") * 1e-3);
  }
  sqz::PumpState state = sqz::pump_state_from_power(cav, thr, sh_w, phase);
  state.sh_power = sh_w;
  return state;
}

sqz::DetectionChain parse_detection(const sqz::ConfigView& root, const sqz::LossChain& chain) {
  sqz::DetectionChain det;
  det.downstream_efficiency = chain.downstream();
  if (!root.has("detection")) return det;
  const sqz::ConfigView d = root.section("detection");
  if (d.has("lo_voltage"))
    det.lo_angle = sqz::DetectionChain::angle_from_voltage(d.number("lo_voltage"),
                                                           d.number_or("v_pi", 35.0));
  det.lo_angle = d.number_or("lo_angle_rad", det.lo_angle);
  det.lpf_bandwidth_hz = d.number_or("lpf_hz", det.lpf_bandwidth_hz);
  det.detector_gain = d.number_or("gain", 1.0);
  det.lo_power_w = d.number_or("lo_power_mw", 1.3) * 1e-3;
  det.ref_power_w = d.number_or("ref_power_mw", 1.3) * 1e-3;
  det.electronic_ratio = d.number_or("electronic_ratio", 3.3);
  det.electronic_enabled = d.flag_or("electronic", true);
  det.validate();
  return det;
}

sqz::SimConfig parse_sim(const sqz::ConfigView& root, uint64_t seed) {
  sqz::SimConfig sim;
  sim.seed = seed;
  sim.min_segments = 200;
  if (!root.has("simulate")) return sim;
  const sqz::ConfigView s = root.section("simulate");
  sim.dt_s = s.number_or("dt_s", 0.0);
  sim.duration_s = s.number_or("duration_s", 0.0);
  sim.min_segments = static_cast<size_t>(s.number_or("segments", 200.0));
  const std::string stepper = s.text_or("stepper", "exact");
  if (stepper == "euler") {
    sim.stepper = sqz::Stepper::euler;
  } else if (stepper != "exact") {
    throw sqz::config_error("config: simulate.stepper must be 'exact' or 'euler'");
  }
  return sim;
}

// ---- subcommand bodies ----

void run_spectrum(const json& cfg, const fs::path& outdir, sqz::RunManifest& man) {
  const sqz::ConfigView root(cfg);
  const sqz::CavityParams cav = parse_cavity(root);
  const sqz::LossChain chain = parse_losses(cav, root);
  const sqz::PumpState pump = parse_pump(root, cav);

  double fmin = 60e6, fmax = 140e6;
  size_t points = 81;
  if (root.has("spectrum")) {
    const sqz::ConfigView s = root.section("spectrum");
    fmin = s.number_or("fmin_hz", fmin);
    fmax = s.number_or("fmax_hz", fmax);
    points = static_cast<size_t>(s.number_or("points", static_cast<double>(points)));
  }
  if (fmin < 0 || fmax < fmin) throw sqz::config_error("config: spectrum range must satisfy 0 <= fmin <= fmax");
  if (points < 1) throw sqz::config_error("config: spectrum.points must be >= 1");
  const std::vector<double> grid = fmin == fmax ? std::vector<double>{fmin} : linspace(fmin, fmax, points);

  const sqz::SpectrumCurves curves = sqz::spectrum_curve(cav, pump.ratio, chain, grid);
  sqz::write_csv_columns((outdir / "spectrum.csv").string(),
                         {"freq_hz", "squeeze_db", "antisqueeze_db"},
                         {curves.s_minus_db.freq_hz, curves.s_minus_db.value, curves.s_plus_db.value});
  add_output(man, outdir, "spectrum.csv");

  man.results["pump_ratio"] = pump.ratio;
  man.results["total_efficiency"] = chain.total();
  man.results["squeeze_db_at_fmin"] = curves.s_minus_db.value.front();
  man.results["antisqueeze_db_at_fmin"] = curves.s_plus_db.value.front();
  std::printf("spectrum: x=%.6g eta_tot=%.6g rows=%zu [%.6g, %.6g] dB at %.4g MHz\n", pump.ratio,
              chain.total(), grid.size(), curves.s_minus_db.value.front(),
              curves.s_plus_db.value.front(), grid.front() / 1e6);
}

void run_transmission(const json& cfg, const fs::path& outdir, sqz::RunManifest& man) {
  const sqz::ConfigView root(cfg);
  const sqz::CavityParams cav = parse_cavity(root);
  std::vector<double> gains{0.0, 0.3, 0.6, 0.9};
  double span_kappa = 30.0;
  size_t points = 4001;
  if (root.has("transmission")) {
    const sqz::ConfigView t = root.section("transmission");
    if (t.has("gain_ratios")) gains = t.numbers("gain_ratios");
    span_kappa = t.number_or("span_kappa", span_kappa);
    points = static_cast<size_t>(t.number_or("points", static_cast<double>(points)));
  }
  if (points < 16) throw sqz::config_error("config: transmission.points must be >= 16");
  const double k = cav.kappa();
  const std::vector<double> det = linspace(-span_kappa * k, span_kappa * k, points);

  std::vector<std::string> names{"detuning_hz"};
  std::vector<std::vector<double>> cols;
  std::vector<double> det_hz(det.size());
  for (size_t i = 0; i < det.size(); ++i) det_hz[i] = sqz::angular_to_hz(det[i]);
  cols.push_back(det_hz);

  man.results["gain_ratios"] = gains;
  json per_gain = json::array();
  for (size_t gi = 0; gi < gains.size(); ++gi) {
    const double g_beta = gains[gi] * k / 2.0;
    const sqz::TransmissionCurve c = sqz::transmission_curve(cav, g_beta, det);
    char buf[32];
    std::snprintf(buf, sizeof(buf), "t%zu", gi);
    names.emplace_back(buf);
    cols.push_back(c.transmittance);
    std::snprintf(buf, sizeof(buf), "phase%zu", gi);
    names.emplace_back(buf);
    cols.push_back(c.phase);

    json entry;
    entry["gain_ratio"] = gains[gi];
    entry["pole_law_fwhm_hz"] =
        sqz::angular_to_hz(k * std::sqrt(std::max(0.0, 1.0 - gains[gi] * gains[gi])));
    try {
      const double fwhm = sqz::fwhm_numeric(det_hz, c.transmittance);
      entry["fwhm_hz"] = fwhm;
      std::printf("transmission: G=%.3g fwhm=%.6g MHz (pole law %.6g MHz)\n", gains[gi],
                  fwhm / 1e6, entry["pole_law_fwhm_hz"].get<double>() / 1e6);
    } catch (const sqz::data_error& e) {
      entry["fwhm_hz"] = nullptr;
      std::printf("transmission: G=%.3g fwhm not measurable (%s)\n", gains[gi], e.what());
    }
    per_gain.push_back(entry);
  }
  man.results["curves"] = per_gain;

  sqz::write_csv_columns((outdir / "transmission.csv").string(), names, cols);
  add_output(man, outdir, "transmission.csv");
}

double theory_band_db(const sqz::CavityParams& cav, const sqz::PumpState& pump, double eta_tot,
                      double angle, const std::vector<double>& freqs) {
  double acc = 0;
  for (double f : freqs) {
    const double s = sqz::quadrature_spectrum(cav, pump, angle, sqz::hz_to_angular(f));
    acc += 1.0 + eta_tot * (s - 1.0);
  }
  return sqz::db_from_linear(acc / static_cast<double>(freqs.size()));
}

void run_simulate(const json& cfg, uint64_t seed, const fs::path& outdir, sqz::RunManifest& man) {
  const sqz::ConfigView root(cfg);
  const sqz::CavityParams cav = parse_cavity(root);
  const sqz::LossChain chain = parse_losses(cav, root);
  const sqz::DetectionChain det = parse_detection(root, chain);
  const sqz::SimConfig sim = parse_sim(root, seed);

  std::string mode = "spectrum";
  double rbw_hz = 3e6;
  double band_lo = 50e6, band_hi = 70e6;
  double fmax_out = 1e9;
  if (root.has("simulate")) {
    const sqz::ConfigView s = root.section("simulate");
    mode = s.text_or("mode", mode);
    rbw_hz = s.number_or("rbw_hz", rbw_hz);
    fmax_out = s.number_or("fmax_out_hz", fmax_out);
    if (s.has("band_hz")) {
      const std::vector<double> band = s.numbers("band_hz");
      if (band.size() != 2 || band[0] >= band[1])
        throw sqz::config_error("config: simulate.band_hz must be [lo, hi] with lo < hi");
      band_lo = band[0];
      band_hi = band[1];
    }
  }

  const double dt = sim.resolved_dt(cav);
  const sqz::WelchConfig welch = sqz::WelchConfig::for_rbw(1.0 / dt, rbw_hz);

  if (mode == "spectrum") {
    const sqz::PumpState pump = parse_pump(root, cav);
    sqz::RunRequest req;
    req.cavity = cav;
    req.pump = pump;
    req.chain = det;
    req.sim = sim;
    req.welch = welch;

    req.kind = sqz::RunKind::signal;
    req.run_index = 0;
    const sqz::PsdEstimate sig = sqz::run_psd(req);
    req.kind = sqz::RunKind::shot;
    req.run_index = 1;
    const sqz::PsdEstimate shot = sqz::run_psd(req);
    req.kind = sqz::RunKind::electronic;
    req.run_index = 2;
    const sqz::PsdEstimate elec = sqz::run_psd(req);

    const double eta_tot = chain.total();
    std::vector<double> f, s_sig, s_shot, s_elec, rel_db, th_db;
    for (size_t i = 0; i < sig.freq_hz.size(); ++i) {
      if (sig.freq_hz[i] > fmax_out) break;
      f.push_back(sig.freq_hz[i]);
      s_sig.push_back(sig.psd[i]);
      s_shot.push_back(shot.psd[i]);
      s_elec.push_back(elec.psd[i]);
      const double shot_here = det.shot_psd(sig.freq_hz[i], dt);
      rel_db.push_back(sqz::db_from_linear(sig.psd[i] / shot_here));
      const double s = sqz::quadrature_spectrum(cav, pump, det.lo_angle,
                                                sqz::hz_to_angular(sig.freq_hz[i]));
      // expectation for the signal/shot ratio, including the electronic floor
      // that rides on top of the detected signal when it is enabled
      th_db.push_back(sqz::db_from_linear(1.0 + eta_tot * (s - 1.0) +
                                          det.electronic_psd() / shot_here));
    }
    sqz::write_csv_columns((outdir / "psd.csv").string(),
                           {"freq_hz", "signal_psd", "shot_psd", "electronic_psd",
                            "signal_rel_shot_db", "theory_rel_shot_db"},
                           {f, s_sig, s_shot, s_elec, rel_db, th_db});
    add_output(man, outdir, "psd.csv");

    double band_num = 0, band_th = 0;
    size_t nb = 0;
    for (size_t i = 0; i < f.size(); ++i) {
      if (f[i] < band_lo || f[i] > band_hi) continue;
      band_num += s_sig[i] / det.shot_psd(f[i], dt);
      band_th += sqz::linear_from_db(th_db[i]);
      ++nb;
    }
    if (nb == 0) throw sqz::config_error("config: simulate.band_hz contains no PSD bins");
    man.results["band_rel_shot_db"] = sqz::db_from_linear(band_num / static_cast<double>(nb));
    man.results["band_theory_db"] = sqz::db_from_linear(band_th / static_cast<double>(nb));
    man.results["segments"] = sig.segments;
    std::printf("simulate spectrum: band [%.4g, %.4g] MHz measured %.4g dB, theory %.4g dB (%zu segments)\n",
                band_lo / 1e6, band_hi / 1e6, man.results["band_rel_shot_db"].get<double>(),
                man.results["band_theory_db"].get<double>(), sig.segments);
    return;
  }

  if (mode == "phase-sweep") {
    const sqz::PumpState pump = parse_pump(root, cav);
    std::vector<double> angles;
    if (root.has("simulate") && root.section("simulate").has("lo_angles_rad")) {
      angles = root.section("simulate").numbers("lo_angles_rad");
    } else {
      angles = linspace(0.0, sqz::pi, 25);
    }
    const auto points =
        sqz::phase_sweep(cav, pump, det, sim, welch, angles, band_lo, band_hi);

    // theory on the same Welch bins inside the band
    std::vector<double> bins;
    const size_t nseg = welch.segment_length;
    for (size_t kbin = 0; kbin <= nseg / 2; ++kbin) {
      const double fb = static_cast<double>(kbin) / (static_cast<double>(nseg) * dt);
      if (fb >= band_lo && fb <= band_hi) bins.push_back(fb);
    }
    if (bins.empty()) throw sqz::config_error("config: simulate.band_hz contains no PSD bins");
    const double eta_tot = chain.total();

    std::vector<double> a, m_db, t_db;
    double best_min = 1e30, best_max = -1e30;
    for (const auto& p : points) {
      a.push_back(p.lo_angle);
      m_db.push_back(p.noise_db);
      t_db.push_back(theory_band_db(cav, pump, eta_tot, p.lo_angle, bins));
      best_min = std::min(best_min, p.noise_db);
      best_max = std::max(best_max, p.noise_db);
    }
    sqz::write_csv_columns((outdir / "phase_sweep.csv").string(),
                           {"lo_angle_rad", "noise_db", "theory_db"}, {a, m_db, t_db});
    add_output(man, outdir, "phase_sweep.csv");
    man.results["min_noise_db"] = best_min;
    man.results["max_noise_db"] = best_max;
    std::printf("simulate phase-sweep: min %.4g dB, max %.4g dB over %zu angles\n", best_min,
                best_max, a.size());
    return;
  }

  if (mode == "shot-sweep") {
    std::vector<double> powers_mw{0.2, 0.5, 0.8, 1.1, 1.3, 1.6, 1.9, 2.2, 2.5, 2.8};
    if (root.has("simulate") && root.section("simulate").has("lo_powers_mw"))
      powers_mw = root.section("simulate").numbers("lo_powers_mw");
    std::vector<double> powers_w(powers_mw.size());
    for (size_t i = 0; i < powers_mw.size(); ++i) powers_w[i] = powers_mw[i] * 1e-3;

    const auto points = sqz::shotnoise_sweep(cav, det, sim, welch, powers_w, band_lo, band_hi);
    std::vector<double> p, v;
    for (const auto& pt : points) {
      p.push_back(pt.lo_power_w);
      v.push_back(pt.band_psd);
    }
    const sqz::LinearFit line = sqz::fit_linear(p, v);
    double ss_res = 0, ss_tot = 0, mean = 0;
    for (double y : v) mean += y;
    mean /= static_cast<double>(v.size());
    std::vector<double> fit_v(v.size());
    for (size_t i = 0; i < v.size(); ++i) {
      fit_v[i] = line.slope * p[i] + line.intercept;
      ss_res += (v[i] - fit_v[i]) * (v[i] - fit_v[i]);
      ss_tot += (v[i] - mean) * (v[i] - mean);
    }
    const double r2 = ss_tot > 0 ? 1.0 - ss_res / ss_tot : 1.0;

    sqz::write_csv_columns((outdir / "shot_sweep.csv").string(),
                           {"lo_power_w", "band_psd", "fit_psd"}, {p, v, fit_v});
    add_output(man, outdir, "shot_sweep.csv");
    man.results["slope_per_w"] = line.slope;
    man.results["intercept"] = line.intercept;
    man.results["r_squared"] = r2;
    if (line.intercept > 0)
      man.results["shot_to_electronic_at_ref"] = line.slope * det.ref_power_w / line.intercept;
    std::printf("simulate shot-sweep: R^2=%.6f slope=%.6g intercept=%.6g\n", r2, line.slope,
                line.intercept);
    return;
  }

  throw sqz::config_error("config: simulate.mode must be spectrum, phase-sweep, or shot-sweep");
}

void require_columns(const sqz::CsvTable& t, const std::vector<std::string>& expected,
                     const std::string& model) {
  bool ok = t.names.size() == expected.size();
  if (ok)
    for (const auto& name : expected)
      if (std::find(t.names.begin(), t.names.end(), name) == t.names.end()) ok = false;
  if (ok) return;
  std::string got, want;
  for (const auto& n : t.names) got += (got.empty() ? "" : ", ") + n;
  for (const auto& n : expected) want += (want.empty() ? "" : ", ") + n;
  throw sqz::data_error("fit " + model + ": expected columns [" + want + "], got [" + got + "]");
}

void run_fit(const json& cfg, const fs::path& outdir, sqz::RunManifest& man) {
  const sqz::ConfigView root(cfg);
  const sqz::ConfigView f = root.section("fit");
  const std::string model = f.text("model");
  const std::string input = f.text("input");
  const sqz::CsvTable table = sqz::read_csv(input);
  man.inputs[input] = sqz::hex64(sqz::fnv1a64_file(input));

  json out;
  out["model"] = model;
  if (model == "lorentzian") {
    require_columns(table, {"freq_offset_hz", "transmittance"}, model);
    double carrier = f.number_or("carrier_freq_hz", 0.0);
    if (carrier == 0.0 && root.has("cavity"))
      carrier = sqz::wavelength_to_frequency(root.section("cavity").number("wavelength_nm") * 1e-9);
    if (carrier <= 0)
      throw sqz::config_error("config: fit.carrier_freq_hz (or a cavity section) is required");
    const sqz::CavityScanResult r =
        sqz::cavity_from_scan(table.column("freq_offset_hz"), table.column("transmittance"),
                              carrier, f.flag_or("undercoupled", true));
    out["converged"] = r.fit.detail.converged;
    out["iterations"] = r.fit.detail.iterations;
    out["residual_rms"] = r.fit.detail.residual_rms;
    out["params"] = {{"baseline", r.fit.baseline},
                     {"amplitude", r.fit.amplitude},
                     {"center_hz", r.fit.center},
                     {"fwhm_hz", r.fit.fwhm}};
    out["derived"] = {{"q_tot", r.q_tot},
                      {"q_int", r.q_int},
                      {"coupling_ratio", r.coupling_ratio},
                      {"floor_transmittance", r.floor_transmittance}};
    std::printf("fit lorentzian: Q_tot=%.6g Q_int=%.6g kappa_e/kappa=%.4f fwhm=%.6g MHz\n", r.q_tot,
                r.q_int, r.coupling_ratio, r.fwhm_hz / 1e6);
  } else if (model == "shg") {
    require_columns(table, {"pump_w", "sh_w"}, model);
    const double eta = sqz::fit_shg_quadratic(table.column("pump_w"), table.column("sh_w"));
    out["converged"] = true;
    out["params"] = {{"efficiency_per_w", eta}};
    std::printf("fit shg: efficiency=%.6g /W\n", eta);
  } else if (model == "linear") {
    require_columns(table, {"x", "y"}, model);
    const sqz::LinearFit lf = sqz::fit_linear(table.column("x"), table.column("y"));
    out["converged"] = true;
    out["params"] = {{"slope", lf.slope}, {"intercept", lf.intercept}};
    std::printf("fit linear: slope=%.6g intercept=%.6g\n", lf.slope, lf.intercept);
  } else if (model == "squeezing") {
    require_columns(table, {"freq_hz", "squeeze_db", "antisqueeze_db"}, model);
    const sqz::CavityParams cav = parse_cavity(root);
    sqz::SqueezingFitData data;
    data.freq_hz = table.column("freq_hz");
    data.squeeze_db = table.column("squeeze_db");
    data.antisqueeze_db = table.column("antisqueeze_db");
    const sqz::SqueezingFit r = sqz::fit_squeezing_model(cav, data);
    out["converged"] = r.detail.converged;
    out["iterations"] = r.detail.iterations;
    out["residual_rms"] = r.detail.residual_rms;
    out["message"] = r.detail.message;
    out["params"] = {{"pump_ratio", r.ratio}, {"total_efficiency", r.efficiency}};
    std::printf("fit squeezing: x=%.6g eta_tot=%.6g converged=%d\n", r.ratio, r.efficiency,
                r.detail.converged ? 1 : 0);
  } else if (model == "coupling") {
    require_columns(table, {"freq_offset_hz", "transmittance", "phase_rad"}, model);
    const sqz::CouplingDiagnostic d = sqz::coupling_diagnostic(
        table.column("freq_offset_hz"), table.column("transmittance"), table.column("phase_rad"));
    out["converged"] = d.fit.detail.converged;
    out["params"] = {{"coupling_ratio", d.coupling_ratio},
                     {"phase_excursion_rad", d.phase_excursion},
                     {"floor_transmittance", d.floor_transmittance}};
    out["derived"] = {{"regime", sqz::to_string(d.regime)}};
    std::printf("fit coupling: regime=%s kappa_e/kappa=%.4f phase excursion=%.4f rad\n",
                sqz::to_string(d.regime), d.coupling_ratio, d.phase_excursion);
  } else {
    throw sqz::config_error(
        "config: fit.model must be lorentzian, shg, linear, squeezing, or coupling");
  }

  write_json_atomic(outdir / "fit.json", out);
  add_output(man, outdir, "fit.json");
  man.results = out;
}

void run_project(const json& cfg, const fs::path& outdir, sqz::RunManifest& man) {
  const sqz::ConfigView root(cfg);
  const sqz::ConfigView p = root.section("project");
  const double lambda = p.number_or("wavelength_nm", 1544.4) * 1e-9;
  const sqz::ConfigView imp = p.section("improved");
  const sqz::ConfigView ref = p.section("reference");

  const double q_tot = imp.number("q_tot");
  const double q_int = imp.number("q_int");
  const double eta_norm = imp.number("eta_norm_per_w");
  const double q_tot_ref = ref.number("q_tot");
  const double eta_norm_ref = ref.number("eta_norm_per_w");
  const double thr_ref_w = ref.number("threshold_sh_mw") * 1e-3;

  const sqz::CavityParams cav =
      sqz::derive_rates(q_tot, q_int, lambda, false, p.number_or("fsr_hz", 5.7e9));
  sqz::LossChain onchip;
  onchip.escape = cav.escape_efficiency();

  const double kappa_scale = q_tot_ref / q_tot;
  const double coupling_scale = std::sqrt(eta_norm / eta_norm_ref);
  const sqz::ThresholdProjection proj = sqz::projected_threshold(
      thr_ref_w, kappa_scale, p.number_or("pump_linewidth_scale", 1.0), coupling_scale);
  const sqz::ThresholdModel thr{proj.threshold_w};
  const sqz::ShgModel shg{eta_norm};
  const double p_fh_thr_w = shg.pump_for_sh(proj.threshold_w);

  std::vector<double> grid_mw;
  if (p.has("power_grid_mw")) grid_mw = p.numbers("power_grid_mw");
  else grid_mw = linspace(0.0, 40.0, 81);

  std::vector<double> fh, sh, ratio, sdb, adb, above;
  for (double mw : grid_mw) {
    const double fh_w = mw * 1e-3;
    const double sh_w = shg.sh_power(fh_w);
    const double x = thr.ratio_from_sh(sh_w);
    fh.push_back(mw);
    sh.push_back(sh_w * 1e3);
    ratio.push_back(x);
    if (x >= 1.0) {
      above.push_back(1.0);
      sdb.push_back(std::numeric_limits<double>::quiet_NaN());
      adb.push_back(std::numeric_limits<double>::quiet_NaN());
    } else {
      above.push_back(0.0);
      const sqz::MeasuredPair m = sqz::measured_spectrum(cav, x, onchip, 0.0);
      sdb.push_back(m.s_minus_db);
      adb.push_back(m.s_plus_db);
    }
  }
  sqz::write_csv_columns((outdir / "project.csv").string(),
                         {"p_fh_mw", "p_sh_mw", "pump_ratio", "squeeze_db", "antisqueeze_db",
                          "above_threshold"},
                         {fh, sh, ratio, sdb, adb, above});
  add_output(man, outdir, "project.csv");

  // internal-consistency pair: pump ratio that hits the target on-chip
  // squeezing at DC, and the anti-squeezing it implies
  const double target_db = p.number_or("target_squeeze_db", -16.0);
  const double x_star =
      sqz::pump_ratio_for_squeezing(sqz::linear_from_db(target_db), onchip.escape, 0.0);
  const sqz::MeasuredPair pair = sqz::measured_spectrum(cav, x_star, onchip, 0.0);
  man.results["escape_efficiency"] = onchip.escape;
  man.results["threshold_sh_mw"] = proj.threshold_w * 1e3;
  man.results["threshold_fh_mw"] = p_fh_thr_w * 1e3;
  man.results["target_squeeze_db"] = target_db;
  man.results["x_for_target"] = x_star;
  man.results["antisqueeze_at_target_db"] = pair.s_plus_db;
  std::printf("project: rho=%.4f P_th(SH)=%.6g mW P_th(FH)=%.6g mW\n", onchip.escape,
              proj.threshold_w * 1e3, p_fh_thr_w * 1e3);
  std::printf("project: on-chip %.4g dB squeezing needs x=%.6f -> anti-squeezing %.4g dB\n",
              target_db, x_star, pair.s_plus_db);
}

void run_laser_noise(const json& cfg, const fs::path& outdir, sqz::RunManifest& man) {
  const sqz::ConfigView root(cfg);
  double lw_hz = 100.0, flux = 1e6, eta = 1.0, guard = 0.05;
  double fmin = 1e6, fmax = 200e6;
  size_t points = 2048;
  double mzi_length = 3.0, mzi_fsr = 67e6;
  double lambda_nm = 1544.4;
  if (root.has("laser_noise")) {
    const sqz::ConfigView l = root.section("laser_noise");
    lw_hz = l.number_or("linewidth_hz", lw_hz);
    flux = l.number_or("flux", flux);
    eta = l.number_or("eta", eta);
    guard = l.number_or("guard_frac", guard);
    fmin = l.number_or("fmin_hz", fmin);
    fmax = l.number_or("fmax_hz", fmax);
    points = static_cast<size_t>(l.number_or("points", static_cast<double>(points)));
    lambda_nm = l.number_or("wavelength_nm", lambda_nm);
    if (l.has("mzi")) {
      const sqz::ConfigView m = l.section("mzi");
      mzi_length = m.number_or("length_m", mzi_length);
      mzi_fsr = m.number_or("fsr_hz", mzi_fsr);
    }
  }
  const sqz::LaserNoiseModel noise = sqz::LaserNoiseModel::from_linewidth_hz(lw_hz, lambda_nm * 1e-9);
  const sqz::MziSetup mzi = sqz::MziSetup::from_fsr(mzi_length, mzi_fsr);

  const std::vector<double> freq = linspace(fmin, fmax, points);
  std::vector<double> s_true(points), s_ii(points);
  for (size_t i = 0; i < points; ++i) {
    s_true[i] = sqz::white_frequency_phase_psd(noise, sqz::hz_to_angular(freq[i]));
    s_ii[i] = sqz::mzi_intensity_psd(mzi, flux, eta, freq[i], s_true[i]);
  }
  const double shot_ref = sqz::mzi_shot_level(mzi, flux, eta);
  const sqz::PhaseExtraction ext = sqz::extract_phase_psd(mzi, freq, s_ii, shot_ref, eta, guard);
  const double recovered = sqz::linewidth_from_phase_psd(freq, ext.s_phiphi, ext.masked);

  std::vector<double> masked(points);
  for (size_t i = 0; i < points; ++i) masked[i] = ext.masked[i] ? 1.0 : 0.0;
  sqz::write_csv_columns(
      (outdir / "laser_noise.csv").string(),
      {"freq_hz", "s_phiphi_true", "s_ii", "s_phiphi_extracted", "masked"},
      {freq, s_true, s_ii, ext.s_phiphi, masked});
  add_output(man, outdir, "laser_noise.csv");

  const std::vector<double> offsets = linspace(-5.0 * noise.white_noise_rate,
                                               5.0 * noise.white_noise_rate, 401);
  std::vector<double> off_hz(offsets.size()), shape(offsets.size());
  for (size_t i = 0; i < offsets.size(); ++i) {
    off_hz[i] = sqz::angular_to_hz(offsets[i]);
    shape[i] = sqz::lineshape_white_noise(noise, flux, offsets[i]);
  }
  sqz::write_csv_columns((outdir / "lineshape.csv").string(), {"offset_hz", "field_psd"},
                         {off_hz, shape});
  add_output(man, outdir, "lineshape.csv");

  man.results["linewidth_in_hz"] = lw_hz;
  man.results["linewidth_recovered_hz"] = recovered;
  man.results["mzi_fsr_hz"] = mzi.fsr_hz();
  man.results["mzi_group_index"] = mzi.group_index;
  man.results["phase_variance_1ms"] = sqz::phase_variance(noise, 1e-3);
  std::printf("laser-noise: injected %.6g Hz, recovered %.6g Hz (MZI n=%.6f, fsr=%.6g MHz)\n",
              lw_hz, recovered, mzi.group_index, mzi.fsr_hz() / 1e6);
}

sqz::RunManifest execute(const std::string& command, const json& cfg, uint64_t seed,
                         const fs::path& outdir) {
  fs::create_directories(outdir);
  sqz::RunManifest man;
  man.version = kVersion;
  man.command = command;
  man.seed = seed;
  man.config = cfg;

  if (command == "spectrum") run_spectrum(cfg, outdir, man);
  else if (command == "transmission") run_transmission(cfg, outdir, man);
  else if (command == "simulate") run_simulate(cfg, seed, outdir, man);
  else if (command == "fit") run_fit(cfg, outdir, man);
  else if (command == "project") run_project(cfg, outdir, man);
  else if (command == "laser-noise") run_laser_noise(cfg, outdir, man);
  else throw sqz::config_error("unknown command: " + command);
  return man;
}

int run_replay(const std::string& manifest_path, const fs::path& outdir) {
  const sqz::RunManifest ref = sqz::read_manifest(manifest_path);
  sqz::RunManifest fresh = execute(ref.command, ref.config, ref.seed, outdir);
  sqz::write_manifest((outdir / "manifest.json").string(), fresh);

  size_t mismatches = 0;
  for (const auto& [name, digest] : ref.outputs) {
    const auto it = fresh.outputs.find(name);
    if (it == fresh.outputs.end()) {
      std::printf("replay: MISSING %s\n", name.c_str());
      ++mismatches;
    } else if (it->second != digest) {
      std::printf("replay: MISMATCH %s (%s != %s)\n", name.c_str(), it->second.c_str(),
                  digest.c_str());
      ++mismatches;
    } else {
      std::printf("replay: ok %s (%s)\n", name.c_str(), digest.c_str());
    }
  }
  if (mismatches > 0)
    throw sqz::data_error("replay: " + std::to_string(mismatches) + " output(s) differ");
  std::printf("replay: %zu output(s) byte-identical\n", ref.outputs.size());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sub-threshold parametric squeezer toolbox"};
  app.require_subcommand(1);

  std::string config_path, out_dir = ".";
  uint64_t seed = 1;
  std::vector<std::string> overrides;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON config file");
    sub->add_option("--out", out_dir, "output directory (default .)");
    sub->add_option("--seed", seed, "random seed (default 1)");
    sub->add_option("--set", overrides, "config override, dotted.path=value (repeatable)");
  };

  auto* c_spectrum = app.add_subcommand("spectrum", "squeezing/anti-squeezing spectra vs frequency");
  double fmin = 0, fmax = 0;
  uint64_t points = 0;
  auto* o_fmin = c_spectrum->add_option("--fmin", fmin, "start frequency, Hz");
  auto* o_fmax = c_spectrum->add_option("--fmax", fmax, "stop frequency, Hz");
  auto* o_points = c_spectrum->add_option("--points", points, "number of rows");
  add_common(c_spectrum);

  auto* c_transmission =
      app.add_subcommand("transmission", "probe transmission under parametric gain");
  add_common(c_transmission);

  auto* c_simulate = app.add_subcommand("simulate", "time-domain homodyne simulation");
  std::string mode;
  auto* o_mode = c_simulate->add_option("--mode", mode, "spectrum | phase-sweep | shot-sweep")
                     ->check(CLI::IsMember({"spectrum", "phase-sweep", "shot-sweep"}));
  add_common(c_simulate);

  auto* c_fit = app.add_subcommand("fit", "parameter estimation from a CSV trace");
  std::string model, input;
  auto* o_model = c_fit->add_option("--model", model, "lorentzian | shg | linear | squeezing | coupling")
                      ->check(CLI::IsMember({"lorentzian", "shg", "linear", "squeezing", "coupling"}));
  auto* o_input = c_fit->add_option("--in", input, "input CSV file");
  add_common(c_fit);

  auto* c_project = app.add_subcommand("project", "threshold and squeezing projection");
  std::string power_grid;
  auto* o_grid = c_project->add_option("--power-grid", power_grid,
                                       "fundamental power grid, mW (start:stop:count or list)");
  add_common(c_project);

  auto* c_laser = app.add_subcommand("laser-noise", "laser phase/intensity noise models");
  add_common(c_laser);

  auto* c_replay = app.add_subcommand("replay", "re-execute a manifest and verify outputs");
  std::string manifest_path;
  c_replay->add_option("--manifest", manifest_path, "manifest file to replay")->required();
  add_common(c_replay);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (c_replay->parsed()) return run_replay(manifest_path, out_dir);

    json cfg = json::object();
    if (!config_path.empty()) cfg = sqz::load_json_file(config_path);
    for (const auto& o : overrides) sqz::apply_override(cfg, o);

    std::string command;
    if (c_spectrum->parsed()) {
      command = "spectrum";
      if (o_fmin->count()) cfg["spectrum"]["fmin_hz"] = fmin;
      if (o_fmax->count()) cfg["spectrum"]["fmax_hz"] = fmax;
      if (o_points->count()) cfg["spectrum"]["points"] = points;
    } else if (c_transmission->parsed()) {
      command = "transmission";
    } else if (c_simulate->parsed()) {
      command = "simulate";
      if (o_mode->count()) cfg["simulate"]["mode"] = mode;
    } else if (c_fit->parsed()) {
      command = "fit";
      if (o_model->count()) cfg["fit"]["model"] = model;
      if (o_input->count()) cfg["fit"]["input"] = input;
    } else if (c_project->parsed()) {
      command = "project";
      if (o_grid->count()) cfg["project"]["power_grid_mw"] = parse_grid(power_grid);
    } else if (c_laser->parsed()) {
      command = "laser-noise";
    }

    const fs::path outdir(out_dir);
    const sqz::RunManifest man = execute(command, cfg, seed, outdir);
    sqz::write_manifest((outdir / "manifest.json").string(), man);
    return 0;
  } catch (const sqz::config_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const sqz::domain_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const sqz::data_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const sqz::numeric_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 4;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 4;
  }
}
