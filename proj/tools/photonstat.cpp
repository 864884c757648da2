// photonstat command line: simulate thermal-light tag streams and run the
// g2 / photon-number / metrics analysis chain on them.
#include <CLI11.hpp>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <json.hpp>

#include "photonstat/correlation.hpp"
#include "photonstat/errors.hpp"
#include "photonstat/io.hpp"
#include "photonstat/metrics.hpp"
#include "photonstat/pnr.hpp"
#include "photonstat/simsource.hpp"
#include "photonstat/spectral.hpp"
#include "photonstat/tagstream.hpp"

namespace ps = photonstat;
using nlohmann::json;

namespace {

class Timer {
 public:
  Timer() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

std::vector<ps::PairKey> parse_pairs(const std::string& spec, std::uint16_t channels) {
  std::vector<ps::PairKey> pairs;
  if (spec.empty()) {
    for (std::uint16_t a = 0; a < channels; ++a)
      for (std::uint16_t b = a + 1; b < channels; ++b) pairs.push_back({a, b});
    return pairs;
  }
  std::stringstream ss(spec);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    const auto dash = tok.find('-');
    if (dash == std::string::npos) throw ps::ConfigError("bad pair '" + tok + "', expected i-j");
    pairs.push_back({std::uint16_t(std::stoul(tok.substr(0, dash))),
                     std::uint16_t(std::stoul(tok.substr(dash + 1)))});
  }
  return pairs;
}

std::vector<double> parse_rates(const std::string& spec) {
  std::vector<double> rates;
  std::stringstream ss(spec);
  std::string tok;
  while (std::getline(ss, tok, ',')) rates.push_back(std::stod(tok));
  return rates;
}

json resolved_config_json(const std::string& config_path, const std::string& preset_name,
                          const std::vector<std::string>& overrides) {
  json base;
  if (!preset_name.empty()) {
    base = ps::io::scenario_to_json(ps::io::preset(preset_name));
  } else if (!config_path.empty()) {
    base = ps::io::read_json(config_path);
    if (base.contains("command") && base.contains("config")) base = base.at("config");
  } else {
    throw ps::ConfigError("provide --config or --preset");
  }
  for (const auto& o : overrides) ps::io::apply_override(base, o);
  return base;
}

ps::DetectorArrayModel detector_model(const std::string& config_path,
                                      const std::string& preset_name) {
  if (!preset_name.empty()) return ps::io::preset(preset_name).detectors;
  if (!config_path.empty()) return ps::io::load_scenario(config_path).detectors;
  throw ps::ConfigError("provide --det-config or --det-preset for the detector model");
}

std::map<std::string, double> parse_kv(const std::vector<std::string>& kvs) {
  std::map<std::string, double> out;
  for (const auto& kv : kvs) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ps::ConfigError("expected name=value, got '" + kv + "'");
    out[kv.substr(0, eq)] = std::stod(kv.substr(eq + 1));
  }
  return out;
}

ps::G2Family auto_family(const ps::SpectralModel& model) {
  if (model.filter && model.emission.size() >= 2) return ps::G2Family::TwoGaussianPlusFilter;
  if (model.filter) return ps::G2Family::SingleLorentzianFiltered;
  if (!model.emission.empty() && model.emission.front().kind == ps::LineShape::Lorentzian)
    return ps::G2Family::FreeLorentzian;
  return ps::G2Family::FreeGaussian;
}

struct G2Outputs {
  std::vector<ps::G2Histogram> pair_hists;
  ps::G2Histogram averaged;
  bool have_average = false;
  json summary;
};

G2Outputs run_g2(const ps::TagStream& stream, double bin_ps, double tau_max_ns,
                 const std::string& pairs_spec, bool dark, const std::vector<double>& dark_rates,
                 int threads) {
  const std::int64_t bin_ticks =
      std::max<std::int64_t>(1, std::llround(bin_ps / stream.tick_ps()));
  const std::int64_t tau_ticks = std::llround(tau_max_ns * 1000.0 / stream.tick_ps());
  const auto pairs = parse_pairs(pairs_spec, stream.channel_count());

  G2Outputs out;
  json jpairs = json::object();
  for (const auto& pk : pairs) {
    ps::G2Histogram h = ps::g2_pair(stream, pk, tau_ticks, bin_ticks, threads);
    if (dark) h = ps::dark_correct(h, dark_rates);
    double wm, we;
    h.wing(wm, we);
    jpairs[std::to_string(pk.a) + "-" + std::to_string(pk.b)] =
        json{{"g2_zero_bin", h.zero_value()},
             {"g2_zero_bin_stderr", h.zero_err()},
             {"wing_mean", wm},
             {"wing_stderr", we}};
    out.pair_hists.push_back(std::move(h));
  }

  json summary;
  summary["pairs"] = jpairs;
  if (out.pair_hists.size() > 1) {
    out.averaged = ps::average_pairs(out.pair_hists);
    out.have_average = true;
    double wm, we;
    out.averaged.wing(wm, we);
    summary["g2_zero_bin"] = out.averaged.zero_value();
    summary["g2_zero_bin_stderr"] = out.averaged.zero_err();
    summary["wing_mean"] = wm;
    summary["wing_stderr"] = we;
  } else {
    summary["g2_zero_bin"] = out.pair_hists.front().zero_value();
    summary["g2_zero_bin_stderr"] = out.pair_hists.front().zero_err();
  }
  const auto counts = stream.channel_counts();
  json singles = json::array();
  for (auto c : counts) singles.push_back(double(c) / stream.duration_seconds());
  summary["singles_hz"] = singles;
  summary["duration_s"] = stream.duration_seconds();
  summary["total_tags"] = stream.size();
  summary["bin_ps"] = double(bin_ticks) * stream.tick_ps();
  summary["tau_max_ns"] = double(tau_ticks) * stream.tick_ps() * 1e-3;
  summary["dark_corrected"] = dark;
  out.summary = std::move(summary);
  return out;
}

int dispatch(CLI::App& app, int argc, char** argv);

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"photonstat: single-mode thermal light simulation and photon statistics analysis"};
  app.require_subcommand(1);
  try {
    return dispatch(app, argc, argv);
  } catch (const ps::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const ps::FormatError& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return 3;
  } catch (const ps::IntegrityError& e) {
    std::cerr << "data integrity error: " << e.what() << "\n";
    return 3;
  } catch (const ps::EstimationError& e) {
    std::cerr << "estimation error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

namespace {

int dispatch(CLI::App& app, int argc, char** argv) {
  // ---- simulate
  auto* sim = app.add_subcommand("simulate", "generate a tag stream from a scenario");
  std::string sim_config, sim_preset, sim_out, sim_emit;
  std::vector<std::string> sim_set;
  std::int64_t sim_seed = -1;
  int sim_threads = 0;
  sim->add_option("--config", sim_config, "scenario JSON (or a simulate manifest to replay)");
  sim->add_option("--preset", sim_preset, "built-in scenario: narrowband-paper|broadband-paper|poisson-control");
  sim->add_option("--set", sim_set, "override, e.g. spectrum.filter.width_mhz=818")->take_all();
  sim->add_option("--seed", sim_seed, "override the scenario seed");
  sim->add_option("--threads", sim_threads, "worker threads (0 = auto)");
  sim->add_option("--out", sim_out, "output tag file (.ptag)")->required();
  sim->add_option("--emit-config", sim_emit, "also write the resolved scenario JSON");

  // ---- g2
  auto* g2c = app.add_subcommand("g2", "pairwise g2 histogram from a tag stream");
  std::string g2_in, g2_pairs, g2_rates_s, g2_csv, g2_json;
  double g2_bin_ps = 648.0, g2_tau_ns = 200.0;
  bool g2_dark = false;
  int g2_threads = 0;
  g2c->add_option("--in", g2_in, "input tag file")->required();
  g2c->add_option("--bin-ps", g2_bin_ps, "coincidence bin width in ps (default 648)");
  g2c->add_option("--tau-max-ns", g2_tau_ns, "histogram half range in ns (default 200)");
  g2c->add_option("--pairs", g2_pairs, "channel pairs like 0-1,0-2 (default: all)");
  g2c->add_flag("--dark-correct", g2_dark, "apply dark-count correction");
  g2c->add_option("--dark-rates", g2_rates_s, "per-channel dark rates in Hz, comma separated");
  g2c->add_option("--threads", g2_threads, "worker threads (0 = auto)");
  g2c->add_option("--out-csv", g2_csv, "histogram CSV")->required();
  g2c->add_option("--out-json", g2_json, "summary JSON");

  // ---- fit
  auto* fitc = app.add_subcommand("fit", "fit a Siegert g2 model to a histogram CSV");
  std::string fit_hist, fit_family = "auto", fit_out, fit_use = "auto";
  std::vector<std::string> fit_fix, fit_init;
  fitc->add_option("--hist", fit_hist, "histogram CSV from the g2 command")->required();
  fitc->add_option("--family", fit_family,
                   "free-gaussian|free-lorentzian|single-lorentzian-filtered|two-gaussian-plus-filter");
  fitc->add_option("--fix", fit_fix, "pin parameter, name=value")->take_all();
  fitc->add_option("--init", fit_init, "initial value, name=value")->take_all();
  fitc->add_option("--use", fit_use, "avg|pairs: which histogram rows to fit (default avg)");
  fitc->add_option("--out", fit_out, "fit report JSON")->required();

  // ---- deconv
  auto* dec = app.add_subcommand("deconv", "jitter deconvolution of pair-resolved histograms");
  std::string dec_hist, dec_cal, dec_family = "two-gaussian-plus-filter", dec_out;
  std::vector<std::string> dec_fix, dec_init;
  dec->add_option("--hist", dec_hist, "pair-resolved histogram CSV")->required();
  dec->add_option("--calibration", dec_cal, "jitter calibration JSON")->required();
  dec->add_option("--family", dec_family, "model family (default two-gaussian-plus-filter)");
  dec->add_option("--fix", dec_fix, "pin parameter, name=value")->take_all();
  dec->add_option("--init", dec_init, "initial value, name=value")->take_all();
  dec->add_option("--out", dec_out, "deconvolution report JSON")->required();

  // ---- jitter-cal
  auto* jc = app.add_subcommand("jitter-cal", "per-channel timing jitter from a pulsed reference");
  std::string jc_in, jc_out;
  double jc_period_ns = 1000.0;
  jc->add_option("--in", jc_in, "pulsed reference tag file")->required();
  jc->add_option("--period-ns", jc_period_ns, "pulse period in ns")->required();
  jc->add_option("--out", jc_out, "calibration JSON")->required();

  // ---- pnr
  auto* pnr = app.add_subcommand("pnr", "photon number distribution from click statistics");
  std::string pnr_in, pnr_det_cfg, pnr_det_preset, pnr_est = "both", pnr_csv, pnr_json;
  double pnr_window_ps = 648.0;
  int pnr_nmax = 3, pnr_trials = 200;
  std::uint64_t pnr_seed = 4242;
  bool pnr_loss_corrected = false;
  pnr->add_option("--in", pnr_in, "input tag file")->required();
  pnr->add_option("--window-ps", pnr_window_ps, "click window width in ps (default 648)");
  pnr->add_option("--n-max", pnr_nmax, "photon number truncation (default 3)");
  pnr->add_option("--estimator", pnr_est, "direct|ml|both (default both)");
  pnr->add_option("--det-config", pnr_det_cfg, "scenario JSON supplying the detector model");
  pnr->add_option("--det-preset", pnr_det_preset, "preset supplying the detector model");
  pnr->add_flag("--loss-corrected", pnr_loss_corrected,
                "reconstruct source statistics (q_i = r_i eta_i) instead of detected");
  pnr->add_option("--trials", pnr_trials, "Monte Carlo trials for ML error bars (default 200)");
  pnr->add_option("--mc-seed", pnr_seed, "Monte Carlo seed");
  pnr->add_option("--out-csv", pnr_csv, "distribution CSV")->required();
  pnr->add_option("--out-json", pnr_json, "distribution JSON");

  // ---- metrics
  auto* met = app.add_subcommand("metrics", "certification metrics with Monte Carlo errors");
  std::string met_in, met_dist, met_det_cfg, met_det_preset, met_est = "ml", met_base = "e",
              met_out, met_dump;
  double met_window_ps = 648.0;
  int met_nmax = 3, met_trials = 300;
  std::uint64_t met_seed = 911;
  bool met_loss_corrected = false;
  met->add_option("--in", met_in, "input tag file (full chain with resampling)");
  met->add_option("--dist", met_dist, "distribution CSV (point metrics only)");
  met->add_option("--det-config", met_det_cfg, "scenario JSON supplying the detector model");
  met->add_option("--det-preset", met_det_preset, "preset supplying the detector model");
  met->add_option("--window-ps", met_window_ps, "click window width in ps");
  met->add_option("--n-max", met_nmax, "photon number truncation");
  met->add_option("--estimator", met_est, "direct|ml (default ml)");
  met->add_flag("--loss-corrected", met_loss_corrected, "source-statistics convention");
  met->add_option("--trials", met_trials, "Monte Carlo trials (default 300)");
  met->add_option("--seed", met_seed, "Monte Carlo seed");
  met->add_option("--log-base", met_base, "entropy log base: e|2|10 (default e)");
  met->add_option("--trial-dump", met_dump, "write per-trial metrics CSV");
  met->add_option("--out", met_out, "metrics JSON")->required();

  // ---- sweep
  auto* sw = app.add_subcommand("sweep", "parameter sweep: simulate + analyze per value");
  std::string sw_config, sw_preset, sw_param, sw_values, sw_out, sw_family = "auto";
  double sw_bin_ps = 648.0, sw_tau_ns = 100.0;
  int sw_threads = 0;
  std::vector<std::string> sw_set;
  sw->add_option("--config", sw_config, "base scenario JSON");
  sw->add_option("--preset", sw_preset, "base scenario preset");
  sw->add_option("--set", sw_set, "base overrides, key.path=value")->take_all();
  sw->add_option("--param", sw_param, "config key to sweep, e.g. spectrum.components.0.weight")
      ->required();
  sw->add_option("--values", sw_values, "comma-separated values")->required();
  sw->add_option("--family", sw_family, "fit family (default: auto from the model)");
  sw->add_option("--bin-ps", sw_bin_ps, "g2 bin width in ps");
  sw->add_option("--tau-max-ns", sw_tau_ns, "g2 half range in ns");
  sw->add_option("--threads", sw_threads, "worker threads");
  sw->add_option("--out", sw_out, "sweep table CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  Timer timer;

  if (*sim) {
    json resolved = resolved_config_json(sim_config, sim_preset, sim_set);
    if (sim_seed >= 0) resolved["seed"] = std::uint64_t(sim_seed);
    ps::ScenarioConfig cfg = ps::io::scenario_from_json(resolved);
    resolved = ps::io::scenario_to_json(cfg);
    const ps::TagStream stream = ps::simulate(cfg, sim_threads);
    ps::write_tags(stream, sim_out);
    if (!sim_emit.empty()) ps::io::write_json(resolved, sim_emit);
    ps::io::write_manifest("simulate", resolved, {}, {sim_out}, cfg.seed, timer.seconds());
    std::printf("simulate: %zu tags over %.6f s -> %s\n", stream.size(),
                stream.duration_seconds(), sim_out.c_str());
    return 0;
  }

  if (*g2c) {
    const ps::TagStream stream = ps::read_tags(g2_in);
    std::vector<double> rates;
    if (g2_dark) {
      rates = parse_rates(g2_rates_s);
      if (rates.size() < stream.channel_count())
        throw ps::ConfigError("--dark-correct needs --dark-rates with one rate per channel");
    }
    G2Outputs out = run_g2(stream, g2_bin_ps, g2_tau_ns, g2_pairs, g2_dark, rates, g2_threads);
    std::vector<ps::G2Histogram> all = out.pair_hists;
    if (out.have_average) all.push_back(out.averaged);
    ps::io::write_histogram_csv(g2_csv, all);
    if (!g2_json.empty()) ps::io::write_json(out.summary, g2_json);
    json cfg{{"in", g2_in},        {"bin_ps", g2_bin_ps},   {"tau_max_ns", g2_tau_ns},
             {"pairs", g2_pairs},  {"dark_correct", g2_dark}, {"dark_rates", rates},
             {"threads", g2_threads}};
    std::vector<std::string> outs{g2_csv};
    if (!g2_json.empty()) outs.push_back(g2_json);
    ps::io::write_manifest("g2", cfg, {g2_in}, outs, 0, timer.seconds());
    std::printf("g2: zero-bin %.4f +- %.4f -> %s\n", out.summary["g2_zero_bin"].get<double>(),
                out.summary["g2_zero_bin_stderr"].get<double>(), g2_csv.c_str());
    return 0;
  }

  if (*fitc) {
    auto hists = ps::io::read_histogram_csv(fit_hist);
    std::vector<ps::G2FitData> data;
    const bool want_avg = fit_use == "avg" || fit_use == "auto";
    bool used_avg = false;
    for (const auto& h : hists)
      if (want_avg && h.pair_averaged) {
        data.push_back(ps::to_fit_data(h));
        used_avg = true;
      }
    if (!used_avg) {
      if (fit_use == "avg") throw ps::ConfigError("histogram CSV has no averaged rows");
      for (const auto& h : hists)
        if (!h.pair_averaged) data.push_back(ps::to_fit_data(h));
    }
    ps::G2Family family = fit_family == "auto" ? ps::G2Family::SingleLorentzianFiltered
                                               : ps::family_from_name(fit_family);
    ps::FitOptions opts;
    opts.fixed = parse_kv(fit_fix);
    opts.initial = parse_kv(fit_init);
    const ps::FitResult fit = ps::fit_g2(data, family, opts);
    json out = ps::io::fit_to_json(fit);
    out["bandwidth_model"] = ps::io::bandwidth_to_json(ps::bandwidth_from_fit(fit));
    const auto& h0 = data.front();
    {
      std::vector<double> taus(h0.value.size());
      for (std::size_t i = 0; i < taus.size(); ++i)
        taus[i] = 0.5 * double(h0.lo_tick[i] + h0.hi_tick[i]) * h0.tick_ps;
      try {
        out["bandwidth_moment"] = ps::io::bandwidth_to_json(ps::bandwidth_from_histogram(
            taus, h0.value, h0.sigma, double(hists.front().bin_width_ticks) * h0.tick_ps));
      } catch (const ps::EstimationError& e) {
        out["bandwidth_moment"] = json{{"error", e.what()}};
      }
    }
    ps::io::write_json(out, fit_out);
    json cfg{{"hist", fit_hist}, {"family", ps::family_name(family)}, {"use", fit_use}};
    ps::io::write_manifest("fit", cfg, {fit_hist}, {fit_out}, 0, timer.seconds());
    std::printf("fit: g2(0) = %.4f +- %.4f, reduced chi2 %.3f -> %s\n", fit.g2_zero(),
                fit.g2_zero_stderr(), fit.reduced_chi2(), fit_out.c_str());
    return 0;
  }

  if (*dec) {
    auto hists = ps::io::read_histogram_csv(dec_hist);
    std::vector<ps::G2Histogram> pair_hists;
    for (auto& h : hists)
      if (!h.pair_averaged) pair_hists.push_back(std::move(h));
    if (pair_hists.empty()) throw ps::ConfigError("deconv needs pair-resolved histogram rows");
    const auto cal = ps::io::load_calibration(dec_cal);
    ps::FitOptions opts;
    opts.fixed = parse_kv(dec_fix);
    opts.initial = parse_kv(dec_init);
    const auto res =
        ps::deconvolve_jitter(pair_hists, cal, ps::family_from_name(dec_family), opts);
    json out{{"fit", ps::io::fit_to_json(res.fit)},
             {"measured_g2_zero", res.measured_g2_zero},
             {"measured_g2_zero_stderr", res.measured_g2_err},
             {"deconvolved_g2_zero", res.deconvolved_g2_zero},
             {"deconvolved_g2_zero_stderr", res.deconvolved_g2_err},
             {"reduced_chi2", res.fit.reduced_chi2()}};
    out["bandwidth_model"] = ps::io::bandwidth_to_json(ps::bandwidth_from_fit(res.fit));
    ps::io::write_json(out, dec_out);
    json cfg{{"hist", dec_hist}, {"calibration", dec_cal}, {"family", dec_family}};
    ps::io::write_manifest("deconv", cfg, {dec_hist, dec_cal}, {dec_out}, 0, timer.seconds());
    std::printf("deconv: measured %.4f +- %.4f, deconvolved g2(0) = %.4f +- %.4f -> %s\n",
                res.measured_g2_zero, res.measured_g2_err, res.deconvolved_g2_zero,
                res.deconvolved_g2_err, dec_out.c_str());
    return 0;
  }

  if (*jc) {
    const ps::TagStream stream = ps::read_tags(jc_in);
    const auto cal = ps::jitter_calibrate(stream, jc_period_ns * 1000.0);
    ps::io::write_json(ps::io::calibration_to_json(cal), jc_out);
    json cfg{{"in", jc_in}, {"period_ns", jc_period_ns}};
    ps::io::write_manifest("jitter-cal", cfg, {jc_in}, {jc_out}, 0, timer.seconds());
    for (std::size_t i = 0; i < cal.sigma_ps.size(); ++i)
      std::printf("jitter-cal: channel %zu sigma = %.1f +- %.1f ps%s\n", i, cal.sigma_ps[i],
                  cal.sigma_err_ps[i], cal.normality_warning[i] ? " (normality warning)" : "");
    return 0;
  }

  if (*pnr) {
    const ps::TagStream stream = ps::read_tags(pnr_in);
    const auto det = detector_model(pnr_det_cfg, pnr_det_preset);
    const auto window_ticks =
        std::max<std::uint64_t>(1, std::uint64_t(std::llround(pnr_window_ps / stream.tick_ps())));
    const auto stats = ps::window_clicks(stream, window_ticks);
    const double window_s = double(window_ticks) * stream.tick_ps() * 1e-12;
    const auto conv = pnr_loss_corrected ? ps::EfficiencyConvention::LossCorrected
                                         : ps::EfficiencyConvention::Detected;
    const auto matrix = ps::measurement_matrix(det, window_s, pnr_nmax, conv);

    std::vector<ps::PhotonNumberDistribution> dists;
    if (pnr_est == "direct" || pnr_est == "both")
      dists.push_back(ps::estimate_direct(stats, matrix));
    if (pnr_est == "ml" || pnr_est == "both")
      dists.push_back(ps::with_monte_carlo_errors(stats, matrix, ps::PnrEstimator::Ml, pnr_trials,
                                                  pnr_seed));
    if (dists.empty()) throw ps::ConfigError("--estimator must be direct|ml|both");
    ps::io::write_distribution_csv(pnr_csv, dists);

    json out;
    out["window_ps"] = double(window_ticks) * stream.tick_ps();
    out["window_count"] = stats.window_count;
    out["n_max"] = pnr_nmax;
    out["convention"] = pnr_loss_corrected ? "loss-corrected" : "detected";
    for (const auto& d : dists) out[d.estimator] = ps::io::distribution_to_json(d);
    if (dists.size() == 2) {
      json diff = json::array();
      for (std::size_t n = 0; n < dists[0].p.size(); ++n) {
        const double delta = dists[0].p[n] - dists[1].p[n];
        const double sigma = std::hypot(dists[0].err[n], dists[1].err[n]);
        diff.push_back(json{{"n", n}, {"difference", delta}, {"combined_sigma", sigma}});
      }
      out["estimator_difference"] = diff;
    }
    if (!pnr_json.empty()) ps::io::write_json(out, pnr_json);
    json cfg{{"in", pnr_in},     {"window_ps", pnr_window_ps}, {"n_max", pnr_nmax},
             {"estimator", pnr_est}, {"loss_corrected", pnr_loss_corrected},
             {"trials", pnr_trials}, {"mc_seed", pnr_seed}};
    std::vector<std::string> outs{pnr_csv};
    if (!pnr_json.empty()) outs.push_back(pnr_json);
    ps::io::write_manifest("pnr", cfg, {pnr_in}, outs, pnr_seed, timer.seconds());
    std::printf("pnr: %llu windows, nbar = %.3e -> %s\n",
                (unsigned long long)stats.window_count, ps::mean_photon(dists.back().p),
                pnr_csv.c_str());
    return 0;
  }

  if (*met) {
    ps::LogBase base = ps::LogBase::E;
    if (met_base == "2") base = ps::LogBase::Two;
    else if (met_base == "10") base = ps::LogBase::Ten;
    else if (met_base != "e") throw ps::ConfigError("--log-base must be e|2|10");

    json out;
    std::vector<std::string> inputs;
    if (!met_in.empty()) {
      const ps::TagStream stream = ps::read_tags(met_in);
      inputs.push_back(met_in);
      const auto det = detector_model(met_det_cfg, met_det_preset);
      const auto window_ticks = std::max<std::uint64_t>(
          1, std::uint64_t(std::llround(met_window_ps / stream.tick_ps())));
      const auto stats = ps::window_clicks(stream, window_ticks);
      const double window_s = double(window_ticks) * stream.tick_ps() * 1e-12;
      const auto conv = met_loss_corrected ? ps::EfficiencyConvention::LossCorrected
                                           : ps::EfficiencyConvention::Detected;
      const auto matrix = ps::measurement_matrix(det, window_s, met_nmax, conv);
      const auto est = met_est == "direct" ? ps::PnrEstimator::Direct : ps::PnrEstimator::Ml;
      std::vector<ps::DistributionMetrics> trials_dump;
      const auto report =
          ps::monte_carlo_errors(stats, matrix, est, met_trials, met_seed, base, {},
                                 met_dump.empty() ? nullptr : &trials_dump);
      out = ps::io::metrics_to_json(report);
      out["window_count"] = stats.window_count;
      out["window_ps"] = double(window_ticks) * stream.tick_ps();
      if (!met_dump.empty()) {
        std::ofstream f(met_dump, std::ios::trunc);
        f << "trial,nbar,g2_zero,mandel_q,entropy,kl_thermal,kl_coherent\n"
          << std::setprecision(17);
        for (std::size_t t = 0; t < trials_dump.size(); ++t) {
          const auto& m = trials_dump[t];
          f << t << "," << m.nbar << "," << m.g2zero << "," << m.mandel << "," << m.entropy
            << "," << m.kl_thermal << "," << m.kl_coherent << "\n";
        }
      }
    } else if (!met_dist.empty()) {
      inputs.push_back(met_dist);
      const auto dists = ps::io::read_distribution_csv(met_dist);
      const auto& d = dists.front();
      const auto m = ps::distribution_metrics(d.p, base);
      out = json{{"nbar", json{{"value", m.nbar}, {"uncertainty", 0.0}}},
                 {"g2_zero", json{{"value", m.g2zero}, {"uncertainty", 0.0}}},
                 {"mandel_q", json{{"value", m.mandel}, {"uncertainty", 0.0}}},
                 {"shannon_entropy", json{{"value", m.entropy}, {"uncertainty", 0.0}}},
                 {"kl_vs_thermal", json{{"value", m.kl_thermal}, {"uncertainty", 0.0}}},
                 {"kl_vs_coherent", json{{"value", m.kl_coherent}, {"uncertainty", 0.0}}},
                 {"log_base", ps::log_base_name(base)},
                 {"estimator", d.estimator},
                 {"note", "point metrics from a distribution file; no resampling"}};
    } else {
      throw ps::ConfigError("metrics needs --in (tag file) or --dist (distribution CSV)");
    }
    ps::io::write_json(out, met_out);
    json cfg{{"in", met_in},       {"dist", met_dist},   {"estimator", met_est},
             {"trials", met_trials}, {"seed", met_seed}, {"log_base", met_base},
             {"window_ps", met_window_ps}, {"n_max", met_nmax}};
    std::vector<std::string> outs{met_out};
    if (!met_dump.empty()) outs.push_back(met_dump);
    ps::io::write_manifest("metrics", cfg, inputs, outs, met_seed, timer.seconds());
    std::printf("metrics -> %s\n", met_out.c_str());
    return 0;
  }

  if (*sw) {
    json base = resolved_config_json(sw_config, sw_preset, sw_set);
    std::vector<std::string> values;
    {
      std::stringstream ss(sw_values);
      std::string tok;
      while (std::getline(ss, tok, ',')) values.push_back(tok);
    }
    std::ofstream f(sw_out, std::ios::trunc);
    if (!f) throw ps::FormatError("cannot open for writing: " + sw_out);
    f << "value,total_tags,count_rate_hz,g2_zero_bin,g2_zero_bin_stderr,g2_zero_fit,"
         "g2_zero_fit_stderr,sigma_nu_mhz,fwhm_mhz,sigma_tau_ns,status\n"
      << std::setprecision(10);
    for (const auto& v : values) {
      f << v << ",";
      try {
        json cfg_json = base;
        ps::io::apply_override(cfg_json, sw_param + "=" + v);
        const ps::ScenarioConfig cfg = ps::io::scenario_from_json(cfg_json);
        const ps::TagStream stream = ps::simulate(cfg, sw_threads);
        G2Outputs out = run_g2(stream, sw_bin_ps, sw_tau_ns, "", false, {}, sw_threads);
        const ps::G2Histogram& avg = out.have_average ? out.averaged : out.pair_hists.front();
        ps::G2Family family = sw_family == "auto" ? auto_family(cfg.spectrum)
                                                  : ps::family_from_name(sw_family);
        ps::FitOptions fopt;
        if (family == ps::G2Family::SingleLorentzianFiltered) {
          // the Doppler width is scenario knowledge, not a fit parameter
          for (const auto& c : cfg.spectrum.emission)
            if (c.kind == ps::LineShape::Gaussian)
              fopt.fixed["doppler_sigma_mhz"] = c.width_hz * 1e-6;
        }
        if (family == ps::G2Family::TwoGaussianPlusFilter && cfg.spectrum.filter)
          fopt.fixed["filter_fwhm_mhz"] = cfg.spectrum.filter->width_hz * 1e-6;
        std::vector<ps::G2FitData> data{ps::to_fit_data(avg)};
        const ps::FitResult fit = ps::fit_g2(data, family, fopt);
        const auto bw = ps::bandwidth_from_fit(fit);
        const double rate = double(stream.size()) / stream.duration_seconds();
        f << stream.size() << "," << rate << "," << avg.zero_value() << "," << avg.zero_err()
          << "," << fit.g2_zero() << "," << fit.g2_zero_stderr() << "," << bw.sigma_nu_mhz
          << "," << bw.fwhm_mhz << "," << bw.sigma_tau_ns << ",ok\n";
      } catch (const std::exception& e) {
        std::string what = e.what();
        for (auto& c : what)
          if (c == ',' || c == '\n') c = ';';
        f << ",,,,,,,,error:" << what << "\n";
      }
      f.flush();
    }
    json cfg{{"param", sw_param}, {"values", sw_values}, {"base", base}};
    ps::io::write_manifest("sweep", cfg, {}, {sw_out}, 0, timer.seconds());
    std::printf("sweep: %zu points -> %s\n", values.size(), sw_out.c_str());
    return 0;
  }

  return 2;
}

}  // namespace
