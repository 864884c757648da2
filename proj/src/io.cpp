#include "photonstat/io.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include "photonstat/errors.hpp"

namespace photonstat::io {

using nlohmann::json;

std::string version() { return "0.1.0"; }

namespace {

const char* shape_name(LineShape k) { return k == LineShape::Gaussian ? "gaussian" : "lorentzian"; }

LineShape shape_from(const std::string& s) {
  if (s == "gaussian") return LineShape::Gaussian;
  if (s == "lorentzian") return LineShape::Lorentzian;
  throw ConfigError("unknown line shape '" + s + "' (use gaussian|lorentzian)");
}

json component_to_json(const SpectralComponent& c, bool with_weight) {
  json j{{"kind", shape_name(c.kind)},
         {"center_mhz", c.center_hz * 1e-6},
         {"width_mhz", c.width_hz * 1e-6}};
  if (with_weight) j["weight"] = c.weight;
  return j;
}

SpectralComponent component_from_json(const json& j) {
  SpectralComponent c;
  c.kind = shape_from(j.at("kind").get<std::string>());
  c.center_hz = j.value("center_mhz", 0.0) * 1e6;
  c.width_hz = j.at("width_mhz").get<double>() * 1e6;
  c.weight = j.value("weight", 1.0);
  return c;
}

}  // namespace

json scenario_to_json(const ScenarioConfig& cfg) {
  json j;
  j["source"] = cfg.source == SourceKind::Thermal ? "thermal" : "coherent";
  json comps = json::array();
  for (const auto& c : cfg.spectrum.emission) comps.push_back(component_to_json(c, true));
  j["spectrum"]["components"] = comps;
  if (cfg.spectrum.filter) j["spectrum"]["filter"] = component_to_json(*cfg.spectrum.filter, false);
  json dets = json::array();
  for (const auto& d : cfg.detectors.channels) {
    dets.push_back(json{{"efficiency", d.efficiency},
                        {"dark_rate_hz", d.dark_rate_hz},
                        {"jitter_sigma_ps", d.jitter_sigma_ps},
                        {"dead_time_ps", d.dead_time_ps},
                        {"routing", d.routing}});
  }
  j["detectors"] = dets;
  j["mean_detected_rate_hz"] = cfg.mean_detected_rate_hz;
  j["duration_s"] = cfg.duration_s;
  j["tick_ps"] = cfg.tick_ps;
  j["seed"] = cfg.seed;
  j["field_dt_ps"] = cfg.field_dt_ps;
  j["segment_log2"] = cfg.segment_log2;
  j["metadata"] = cfg.metadata;
  return j;
}

ScenarioConfig scenario_from_json(const json& j) {
  ScenarioConfig cfg;
  const std::string source = j.value("source", "thermal");
  if (source == "thermal") cfg.source = SourceKind::Thermal;
  else if (source == "coherent") cfg.source = SourceKind::Coherent;
  else throw ConfigError("source must be thermal|coherent, got '" + source + "'");

  if (j.contains("spectrum")) {
    const auto& sp = j.at("spectrum");
    cfg.spectrum.emission.clear();
    for (const auto& c : sp.value("components", json::array()))
      cfg.spectrum.emission.push_back(component_from_json(c));
    if (sp.contains("filter") && !sp.at("filter").is_null())
      cfg.spectrum.filter = component_from_json(sp.at("filter"));
  }
  cfg.detectors.channels.clear();
  for (const auto& d : j.at("detectors")) {
    DetectorChannel ch;
    ch.efficiency = d.value("efficiency", 1.0);
    ch.dark_rate_hz = d.value("dark_rate_hz", 0.0);
    ch.jitter_sigma_ps = d.value("jitter_sigma_ps", 0.0);
    ch.dead_time_ps = d.value("dead_time_ps", 0.0);
    ch.routing = d.value("routing", 1.0 / double(j.at("detectors").size()));
    cfg.detectors.channels.push_back(ch);
  }
  cfg.mean_detected_rate_hz = j.at("mean_detected_rate_hz").get<double>();
  cfg.duration_s = j.at("duration_s").get<double>();
  cfg.tick_ps = j.value("tick_ps", 81.0);
  cfg.seed = j.value("seed", std::uint64_t(1));
  cfg.field_dt_ps = j.value("field_dt_ps", 300.0);
  cfg.segment_log2 = j.value("segment_log2", 20);
  if (j.contains("metadata"))
    cfg.metadata = j.at("metadata").get<std::map<std::string, std::string>>();
  return cfg;
}

json read_json(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw FormatError("cannot open: " + path.string());
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  return j;
}

void write_json(const json& j, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw FormatError("cannot open for writing: " + path.string());
  f << j.dump(2) << "\n";
}

ScenarioConfig load_scenario(const std::filesystem::path& path) {
  json j = read_json(path);
  if (j.contains("command") && j.contains("config")) j = j.at("config");  // manifest replay
  try {
    return scenario_from_json(j);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void save_scenario(const ScenarioConfig& cfg, const std::filesystem::path& path) {
  write_json(scenario_to_json(cfg), path);
}

ScenarioConfig preset(const std::string& name) {
  ScenarioConfig cfg;
  cfg.tick_ps = 81.0;
  const DetectorChannel apd{0.23, 0.0, 0.0, 0.0, 1.0 / 3.0};
  cfg.detectors.channels = {apd, apd, apd};
  cfg.detectors.channels[0].dark_rate_hz = 350.0;
  cfg.detectors.channels[1].dark_rate_hz = 180.0;
  cfg.detectors.channels[2].dark_rate_hz = 265.0;

  if (name == "narrowband-paper") {
    cfg.source = SourceKind::Thermal;
    cfg.spectrum.emission = {{LineShape::Gaussian, 0.0, 260e6, 1.0}};
    cfg.spectrum.filter = SpectralComponent{LineShape::Lorentzian, 0.0, 67e6, 1.0};
    cfg.mean_detected_rate_hz = 5.26e6;
    cfg.duration_s = 1.15;
    cfg.field_dt_ps = 300.0;
    cfg.segment_log2 = 16;
    cfg.seed = 20170913;
  } else if (name == "broadband-paper") {
    cfg.source = SourceKind::Thermal;
    cfg.spectrum.emission = {{LineShape::Gaussian, 0.0, 9e6, 0.15},
                             {LineShape::Gaussian, 0.0, 260e6, 1.0}};
    cfg.spectrum.filter = SpectralComponent{LineShape::Lorentzian, 0.0, 818e6, 1.0};
    cfg.detectors.channels[0].jitter_sigma_ps = 358.0;
    cfg.detectors.channels[1].jitter_sigma_ps = 551.0;
    cfg.detectors.channels[2].jitter_sigma_ps = 365.0;
    cfg.mean_detected_rate_hz = 1.0e7;
    cfg.duration_s = 0.5;
    cfg.field_dt_ps = 200.0;
    cfg.segment_log2 = 17;
    cfg.seed = 20170914;
  } else if (name == "poisson-control") {
    cfg.source = SourceKind::Coherent;
    for (auto& d : cfg.detectors.channels) d.dark_rate_hz = 0.0;
    cfg.mean_detected_rate_hz = 1.5e7;
    cfg.duration_s = 0.4;
    cfg.field_dt_ps = 300.0;
    cfg.segment_log2 = 16;
    cfg.seed = 20170915;
  } else {
    throw ConfigError("unknown preset '" + name + "'");
  }
  cfg.metadata["scenario"] = name;
  return cfg;
}

std::vector<std::string> preset_names() {
  return {"narrowband-paper", "broadband-paper", "poisson-control"};
}

void apply_override(json& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("override must look like key.path=value");
  std::string path = assignment.substr(0, eq);
  const std::string value = assignment.substr(eq + 1);
  for (auto& c : path)
    if (c == '.') c = '/';
  json parsed;
  try {
    parsed = json::parse(value);
  } catch (const json::exception&) {
    parsed = value;  // bare string
  }
  try {
    config[json::json_pointer("/" + path)] = parsed;
  } catch (const json::exception& e) {
    throw ConfigError("override '" + assignment + "': " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Histogram CSV

namespace {

std::string pair_label(const G2Histogram& h) {
  if (h.pair_averaged) return "avg";
  return std::to_string(h.pair.a) + "-" + std::to_string(h.pair.b);
}

}  // namespace

void write_histogram_csv(const std::filesystem::path& path, std::span<const G2Histogram> hists) {
  if (hists.empty()) throw ConfigError("write_histogram_csv: nothing to write");
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw FormatError("cannot open for writing: " + path.string());
  const auto& h0 = hists.front();
  f << "# photonstat g2 histogram v1\n";
  f << "# tick_ps=" << h0.tick_ps << "\n";
  f << "# bin_width_ticks=" << h0.bin_width_ticks << "\n";
  f << "# n_half=" << h0.n_half << "\n";
  f << "# duration_s=" << std::setprecision(17) << h0.duration_s << "\n";
  f << "# singles=";
  const auto* with_singles = &h0;
  for (const auto& h : hists)
    if (!h.singles.empty()) with_singles = &h;
  for (std::size_t i = 0; i < with_singles->singles.size(); ++i)
    f << (i ? "," : "") << with_singles->singles[i];
  f << "\n";
  f << "tau_ps,g2,stderr,raw_counts,pair,dark_corrected\n";
  f << std::setprecision(17);
  for (const auto& h : hists) {
    for (std::size_t i = 0; i < h.size(); ++i) {
      f << h.tau_ps(i) << "," << h.g2[i] << "," << h.err[i] << "," << h.raw[i] << ","
        << pair_label(h) << "," << (h.dark_corrected ? 1 : 0) << "\n";
    }
  }
}

std::vector<G2Histogram> read_histogram_csv(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw FormatError("cannot open: " + path.string());
  double tick_ps = 81.0, duration_s = 0.0;
  std::int64_t bin_width = 8, n_half = 0;
  std::vector<std::uint64_t> singles;

  std::map<std::string, G2Histogram> by_pair;
  std::vector<std::string> order;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto eq = line.find('=');
      if (eq == std::string::npos) continue;
      const std::string key = line.substr(2, eq - 2);
      const std::string val = line.substr(eq + 1);
      if (key == "tick_ps") tick_ps = std::stod(val);
      else if (key == "bin_width_ticks") bin_width = std::stoll(val);
      else if (key == "n_half") n_half = std::stoll(val);
      else if (key == "duration_s") duration_s = std::stod(val);
      else if (key == "singles") {
        std::stringstream ss(val);
        std::string tok;
        while (std::getline(ss, tok, ',')) singles.push_back(std::stoull(tok));
      }
      continue;
    }
    if (line.rfind("tau_ps", 0) == 0) continue;  // column header
    std::stringstream ss(line);
    std::string tok;
    std::vector<std::string> cols;
    while (std::getline(ss, tok, ',')) cols.push_back(tok);
    if (cols.size() < 6) throw FormatError("histogram CSV row with missing columns");
    const std::string& pair = cols[4];
    auto [it, inserted] = by_pair.try_emplace(pair);
    if (inserted) {
      order.push_back(pair);
      auto& h = it->second;
      h.tick_ps = tick_ps;
      h.bin_width_ticks = bin_width;
      h.n_half = n_half;
      h.duration_s = duration_s;
      h.singles = singles;
      if (pair == "avg") {
        h.pair_averaged = true;
        h.singles.clear();
      } else {
        const auto dash = pair.find('-');
        if (dash == std::string::npos) throw FormatError("bad pair label " + pair);
        h.pair.a = std::uint16_t(std::stoul(pair.substr(0, dash)));
        h.pair.b = std::uint16_t(std::stoul(pair.substr(dash + 1)));
      }
      h.dark_corrected = cols[5] == "1";
    }
    auto& h = it->second;
    h.g2.push_back(std::stod(cols[1]));
    h.err.push_back(std::stod(cols[2]));
    h.raw.push_back(std::stoull(cols[3]));
  }
  std::vector<G2Histogram> out;
  for (const auto& p : order) {
    auto& h = by_pair[p];
    if (std::int64_t(h.g2.size()) != 2 * h.n_half + 1)
      throw FormatError("histogram CSV: bin count does not match n_half header");
    out.push_back(std::move(h));
  }
  if (out.empty()) throw FormatError("histogram CSV: no data rows");
  return out;
}

// ---------------------------------------------------------------------------

json calibration_to_json(const JitterCalibration& cal) {
  json per = json::array();
  for (std::size_t i = 0; i < cal.sigma_ps.size(); ++i) {
    per.push_back(json{{"channel", i},
                       {"sigma_ps", cal.sigma_ps[i]},
                       {"sigma_err_ps", cal.sigma_err_ps[i]},
                       {"mean_offset_ps", cal.mean_offset_ps[i]},
                       {"counts", cal.counts[i]},
                       {"normality_warning", bool(cal.normality_warning[i])}});
  }
  json pairs = json::object();
  for (std::uint16_t i = 0; i < cal.sigma_ps.size(); ++i)
    for (std::uint16_t j = i + 1; j < cal.sigma_ps.size(); ++j)
      pairs[std::to_string(i) + "-" + std::to_string(j)] = cal.pair_sigma_ps(i, j);
  return json{{"channels", per}, {"pair_sigma_ps", pairs}};
}

JitterCalibration calibration_from_json(const json& j) {
  JitterCalibration cal;
  for (const auto& c : j.at("channels")) {
    cal.sigma_ps.push_back(c.at("sigma_ps").get<double>());
    cal.sigma_err_ps.push_back(c.value("sigma_err_ps", 0.0));
    cal.mean_offset_ps.push_back(c.value("mean_offset_ps", 0.0));
    cal.counts.push_back(c.value("counts", std::uint64_t(0)));
    cal.normality_warning.push_back(c.value("normality_warning", false));
  }
  return cal;
}

JitterCalibration load_calibration(const std::filesystem::path& path) {
  return calibration_from_json(read_json(path));
}

void write_distribution_csv(const std::filesystem::path& path,
                            std::span<const PhotonNumberDistribution> dists) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw FormatError("cannot open for writing: " + path.string());
  f << "n,p,stderr,estimator\n" << std::setprecision(17);
  for (const auto& d : dists)
    for (std::size_t n = 0; n < d.p.size(); ++n)
      f << n << "," << d.p[n] << "," << d.err[n] << "," << d.estimator << "\n";
}

std::vector<PhotonNumberDistribution> read_distribution_csv(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw FormatError("cannot open: " + path.string());
  std::map<std::string, PhotonNumberDistribution> by_est;
  std::vector<std::string> order;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty() || line[0] == '#' || line.rfind("n,", 0) == 0) continue;
    std::stringstream ss(line);
    std::string tok;
    std::vector<std::string> cols;
    while (std::getline(ss, tok, ',')) cols.push_back(tok);
    if (cols.size() < 4) throw FormatError("distribution CSV row with missing columns");
    auto [it, inserted] = by_est.try_emplace(cols[3]);
    if (inserted) {
      order.push_back(cols[3]);
      it->second.estimator = cols[3];
    }
    it->second.p.push_back(std::stod(cols[1]));
    it->second.err.push_back(std::stod(cols[2]));
  }
  std::vector<PhotonNumberDistribution> out;
  for (const auto& k : order) out.push_back(std::move(by_est[k]));
  if (out.empty()) throw FormatError("distribution CSV: no data rows");
  return out;
}

json distribution_to_json(const PhotonNumberDistribution& d) {
  return json{{"estimator", d.estimator},
              {"p", d.p},
              {"stderr", d.err},
              {"nonnegative", d.nonnegative},
              {"residual", d.residual},
              {"iterations", d.iterations},
              {"log_likelihood", d.log_likelihood}};
}

json fit_to_json(const FitResult& fit) {
  json params = json::object();
  for (std::size_t i = 0; i < fit.names.size(); ++i)
    params[fit.names[i]] = json{{"value", fit.values[i]}, {"stderr", fit.stderrs[i]}};
  for (const auto& [k, v] : fit.fixed) params[k] = json{{"value", v}, {"fixed", true}};
  return json{{"family", family_name(fit.family)},
              {"parameters", params},
              {"free_names", fit.names},
              {"covariance", fit.covariance},
              {"chi2", fit.chi2},
              {"ndof", fit.ndof},
              {"reduced_chi2", fit.reduced_chi2()},
              {"iterations", fit.iterations},
              {"starts_converged", fit.starts_converged},
              {"g2_zero_fit", fit.g2_zero()},
              {"g2_zero_fit_stderr", fit.g2_zero_stderr()}};
}

json bandwidth_to_json(const BandwidthEstimate& bw) {
  return json{{"sigma_tau_ns", bw.sigma_tau_ns},
              {"sigma_tau_err_ns", bw.sigma_tau_err_ns},
              {"sigma_nu_mhz", bw.sigma_nu_mhz},
              {"sigma_nu_err_mhz", bw.sigma_nu_err_mhz},
              {"fwhm_mhz", bw.fwhm_mhz},
              {"fwhm_err_mhz", bw.fwhm_err_mhz},
              {"convention", bw.convention}};
}

json metrics_to_json(const MetricsReport& report) {
  auto mv = [](const MetricValue& v) { return json{{"value", v.value}, {"uncertainty", v.uncertainty}}; };
  return json{{"nbar", mv(report.nbar)},
              {"g2_zero", mv(report.g2zero)},
              {"mandel_q", mv(report.mandel)},
              {"shannon_entropy", mv(report.entropy)},
              {"kl_vs_thermal", mv(report.kl_thermal)},
              {"kl_vs_coherent", mv(report.kl_coherent)},
              {"log_base", log_base_name(report.base)},
              {"estimator", report.estimator},
              {"trials", report.trials},
              {"failed_trials", report.failed_trials},
              {"seed", report.seed}};
}

void write_manifest(const std::string& command, const json& resolved_config,
                    const std::vector<std::string>& inputs, const std::vector<std::string>& outputs,
                    std::uint64_t seed, double runtime_s) {
  if (outputs.empty()) return;
  const auto now = std::chrono::system_clock::now();
  json j{{"command", command},
         {"version", version()},
         {"config", resolved_config},
         {"inputs", inputs},
         {"outputs", outputs},
         {"seed", seed},
         {"runtime_s", runtime_s},
         {"timestamp_unix", std::chrono::duration_cast<std::chrono::seconds>(now.time_since_epoch()).count()}};
  write_json(j, outputs.front() + ".manifest.json");
}

}  // namespace photonstat::io
