#pragma once
// File formats shared by the CLI and tests: scenario configs, presets,
// histogram CSV, calibration/fit/metrics JSON, run manifests.
#include <filesystem>
#include <json.hpp>
#include <string>
#include <vector>

#include "photonstat/correlation.hpp"
#include "photonstat/metrics.hpp"
#include "photonstat/pnr.hpp"
#include "photonstat/simsource.hpp"

namespace photonstat::io {

std::string version();

nlohmann::json scenario_to_json(const ScenarioConfig& cfg);
ScenarioConfig scenario_from_json(const nlohmann::json& j);
/// Accepts either a bare scenario config or a simulate manifest (replays
/// its embedded config).
ScenarioConfig load_scenario(const std::filesystem::path& path);
void save_scenario(const ScenarioConfig& cfg, const std::filesystem::path& path);

/// Built-in scenario presets: narrowband-paper, broadband-paper,
/// poisson-control.
ScenarioConfig preset(const std::string& name);
std::vector<std::string> preset_names();

/// Applies "dotted.path=value" overrides onto the config JSON
/// (e.g. spectrum.filter.width_mhz=818, detectors.1.dark_rate_hz=0).
void apply_override(nlohmann::json& config, const std::string& assignment);

void write_histogram_csv(const std::filesystem::path& path, std::span<const G2Histogram> hists);
std::vector<G2Histogram> read_histogram_csv(const std::filesystem::path& path);

nlohmann::json calibration_to_json(const JitterCalibration& cal);
JitterCalibration calibration_from_json(const nlohmann::json& j);
JitterCalibration load_calibration(const std::filesystem::path& path);

void write_distribution_csv(const std::filesystem::path& path,
                            std::span<const PhotonNumberDistribution> dists);
std::vector<PhotonNumberDistribution> read_distribution_csv(const std::filesystem::path& path);
nlohmann::json distribution_to_json(const PhotonNumberDistribution& d);

nlohmann::json fit_to_json(const FitResult& fit);
nlohmann::json bandwidth_to_json(const BandwidthEstimate& bw);
nlohmann::json metrics_to_json(const MetricsReport& report);

void write_json(const nlohmann::json& j, const std::filesystem::path& path);
nlohmann::json read_json(const std::filesystem::path& path);

/// Every command emits <first output>.manifest.json describing the fully
/// resolved run; simulation/estimation replays are byte-identical.
void write_manifest(const std::string& command, const nlohmann::json& resolved_config,
                    const std::vector<std::string>& inputs, const std::vector<std::string>& outputs,
                    std::uint64_t seed, double runtime_s);

}  // namespace photonstat::io
