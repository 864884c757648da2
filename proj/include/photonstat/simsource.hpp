#pragma once
// Monte Carlo tag-stream generator: stationary single-mode thermal field
// with a prescribed spectrum, inhomogeneous-Poisson photodetection with
// routing, efficiency, dark counts, timing jitter and optional dead time.
#include <complex>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "photonstat/spectral.hpp"
#include "photonstat/tagstream.hpp"

namespace photonstat {

struct DetectorChannel {
  double efficiency = 1.0;      // eta in [0,1]
  double dark_rate_hz = 0.0;
  double jitter_sigma_ps = 0.0;
  double dead_time_ps = 0.0;
  double routing = 1.0;         // r_i >= 0, sum r_i <= 1
};

struct DetectorArrayModel {
  std::vector<DetectorChannel> channels;

  std::size_t size() const { return channels.size(); }
  /// sum of r_i * eta_i
  double detected_fraction() const;
  void validate() const;
};

enum class SourceKind { Thermal, Coherent };

struct ScenarioConfig {
  SourceKind source = SourceKind::Thermal;
  SpectralModel spectrum;
  DetectorArrayModel detectors;
  double mean_detected_rate_hz = 1e6;
  double duration_s = 1.0;
  double tick_ps = 81.0;
  std::uint64_t seed = 1;
  double field_dt_ps = 300.0;
  int segment_log2 = 20;  // field synthesis segment length
  std::map<std::string, std::string> metadata;

  void validate() const;  // includes the Nyquist band-limit check
};

/// Colored circular complex Gaussian field, unit ensemble mean power,
/// synthesized in overlapping windowed segments. Intended for test-scale
/// durations; simulate() streams instead of materializing.
std::vector<std::complex<double>> synthesize_field(const SpectralModel& model, double duration_s,
                                                   double dt_s, std::uint64_t seed,
                                                   int segment_log2 = 20);

/// |E|^2 of the synthesized field, normalized to unit sample mean.
std::vector<double> synthesize_intensity(const SpectralModel& model, double duration_s,
                                         double dt_s, std::uint64_t seed, int segment_log2 = 20);

/// Photodetection of an explicit intensity trace. arrival_rate_hz is the
/// photon arrival rate before routing/efficiency; lambda(t) =
/// arrival_rate * I(t)/<I>. Dark counts, jitter, dead time and tick
/// quantization as configured per channel.
TagStream detect(std::span<const double> intensity, double dt_s, const DetectorArrayModel& array,
                 double arrival_rate_hz, double tick_ps, std::uint64_t seed);

/// Full scenario: synthesize + detect, streamed in segments; byte-identical
/// output for identical (config, seed) regardless of thread count.
TagStream simulate(const ScenarioConfig& config, int threads = 0);

/// Calibration source: per channel, counts_per_channel tags on a strict
/// period grid plus channel jitter, quantized to ticks.
TagStream simulate_pulsed_reference(double period_ps, const DetectorArrayModel& array,
                                    std::uint64_t counts_per_channel, double tick_ps,
                                    std::uint64_t seed);

}  // namespace photonstat
