#pragma once
// Certification metrics on photon-number distributions: mean, g2(0),
// Mandel Q, Shannon entropy, relative entropy against thermal/coherent
// references, with Monte Carlo resampling uncertainties.
#include <cstdint>
#include <span>
#include <string>

#include "photonstat/pnr.hpp"

namespace photonstat {

/// Bose-Einstein p(n) = nbar^n/(1+nbar)^(n+1), truncated and renormalized.
PhotonNumberDistribution thermal_dist(double nbar, int n_max);
/// Poisson weights, truncated and renormalized.
PhotonNumberDistribution coherent_dist(double nbar, int n_max);

double mean_photon(std::span<const double> p);
/// sum n(n-1) p / (sum n p)^2; undefined for zero mean.
double g2_zero(std::span<const double> p);
/// (var - mean)/mean; 0 for Poissonian, nbar for thermal light.
double mandel_q(std::span<const double> p);

enum class LogBase { E, Two, Ten };
double log_base_factor(LogBase base);  // divide natural-log results by this
std::string log_base_name(LogBase base);

double shannon_entropy(std::span<const double> p, LogBase base = LogBase::E);
/// sum p log(p/q); +infinity when p has mass outside the support of q.
double relative_entropy(std::span<const double> p, std::span<const double> q,
                        LogBase base = LogBase::E);

struct MetricValue {
  double value = 0.0;
  double uncertainty = 0.0;
};

struct MetricsReport {
  MetricValue nbar, g2zero, mandel, entropy, kl_thermal, kl_coherent;
  LogBase base = LogBase::E;
  std::string estimator;
  int trials = 0;
  int failed_trials = 0;
  std::uint64_t seed = 0;
};

enum class PnrEstimator { Direct, Ml };

/// The per-distribution metric set used inside the Monte Carlo chain.
struct DistributionMetrics {
  double nbar, g2zero, mandel, entropy, kl_thermal, kl_coherent;
};
DistributionMetrics distribution_metrics(std::span<const double> p, LogBase base);

/// Multinomial resampling of the pattern counts (window count fixed) with
/// the full estimator + metric chain rerun per trial; point values come
/// from the original statistics, uncertainties are the trial spread.
/// References are re-matched to each trial's mean photon number.
MetricsReport monte_carlo_errors(const ClickStatistics& stats, const MeasurementMatrix& matrix,
                                 PnrEstimator estimator, int trials, std::uint64_t seed,
                                 LogBase base = LogBase::E, const MlOptions& ml = {},
                                 std::vector<DistributionMetrics>* trial_samples = nullptr);

/// Point estimate with per-element uncertainties from the same multinomial
/// resampling scheme.
PhotonNumberDistribution with_monte_carlo_errors(const ClickStatistics& stats,
                                                 const MeasurementMatrix& matrix,
                                                 PnrEstimator estimator, int trials,
                                                 std::uint64_t seed, const MlOptions& ml = {});

}  // namespace photonstat
