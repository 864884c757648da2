#pragma once
// Photon-number distribution reconstruction from multiplexed click
// statistics: exact click measurement matrix, direct (linear) inversion and
// expectation-maximization maximum likelihood.
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "photonstat/simsource.hpp"
#include "photonstat/tagstream.hpp"

namespace photonstat {

enum class EfficiencyConvention {
  Detected,       // q_i conditional on detection; p(n) describes detected photons
  LossCorrected,  // q_i = r_i * eta_i; p(n) describes source photons
};

/// P(click pattern S | n photons in the window), including per-window dark
/// click probabilities. Columns are exactly stochastic.
struct MeasurementMatrix {
  std::uint16_t channel_count = 0;
  int n_max = 0;
  std::vector<double> m;  // [pattern][n], row-major over patterns

  double at(std::uint32_t pattern, int n) const {
    return m[std::size_t(pattern) * std::size_t(n_max + 1) + std::size_t(n)];
  }
  std::size_t patterns() const { return std::size_t(1) << channel_count; }
};

MeasurementMatrix measurement_matrix(const DetectorArrayModel& array, double window_s, int n_max,
                                     EfficiencyConvention convention = EfficiencyConvention::Detected);

struct PhotonNumberDistribution {
  std::vector<double> p;
  std::vector<double> err;
  std::string estimator;  // "direct" | "ml" | reference tags
  bool nonnegative = true;
  double residual = 0.0;      // direct: max |A p - f|
  int iterations = 0;         // ml: EM iterations
  double log_likelihood = 0.0;

  int n_max() const { return int(p.size()) - 1; }
};

/// Aggregates patterns by click multiplicity and solves the square linear
/// system; negative components are reported as-is with the validity flag
/// cleared. Uncertainties by linear propagation of the multinomial
/// covariance of the multiplicity frequencies.
PhotonNumberDistribution estimate_direct(const ClickStatistics& stats,
                                         const MeasurementMatrix& matrix);

struct MlOptions {
  double tol = 1e-12;       // max-norm change per iteration
  int max_iterations = 100000;
};

/// Expectation-maximization from the full pattern frequencies; the log
/// likelihood is verified non-decreasing at every step.
PhotonNumberDistribution estimate_ml(const ClickStatistics& stats, const MeasurementMatrix& matrix,
                                     const MlOptions& options = {});

/// sum_S count_S log(sum_m M[S][m] p(m)); -inf when an observed pattern has
/// zero predicted probability.
double loglikelihood(std::span<const double> p, const MeasurementMatrix& matrix,
                     const ClickStatistics& stats);

}  // namespace photonstat
