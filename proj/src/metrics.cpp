#include "photonstat/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "photonstat/errors.hpp"
#include "photonstat/rng.hpp"

namespace photonstat {

PhotonNumberDistribution thermal_dist(double nbar, int n_max) {
  if (nbar < 0) throw ConfigError("thermal_dist: nbar must be >= 0");
  if (n_max < 0) throw ConfigError("thermal_dist: n_max must be >= 0");
  PhotonNumberDistribution d;
  d.estimator = "thermal";
  d.p.resize(std::size_t(n_max) + 1);
  d.err.assign(d.p.size(), 0.0);
  const double x = nbar / (1.0 + nbar);
  double v = 1.0 / (1.0 + nbar), sum = 0.0;
  for (int n = 0; n <= n_max; ++n) {
    d.p[std::size_t(n)] = v;
    sum += v;
    v *= x;
  }
  for (auto& q : d.p) q /= sum;
  return d;
}

PhotonNumberDistribution coherent_dist(double nbar, int n_max) {
  if (nbar < 0) throw ConfigError("coherent_dist: nbar must be >= 0");
  if (n_max < 0) throw ConfigError("coherent_dist: n_max must be >= 0");
  PhotonNumberDistribution d;
  d.estimator = "coherent";
  d.p.resize(std::size_t(n_max) + 1);
  d.err.assign(d.p.size(), 0.0);
  double v = std::exp(-nbar), sum = 0.0;
  for (int n = 0; n <= n_max; ++n) {
    d.p[std::size_t(n)] = v;
    sum += v;
    v *= nbar / double(n + 1);
  }
  for (auto& q : d.p) q /= sum;
  return d;
}

double mean_photon(std::span<const double> p) {
  double m = 0.0;
  for (std::size_t n = 0; n < p.size(); ++n) m += double(n) * p[n];
  return m;
}

double g2_zero(std::span<const double> p) {
  const double mean = mean_photon(p);
  if (!(mean > 0)) throw EstimationError("g2_zero undefined for zero mean photon number");
  double fac = 0.0;
  for (std::size_t n = 0; n < p.size(); ++n) fac += double(n) * (double(n) - 1.0) * p[n];
  return fac / (mean * mean);
}

double mandel_q(std::span<const double> p) {
  const double mean = mean_photon(p);
  if (!(mean > 0)) throw EstimationError("mandel_q undefined for zero mean photon number");
  double m2 = 0.0;
  for (std::size_t n = 0; n < p.size(); ++n) m2 += double(n) * double(n) * p[n];
  const double var = m2 - mean * mean;
  return (var - mean) / mean;
}

double log_base_factor(LogBase base) {
  switch (base) {
    case LogBase::E: return 1.0;
    case LogBase::Two: return std::log(2.0);
    case LogBase::Ten: return std::log(10.0);
  }
  return 1.0;
}

std::string log_base_name(LogBase base) {
  switch (base) {
    case LogBase::E: return "e";
    case LogBase::Two: return "2";
    case LogBase::Ten: return "10";
  }
  return "e";
}

double shannon_entropy(std::span<const double> p, LogBase base) {
  double h = 0.0;
  for (double v : p) {
    if (v < 0) throw ConfigError("shannon_entropy: negative probability");
    if (v > 0) h -= v * std::log(v);
  }
  return h / log_base_factor(base);
}

double relative_entropy(std::span<const double> p, std::span<const double> q, LogBase base) {
  if (p.size() != q.size()) throw ConfigError("relative_entropy: size mismatch");
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] < 0 || q[i] < 0) throw ConfigError("relative_entropy: negative probability");
    if (p[i] == 0) continue;
    if (q[i] == 0) return std::numeric_limits<double>::infinity();  // support violation
    kl += p[i] * std::log(p[i] / q[i]);
  }
  return kl / log_base_factor(base);
}

DistributionMetrics distribution_metrics(std::span<const double> p, LogBase base) {
  DistributionMetrics m{};
  m.nbar = mean_photon(p);
  m.g2zero = g2_zero(p);
  m.mandel = mandel_q(p);
  m.entropy = shannon_entropy(p, base);
  const int n_max = int(p.size()) - 1;
  m.kl_thermal = relative_entropy(p, thermal_dist(m.nbar, n_max).p, base);
  m.kl_coherent = relative_entropy(p, coherent_dist(m.nbar, n_max).p, base);
  return m;
}

namespace {

/// Exact multinomial resample at fixed total, by sequential conditional
/// binomials over the observed counts.
void resample_counts(const std::vector<std::uint64_t>& counts, std::uint64_t total,
                     rng::Stream& stream, std::vector<std::uint64_t>& out) {
  out.assign(counts.size(), 0);
  std::uint64_t remaining_n = total;
  std::uint64_t remaining_c = total;
  for (std::size_t i = 0; i < counts.size() && remaining_n > 0; ++i) {
    if (counts[i] == 0) continue;
    if (counts[i] == remaining_c) {
      out[i] = remaining_n;
      remaining_n = 0;
      break;
    }
    const double p = double(counts[i]) / double(remaining_c);
    const std::uint64_t k = stream.binomial(remaining_n, p);
    out[i] = k;
    remaining_n -= k;
    remaining_c -= counts[i];
  }
}

}  // namespace

MetricsReport monte_carlo_errors(const ClickStatistics& stats, const MeasurementMatrix& matrix,
                                 PnrEstimator estimator, int trials, std::uint64_t seed,
                                 LogBase base, const MlOptions& ml,
                                 std::vector<DistributionMetrics>* trial_samples) {
  if (trials < 100) throw ConfigError("monte_carlo_errors: need at least 100 trials");

  auto run = [&](const ClickStatistics& s) {
    const PhotonNumberDistribution d = estimator == PnrEstimator::Direct
                                           ? estimate_direct(s, matrix)
                                           : estimate_ml(s, matrix, ml);
    return distribution_metrics(d.p, base);
  };

  MetricsReport report;
  report.base = base;
  report.estimator = estimator == PnrEstimator::Direct ? "direct" : "ml";
  report.trials = trials;
  report.seed = seed;

  const DistributionMetrics point = run(stats);

  std::vector<DistributionMetrics> samples;
  samples.reserve(std::size_t(trials));
  ClickStatistics trial = stats;
  for (int t = 0; t < trials; ++t) {
    rng::Stream stream(seed, rng::Purpose::Resample, std::uint64_t(t));
    resample_counts(stats.pattern_counts, stats.window_count, stream, trial.pattern_counts);
    try {
      samples.push_back(run(trial));
    } catch (const EstimationError&) {
      ++report.failed_trials;
    }
  }
  if (report.failed_trials * 100 > trials)
    throw EstimationError("monte_carlo_errors: more than 1% of trials failed");

  auto spread = [&](auto member) {
    double mean = 0.0;
    for (const auto& s : samples) mean += s.*member;
    mean /= double(samples.size());
    double var = 0.0;
    for (const auto& s : samples) {
      const double d = s.*member - mean;
      var += d * d;
    }
    var /= double(std::max<std::size_t>(samples.size() - 1, 1));
    return std::sqrt(var);
  };

  report.nbar = {point.nbar, spread(&DistributionMetrics::nbar)};
  report.g2zero = {point.g2zero, spread(&DistributionMetrics::g2zero)};
  report.mandel = {point.mandel, spread(&DistributionMetrics::mandel)};
  report.entropy = {point.entropy, spread(&DistributionMetrics::entropy)};
  report.kl_thermal = {point.kl_thermal, spread(&DistributionMetrics::kl_thermal)};
  report.kl_coherent = {point.kl_coherent, spread(&DistributionMetrics::kl_coherent)};
  if (trial_samples) *trial_samples = std::move(samples);
  return report;
}

PhotonNumberDistribution with_monte_carlo_errors(const ClickStatistics& stats,
                                                 const MeasurementMatrix& matrix,
                                                 PnrEstimator estimator, int trials,
                                                 std::uint64_t seed, const MlOptions& ml) {
  if (trials < 100) throw ConfigError("with_monte_carlo_errors: need at least 100 trials");
  auto estimate = [&](const ClickStatistics& s) {
    return estimator == PnrEstimator::Direct ? estimate_direct(s, matrix)
                                             : estimate_ml(s, matrix, ml);
  };
  PhotonNumberDistribution point = estimate(stats);

  std::vector<std::vector<double>> ps;
  ps.reserve(std::size_t(trials));
  int failed = 0;
  ClickStatistics trial = stats;
  for (int t = 0; t < trials; ++t) {
    rng::Stream stream(seed, rng::Purpose::Resample, std::uint64_t(t));
    resample_counts(stats.pattern_counts, stats.window_count, stream, trial.pattern_counts);
    try {
      ps.push_back(estimate(trial).p);
    } catch (const EstimationError&) {
      ++failed;
    }
  }
  if (failed * 100 > trials)
    throw EstimationError("with_monte_carlo_errors: more than 1% of trials failed");

  for (std::size_t n = 0; n < point.p.size(); ++n) {
    double mean = 0.0;
    for (const auto& p : ps) mean += p[n];
    mean /= double(ps.size());
    double var = 0.0;
    for (const auto& p : ps) {
      const double d = p[n] - mean;
      var += d * d;
    }
    var /= double(std::max<std::size_t>(ps.size() - 1, 1));
    point.err[n] = std::sqrt(var);
  }
  return point;
}

}  // namespace photonstat
