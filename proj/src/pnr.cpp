#include "photonstat/pnr.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <bit>
#include <cassert>
#include <cmath>
#include <limits>

#include "photonstat/errors.hpp"

namespace photonstat {

MeasurementMatrix measurement_matrix(const DetectorArrayModel& array, double window_s, int n_max,
                                     EfficiencyConvention convention) {
  array.validate();
  if (n_max < 1) throw ConfigError("measurement_matrix: n_max must be >= 1");
  if (!(window_s > 0)) throw ConfigError("measurement_matrix: window must be > 0");
  const std::uint16_t c = std::uint16_t(array.size());
  if (c > 16) throw ConfigError("measurement_matrix: at most 16 channels");

  std::vector<double> q(c), d(c);
  double qsum = 0.0;
  for (std::uint16_t i = 0; i < c; ++i) {
    q[i] = array.channels[i].routing * array.channels[i].efficiency;
    qsum += q[i];
    d[i] = 1.0 - std::exp(-array.channels[i].dark_rate_hz * window_s);
  }
  if (qsum > 1.0 + 1e-12) throw ConfigError("measurement_matrix: sum q_i above 1");
  if (convention == EfficiencyConvention::Detected) {
    if (!(qsum > 0)) throw ConfigError("measurement_matrix: zero total efficiency");
    for (auto& v : q) v /= qsum;
  }

  MeasurementMatrix mm;
  mm.channel_count = c;
  mm.n_max = n_max;
  mm.m.assign(mm.patterns() * std::size_t(n_max + 1), 0.0);

  // silence probability of a channel set C given n photons:
  //   prod_{i in C} (1 - d_i) * (1 - sum_{i in C} q_i)^n
  auto silence = [&](std::uint32_t set, int n) {
    double dark_quiet = 1.0, qsum_set = 0.0;
    for (std::uint16_t i = 0; i < c; ++i) {
      if (set >> i & 1u) {
        dark_quiet *= 1.0 - d[i];
        qsum_set += q[i];
      }
    }
    const double base = std::max(0.0, 1.0 - qsum_set);
    return dark_quiet * (n == 0 ? 1.0 : std::pow(base, n));
  };

  const std::uint32_t full = std::uint32_t(mm.patterns()) - 1;
  for (std::uint32_t pattern = 0; pattern <= full; ++pattern) {
    const std::uint32_t quiet = full & ~pattern;
    for (int n = 0; n <= n_max; ++n) {
      // inclusion-exclusion over which clicked channels were actually silent
      double prob = 0.0;
      for (std::uint32_t sub = pattern;; sub = (sub - 1) & pattern) {
        const double sgn = std::popcount(sub) % 2 == 0 ? 1.0 : -1.0;
        prob += sgn * silence(quiet | sub, n);
        if (sub == 0) break;
      }
      mm.m[std::size_t(pattern) * std::size_t(n_max + 1) + std::size_t(n)] =
          std::max(prob, 0.0);
    }
  }

  for (int n = 0; n <= n_max; ++n) {
    double col = 0.0;
    for (std::uint32_t s = 0; s <= full; ++s) col += mm.at(s, n);
    if (std::abs(col - 1.0) > 1e-12)
      throw EstimationError("measurement matrix column not stochastic");
  }
  return mm;
}

namespace {

void check_stats(const ClickStatistics& stats, const MeasurementMatrix& mm) {
  if (stats.channel_count != mm.channel_count)
    throw ConfigError("click statistics and measurement matrix disagree on channels");
  if (stats.window_count == 0) throw EstimationError("no windows in click statistics");
}

}  // namespace

PhotonNumberDistribution estimate_direct(const ClickStatistics& stats,
                                         const MeasurementMatrix& mm) {
  check_stats(stats, mm);
  const int classes = mm.channel_count + 1;
  if (mm.n_max + 1 > classes)
    throw ConfigError("direct inversion needs n_max + 1 <= click multiplicity classes");

  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(classes, mm.n_max + 1);
  Eigen::VectorXd f = Eigen::VectorXd::Zero(classes);
  for (std::uint32_t s = 0; s < stats.pattern_counts.size(); ++s) {
    const int multiplicity = std::popcount(s);
    f[multiplicity] += double(stats.pattern_counts[s]);
    for (int n = 0; n <= mm.n_max; ++n) a(multiplicity, n) += mm.at(s, n);
  }
  const double nwin = double(stats.window_count);
  f /= nwin;

  Eigen::VectorXd p;
  Eigen::MatrixXd ainv;
  if (classes == mm.n_max + 1) {
    Eigen::FullPivLU<Eigen::MatrixXd> lu(a);
    if (!lu.isInvertible()) throw EstimationError("direct inversion: singular aggregated matrix");
    ainv = lu.inverse();
    p = ainv * f;
  } else {
    ainv = a.completeOrthogonalDecomposition().pseudoInverse();
    p = ainv * f;
  }

  // multinomial covariance of the multiplicity frequencies
  Eigen::MatrixXd cov_f = (f.asDiagonal().toDenseMatrix() - f * f.transpose()) / nwin;
  Eigen::MatrixXd cov_p = ainv * cov_f * ainv.transpose();

  PhotonNumberDistribution out;
  out.estimator = "direct";
  out.p.resize(std::size_t(mm.n_max) + 1);
  out.err.resize(out.p.size());
  for (int n = 0; n <= mm.n_max; ++n) {
    out.p[std::size_t(n)] = p[n];
    out.err[std::size_t(n)] = std::sqrt(std::max(cov_p(n, n), 0.0));
    if (p[n] < 0) out.nonnegative = false;
  }
  out.residual = (a * p - f).cwiseAbs().maxCoeff();
  out.log_likelihood = loglikelihood(out.p, mm, stats);
  return out;
}

PhotonNumberDistribution estimate_ml(const ClickStatistics& stats, const MeasurementMatrix& mm,
                                     const MlOptions& options) {
  check_stats(stats, mm);
  const std::size_t np = std::size_t(mm.n_max) + 1;
  const double nwin = double(stats.window_count);

  std::vector<std::uint32_t> observed;
  std::vector<double> freq;
  for (std::uint32_t s = 0; s < stats.pattern_counts.size(); ++s) {
    if (stats.pattern_counts[s] == 0) continue;
    observed.push_back(s);
    freq.push_back(double(stats.pattern_counts[s]) / nwin);
  }
  if (observed.empty()) throw EstimationError("estimate_ml: all-zero frequencies");

  std::vector<double> p(np, 1.0 / double(np)), next(np);
  double ll_prev = -std::numeric_limits<double>::infinity();
  int iter = 0;
  for (; iter < options.max_iterations; ++iter) {
    double ll = 0.0;
    std::fill(next.begin(), next.end(), 0.0);
    for (std::size_t k = 0; k < observed.size(); ++k) {
      const std::uint32_t s = observed[k];
      double denom = 0.0;
      for (std::size_t n = 0; n < np; ++n) denom += mm.at(s, int(n)) * p[n];
      if (!(denom > 0))
        throw EstimationError("estimate_ml: observed pattern with zero model probability");
      ll += freq[k] * std::log(denom);
      const double w = freq[k] / denom;
      for (std::size_t n = 0; n < np; ++n) next[n] += w * mm.at(s, int(n)) * p[n];
    }
    // EM guarantee, allowing only roundoff noise
    if (ll < ll_prev - 1e-9 * (std::abs(ll_prev) + 1.0))
      throw EstimationError("estimate_ml: log-likelihood decreased");
    assert(ll >= ll_prev - 1e-9 * (std::abs(ll_prev) + 1.0));
    ll_prev = ll;

    double delta = 0.0;
    for (std::size_t n = 0; n < np; ++n) {
      delta = std::max(delta, std::abs(next[n] - p[n]));
      p[n] = next[n];
    }
    if (delta < options.tol) {
      ++iter;
      break;
    }
  }

  PhotonNumberDistribution out;
  out.estimator = "ml";
  out.p = p;
  out.err.assign(np, 0.0);  // uncertainties supplied by Monte Carlo resampling
  out.iterations = iter;
  out.log_likelihood = ll_prev * nwin;
  return out;
}

double loglikelihood(std::span<const double> p, const MeasurementMatrix& mm,
                     const ClickStatistics& stats) {
  check_stats(stats, mm);
  if (p.size() != std::size_t(mm.n_max) + 1)
    throw ConfigError("loglikelihood: distribution size does not match matrix");
  double ll = 0.0;
  for (std::uint32_t s = 0; s < stats.pattern_counts.size(); ++s) {
    if (stats.pattern_counts[s] == 0) continue;
    double q = 0.0;
    for (std::size_t n = 0; n < p.size(); ++n) q += mm.at(s, int(n)) * p[n];
    if (!(q > 0)) return -std::numeric_limits<double>::infinity();
    ll += double(stats.pattern_counts[s]) * std::log(q);
  }
  return ll;
}

}  // namespace photonstat
