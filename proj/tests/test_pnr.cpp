#include <doctest.h>

#include <bit>
#include <cmath>
#include <map>

#include "photonstat/errors.hpp"
#include "photonstat/metrics.hpp"
#include "photonstat/pnr.hpp"
#include "photonstat/rng.hpp"

using namespace photonstat;

namespace {

DetectorArrayModel array_from(const std::vector<double>& q, const std::vector<double>& dark_hz) {
  // routing carries q directly, efficiency 1
  DetectorArrayModel a;
  for (std::size_t i = 0; i < q.size(); ++i)
    a.channels.push_back({1.0, dark_hz[i], 0.0, 0.0, q[i]});
  return a;
}

/// Exhaustive oracle over all routing assignments and dark outcomes.
std::vector<double> brute_force_column(const std::vector<double>& q, const std::vector<double>& d,
                                       int n) {
  const std::size_t c = q.size();
  const std::size_t patterns = std::size_t(1) << c;
  double lost = 1.0;
  for (double v : q) lost -= v;
  std::vector<double> col(patterns, 0.0);
  // assignments: each of n photons goes to channel 0..c-1 or is lost (index c)
  std::vector<int> assign(std::size_t(n), 0);
  for (;;) {
    double prob = 1.0;
    std::uint32_t clicked = 0;
    for (int i = 0; i < n; ++i) {
      if (assign[std::size_t(i)] == int(c)) {
        prob *= lost;
      } else {
        prob *= q[std::size_t(assign[std::size_t(i)])];
        clicked |= 1u << assign[std::size_t(i)];
      }
    }
    for (std::uint32_t darks = 0; darks < patterns; ++darks) {
      double dp = prob;
      for (std::size_t i = 0; i < c; ++i)
        dp *= (darks >> i & 1u) ? d[i] : (1.0 - d[i]);
      col[clicked | darks] += dp;
    }
    int k = 0;
    for (; k < n; ++k) {
      if (++assign[std::size_t(k)] <= int(c)) break;
      assign[std::size_t(k)] = 0;
    }
    if (k == n) break;
  }
  return col;
}

ClickStatistics stats_from_probs(const std::vector<double>& probs, std::uint64_t n_windows,
                                 std::uint16_t channels) {
  ClickStatistics st;
  st.window_ticks = 8;
  st.channel_count = channels;
  st.window_count = 0;
  for (double p : probs) {
    const auto c = std::uint64_t(std::llround(p * double(n_windows)));
    st.pattern_counts.push_back(c);
    st.window_count += c;
  }
  return st;
}

std::vector<double> forward_pattern_probs(const MeasurementMatrix& mm,
                                          const std::vector<double>& p) {
  std::vector<double> probs(mm.patterns(), 0.0);
  for (std::uint32_t s = 0; s < mm.patterns(); ++s)
    for (int n = 0; n <= mm.n_max; ++n) probs[s] += mm.at(s, n) * p[std::size_t(n)];
  return probs;
}

}  // namespace

TEST_CASE("measurement matrix: vacuum and balanced single-photon columns") {
  const auto a = array_from({1.0 / 3, 1.0 / 3, 1.0 / 3}, {0, 0, 0});
  const auto mm = measurement_matrix(a, 648e-12, 3, EfficiencyConvention::LossCorrected);
  CHECK(mm.at(0, 0) == doctest::Approx(1.0).epsilon(1e-15));
  for (std::uint32_t s = 1; s < 8; ++s) CHECK(mm.at(s, 0) == 0.0);
  for (std::uint32_t s : {1u, 2u, 4u}) CHECK(mm.at(s, 1) == doctest::Approx(1.0 / 3).epsilon(1e-13));
  CHECK(mm.at(3, 1) == 0.0);
  CHECK(mm.at(7, 1) == 0.0);
}

TEST_CASE("measurement matrix matches the exhaustive enumeration oracle") {
  rng::Stream s(314, rng::Purpose::Generic, 0);
  for (int rep = 0; rep < 6; ++rep) {
    std::vector<double> q(3), dark_hz(3), d(3);
    double qsum = 0.0;
    for (auto& v : q) {
      v = 0.05 + 0.25 * s.uniform();
      qsum += v;
    }
    (void)qsum;
    const double w = 648e-12;
    for (std::size_t i = 0; i < 3; ++i) {
      dark_hz[i] = 1e6 * s.uniform();
      d[i] = 1.0 - std::exp(-dark_hz[i] * w);
    }
    const auto mm =
        measurement_matrix(array_from(q, dark_hz), w, 4, EfficiencyConvention::LossCorrected);
    for (int n = 0; n <= 4; ++n) {
      const auto col = brute_force_column(q, d, n);
      for (std::uint32_t pat = 0; pat < 8; ++pat)
        CHECK(std::abs(mm.at(pat, n) - col[pat]) < 1e-12);
    }
    // column stochasticity, exact
    for (int n = 0; n <= 4; ++n) {
      double sum = 0.0;
      for (std::uint32_t pat = 0; pat < 8; ++pat) sum += mm.at(pat, n);
      CHECK(std::abs(sum - 1.0) < 1e-12);
    }
  }
}

TEST_CASE("direct inversion: exact recovery from noiseless frequencies") {
  const auto a = array_from({0.3, 0.25, 0.35}, {100, 200, 50});
  const auto mm = measurement_matrix(a, 648e-12, 3, EfficiencyConvention::LossCorrected);
  const std::vector<double> truth{0.9875, 0.012, 4.7e-4, 3.0e-5};
  const auto probs = forward_pattern_probs(mm, truth);
  const auto stats = stats_from_probs(probs, std::uint64_t(1) << 50, 3);

  const auto est = estimate_direct(stats, mm);
  for (int n = 0; n <= 3; ++n) CHECK(std::abs(est.p[std::size_t(n)] - truth[std::size_t(n)]) < 1e-10);
  CHECK(est.residual < 1e-12);
  double total = 0.0;
  for (double v : est.p) total += v;
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("vacuum statistics invert to the vacuum distribution") {
  const auto a = array_from({1.0 / 3, 1.0 / 3, 1.0 / 3}, {0, 0, 0});
  const auto mm = measurement_matrix(a, 648e-12, 3, EfficiencyConvention::LossCorrected);
  ClickStatistics st;
  st.window_ticks = 8;
  st.channel_count = 3;
  st.window_count = 1000000;
  st.pattern_counts.assign(8, 0);
  st.pattern_counts[0] = st.window_count;

  const auto direct = estimate_direct(st, mm);
  CHECK(direct.p[0] == doctest::Approx(1.0).epsilon(1e-12));
  for (int n = 1; n <= 3; ++n) CHECK(std::abs(direct.p[std::size_t(n)]) < 1e-12);

  const auto ml = estimate_ml(st, mm);
  CHECK(ml.p[0] == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("EM fixed point and agreement with direct inversion on noiseless data") {
  const auto a = array_from({0.28, 0.33, 0.30}, {300, 150, 220});
  const auto mm = measurement_matrix(a, 648e-12, 3, EfficiencyConvention::LossCorrected);
  const std::vector<double> truth{0.95, 0.04, 0.009, 0.001};
  const auto stats = stats_from_probs(forward_pattern_probs(mm, truth), std::uint64_t(1) << 50, 3);

  const auto ml = estimate_ml(stats, mm);
  for (int n = 0; n <= 3; ++n) CHECK(std::abs(ml.p[std::size_t(n)] - truth[std::size_t(n)]) < 1e-8);

  const auto direct = estimate_direct(stats, mm);
  for (int n = 0; n <= 3; ++n)
    CHECK(std::abs(ml.p[std::size_t(n)] - direct.p[std::size_t(n)]) < 1e-6);
}

TEST_CASE("log likelihood: truth beats perturbations, EM increases it, relabeling invariance") {
  const auto a = array_from({0.3, 0.3, 0.3}, {0, 0, 0});
  const auto mm = measurement_matrix(a, 648e-12, 3, EfficiencyConvention::LossCorrected);
  const std::vector<double> truth{0.9, 0.08, 0.015, 0.005};

  // large-N counts drawn exactly at the model probabilities
  const auto stats = stats_from_probs(forward_pattern_probs(mm, truth), std::uint64_t(1) << 40, 3);
  const double ll_truth = loglikelihood(truth, mm, stats);

  rng::Stream s(777, rng::Purpose::Generic, 0);
  for (int rep = 0; rep < 100; ++rep) {
    std::vector<double> p = truth;
    double norm = 0.0;
    for (auto& v : p) {
      v = std::max(v + 0.2 * (s.uniform() - 0.5) * v + 1e-6 * s.uniform(), 1e-12);
      norm += v;
    }
    for (auto& v : p) v /= norm;
    bool same = true;
    for (std::size_t i = 0; i < p.size(); ++i)
      if (std::abs(p[i] - truth[i]) > 1e-15) same = false;
    if (!same) CHECK(loglikelihood(p, mm, stats) < ll_truth);
  }

  // one EM step from uniform raises the likelihood
  const std::vector<double> uniform{0.25, 0.25, 0.25, 0.25};
  const double ll0 = loglikelihood(uniform, mm, stats);
  CHECK(std::isfinite(ll0));
  MlOptions one;
  one.max_iterations = 1;
  const auto stepped = estimate_ml(stats, mm, one);
  CHECK(loglikelihood(stepped.p, mm, stats) > ll0);

  // relabeling channels of a symmetric array leaves the likelihood unchanged
  ClickStatistics relabeled = stats;
  for (std::uint32_t pat = 0; pat < 8; ++pat) {
    // swap channels 0 and 2 in the pattern index
    const std::uint32_t swapped =
        ((pat & 1u) << 2) | (pat & 2u) | ((pat & 4u) >> 2);
    relabeled.pattern_counts[swapped] = stats.pattern_counts[pat];
  }
  CHECK(loglikelihood(truth, mm, relabeled) == doctest::Approx(ll_truth).epsilon(1e-12));
}

TEST_CASE("estimator errors on empty or inconsistent inputs") {
  const auto a = array_from({0.3, 0.3, 0.3}, {0, 0, 0});
  const auto mm = measurement_matrix(a, 648e-12, 3, EfficiencyConvention::LossCorrected);
  ClickStatistics st;
  st.window_ticks = 8;
  st.channel_count = 3;
  st.window_count = 0;
  st.pattern_counts.assign(8, 0);
  CHECK_THROWS_AS(estimate_ml(st, mm), EstimationError);
  CHECK_THROWS_AS(estimate_direct(st, mm), EstimationError);

  CHECK_THROWS_AS(measurement_matrix(a, 648e-12, 0, EfficiencyConvention::Detected), ConfigError);
}

TEST_CASE("detected convention uses conditional routing probabilities") {
  DetectorArrayModel a;
  a.channels = {{0.23, 0.0, 0.0, 0.0, 1.0 / 3}, {0.23, 0.0, 0.0, 0.0, 1.0 / 3},
                {0.23, 0.0, 0.0, 0.0, 1.0 / 3}};
  const auto mm = measurement_matrix(a, 648e-12, 3, EfficiencyConvention::Detected);
  // one detected photon always clicks somewhere
  double p_noclick_1 = mm.at(0, 1);
  CHECK(p_noclick_1 == doctest::Approx(0.0).epsilon(1e-15));
  for (std::uint32_t s : {1u, 2u, 4u}) CHECK(mm.at(s, 1) == doctest::Approx(1.0 / 3).epsilon(1e-12));

  const auto lc = measurement_matrix(a, 648e-12, 3, EfficiencyConvention::LossCorrected);
  CHECK(lc.at(0, 1) == doctest::Approx(1.0 - 0.23).epsilon(1e-12));
}
