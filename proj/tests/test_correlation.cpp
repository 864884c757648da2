#include <doctest.h>

#include <cmath>
#include <map>

#include "photonstat/correlation.hpp"
#include "photonstat/errors.hpp"
#include "photonstat/rng.hpp"
#include "photonstat/simsource.hpp"

using namespace photonstat;

namespace {

TagStream random_stream(std::uint64_t seed, std::uint16_t channels, std::uint64_t duration,
                        std::size_t n_tags) {
  rng::Stream s(seed, rng::Purpose::Generic, 1);
  std::vector<TimeTag> tags;
  for (std::size_t i = 0; i < n_tags; ++i)
    tags.push_back({s.next_u64() % (duration + 1), std::uint16_t(s.next_u64() % channels)});
  return TagStream::from_unsorted({81.0, channels, duration, "test"}, std::move(tags));
}

TagStream poisson_two_channel(std::uint64_t seed, double rate_hz, double duration_s) {
  std::vector<TimeTag> tags;
  const double tick_s = 81e-12;
  const auto duration_ticks = std::uint64_t(duration_s / tick_s);
  for (std::uint16_t ch = 0; ch < 2; ++ch) {
    rng::Stream s(seed, rng::Purpose::Generic, 10 + ch);
    double t = 0.0;
    for (;;) {
      t += s.exponential(1.0 / rate_hz);
      if (t >= duration_s) break;
      tags.push_back({std::uint64_t(t / tick_s), ch});
    }
  }
  return TagStream::from_unsorted({81.0, 2, duration_ticks, "poisson"}, std::move(tags));
}

ScenarioConfig small_thermal(std::uint64_t seed) {
  ScenarioConfig cfg;
  cfg.source = SourceKind::Thermal;
  cfg.spectrum.emission = {{LineShape::Lorentzian, 0.0, 67e6, 1.0}};
  DetectorChannel d{0.5, 0.0, 0.0, 0.0, 1.0 / 3.0};
  cfg.detectors.channels = {d, d, d};
  cfg.mean_detected_rate_hz = 2e6;
  cfg.duration_s = 0.3;
  cfg.tick_ps = 81.0;
  cfg.field_dt_ps = 2000.0;  // pure Lorentzian support 201 MHz, Nyquist 250 MHz
  cfg.segment_log2 = 14;
  cfg.seed = seed;
  return cfg;
}

}  // namespace

TEST_CASE("two simultaneous tags give one zero-bin count") {
  const TagStream s({81.0, 2, 100, ""}, {{50, 0}, {50, 1}});
  const auto raw = pair_delay_counts(s, {0, 1}, 40, 8);
  REQUIRE(raw.size() == 11);
  CHECK(raw[5] == 1);
  std::uint64_t total = 0;
  for (auto c : raw) total += c;
  CHECK(total == 1);
}

TEST_CASE("pair histogram is exactly symmetric under channel exchange") {
  const TagStream s = random_stream(3, 3, 50000, 4000);
  const auto ab = pair_delay_counts(s, {0, 1}, 200, 8);
  const auto ba = pair_delay_counts(s, {1, 0}, 200, 8);
  REQUIRE(ab.size() == ba.size());
  for (std::size_t k = 0; k < ab.size(); ++k) CHECK(ab[k] == ba[ab.size() - 1 - k]);
}

TEST_CASE("pair counts match a brute-force scan and are thread invariant") {
  const TagStream s = random_stream(4, 2, 30000, 2500);
  const std::int64_t w = 8, K = 25;
  const auto fast1 = pair_delay_counts(s, {0, 1}, K * w, w, 1);
  const auto fast4 = pair_delay_counts(s, {0, 1}, K * w, w, 4);
  CHECK(fast1 == fast4);

  std::vector<std::uint64_t> brute(std::size_t(2 * K + 1), 0);
  const std::int64_t dmax = K * w + (w - w / 2 - 1);
  for (const auto& a : s.tags()) {
    if (a.channel != 0) continue;
    for (const auto& b : s.tags()) {
      if (b.channel != 1) continue;
      const std::int64_t d = std::int64_t(b.timestamp) - std::int64_t(a.timestamp);
      if (std::abs(d) > dmax) continue;
      const std::int64_t ad = std::abs(d);
      const std::int64_t k = (d >= 0 ? 1 : -1) * ((ad + w / 2) / w);
      ++brute[std::size_t(k + K)];
    }
  }
  CHECK(fast1 == brute);
}

TEST_CASE("independent Poisson streams sit at the accidental level") {
  const double rate = 1e5, duration = 2.0;
  const auto s = poisson_two_channel(9, rate, duration);
  const auto h = g2_pair(s, {0, 1}, 2469, 8);

  // expected counts per bin: R_i R_j * bin * T with the exact per-bin width
  const auto counts = s.channel_counts();
  double chi2 = 0.0;
  int dof = 0;
  for (std::size_t i = 0; i < h.size(); ++i) {
    const double acc = double(counts[0]) * double(counts[1]) * double(h.ticks_in_bin(i)) *
                       81e-12 / duration;
    chi2 += (double(h.raw[i]) - acc) * (double(h.raw[i]) - acc) / acc;
    ++dof;
  }
  CHECK(std::abs(chi2 - dof) < 5.0 * std::sqrt(2.0 * dof));

  double wm, we;
  h.wing(wm, we);
  CHECK(std::abs(wm - 1.0) < 4.0 * we);
}

TEST_CASE("normalize: counts exactly at the accidental level give g2 = 1") {
  // synthetic raw counts equal to the accidental expectation
  const double duration = 1.0;
  std::vector<std::uint64_t> singles{1000000, 2000000, 0};
  const std::int64_t w = 10;  // even width: zero bin covers w-1 ticks
  std::vector<std::uint64_t> raw;
  for (std::int64_t k = -20; k <= 20; ++k) {
    const double ticks = k == 0 ? double(w - 1) : double(w);
    raw.push_back(std::uint64_t(std::llround(1e6 * 2e6 * ticks * 81e-12 / duration)));
  }
  const auto h = normalize_counts(raw, {0, 1}, w, 81.0, singles, duration);
  for (std::size_t i = 0; i < h.size(); ++i) CHECK(h.g2[i] == doctest::Approx(1.0).epsilon(1e-3));
  CHECK_THROWS_AS(normalize_counts(raw, {0, 2}, w, 81.0, singles, duration), EstimationError);
}

TEST_CASE("thermal simulation: dark correction recovers the dark-free histogram") {
  ScenarioConfig clean = small_thermal(555);
  ScenarioConfig dark = clean;
  for (auto& c : dark.detectors.channels) c.dark_rate_hz = 20000.0;

  const auto s_clean = simulate(clean);
  const auto s_dark = simulate(dark);
  // per-purpose substreams: the dark run contains the identical photon tags
  CHECK(s_dark.size() > s_clean.size());

  const std::int64_t w = 8, tau = 2469;
  std::vector<double> dark_rates{20000.0, 20000.0, 20000.0};
  for (const PairKey pk : {PairKey{0, 1}, PairKey{0, 2}}) {
    const auto h_clean = g2_pair(s_clean, pk, tau, w);
    const auto h_raw = g2_pair(s_dark, pk, tau, w);
    const auto h_corr = dark_correct(h_raw, dark_rates);
    CHECK(h_corr.dark_corrected);

    // direction: darks dilute the bunching peak
    CHECK(h_raw.zero_value() < h_corr.zero_value());

    // corrected peak agrees with the dark-free run
    const double sigma = std::hypot(h_corr.zero_err(), h_clean.zero_err());
    CHECK(std::abs(h_corr.zero_value() - h_clean.zero_value()) < 3.0 * sigma);

    // magnitude of the dilution follows the kappa product
    const double ri = double(h_raw.singles[pk.a]) / h_raw.duration_s;
    const double rj = double(h_raw.singles[pk.b]) / h_raw.duration_s;
    const double kk = (ri - 20000.0) / ri * ((rj - 20000.0) / rj);
    const double predicted_raw = 1.0 - kk + kk * h_clean.zero_value();
    CHECK(std::abs(h_raw.zero_value() - predicted_raw) < 3.0 * sigma);
  }

  // zero dark rates are the identity
  const auto h = g2_pair(s_clean, {0, 1}, tau, w);
  const auto same = dark_correct(h, std::vector<double>{0.0, 0.0, 0.0});
  for (std::size_t i = 0; i < h.size(); ++i) CHECK(same.g2[i] == h.g2[i]);
}

TEST_CASE("average_pairs: identical histograms shrink errors by sqrt(3)") {
  const auto s = poisson_two_channel(10, 5e4, 1.0);
  const auto h = g2_pair(s, {0, 1}, 500, 8);
  const std::vector<G2Histogram> three{h, h, h};
  const auto avg = average_pairs(three);
  CHECK(avg.pair_averaged);
  for (std::size_t i = 0; i < h.size(); ++i) {
    CHECK(avg.g2[i] == doctest::Approx(h.g2[i]).epsilon(1e-12));
    CHECK(avg.err[i] == doctest::Approx(h.err[i] / std::sqrt(3.0)).epsilon(1e-12));
  }
}

TEST_CASE("average_pairs: equal weights average a peak with a flat pair") {
  G2Histogram a, b;
  a.bin_width_ticks = b.bin_width_ticks = 8;
  a.n_half = b.n_half = 1;
  a.tick_ps = b.tick_ps = 81.0;
  a.g2 = {1.0, 2.0, 1.0};
  b.g2 = {1.0, 1.0, 1.0};
  a.err = b.err = {0.1, 0.1, 0.1};
  a.raw = b.raw = {100, 100, 100};
  const std::vector<G2Histogram> both{a, b};
  const auto avg = average_pairs(both);
  CHECK(avg.g2[1] == doctest::Approx(1.5).epsilon(1e-12));
}

TEST_CASE("pair averaging agrees with pooled counts for equal-rate pairs") {
  const auto s = simulate(small_thermal(777));
  const std::int64_t w = 8, tau = 2469;
  std::vector<G2Histogram> hists;
  for (const PairKey pk : {PairKey{0, 1}, PairKey{0, 2}, PairKey{1, 2}})
    hists.push_back(g2_pair(s, pk, tau, w));
  const auto avg = average_pairs(hists);

  // pooled estimate: summed counts over summed accidentals
  const auto counts = s.channel_counts();
  const double t = s.duration_seconds();
  for (std::size_t i : {std::size_t(avg.n_half), std::size_t(avg.n_half + 3)}) {
    double pooled_counts = 0.0, pooled_acc = 0.0;
    for (const auto& h : hists) {
      pooled_counts += double(h.raw[i]);
      pooled_acc += double(counts[h.pair.a]) * double(counts[h.pair.b]) *
                    double(h.ticks_in_bin(i)) * 81e-12 / t;
    }
    const double pooled = pooled_counts / pooled_acc;
    CHECK(std::abs(avg.g2[i] - pooled) < 3.0 * avg.err[i]);
  }
}

TEST_CASE("doubling the duration leaves g2 unchanged within error") {
  ScenarioConfig cfg = small_thermal(888);
  const auto h1 = g2_pair(simulate(cfg), {0, 1}, 2469, 8);
  cfg.duration_s *= 2.0;
  cfg.seed += 1;
  const auto h2 = g2_pair(simulate(cfg), {0, 1}, 2469, 8);
  CHECK(std::abs(h1.zero_value() - h2.zero_value()) <
        3.0 * std::hypot(h1.zero_err(), h2.zero_err()));
}

TEST_CASE("deconvolution: zero response is the identity, known smearing is removed") {
  // synthesize histograms directly from the model with Gaussian noise
  const double tick = 81.0;
  const double sigma_nu = 110e6;
  SpectralModel m;
  m.emission = {{LineShape::Gaussian, 0.0, sigma_nu, 1.0}};

  rng::Stream noise(2718, rng::Purpose::Generic, 0);
  JitterCalibration cal;
  cal.sigma_ps = {0.0, 0.0, 0.0};
  cal.sigma_err_ps = {0.0, 0.0, 0.0};
  cal.mean_offset_ps = {0, 0, 0};
  cal.counts = {1000000, 1000000, 1000000};
  cal.normality_warning = {false, false, false};

  auto make_hist = [&](PairKey pk, double pair_sigma) {
    G2Histogram h;
    h.tick_ps = tick;
    h.bin_width_ticks = 8;
    h.n_half = 150;
    h.pair = pk;
    h.duration_s = 1.0;
    h.singles = {1000000, 1000000, 1000000};
    const double err = 2e-3;
    for (std::int64_t k = -h.n_half; k <= h.n_half; ++k) {
      std::int64_t lo, hi;
      G2Histogram tmp;
      tmp.bin_width_ticks = 8;
      tmp.n_half = h.n_half;
      tmp.tick_range(std::size_t(k + h.n_half), lo, hi);
      std::vector<double> taus;
      for (std::int64_t t = lo; t <= hi; ++t) taus.push_back(double(t) * tick);
      const auto vals = g2_model_curve(m, taus, 1.0, pair_sigma);
      double acc = 0.0;
      for (double v : vals) acc += v;
      h.g2.push_back(acc / double(vals.size()) + err * noise.normal());
      h.err.push_back(err);
      h.raw.push_back(1000);
    }
    return h;
  };

  SUBCASE("zero response: deconvolved peak equals the fitted model peak") {
    std::vector<G2Histogram> hists{make_hist({0, 1}, 0.0)};
    const auto res = deconvolve_jitter(hists, cal, G2Family::FreeGaussian, {});
    CHECK(res.deconvolved_g2_zero == doctest::Approx(res.fit.g2_zero()).epsilon(1e-12));
    CHECK(std::abs(res.deconvolved_g2_zero - 2.0) < 3.0 * res.deconvolved_g2_err);
  }

  SUBCASE("random pair responses in [200,700] ps: amplitude recovered") {
    rng::Stream jit(11, rng::Purpose::Generic, 3);
    cal.sigma_ps = {200.0 + 500.0 * jit.uniform(), 200.0 + 500.0 * jit.uniform(),
                    200.0 + 500.0 * jit.uniform()};
    std::vector<G2Histogram> hists;
    for (const PairKey pk : {PairKey{0, 1}, PairKey{0, 2}, PairKey{1, 2}})
      hists.push_back(make_hist(pk, cal.pair_sigma_ps(pk.a, pk.b)));
    const auto res = deconvolve_jitter(hists, cal, G2Family::FreeGaussian, {});
    CHECK(std::abs(res.fit.parameter("amplitude") - 1.0) < 0.05);
    CHECK(std::abs(res.fit.parameter("sigma_nu_mhz") - 110.0) < 5.0);
    CHECK(res.measured_g2_zero < res.deconvolved_g2_zero);
  }
}

TEST_CASE("Siegert closure: simulate -> estimate -> fit recovers the model") {
  rng::Stream pick(1207, rng::Purpose::Generic, 0);
  int checked = 0;
  int within_two_sigma = 0;
  for (int trial = 0; trial < 10; ++trial) {
    const double sigma_broad = 50e6 + 250e6 * pick.uniform();
    const double filter_fwhm = 60e6 + 240e6 * pick.uniform();
    const double mixture = 0.3 * pick.uniform();

    ScenarioConfig cfg;
    cfg.source = SourceKind::Thermal;
    cfg.spectrum.emission = {{LineShape::Gaussian, 0.0, 10e6, mixture},
                             {LineShape::Gaussian, 0.0, sigma_broad, 1.0}};
    cfg.spectrum.filter = SpectralComponent{LineShape::Lorentzian, 0.0, filter_fwhm, 1.0};
    DetectorChannel d{0.5, 0.0, 0.0, 0.0, 1.0 / 3.0};
    cfg.detectors.channels = {d, d, d};
    cfg.mean_detected_rate_hz = 6e6;
    cfg.duration_s = 0.06;
    cfg.field_dt_ps = std::floor(1e12 / (2.0 * cfg.spectrum.support_hz()) * 0.9);
    cfg.segment_log2 = 15;
    cfg.seed = 4000 + std::uint64_t(trial);

    const auto stream = simulate(cfg);
    std::vector<G2Histogram> hists;
    for (const PairKey pk : {PairKey{0, 1}, PairKey{0, 2}, PairKey{1, 2}})
      hists.push_back(g2_pair(stream, pk, 1234, 8));
    const auto avg = average_pairs(hists);

    FitOptions opts;
    opts.fixed["filter_fwhm_mhz"] = filter_fwhm * 1e-6;
    opts.fixed["sigma_narrow_mhz"] = 10.0;
    const std::vector<G2FitData> data{to_fit_data(avg)};
    const auto fit = fit_g2(data, G2Family::TwoGaussianPlusFilter, opts);

    const double za =
        std::abs(fit.parameter("amplitude") - 1.0) / std::max(fit.parameter_stderr("amplitude"), 1e-9);
    const double zb = std::abs(fit.parameter("sigma_broad_mhz") - sigma_broad * 1e-6) /
                      std::max(fit.parameter_stderr("sigma_broad_mhz"), 1e-9);
    const double zr = std::abs(fit.parameter("ratio") - mixture) /
                      std::max(fit.parameter_stderr("ratio"), 1e-9);
    INFO("trial ", trial, " z-scores ", za, " ", zb, " ", zr);
    CHECK(za < 3.0);
    CHECK(zb < 3.0);
    CHECK(zr < 3.0);
    for (const double z : {za, zb, zr})
      if (z < 2.0) ++within_two_sigma;
    ++checked;
  }
  CHECK(checked == 10);
  // recovery within 2 sigma as an ensemble property across 30 parameter draws
  CHECK(within_two_sigma >= 24);
}
