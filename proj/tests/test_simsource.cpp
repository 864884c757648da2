#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>

#include "photonstat/correlation.hpp"
#include "photonstat/errors.hpp"
#include "photonstat/simsource.hpp"

using namespace photonstat;

namespace {

constexpr double kPi = std::numbers::pi;

SpectralModel lorentzian_model(double fwhm_hz) {
  SpectralModel m;
  m.emission = {{LineShape::Lorentzian, 0.0, fwhm_hz, 1.0}};
  return m;
}

DetectorArrayModel one_channel() {
  DetectorArrayModel a;
  a.channels = {{1.0, 0.0, 0.0, 0.0, 1.0}};
  return a;
}

DetectorArrayModel three_balanced(double eta = 0.5) {
  DetectorArrayModel a;
  a.channels = {{eta, 0.0, 0.0, 0.0, 1.0 / 3.0},
                {eta, 0.0, 0.0, 0.0, 1.0 / 3.0},
                {eta, 0.0, 0.0, 0.0, 1.0 / 3.0}};
  return a;
}

/// Kolmogorov-Smirnov statistic against Exp(1).
double ks_vs_exponential(std::vector<double> xs) {
  std::sort(xs.begin(), xs.end());
  double d = 0.0;
  const double n = double(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double cdf = 1.0 - std::exp(-xs[i]);
    d = std::max(d, std::abs(cdf - double(i) / n));
    d = std::max(d, std::abs(cdf - double(i + 1) / n));
  }
  return d;
}

void fft_inplace(std::vector<std::complex<double>>& buf) {
  const std::size_t n = buf.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(buf[i], buf[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * kPi / double(len);
    const std::complex<double> wl(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        const auto u = buf[i + k], v = buf[i + k + len / 2] * w;
        buf[i + k] = u + v;
        buf[i + k + len / 2] = u - v;
        w *= wl;
      }
    }
  }
}

}  // namespace

TEST_CASE("near-zero bandwidth: one exponential intensity draw per record") {
  SpectralModel m;
  m.emission = {{LineShape::Gaussian, 0.0, 0.01, 1.0}};  // far below one FFT bin
  std::vector<double> record_means;
  double shape_spread = 0.0;
  for (std::uint64_t seed = 1; seed <= 200; ++seed) {
    auto field = synthesize_field(m, 2048e-6, 1e-6, seed, 12);
    double mean = 0.0, mn = 1e300, mx = 0.0;
    for (const auto& e : field) {
      const double i = std::norm(e);
      mean += i;
      mn = std::min(mn, i);
      mx = std::max(mx, i);
    }
    mean /= double(field.size());
    record_means.push_back(mean);
    shape_spread = std::max(shape_spread, (mx - mn) / std::max(mean, 1e-30));
  }
  CHECK(shape_spread < 1e-3);

  double m1 = 0.0, m2 = 0.0;
  for (double v : record_means) {
    m1 += v;
    m2 += v * v;
  }
  m1 /= double(record_means.size());
  m2 /= double(record_means.size());
  CHECK(std::abs(m2 / (m1 * m1) - 2.0) < 0.45);  // ~3 sigma for 200 Exp(1) draws
}

TEST_CASE("Lorentzian field: empirical |g1| and the Siegert identity") {
  const double fwhm = 5e6;
  const double dt = 4e-9;
  const auto field = synthesize_field(lorentzian_model(fwhm), double(1 << 20) * dt, dt, 77, 16);
  const std::size_t n = field.size();

  const std::size_t lags[] = {0, 4, 8, 16, 32, 64};
  const std::size_t nblocks = 32, blen = n / nblocks;
  for (const std::size_t lag : lags) {
    std::vector<double> per_block;
    for (std::size_t b = 0; b < nblocks; ++b) {
      double ii = 0.0, isum = 0.0;
      for (std::size_t t = b * blen; t + lag < b * blen + blen; ++t) {
        ii += std::norm(field[t]) * std::norm(field[t + lag]);
        isum += std::norm(field[t]);
      }
      const double cnt = double(blen - lag);
      per_block.push_back(ii / cnt / ((isum / cnt) * (isum / cnt)));
    }
    double mean = 0.0;
    for (double v : per_block) mean += v;
    mean /= double(nblocks);
    double var = 0.0;
    for (double v : per_block) var += (v - mean) * (v - mean);
    const double sem = std::sqrt(var / double(nblocks - 1) / double(nblocks));

    std::complex<double> num = 0.0;
    double den = 0.0;
    for (std::size_t t = 0; t + lag < n; ++t) {
      num += std::conj(field[t]) * field[t + lag];
      den += std::norm(field[t]);
    }
    const double g1 = std::abs(num) / den;

    CHECK(std::abs(mean - (1.0 + g1 * g1)) < std::max(3.0 * sem, 0.01));
    const double expect = std::exp(-kPi * fwhm * double(lag) * dt);
    CHECK(std::abs(g1 - expect) < 0.01);
  }
}

TEST_CASE("intensity histogram is exponential with unit mean (KS at 1%)") {
  const auto intensity =
      synthesize_intensity(lorentzian_model(5e6), double(1 << 19) * 4e-9, 4e-9, 123, 16);
  std::vector<double> xs;  // subsample every ~6 coherence times
  for (std::size_t i = 0; i < intensity.size(); i += 96) xs.push_back(intensity[i]);
  CHECK(ks_vs_exponential(xs) < 1.628 / std::sqrt(double(xs.size())));
}

TEST_CASE("spectral fidelity: Welch periodogram tracks S(nu) within 5%") {
  const double fwhm = 5e6, dt = 4e-9;
  const auto model = lorentzian_model(fwhm);
  const auto field = synthesize_field(model, double(1 << 20) * dt, dt, 2024, 16);

  const std::size_t seg = 8192;
  std::vector<double> psd(seg, 0.0);
  std::vector<std::complex<double>> buf(seg);
  std::vector<double> window(seg);
  for (std::size_t i = 0; i < seg; ++i)
    window[i] = 0.5 - 0.5 * std::cos(2.0 * kPi * double(i) / double(seg));
  for (std::size_t start = 0; start + seg <= field.size(); start += seg / 2) {
    for (std::size_t i = 0; i < seg; ++i) buf[i] = field[start + i] * window[i];
    fft_inplace(buf);
    for (std::size_t i = 0; i < seg; ++i) psd[i] += std::norm(buf[i]);
  }

  const double dnu = 1.0 / (double(seg) * dt);
  const double s_peak = eval_spectral_density(model, 0.0);
  const std::size_t band = 64;
  struct Band {
    double meas, model;
  };
  std::vector<Band> bands;
  for (std::size_t b = 0; b + band <= seg; b += band) {
    double meas = 0.0, model_sum = 0.0, peak_in_band = 0.0;
    for (std::size_t i = b; i < b + band; ++i) {
      const double nu = (i <= seg / 2 ? double(i) : double(i) - double(seg)) * dnu;
      meas += psd[i];
      const double s = eval_spectral_density(model, nu);
      model_sum += s;
      peak_in_band = std::max(peak_in_band, s);
    }
    if (peak_in_band >= 0.01 * s_peak) bands.push_back({meas, model_sum});
  }
  REQUIRE(bands.size() >= 10);
  double tot_meas = 0.0, tot_model = 0.0;
  for (const auto& b : bands) {
    tot_meas += b.meas;
    tot_model += b.model;
  }
  double worst = 0.0;
  for (const auto& b : bands)
    worst = std::max(worst, std::abs((b.meas / tot_meas) / (b.model / tot_model) - 1.0));
  CHECK(worst < 0.05);
}

TEST_CASE("detect: zero efficiency yields an empty stream") {
  std::vector<double> flat(1000, 1.0);
  const auto s = detect(flat, 1e-6, three_balanced(0.0), 1e6, 81.0, 5);
  CHECK(s.size() == 0);
}

TEST_CASE("detect: constant intensity gives Poisson counts and exponential gaps") {
  const double dt = 1e-6, rate = 5e4;
  std::vector<double> flat(1 << 20, 1.0);
  const double duration = double(flat.size()) * dt;
  const auto s = detect(flat, dt, one_channel(), rate, 81.0, 42);

  const double expected = rate * duration;
  CHECK(std::abs(double(s.size()) - expected) < 4.0 * std::sqrt(expected));

  const std::uint64_t slices = 256;
  const std::uint64_t per = s.duration_ticks() / slices;
  std::vector<double> counts(slices, 0.0);
  for (const auto& t : s.tags())
    counts[std::min<std::uint64_t>(t.timestamp / per, slices - 1)] += 1;
  const double mu = expected / double(slices);
  double chi2 = 0.0;
  for (double c : counts) chi2 += (c - mu) * (c - mu) / mu;
  CHECK(std::abs(chi2 - double(slices)) < 5.0 * std::sqrt(2.0 * double(slices)));

  std::vector<double> gaps;
  for (std::size_t i = 1; i < s.tags().size(); ++i)
    gaps.push_back(double(s.tags()[i].timestamp - s.tags()[i - 1].timestamp) * 81e-12 * rate);
  CHECK(ks_vs_exponential(gaps) < 1.628 / std::sqrt(double(gaps.size())));
}

TEST_CASE("detect: routed channel counts match rate * r * eta") {
  const double dt = 1e-6, rate = 2e5;
  std::vector<double> flat(1 << 19, 1.0);
  const auto s = detect(flat, dt, three_balanced(0.5), rate, 81.0, 7);
  const double duration = double(flat.size()) * dt;
  const auto counts = s.channel_counts();
  for (std::size_t ch = 0; ch < 3; ++ch) {
    const double mu = rate * duration / 6.0;  // r*eta = 1/6
    CHECK(std::abs(double(counts[ch]) - mu) < 4.0 * std::sqrt(mu));
  }
}

TEST_CASE("dark-only detection is flat at g2 = 1") {
  DetectorArrayModel a = three_balanced(0.0);
  for (auto& c : a.channels) c.dark_rate_hz = 1e5;
  std::vector<double> flat(2000, 1.0);  // 2 s record, photon rate 0
  const auto s = detect(flat, 1e-3, a, 0.0, 81.0, 99);
  CHECK(s.size() > 100000);
  const auto h = g2_pair(s, {0, 1}, 2469, 8);
  double wm, we;
  h.wing(wm, we);
  CHECK(std::abs(wm - 1.0) < 4.0 * we);
  CHECK(std::abs(h.zero_value() - 1.0) < 4.0 * h.zero_err());
}

TEST_CASE("simulate: byte determinism and thread invariance") {
  ScenarioConfig cfg;
  cfg.source = SourceKind::Thermal;
  cfg.spectrum = lorentzian_model(5e6);
  cfg.detectors = three_balanced(0.5);
  cfg.mean_detected_rate_hz = 5e5;
  cfg.duration_s = 0.02;
  cfg.field_dt_ps = 4000.0;
  cfg.segment_log2 = 13;
  cfg.seed = 31337;

  const auto s1 = simulate(cfg, 1);
  const auto s2 = simulate(cfg, 1);
  const auto s3 = simulate(cfg, 3);
  CHECK(s1.tags() == s2.tags());
  CHECK(s1.tags() == s3.tags());
  CHECK(s1.size() > 1000);

  cfg.seed = 31338;
  const auto s4 = simulate(cfg, 1);
  CHECK(s1.tags() != s4.tags());
}

TEST_CASE("simulate rejects Nyquist violations") {
  ScenarioConfig cfg;
  cfg.spectrum = lorentzian_model(500e6);  // support 1.5 GHz
  cfg.detectors = three_balanced(0.5);
  cfg.mean_detected_rate_hz = 1e6;
  cfg.duration_s = 0.001;
  cfg.field_dt_ps = 4000.0;  // Nyquist 125 MHz
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("pulsed reference: exact grid at zero jitter, recovered sigma with jitter") {
  DetectorArrayModel a = three_balanced(1.0);
  const double period_ps = 81.0 * 12345;  // an exact multiple of the tick

  const auto clean = simulate_pulsed_reference(period_ps, a, 20000, 81.0, 1);
  for (const auto& t : clean.tags()) CHECK(t.timestamp % 12345 == 0);
  const auto zero_cal = jitter_calibrate(clean, period_ps);
  for (std::size_t ch = 0; ch < 3; ++ch) CHECK(zero_cal.sigma_ps[ch] <= 81.0);

  a.channels[0].jitter_sigma_ps = 358.0;
  a.channels[1].jitter_sigma_ps = 551.0;
  a.channels[2].jitter_sigma_ps = 365.0;
  const auto jittered = simulate_pulsed_reference(1e6, a, 100000, 81.0, 2);
  const auto cal = jitter_calibrate(jittered, 1e6);
  for (std::size_t ch = 0; ch < 3; ++ch) {
    const double sj = a.channels[ch].jitter_sigma_ps;
    const double expect = std::sqrt(sj * sj + 81.0 * 81.0 / 12.0);  // quantization floor
    CHECK(std::abs(cal.sigma_ps[ch] - expect) / expect < 0.02);
    CHECK_FALSE(cal.normality_warning[ch]);
  }

  const auto longer = simulate_pulsed_reference(1e7, a, 100000, 81.0, 2);
  const auto cal2 = jitter_calibrate(longer, 1e7);
  for (std::size_t ch = 0; ch < 3; ++ch)
    CHECK(std::abs(cal2.sigma_ps[ch] - cal.sigma_ps[ch]) / cal.sigma_ps[ch] < 0.02);
}
