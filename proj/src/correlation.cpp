#include "photonstat/correlation.hpp"

#include <algorithm>
#include <cmath>

#include "photonstat/errors.hpp"
#include "photonstat/parallel.hpp"

namespace photonstat {

void G2Histogram::tick_range(std::size_t i, std::int64_t& lo, std::int64_t& hi) const {
  const std::int64_t k = std::int64_t(i) - n_half;
  const std::int64_t w = bin_width_ticks, h = w / 2;
  if (k == 0) {
    hi = w - h - 1;
    lo = -hi;
  } else if (k > 0) {
    lo = k * w - h;
    hi = k * w + w - h - 1;
  } else {
    hi = k * w + h;
    lo = k * w - w + h + 1;
  }
}

std::int64_t G2Histogram::ticks_in_bin(std::size_t i) const {
  std::int64_t lo, hi;
  tick_range(i, lo, hi);
  return hi - lo + 1;
}

void G2Histogram::wing(double& mean, double& stderr_out) const {
  // plain mean: inverse-variance weights from estimated Poisson errors bias
  // low-count wings downward
  const std::int64_t edge = std::int64_t(std::ceil(0.8 * double(n_half)));
  double sum = 0.0, var = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < g2.size(); ++i) {
    const std::int64_t k = std::int64_t(i) - n_half;
    if (std::abs(k) < edge) continue;
    sum += g2[i];
    var += err[i] * err[i];
    ++n;
  }
  mean = n > 0 ? sum / double(n) : 0.0;
  stderr_out = n > 0 ? std::sqrt(var) / double(n) : 0.0;
}

namespace {

inline std::int64_t bin_of(std::int64_t delta, std::int64_t w, std::int64_t h) {
  const std::int64_t a = delta >= 0 ? delta : -delta;
  const std::int64_t k = (a + h) / w;
  return delta >= 0 ? k : -k;
}

}  // namespace

std::vector<std::uint64_t> pair_delay_counts(const TagStream& stream, PairKey pair,
                                             std::int64_t tau_max_ticks,
                                             std::int64_t bin_width_ticks, int threads) {
  if (pair.a == pair.b) throw ConfigError("pair_delay_counts: channels must differ");
  if (pair.a >= stream.channel_count() || pair.b >= stream.channel_count())
    throw ConfigError("pair_delay_counts: channel beyond stream channel_count");
  if (bin_width_ticks < 1) throw ConfigError("bin width must be >= 1 tick");
  if (tau_max_ticks < bin_width_ticks) throw ConfigError("tau_max below one bin");

  const std::int64_t w = bin_width_ticks, h = w / 2;
  const std::int64_t K = tau_max_ticks / w;
  const std::size_t nbins = std::size_t(2 * K + 1);
  // widest delta accepted into bin +-K
  const std::int64_t delta_max = K * w + (w - h - 1);

  const int workers = resolve_threads(threads);
  const std::uint64_t halo = std::uint64_t(delta_max);
  const std::uint64_t chunk_ticks =
      std::max<std::uint64_t>(halo + 1, stream.duration_ticks() / std::uint64_t(workers * 4) + 1);
  const auto parts = chunks(stream, chunk_ticks, halo);

  std::vector<std::vector<std::uint64_t>> partial(parts.size());
  parallel_for(parts.size(), workers, [&](std::size_t ci) {
    const auto& c = parts[ci];
    std::vector<std::uint64_t> hist(nbins, 0);
    std::vector<std::uint64_t> a_times, b_times;
    for (const auto& t : c.tags) {
      if (t.channel == pair.a && c.in_core(t)) a_times.push_back(t.timestamp);
      if (t.channel == pair.b) b_times.push_back(t.timestamp);
    }
    std::size_t lo = 0;
    for (const std::uint64_t ta : a_times) {
      const std::uint64_t from = ta >= halo ? ta - halo : 0;
      while (lo < b_times.size() && b_times[lo] < from) ++lo;
      for (std::size_t j = lo; j < b_times.size(); ++j) {
        const std::int64_t delta = std::int64_t(b_times[j]) - std::int64_t(ta);
        if (delta > delta_max) break;
        if (delta < -delta_max) continue;
        ++hist[std::size_t(bin_of(delta, w, h) + K)];
      }
    }
    partial[ci] = std::move(hist);
  });

  std::vector<std::uint64_t> total(nbins, 0);
  for (const auto& p : partial)
    for (std::size_t i = 0; i < nbins; ++i) total[i] += p[i];
  return total;
}

G2Histogram normalize_counts(std::vector<std::uint64_t> raw, PairKey pair,
                             std::int64_t bin_width_ticks, double tick_ps,
                             std::vector<std::uint64_t> singles, double duration_s) {
  G2Histogram hist;
  hist.tick_ps = tick_ps;
  hist.bin_width_ticks = bin_width_ticks;
  hist.n_half = (std::int64_t(raw.size()) - 1) / 2;
  hist.pair = pair;
  hist.raw = std::move(raw);
  hist.singles = std::move(singles);
  hist.duration_s = duration_s;

  if (pair.a >= hist.singles.size() || pair.b >= hist.singles.size())
    throw ConfigError("normalize: singles vector too short for pair");
  const double ni = double(hist.singles[pair.a]);
  const double nj = double(hist.singles[pair.b]);
  if (!(ni > 0) || !(nj > 0)) throw EstimationError("normalize: zero singles rate");
  if (!(duration_s > 0)) throw EstimationError("normalize: zero live duration");

  hist.g2.resize(hist.raw.size());
  hist.err.resize(hist.raw.size());
  const double tick_s = tick_ps * 1e-12;
  for (std::size_t i = 0; i < hist.raw.size(); ++i) {
    // accidental counts: R_i R_j * (bin ticks * tick) * T = ni*nj*dt_bin/T
    const double acc = ni * nj * double(hist.ticks_in_bin(i)) * tick_s / duration_s;
    hist.g2[i] = double(hist.raw[i]) / acc;
    hist.err[i] = std::sqrt(double(std::max<std::uint64_t>(hist.raw[i], 1))) / acc;
  }
  return hist;
}

G2Histogram g2_pair(const TagStream& stream, PairKey pair, std::int64_t tau_max_ticks,
                    std::int64_t bin_width_ticks, int threads) {
  auto raw = pair_delay_counts(stream, pair, tau_max_ticks, bin_width_ticks, threads);
  return normalize_counts(std::move(raw), pair, bin_width_ticks, stream.tick_ps(),
                          stream.channel_counts(), stream.duration_seconds());
}

G2Histogram dark_correct(const G2Histogram& hist, std::span<const double> dark_rates_hz) {
  if (hist.pair_averaged)
    throw ConfigError("dark_correct needs a pair-resolved histogram");
  if (dark_rates_hz.size() < hist.singles.size())
    throw ConfigError("dark_correct: dark rate per channel required");

  auto kappa = [&](std::uint16_t ch) {
    const double rate = double(hist.singles[ch]) / hist.duration_s;
    const double k = (rate - dark_rates_hz[ch]) / rate;
    if (!(k > 0)) throw EstimationError("dark_correct: dark rate at or above singles rate");
    return k;
  };
  const double kk = kappa(hist.pair.a) * kappa(hist.pair.b);

  G2Histogram out = hist;
  for (std::size_t i = 0; i < out.g2.size(); ++i) {
    out.g2[i] = (hist.g2[i] - (1.0 - kk)) / kk;
    out.err[i] = hist.err[i] / kk;
  }
  out.dark_corrected = true;
  return out;
}

G2Histogram average_pairs(std::span<const G2Histogram> hists) {
  if (hists.empty()) throw ConfigError("average_pairs: no histograms");
  const auto& first = hists.front();
  for (const auto& h : hists) {
    if (h.bin_width_ticks != first.bin_width_ticks || h.n_half != first.n_half ||
        h.tick_ps != first.tick_ps)
      throw ConfigError("average_pairs: binning mismatch");
  }
  G2Histogram out = first;
  out.pair_averaged = true;
  out.singles.clear();
  out.raw.assign(first.raw.size(), 0);
  for (std::size_t i = 0; i < first.g2.size(); ++i) {
    double sw = 0.0, swx = 0.0;
    for (const auto& h : hists) {
      const double w = 1.0 / (h.err[i] * h.err[i]);
      sw += w;
      swx += w * h.g2[i];
      out.raw[i] += h.raw[i];
    }
    out.g2[i] = swx / sw;
    out.err[i] = std::sqrt(1.0 / sw);
  }
  return out;
}

double JitterCalibration::pair_sigma_ps(std::uint16_t i, std::uint16_t j) const {
  return std::hypot(sigma_ps.at(i), sigma_ps.at(j));
}

JitterCalibration jitter_calibrate(const TagStream& stream, double period_ps) {
  if (!(period_ps > 0)) throw ConfigError("jitter_calibrate: period must be > 0");
  const std::uint16_t nch = stream.channel_count();
  std::vector<std::vector<double>> residuals(nch);
  for (const auto& t : stream.tags()) {
    const double tp = double(t.timestamp) * stream.tick_ps();
    const double r = tp - std::round(tp / period_ps) * period_ps;
    residuals[t.channel].push_back(r);
  }

  JitterCalibration cal;
  for (std::uint16_t ch = 0; ch < nch; ++ch) {
    const auto& r = residuals[ch];
    if (r.size() < 10000)
      throw ConfigError("jitter_calibrate: need >= 1e4 tags per channel, channel " +
                        std::to_string(ch) + " has " + std::to_string(r.size()));
    const double n = double(r.size());
    double mean = 0.0;
    for (double v : r) mean += v;
    mean /= n;
    double m2 = 0.0, m3 = 0.0, m4 = 0.0;
    for (double v : r) {
      const double d = v - mean;
      m2 += d * d;
      m3 += d * d * d;
      m4 += d * d * d * d;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    const double sigma = std::sqrt(m2);
    const double skew = m3 / (m2 * sigma);
    const double exkurt = m4 / (m2 * m2) - 3.0;
    cal.sigma_ps.push_back(sigma);
    cal.sigma_err_ps.push_back(sigma / std::sqrt(2.0 * n));
    cal.mean_offset_ps.push_back(mean);
    cal.counts.push_back(r.size());
    cal.normality_warning.push_back(std::abs(skew) > 0.3 || std::abs(exkurt) > 0.5);
  }
  return cal;
}

G2FitData to_fit_data(const G2Histogram& hist, double jitter_sigma_ps) {
  G2FitData d;
  d.tick_ps = hist.tick_ps;
  d.jitter_sigma_ps = jitter_sigma_ps;
  d.label = hist.pair_averaged
                ? std::string("avg")
                : std::to_string(hist.pair.a) + "-" + std::to_string(hist.pair.b);
  d.lo_tick.resize(hist.size());
  d.hi_tick.resize(hist.size());
  d.value = hist.g2;
  d.sigma = hist.err;
  for (std::size_t i = 0; i < hist.size(); ++i) hist.tick_range(i, d.lo_tick[i], d.hi_tick[i]);
  return d;
}

DeconvolutionResult deconvolve_jitter(std::span<const G2Histogram> per_pair,
                                      const JitterCalibration& cal, G2Family family,
                                      const FitOptions& options) {
  if (per_pair.empty()) throw ConfigError("deconvolve_jitter: no histograms");
  std::vector<G2FitData> data;
  for (const auto& h : per_pair) {
    if (h.pair_averaged)
      throw ConfigError("deconvolve_jitter needs pair-resolved histograms");
    data.push_back(to_fit_data(h, cal.pair_sigma_ps(h.pair.a, h.pair.b)));
  }

  DeconvolutionResult res;
  res.fit = fit_g2(data, family, options);

  double sw = 0.0, swx = 0.0;
  for (const auto& h : per_pair) {
    const double v = h.zero_value(), e = h.zero_err();
    sw += 1.0 / (e * e);
    swx += v / (e * e);
  }
  res.measured_g2_zero = swx / sw;
  res.measured_g2_err = std::sqrt(1.0 / sw);

  const double amp = res.fit.parameter("amplitude");
  res.deconvolved_g2_zero = 1.0 + amp;
  double var = res.fit.g2_zero_stderr() * res.fit.g2_zero_stderr();

  // calibration uncertainty: refit with each channel sigma shifted one
  // standard error, warm-started from the optimum
  FitOptions warm = options;
  warm.multistarts = 1;
  warm.fixed = res.fit.fixed;
  for (std::size_t i = 0; i < res.fit.names.size(); ++i)
    warm.initial[res.fit.names[i]] = res.fit.values[i];
  for (std::size_t ch = 0; ch < cal.sigma_ps.size(); ++ch) {
    if (cal.sigma_err_ps[ch] <= 0) continue;
    JitterCalibration shifted = cal;
    shifted.sigma_ps[ch] += cal.sigma_err_ps[ch];
    std::vector<G2FitData> data2;
    for (const auto& h : per_pair)
      data2.push_back(to_fit_data(h, shifted.pair_sigma_ps(h.pair.a, h.pair.b)));
    try {
      const FitResult refit = fit_g2(data2, family, warm);
      const double da = refit.parameter("amplitude") - amp;
      var += da * da;
    } catch (const EstimationError&) {
      // leave the fit error as-is if a perturbed refit stalls
    }
  }
  res.deconvolved_g2_err = std::sqrt(var);
  return res;
}

}  // namespace photonstat
