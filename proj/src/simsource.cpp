#include "photonstat/simsource.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <memory>
#include <mutex>
#include <numbers>

#include "photonstat/errors.hpp"
#include "photonstat/parallel.hpp"
#include "photonstat/rng.hpp"

namespace photonstat {

double DetectorArrayModel::detected_fraction() const {
  double f = 0.0;
  for (const auto& c : channels) f += c.routing * c.efficiency;
  return f;
}

void DetectorArrayModel::validate() const {
  if (channels.empty()) throw ConfigError("detector array needs at least one channel");
  double rsum = 0.0;
  for (const auto& c : channels) {
    if (c.efficiency < 0 || c.efficiency > 1) throw ConfigError("efficiency must be in [0,1]");
    if (c.dark_rate_hz < 0) throw ConfigError("dark rate must be >= 0");
    if (c.jitter_sigma_ps < 0) throw ConfigError("jitter sigma must be >= 0");
    if (c.dead_time_ps < 0) throw ConfigError("dead time must be >= 0");
    if (c.routing < 0) throw ConfigError("routing probability must be >= 0");
    rsum += c.routing;
  }
  if (rsum > 1.0 + 1e-12) throw ConfigError("routing probabilities sum above 1");
  if (detected_fraction() > 1.0 + 1e-12) throw ConfigError("sum r_i*eta_i above 1");
}

void ScenarioConfig::validate() const {
  detectors.validate();
  if (!(mean_detected_rate_hz > 0)) throw ConfigError("mean_detected_rate_hz must be > 0");
  if (!(duration_s > 0)) throw ConfigError("duration_s must be > 0");
  if (!(tick_ps > 0)) throw ConfigError("tick_ps must be > 0");
  if (!(field_dt_ps > 0)) throw ConfigError("field_dt_ps must be > 0");
  if (segment_log2 < 10 || segment_log2 > 24) throw ConfigError("segment_log2 out of [10,24]");
  if (source == SourceKind::Thermal) {
    spectrum.validate();
    const double nyquist = 1.0 / (2.0 * field_dt_ps * 1e-12);
    if (spectrum.support_hz() >= nyquist)
      throw ConfigError("spectral support exceeds the field Nyquist band; reduce field_dt_ps");
  }
}

// ---------------------------------------------------------------------------
// Field synthesis: independent spectral-colored segments of length N,
// cross-faded over an edge of E = N/8 samples with sin/cos ramps so that the
// summed window power is exactly one everywhere.

namespace {

struct FftwDeleter {
  void operator()(fftw_complex* p) const { fftw_free(p); }
};
using FftwBuffer = std::unique_ptr<fftw_complex[], FftwDeleter>;

FftwBuffer make_buffer(std::size_t n) {
  return FftwBuffer(static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * n)));
}

class BackwardPlan {
 public:
  explicit BackwardPlan(int n) : n_(n) {
    static std::mutex planner_mutex;
    std::lock_guard lock(planner_mutex);
    scratch_ = make_buffer(std::size_t(n));
    plan_ = fftw_plan_dft_1d(n, scratch_.get(), scratch_.get(), FFTW_BACKWARD,
                             n <= (1 << 18) ? FFTW_MEASURE : FFTW_ESTIMATE);
  }
  ~BackwardPlan() { fftw_destroy_plan(plan_); }
  void execute(fftw_complex* buf) const { fftw_execute_dft(plan_, buf, buf); }
  int size() const { return n_; }

 private:
  int n_;
  FftwBuffer scratch_;
  fftw_plan plan_;
};

struct FieldLayout {
  std::size_t n;     // segment samples
  std::size_t edge;  // cross-fade samples
  std::size_t hop;   // n - edge

  explicit FieldLayout(int segment_log2) {
    n = std::size_t(1) << segment_log2;
    edge = n / 8;
    hop = n - edge;
  }
};

struct SpectrumTable {
  std::vector<double> amp;          // sqrt(S_j / (2*sum S)), FFT bin order
  std::vector<std::uint32_t> idx;   // bins with nonzero amplitude

  SpectrumTable(const SpectralModel& model, std::size_t n, double dt_s) {
    amp.assign(n, 0.0);
    double sum = 0.0;
    const double dnu = 1.0 / (double(n) * dt_s);
    for (std::size_t j = 0; j < n; ++j) {
      const double nu = (j <= n / 2 ? double(j) : double(j) - double(n)) * dnu;
      const double s = eval_spectral_density(model, nu);
      amp[j] = s;
      sum += s;
    }
    if (!(sum > 0)) throw ConfigError("spectral density vanishes on the synthesis grid");
    idx.reserve(n);
    for (std::size_t j = 0; j < n; ++j) {
      amp[j] = std::sqrt(amp[j] / (2.0 * sum));
      if (amp[j] > 0.0) idx.push_back(std::uint32_t(j));
    }
  }
};

void synthesize_segment(const SpectrumTable& table, const BackwardPlan& plan, std::uint64_t seed,
                        std::uint64_t segment, fftw_complex* buf) {
  const std::size_t n = std::size_t(plan.size());
  std::fill(&buf[0][0], &buf[0][0] + 2 * n, 0.0);
  for (const std::uint32_t j : table.idx) {
    double n0, n1;
    rng::counter_normal_pair(seed, rng::Purpose::Field, segment, j, n0, n1);
    buf[j][0] = table.amp[j] * n0;
    buf[j][1] = table.amp[j] * n1;
  }
  plan.execute(buf);
}

/// Cross-faded field samples of one hop block: flat part of segment j, then
/// the ramped mix of segments j and j+1.
void emit_block_field(const FieldLayout& fl, const fftw_complex* seg_a, const fftw_complex* seg_b,
                      std::size_t count, std::complex<double>* out) {
  const std::size_t flat = fl.hop - fl.edge;  // positions [edge, hop) of seg_a
  const double half_step = std::numbers::pi / (2.0 * double(fl.edge));
  for (std::size_t m = 0; m < count; ++m) {
    const std::size_t p = m + fl.edge;  // position within segment a
    if (m < flat) {
      out[m] = {seg_a[p][0], seg_a[p][1]};
    } else {
      const std::size_t x = p - fl.hop;  // ramp coordinate in [0, edge)
      const double th = (double(x) + 0.5) * half_step;
      const double wd = std::cos(th), wu = std::sin(th);
      out[m] = {wd * seg_a[p][0] + wu * seg_b[x][0], wd * seg_a[p][1] + wu * seg_b[x][1]};
    }
  }
}

// ---------------------------------------------------------------------------
// Detection on one block of intensity samples.

struct ChannelAccumulator {
  std::vector<double> times_ps;
};

struct DetectionParams {
  const DetectorArrayModel* array;
  double arrival_rate_hz;  // photon arrivals before routing/efficiency
  double dt_s;
  double tick_ps;
};

/// Inhomogeneous Poisson thinning plus routed detection over one block.
/// All randomness comes from per-block substreams, so blocks can be
/// processed in any order or in parallel.
void detect_block(const DetectionParams& dp, std::span<const double> intensity, double imax,
                  double block_start_s, std::uint64_t block_id, std::uint64_t seed,
                  std::vector<ChannelAccumulator>& acc) {
  const auto& channels = dp.array->channels;
  const double block_dur = double(intensity.size()) * dp.dt_s;

  if (dp.arrival_rate_hz > 0 && imax > 0) {
    rng::Stream thin(seed, rng::Purpose::Thinning, block_id);
    rng::Stream route(seed, rng::Purpose::Routing, block_id);
    rng::Stream jit(seed, rng::Purpose::Jitter, block_id);
    const double lambda_max = dp.arrival_rate_hz * imax;
    double t = 0.0;
    for (;;) {
      t += thin.exponential(1.0 / lambda_max);
      if (t >= block_dur) break;
      const auto i = std::size_t(t / dp.dt_s);
      if (i >= intensity.size()) break;
      if (thin.uniform() * imax >= intensity[i]) continue;
      // routed with probability r_k * eta_k, otherwise lost
      double u = route.uniform();
      int ch = -1;
      for (std::size_t k = 0; k < channels.size(); ++k) {
        const double q = channels[k].routing * channels[k].efficiency;
        if (u < q) {
          ch = int(k);
          break;
        }
        u -= q;
      }
      if (ch < 0) continue;
      double t_ps = (block_start_s + t) * 1e12;
      if (channels[std::size_t(ch)].jitter_sigma_ps > 0)
        t_ps += jit.normal() * channels[std::size_t(ch)].jitter_sigma_ps;
      acc[std::size_t(ch)].times_ps.push_back(t_ps);
    }
  }

  for (std::size_t k = 0; k < channels.size(); ++k) {
    if (channels[k].dark_rate_hz <= 0) continue;
    rng::Stream dark(seed, rng::Purpose::Dark, (block_id << 6) | k);
    double t = 0.0;
    for (;;) {
      t += dark.exponential(1.0 / channels[k].dark_rate_hz);
      if (t >= block_dur) break;
      acc[k].times_ps.push_back((block_start_s + t) * 1e12);
    }
  }
}

TagStream finalize_tags(std::vector<ChannelAccumulator>& acc, const DetectorArrayModel& array,
                        double tick_ps, std::uint64_t duration_ticks, std::string origin) {
  std::vector<TimeTag> tags;
  for (std::size_t ch = 0; ch < acc.size(); ++ch) {
    auto& times = acc[ch].times_ps;
    std::sort(times.begin(), times.end());
    const double dead = array.channels[ch].dead_time_ps;
    double last_accepted = -1e300;
    for (double t : times) {
      if (dead > 0) {
        if (t - last_accepted < dead) continue;
        last_accepted = t;
      }
      const double tk = std::floor(t / tick_ps);
      if (tk < 0 || tk > double(duration_ticks)) continue;
      tags.push_back({std::uint64_t(tk), std::uint16_t(ch)});
    }
    times.clear();
    times.shrink_to_fit();
  }
  StreamHeader h{tick_ps, std::uint16_t(array.size()), duration_ticks, std::move(origin)};
  return TagStream::from_unsorted(std::move(h), std::move(tags));
}

}  // namespace

// ---------------------------------------------------------------------------

std::vector<std::complex<double>> synthesize_field(const SpectralModel& model, double duration_s,
                                                   double dt_s, std::uint64_t seed,
                                                   int segment_log2) {
  model.validate();
  const double nyquist = 1.0 / (2.0 * dt_s);
  if (model.support_hz() >= nyquist)
    throw ConfigError("spectral support exceeds the Nyquist band of dt");
  const FieldLayout fl(segment_log2);
  const auto total = std::uint64_t(std::llround(duration_s / dt_s));
  if (total > (std::uint64_t(1) << 26))
    throw ConfigError("synthesize_field trace too large; use simulate() for long runs");

  const SpectrumTable table(model, fl.n, dt_s);
  const BackwardPlan plan(int(fl.n));
  auto seg_a = make_buffer(fl.n), seg_b = make_buffer(fl.n);

  std::vector<std::complex<double>> out(total);
  synthesize_segment(table, plan, seed, 0, seg_a.get());
  std::uint64_t written = 0, block = 0;
  while (written < total) {
    synthesize_segment(table, plan, seed, block + 1, seg_b.get());
    const std::size_t count = std::size_t(std::min<std::uint64_t>(fl.hop, total - written));
    emit_block_field(fl, seg_a.get(), seg_b.get(), count, out.data() + written);
    written += count;
    ++block;
    std::swap(seg_a, seg_b);
  }
  return out;
}

std::vector<double> synthesize_intensity(const SpectralModel& model, double duration_s,
                                         double dt_s, std::uint64_t seed, int segment_log2) {
  const auto field = synthesize_field(model, duration_s, dt_s, seed, segment_log2);
  std::vector<double> intensity(field.size());
  double mean = 0.0;
  for (std::size_t i = 0; i < field.size(); ++i) {
    intensity[i] = std::norm(field[i]);
    mean += intensity[i];
  }
  if (!field.empty()) mean /= double(field.size());
  if (mean > 0)
    for (auto& v : intensity) v /= mean;
  return intensity;
}

TagStream detect(std::span<const double> intensity, double dt_s, const DetectorArrayModel& array,
                 double arrival_rate_hz, double tick_ps, std::uint64_t seed) {
  array.validate();
  if (arrival_rate_hz < 0) throw ConfigError("arrival rate must be >= 0");
  if (!(tick_ps > 0)) throw ConfigError("tick_ps must be > 0");

  double mean = 0.0, imax = 0.0;
  for (double v : intensity) {
    mean += v;
    imax = std::max(imax, v);
  }
  if (!intensity.empty()) mean /= double(intensity.size());

  const double duration_s = double(intensity.size()) * dt_s;
  const auto duration_ticks = std::uint64_t(std::llround(duration_s * 1e12 / tick_ps));

  std::vector<ChannelAccumulator> acc(array.size());
  DetectionParams dp{&array, mean > 0 ? arrival_rate_hz / mean : 0.0, dt_s, tick_ps};
  detect_block(dp, intensity, imax, 0.0, 0, seed, acc);
  return finalize_tags(acc, array, tick_ps, duration_ticks, "detect");
}

TagStream simulate(const ScenarioConfig& cfg, int threads) {
  cfg.validate();
  const int workers = resolve_threads(threads);
  const double dt_s = cfg.field_dt_ps * 1e-12;
  const FieldLayout fl(cfg.segment_log2);
  const auto total = std::uint64_t(std::llround(cfg.duration_s / dt_s));
  const auto duration_ticks = std::uint64_t(std::llround(cfg.duration_s * 1e12 / cfg.tick_ps));
  const std::uint64_t n_blocks = (total + fl.hop - 1) / fl.hop;
  const double df = cfg.detectors.detected_fraction();
  if (!(df > 0)) throw ConfigError("simulate: zero total detection efficiency");
  const double arrival_rate = cfg.mean_detected_rate_hz / df;

  std::string origin;
  if (auto it = cfg.metadata.find("scenario"); it != cfg.metadata.end()) origin = it->second;

  std::vector<ChannelAccumulator> acc(cfg.detectors.size());
  DetectionParams dp{&cfg.detectors, arrival_rate, dt_s, cfg.tick_ps};

  if (cfg.source == SourceKind::Coherent) {
    // constant intensity: homogeneous Poisson arrivals, no field synthesis
    for (std::uint64_t b = 0; b < n_blocks; ++b) {
      const std::uint64_t begin = b * fl.hop;
      const auto count = std::size_t(std::min<std::uint64_t>(fl.hop, total - begin));
      std::vector<double> flat(count, 1.0);
      detect_block(dp, flat, 1.0, double(begin) * dt_s, b, cfg.seed, acc);
    }
    return finalize_tags(acc, cfg.detectors, cfg.tick_ps, duration_ticks, std::move(origin));
  }

  const SpectrumTable table(cfg.spectrum, fl.n, dt_s);
  const BackwardPlan plan(int(fl.n));

  // ring of segment buffers; batch-parallel synthesis, in-order detection
  const std::size_t batch = std::size_t(std::max(workers, 1));
  std::vector<FftwBuffer> ring;
  for (std::size_t i = 0; i < batch + 1; ++i) ring.push_back(make_buffer(fl.n));

  std::vector<std::vector<ChannelAccumulator>> block_acc(batch);
  std::vector<std::vector<std::complex<double>>> fields(batch);
  std::vector<std::vector<double>> intens(batch);

  synthesize_segment(table, plan, cfg.seed, 0, ring[0].get());
  std::uint64_t done = 0;
  while (done < n_blocks) {
    const std::uint64_t todo = std::min<std::uint64_t>(batch, n_blocks - done);
    // segments done+1 .. done+todo land in ring slots (done+i) % (batch+1)
    parallel_for(std::size_t(todo), workers, [&](std::size_t i) {
      const std::uint64_t seg = done + 1 + i;
      synthesize_segment(table, plan, cfg.seed, seg, ring[std::size_t(seg % (batch + 1))].get());
    });
    parallel_for(std::size_t(todo), workers, [&](std::size_t i) {
      const std::uint64_t b = done + i;
      const std::uint64_t begin = b * fl.hop;
      const auto count = std::size_t(std::min<std::uint64_t>(fl.hop, total - begin));
      auto& field = fields[i];
      auto& inten = intens[i];
      field.resize(count);
      inten.resize(count);
      emit_block_field(fl, ring[std::size_t(b % (batch + 1))].get(),
                       ring[std::size_t((b + 1) % (batch + 1))].get(), count, field.data());
      double imax = 0.0;
      for (std::size_t m = 0; m < count; ++m) {
        inten[m] = std::norm(field[m]);
        imax = std::max(imax, inten[m]);
      }
      auto& local = block_acc[i];
      local.assign(cfg.detectors.size(), {});
      detect_block(dp, inten, imax, double(begin) * dt_s, b, cfg.seed, local);
    });
    for (std::size_t i = 0; i < todo; ++i)
      for (std::size_t ch = 0; ch < acc.size(); ++ch)
        acc[ch].times_ps.insert(acc[ch].times_ps.end(), block_acc[i][ch].times_ps.begin(),
                                block_acc[i][ch].times_ps.end());
    done += todo;
  }
  return finalize_tags(acc, cfg.detectors, cfg.tick_ps, duration_ticks, std::move(origin));
}

TagStream simulate_pulsed_reference(double period_ps, const DetectorArrayModel& array,
                                    std::uint64_t counts_per_channel, double tick_ps,
                                    std::uint64_t seed) {
  array.validate();
  if (!(period_ps > 0)) throw ConfigError("period must be > 0");
  double jmax = 0.0;
  for (const auto& c : array.channels) jmax = std::max(jmax, c.jitter_sigma_ps);
  if (period_ps < 10.0 * jmax) throw ConfigError("pulse period must dwarf the jitter");

  const auto duration_ticks =
      std::uint64_t(std::llround(double(counts_per_channel) * period_ps / tick_ps));
  std::vector<TimeTag> tags;
  tags.reserve(std::size_t(counts_per_channel) * array.size());
  for (std::size_t ch = 0; ch < array.size(); ++ch) {
    rng::Stream jit(seed, rng::Purpose::Jitter, ch);
    const double sigma = array.channels[ch].jitter_sigma_ps;
    for (std::uint64_t k = 0; k < counts_per_channel; ++k) {
      double t = double(k) * period_ps;
      if (sigma > 0) t += sigma * jit.normal();
      const double tk = std::floor(t / tick_ps);
      if (tk < 0 || tk > double(duration_ticks)) continue;
      tags.push_back({std::uint64_t(tk), std::uint16_t(ch)});
    }
  }
  StreamHeader h{tick_ps, std::uint16_t(array.size()), duration_ticks, "pulsed-reference"};
  return TagStream::from_unsorted(std::move(h), std::move(tags));
}

}  // namespace photonstat
