#pragma once
// Normalized second-order correlation estimation from tag streams:
// all-pairs delay histograms, accidental-rate normalization, dark-count
// correction, pair averaging, jitter calibration and deconvolution.
#include <cstdint>
#include <span>
#include <vector>

#include "photonstat/spectral.hpp"
#include "photonstat/tagstream.hpp"

namespace photonstat {

struct PairKey {
  std::uint16_t a = 0;
  std::uint16_t b = 1;
  friend bool operator==(const PairKey&, const PairKey&) = default;
};

/// Symmetric binned g2 estimate. Bins are centered on multiples of the bin
/// width; delta ticks map to bins by sign(d)*((|d|+w/2)/w), which is exactly
/// negation-symmetric. For even widths the zero bin spans one tick less;
/// normalization uses the exact per-bin tick count.
struct G2Histogram {
  double tick_ps = 81.0;
  std::int64_t bin_width_ticks = 8;
  std::int64_t n_half = 0;  // bins k = -n_half .. n_half
  PairKey pair;
  bool pair_averaged = false;
  bool dark_corrected = false;

  std::vector<std::uint64_t> raw;  // coincidence counts, index k + n_half
  std::vector<double> g2;
  std::vector<double> err;
  std::vector<std::uint64_t> singles;  // per-channel counts of the source stream
  double duration_s = 0.0;

  std::size_t size() const { return g2.size(); }
  std::int64_t center_ticks(std::size_t i) const {
    return (std::int64_t(i) - n_half) * bin_width_ticks;
  }
  double tau_ps(std::size_t i) const { return double(center_ticks(i)) * tick_ps; }
  /// Inclusive tick range covered by bin i.
  void tick_range(std::size_t i, std::int64_t& lo, std::int64_t& hi) const;
  std::int64_t ticks_in_bin(std::size_t i) const;

  double zero_value() const { return g2[std::size_t(n_half)]; }
  double zero_err() const { return err[std::size_t(n_half)]; }
  /// Mean of the |tau| >= 0.8 tau_max bins, as a plateau diagnostic.
  void wing(double& mean, double& stderr_out) const;
};

/// Raw coincidence counts for ordered pairs (a on channel i, b on channel
/// j) with |t_b - t_a| <= tau_max; all pairs, not start-stop. Evaluated
/// chunk-wise; the result is independent of chunking and thread count.
std::vector<std::uint64_t> pair_delay_counts(const TagStream& stream, PairKey pair,
                                             std::int64_t tau_max_ticks,
                                             std::int64_t bin_width_ticks, int threads = 0);

/// Normalizes raw counts by the accidental rate R_i R_j dt T computed from
/// the singles counts; Poisson standard errors.
G2Histogram normalize_counts(std::vector<std::uint64_t> raw, PairKey pair,
                             std::int64_t bin_width_ticks, double tick_ps,
                             std::vector<std::uint64_t> singles, double duration_s);

/// pair_delay_counts + normalize_counts.
G2Histogram g2_pair(const TagStream& stream, PairKey pair, std::int64_t tau_max_ticks,
                    std::int64_t bin_width_ticks, int threads = 0);

/// Removes the accidental dilution of uncorrelated Poisson dark counts:
/// g2_c = (g2 - (1 - k_i k_j)) / (k_i k_j), k = (R - D)/R.
G2Histogram dark_correct(const G2Histogram& hist, std::span<const double> dark_rates_hz);

/// Inverse-variance weighted per-bin mean of identically binned histograms.
G2Histogram average_pairs(std::span<const G2Histogram> hists);

struct JitterCalibration {
  std::vector<double> sigma_ps;
  std::vector<double> sigma_err_ps;
  std::vector<double> mean_offset_ps;
  std::vector<std::uint64_t> counts;
  std::vector<bool> normality_warning;

  double pair_sigma_ps(std::uint16_t i, std::uint16_t j) const;
};

/// Per-channel Gaussian timing response from a pulsed reference stream:
/// residuals to the nearest period grid point, maximum-likelihood sigma.
JitterCalibration jitter_calibrate(const TagStream& stream, double period_ps);

struct DeconvolutionResult {
  FitResult fit;
  double measured_g2_zero = 0.0;   // weighted zero-bin value across pairs
  double measured_g2_err = 0.0;
  double deconvolved_g2_zero = 0.0;  // 1 + fitted amplitude
  double deconvolved_g2_err = 0.0;   // fit error + calibration propagation
};

/// Parametric deconvolution: joint fit of 1 + A|g1|^2 convolved with each
/// pair's Gaussian response sigma_ij = sqrt(sigma_i^2 + sigma_j^2);
/// deconvolved g2(0) = 1 + A with calibration uncertainty propagated.
DeconvolutionResult deconvolve_jitter(std::span<const G2Histogram> per_pair,
                                      const JitterCalibration& cal, G2Family family,
                                      const FitOptions& options = {});

/// Adapter for fit_g2 / bandwidth estimation.
G2FitData to_fit_data(const G2Histogram& hist, double jitter_sigma_ps = 0.0);

}  // namespace photonstat
