#pragma once
// Parametric spectral models, their temporal coherence g1(tau), Siegert-
// relation g2 model curves, weighted least-squares fitting and bandwidth
// estimation.
#include <complex>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace photonstat {

enum class LineShape { Gaussian, Lorentzian };

/// One spectral line. Gaussian width is the standard deviation sigma_nu,
/// Lorentzian width is the FWHM. Emission components are unit-integral
/// densities scaled by weight; a filter is a peak-one transmission profile.
struct SpectralComponent {
  LineShape kind = LineShape::Gaussian;
  double center_hz = 0.0;
  double width_hz = 0.0;
  double weight = 1.0;
};

struct SpectralModel {
  std::vector<SpectralComponent> emission;
  std::optional<SpectralComponent> filter;
  std::map<std::string, std::string> metadata;

  /// Band edge used for Nyquist and grid-coverage checks: the largest
  /// |center| + 6 sigma (Gaussian) or |center| + 3 FWHM (Lorentzian).
  double support_hz() const;
  void validate() const;
};

/// S(nu) = sum of weighted emission densities times filter transmission.
double eval_spectral_density(const SpectralModel& model, double nu_hz);
/// Pointwise S over a caller grid; the grid must cover center +- 6 sigma
/// (Gaussian) resp. +- 20 FWHM (Lorentzian) of every component.
std::vector<double> eval_spectrum(const SpectralModel& model, std::span<const double> nu_hz);

struct CoherenceFunction {
  std::vector<double> tau_ps;
  std::vector<std::complex<double>> g1;  // g1(0) = 1
};

enum class CoherenceMethod {
  Auto,        // closed form where available, quadrature otherwise
  ClosedForm,  // error if a term has no closed form
  Quadrature,  // force the numeric transform
};

/// g1(tau) = FT[S](tau) / FT[S](0).
CoherenceFunction coherence_from_spectrum(const SpectralModel& model,
                                          std::span<const double> tau_ps,
                                          CoherenceMethod method = CoherenceMethod::Auto,
                                          std::size_t quad_points = std::size_t(1) << 16);

/// Siegert curve 1 + A*|g1|^2, optionally convolved with a zero-mean
/// Gaussian detector response of std pair_sigma_ps (discrete convolution,
/// edge padded).
std::vector<double> g2_model_curve(const SpectralModel& model, std::span<const double> tau_ps,
                                   double amplitude, double pair_sigma_ps = 0.0,
                                   CoherenceMethod method = CoherenceMethod::Auto);

/// In-place Gaussian smoothing of a uniformly sampled signal.
void convolve_gaussian(std::vector<double>& values, double step, double sigma);

// ---------------------------------------------------------------------------
// Fitting

enum class G2Family { FreeGaussian, FreeLorentzian, SingleLorentzianFiltered, TwoGaussianPlusFilter };

std::string family_name(G2Family family);
G2Family family_from_name(const std::string& name);

/// One histogram prepared for fitting: per-bin inclusive tick ranges (the
/// model is averaged over every tick of a bin) plus the pair timing
/// response.
struct G2FitData {
  double tick_ps = 81.0;
  std::vector<std::int64_t> lo_tick, hi_tick;
  std::vector<double> value, sigma;
  double jitter_sigma_ps = 0.0;
  std::string label;
};

struct FitOptions {
  std::map<std::string, double> fixed;    // pin a parameter
  std::map<std::string, double> initial;  // free parameter with explicit start
  int multistarts = 5;
  int max_iterations = 200;
  double rel_tol = 1e-9;
  std::uint64_t seed = 0x5eed;
};

struct FitResult {
  G2Family family = G2Family::FreeGaussian;
  std::vector<std::string> names;   // free parameters, in covariance order
  std::vector<double> values;
  std::vector<double> stderrs;
  std::vector<std::vector<double>> covariance;
  std::map<std::string, double> fixed;
  double chi2 = 0.0;
  int ndof = 0;
  int iterations = 0;
  int starts_converged = 0;

  double reduced_chi2() const { return ndof > 0 ? chi2 / ndof : 0.0; }
  double parameter(const std::string& name) const;
  double parameter_stderr(const std::string& name) const;
  double g2_zero() const { return 1.0 + parameter("amplitude"); }
  double g2_zero_stderr() const { return parameter_stderr("amplitude"); }
  /// Spectral model reconstructed from the fitted parameters.
  SpectralModel model() const;
};

/// Joint weighted least-squares fit of 1 + A*|g1|^2 (convolved per
/// histogram with its pair response) across one or more histograms.
/// Levenberg-Marquardt with multistart; throws EstimationError when no
/// start converges.
FitResult fit_g2(std::span<const G2FitData> data, G2Family family, const FitOptions& options = {});

// ---------------------------------------------------------------------------
// Bandwidth

struct BandwidthEstimate {
  double sigma_tau_ns = 0.0, sigma_tau_err_ns = 0.0;
  double sigma_nu_mhz = 0.0, sigma_nu_err_mhz = 0.0;
  double fwhm_mhz = 0.0, fwhm_err_mhz = 0.0;
  std::string convention;
};

/// Moment estimator on a measured histogram: sigma_tau is the standard
/// deviation of w(tau) = (g2-1)/integral(g2-1), Sheppard-corrected for the
/// bin width; sigma_nu uses the naive single-Gaussian map 1/(2*sqrt(2)*pi*
/// sigma_tau) and is tagged as such.
BandwidthEstimate bandwidth_from_histogram(std::span<const double> tau_ps,
                                           std::span<const double> g2,
                                           std::span<const double> sigma,
                                           double bin_width_ps);

/// Bandwidth of the fitted model spectrum: numeric FWHM and second-moment
/// width, with uncertainties propagated from the fit covariance; sigma_tau
/// is the temporal moment of the fitted excess.
BandwidthEstimate bandwidth_from_fit(const FitResult& fit);

}  // namespace photonstat
