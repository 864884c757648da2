#include "photonstat/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <numbers>
#include <utility>

#include "photonstat/errors.hpp"

namespace photonstat {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kTwoPi = 2.0 * std::numbers::pi;

double component_extent(const SpectralComponent& c) {
  return std::abs(c.center_hz) + (c.kind == LineShape::Gaussian ? 6.0 * c.width_hz : 3.0 * c.width_hz);
}

/// Unit-integral line density.
double density(const SpectralComponent& c, double nu) {
  const double d = nu - c.center_hz;
  if (c.kind == LineShape::Gaussian) {
    const double s = c.width_hz;
    return std::exp(-0.5 * d * d / (s * s)) / (s * std::sqrt(kTwoPi));
  }
  const double half = 0.5 * c.width_hz;
  return (half / kPi) / (d * d + half * half);
}

/// Peak-one transmission profile.
double transmission(const SpectralComponent& c, double nu) {
  const double d = nu - c.center_hz;
  if (c.kind == LineShape::Gaussian) {
    const double s = c.width_hz;
    return std::exp(-0.5 * d * d / (s * s));
  }
  const double half = 0.5 * c.width_hz;
  return half * half / (d * d + half * half);
}

}  // namespace

double SpectralModel::support_hz() const {
  double s = 0.0;
  for (const auto& c : emission) s = std::max(s, component_extent(c));
  if (filter) s = std::max(s, component_extent(*filter));
  return s;
}

void SpectralModel::validate() const {
  if (emission.empty()) throw ConfigError("spectral model needs at least one emission component");
  double wsum = 0.0;
  for (const auto& c : emission) {
    if (!(c.width_hz > 0)) throw ConfigError("spectral component width must be > 0");
    if (c.weight < 0) throw ConfigError("spectral component weight must be >= 0");
    wsum += c.weight;
  }
  if (!(wsum > 0)) throw ConfigError("spectral weights must be normalizable");
  if (filter && !(filter->width_hz > 0)) throw ConfigError("filter width must be > 0");
}

double eval_spectral_density(const SpectralModel& model, double nu_hz) {
  double s = 0.0;
  for (const auto& c : model.emission) s += c.weight * density(c, nu_hz);
  if (model.filter) s *= transmission(*model.filter, nu_hz);
  return s;
}

std::vector<double> eval_spectrum(const SpectralModel& model, std::span<const double> nu_hz) {
  model.validate();
  if (nu_hz.empty()) throw ConfigError("eval_spectrum: empty grid");
  const auto [mn, mx] = std::minmax_element(nu_hz.begin(), nu_hz.end());
  auto check = [&](const SpectralComponent& c) {
    const double k = c.kind == LineShape::Gaussian ? 6.0 : 20.0;
    if (*mn > c.center_hz - k * c.width_hz || *mx < c.center_hz + k * c.width_hz)
      throw ConfigError("eval_spectrum: grid does not cover the spectral support");
  };
  for (const auto& c : model.emission) check(c);
  if (model.filter) check(*model.filter);

  std::vector<double> out(nu_hz.size());
  for (std::size_t i = 0; i < nu_hz.size(); ++i) out[i] = eval_spectral_density(model, nu_hz[i]);
  return out;
}

// ---------------------------------------------------------------------------
// Closed-form and quadrature Fourier transforms of emission*filter terms.
// Every term transform W(tau) is the plain Fourier integral of the
// unit-integral emission density times the peak-one filter, so the relative
// scales of terms survive and g1 = sum w_k W_k(tau) / sum w_k W_k(0).

namespace {

double erfcx_pos(double x) {
  if (x < 2.5) return std::exp(x * x) * std::erfc(x);
  double v = 0.0;
  for (int k = 44; k >= 1; --k) v = (0.5 * k) / (x + v);
  return (1.0 / std::sqrt(kPi)) / (x + v);
}

/// exp(a^2 s^2/2 - a t) * erfc((a s^2 - t)/(sqrt(2) s)), stable for all t.
double gl_half(double a, double s, double t) {
  const double x = (a * s * s - t) / (std::sqrt(2.0) * s);
  const double gauss_exp = -t * t / (2.0 * s * s);
  if (x >= 0.0) return std::exp(gauss_exp) * erfcx_pos(x);
  return 2.0 * std::exp(0.5 * a * a * s * s - a * t) - std::exp(gauss_exp) * erfcx_pos(-x);
}

using TermFn = std::function<std::complex<double>(double /*tau_s*/)>;

std::complex<double> phase(double center_hz, double tau) {
  return std::polar(1.0, -kTwoPi * center_hz * tau);
}

bool same_center(double a, double b, double scale) {
  return std::abs(a - b) <= 1e-9 * (std::abs(a) + std::abs(b) + scale);
}

/// FT of the bare emission density (no filter).
TermFn bare_term(const SpectralComponent& e) {
  if (e.kind == LineShape::Gaussian) {
    const double s = e.width_hz, c = e.center_hz;
    return [s, c](double tau) { return std::exp(-2.0 * kPi * kPi * s * s * tau * tau) * phase(c, tau); };
  }
  const double d = e.width_hz, c = e.center_hz;
  return [d, c](double tau) { return std::exp(-kPi * d * std::abs(tau)) * phase(c, tau); };
}

/// Gaussian emission times Gaussian filter (any centers): still Gaussian.
TermFn gauss_gauss_term(const SpectralComponent& e, const SpectralComponent& f) {
  const double se = e.width_hz, sf = f.width_hz;
  const double sp2 = (se * se * sf * sf) / (se * se + sf * sf);
  const double cp = (e.center_hz * sf * sf + f.center_hz * se * se) / (se * se + sf * sf);
  const double dc = e.center_hz - f.center_hz;
  const double amp = std::sqrt(sp2) / se * std::exp(-0.5 * dc * dc / (se * se + sf * sf));
  return [=](double tau) {
    return amp * std::exp(-2.0 * kPi * kPi * sp2 * tau * tau) * phase(cp, tau);
  };
}

/// Gaussian emission times co-centered Lorentzian filter, via erfcx:
/// W(tau) = (pi*FWHM/2) * s*sqrt(pi/2) * [E(tau)+E(-tau)] with s the
/// temporal std of the Gaussian transform and E the one-sided pieces.
TermFn gauss_lorentz_term(const SpectralComponent& e, const SpectralComponent& f) {
  const double s = 1.0 / (kTwoPi * e.width_hz);
  const double a = kPi * f.width_hz;
  const double c = e.center_hz;
  const double scale = (kPi * f.width_hz / 2.0) * s * std::sqrt(kPi / 2.0);
  return [s, a, c, scale](double tau) {
    return scale * (gl_half(a, s, tau) + gl_half(a, s, -tau)) * phase(c, tau);
  };
}

/// Lorentzian emission times Lorentzian filter via residues (any centers).
TermFn lorentz_lorentz_term(const SpectralComponent& e, const SpectralComponent& f) {
  using cd = std::complex<double>;
  const cd pe(e.center_hz, 0.5 * e.width_hz), pec = std::conj(pe);
  const cd pf(f.center_hz, 0.5 * f.width_hz), pfc = std::conj(pf);
  if (std::abs(pec - pfc) < 1e-9 * (e.width_hz + f.width_hz)) {
    // identical line: FT of squared Lorentzian
    const double d = e.width_hz, c = e.center_hz;
    return [d, c](double tau) {
      const double at = kPi * d * std::abs(tau);
      return 0.5 * (1.0 + at) * std::exp(-at) * phase(c, tau);
    };
  }
  const double C = (e.width_hz / kTwoPi) * 0.25 * f.width_hz * f.width_hz;
  return [=](double tau) -> cd {
    const double at = std::abs(tau);
    const cd re = std::exp(cd(0.0, -kTwoPi * at) * pec) / ((pec - pe) * (pec - pf) * (pec - pfc));
    const cd rf = std::exp(cd(0.0, -kTwoPi * at) * pfc) / ((pfc - pf) * (pfc - pe) * (pfc - pec));
    cd w = cd(0.0, -kTwoPi) * C * (re + rf);
    if (tau < 0) w = std::conj(w);
    return w;
  };
}

/// Windowed trapezoid transform for terms with a Gaussian factor.
TermFn windowed_quadrature_term(const SpectralComponent& e,
                                const std::optional<SpectralComponent>& f, double tau_max_s,
                                std::size_t quad_points) {
  // Gaussian factor bounds the support.
  double gc = 0.0, gs = 0.0;
  if (e.kind == LineShape::Gaussian) {
    gc = e.center_hz;
    gs = e.width_hz;
    if (f && f->kind == LineShape::Gaussian) {
      const double se = e.width_hz, sf = f->width_hz;
      gs = std::sqrt((se * se * sf * sf) / (se * se + sf * sf));
      gc = (e.center_hz * sf * sf + f->center_hz * se * se) / (se * se + sf * sf);
    }
  } else {
    gc = f->center_hz;  // caller guarantees the filter is the Gaussian factor
    gs = f->width_hz;
  }
  const double lo = gc - 12.0 * gs, hi = gc + 12.0 * gs;
  double spacing = gs / 16.0;
  if (f) spacing = std::min(spacing, std::min(e.width_hz, f->width_hz) / 16.0);
  else spacing = std::min(spacing, e.width_hz / 16.0);
  if (tau_max_s > 0) spacing = std::min(spacing, 1.0 / (12.0 * tau_max_s));
  std::size_t n = std::max<std::size_t>(quad_points, std::size_t((hi - lo) / spacing) + 1);
  n = std::min<std::size_t>(n, std::size_t(1) << 22);

  const double dnu = (hi - lo) / double(n - 1);
  auto nodes = std::make_shared<std::vector<std::pair<double, double>>>();
  nodes->reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double nu = lo + dnu * double(i);
    double v = density(e, nu);
    if (f) v *= transmission(*f, nu);
    const double w = (i == 0 || i + 1 == n) ? 0.5 * dnu : dnu;
    if (v != 0.0) nodes->emplace_back(nu, v * w);
  }
  return [nodes](double tau) {
    std::complex<double> acc = 0.0;
    const double w = -kTwoPi * tau;
    for (const auto& [nu, val] : *nodes) acc += val * std::polar(1.0, w * nu);
    return acc;
  };
}

/// tan-substitution midpoint rule for Gaussian-free products; mildly damped
/// to suppress unresolved tail oscillation. Reduced absolute accuracy for
/// pure power-law spectra; closed forms cover those in normal operation.
TermFn tan_quadrature_term(const SpectralComponent& e, const std::optional<SpectralComponent>& f,
                           std::size_t quad_points) {
  const double h = std::max(e.width_hz, f ? f->width_hz : 0.0);
  const double c0 = e.center_hz;
  const double sd = 64.0 * h;
  const std::size_t n = std::max<std::size_t>(quad_points, 4096);
  auto nodes = std::make_shared<std::vector<std::pair<double, double>>>();
  nodes->reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double u = -kPi / 2.0 + kPi * (double(i) + 0.5) / double(n);
    const double t = std::tan(u);
    const double nu = c0 + h * t;
    const double jac = h * (1.0 + t * t) * (kPi / double(n));
    double v = density(e, nu);
    if (f) v *= transmission(*f, nu);
    v *= std::exp(-0.5 * (nu - c0) * (nu - c0) / (sd * sd));
    if (v != 0.0) nodes->emplace_back(nu, v * jac);
  }
  return [nodes](double tau) {
    std::complex<double> acc = 0.0;
    const double w = -kTwoPi * tau;
    for (const auto& [nu, val] : *nodes) acc += val * std::polar(1.0, w * nu);
    return acc;
  };
}

bool has_closed_form(const SpectralComponent& e, const std::optional<SpectralComponent>& f) {
  if (!f) return true;
  if (e.kind == LineShape::Gaussian && f->kind == LineShape::Gaussian) return true;
  if (e.kind == LineShape::Gaussian && f->kind == LineShape::Lorentzian)
    return same_center(e.center_hz, f->center_hz, e.width_hz + f->width_hz);
  if (e.kind == LineShape::Lorentzian && f->kind == LineShape::Lorentzian) return true;
  return false;  // Lorentzian emission with Gaussian filter
}

TermFn closed_form_term(const SpectralComponent& e, const std::optional<SpectralComponent>& f) {
  if (!f) return bare_term(e);
  if (e.kind == LineShape::Gaussian && f->kind == LineShape::Gaussian) return gauss_gauss_term(e, *f);
  if (e.kind == LineShape::Gaussian && f->kind == LineShape::Lorentzian) return gauss_lorentz_term(e, *f);
  return lorentz_lorentz_term(e, *f);
}

TermFn make_term(const SpectralComponent& e, const std::optional<SpectralComponent>& f,
                 CoherenceMethod method, double tau_max_s, std::size_t quad_points) {
  const bool closed = has_closed_form(e, f);
  if (method == CoherenceMethod::ClosedForm && !closed)
    throw ConfigError("no closed-form transform for this emission/filter combination");
  if (method != CoherenceMethod::Quadrature && closed) return closed_form_term(e, f);
  const bool gaussian_factor =
      e.kind == LineShape::Gaussian || (f && f->kind == LineShape::Gaussian);
  if (gaussian_factor) return windowed_quadrature_term(e, f, tau_max_s, quad_points);
  return tan_quadrature_term(e, f, quad_points);
}

}  // namespace

CoherenceFunction coherence_from_spectrum(const SpectralModel& model,
                                          std::span<const double> tau_ps, CoherenceMethod method,
                                          std::size_t quad_points) {
  model.validate();
  double tau_max_s = 0.0;
  for (double t : tau_ps) tau_max_s = std::max(tau_max_s, std::abs(t) * 1e-12);

  std::vector<TermFn> terms;
  std::vector<double> weights;
  for (const auto& e : model.emission) {
    if (e.weight == 0.0) continue;
    terms.push_back(make_term(e, model.filter, method, tau_max_s, quad_points));
    weights.push_back(e.weight);
  }

  std::complex<double> norm = 0.0;
  for (std::size_t k = 0; k < terms.size(); ++k) norm += weights[k] * terms[k](0.0);
  if (!(std::abs(norm) > 0)) throw EstimationError("coherence normalization vanished");

  CoherenceFunction out;
  out.tau_ps.assign(tau_ps.begin(), tau_ps.end());
  out.g1.resize(tau_ps.size());
  for (std::size_t i = 0; i < tau_ps.size(); ++i) {
    std::complex<double> acc = 0.0;
    const double tau_s = tau_ps[i] * 1e-12;
    for (std::size_t k = 0; k < terms.size(); ++k) acc += weights[k] * terms[k](tau_s);
    out.g1[i] = acc / norm;
  }
  return out;
}

void convolve_gaussian(std::vector<double>& values, double step, double sigma) {
  if (sigma <= 0.25 * step || values.empty()) return;
  const int m = int(std::ceil(6.0 * sigma / step));
  std::vector<double> kernel(2 * m + 1);
  double ksum = 0.0;
  for (int i = -m; i <= m; ++i) {
    const double x = double(i) * step;
    kernel[i + m] = std::exp(-0.5 * x * x / (sigma * sigma));
    ksum += kernel[i + m];
  }
  for (auto& k : kernel) k /= ksum;

  const int n = int(values.size());
  std::vector<double> out(values.size());
  for (int i = 0; i < n; ++i) {
    double acc = 0.0;
    for (int j = -m; j <= m; ++j) {
      int idx = i + j;
      if (idx < 0) idx = 0;            // edge padded
      if (idx >= n) idx = n - 1;
      acc += kernel[j + m] * values[idx];
    }
    out[i] = acc;
  }
  values.swap(out);
}

std::vector<double> g2_model_curve(const SpectralModel& model, std::span<const double> tau_ps,
                                   double amplitude, double pair_sigma_ps, CoherenceMethod method) {
  if (tau_ps.empty()) return {};
  if (pair_sigma_ps <= 0.0) {
    auto coh = coherence_from_spectrum(model, tau_ps, method);
    std::vector<double> out(tau_ps.size());
    for (std::size_t i = 0; i < out.size(); ++i)
      out[i] = 1.0 + amplitude * std::norm(coh.g1[i]);
    return out;
  }
  // dense symmetric grid, convolve, then interpolate onto the request
  double lo = tau_ps.front(), hi = tau_ps.front();
  double min_gap = 1e300;
  for (std::size_t i = 0; i < tau_ps.size(); ++i) {
    lo = std::min(lo, tau_ps[i]);
    hi = std::max(hi, tau_ps[i]);
    if (i) min_gap = std::min(min_gap, std::abs(tau_ps[i] - tau_ps[i - 1]));
  }
  const double pad = 6.0 * pair_sigma_ps;
  const double step = std::max(1e-3, std::min(min_gap, pair_sigma_ps / 8.0));
  const double glo = lo - pad, ghi = hi + pad;
  const std::size_t n = std::size_t((ghi - glo) / step) + 2;
  std::vector<double> grid(n);
  for (std::size_t i = 0; i < n; ++i) grid[i] = glo + step * double(i);

  auto coh = coherence_from_spectrum(model, grid, method);
  std::vector<double> excess(n);
  for (std::size_t i = 0; i < n; ++i) excess[i] = amplitude * std::norm(coh.g1[i]);
  convolve_gaussian(excess, step, pair_sigma_ps);

  std::vector<double> out(tau_ps.size());
  for (std::size_t i = 0; i < tau_ps.size(); ++i) {
    const double x = (tau_ps[i] - glo) / step;
    const std::size_t j = std::min<std::size_t>(std::size_t(std::max(0.0, x)), n - 2);
    const double f = std::clamp(x - double(j), 0.0, 1.0);
    out[i] = 1.0 + (1.0 - f) * excess[j] + f * excess[j + 1];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Bandwidth estimation

BandwidthEstimate bandwidth_from_histogram(std::span<const double> tau_ps,
                                           std::span<const double> g2,
                                           std::span<const double> sigma, double bin_width_ps) {
  if (tau_ps.size() != g2.size() || (sigma.size() && sigma.size() != g2.size()))
    throw ConfigError("bandwidth_from_histogram: size mismatch");
  double m0 = 0.0, m1 = 0.0, m2 = 0.0;
  for (std::size_t i = 0; i < g2.size(); ++i) {
    const double c = g2[i] - 1.0;
    m0 += c;
    m1 += c * tau_ps[i];
    m2 += c * tau_ps[i] * tau_ps[i];
  }
  if (!(m0 > 0)) throw EstimationError("bandwidth: non-positive excess mass in g2-1");
  const double mu = m1 / m0;
  double var = m2 / m0 - mu * mu - bin_width_ps * bin_width_ps / 12.0;  // Sheppard
  if (!(var > 0)) throw EstimationError("bandwidth: non-positive excess variance");
  const double sigma_tau = std::sqrt(var);

  // linear propagation of per-bin errors through the moment ratios
  double var_st = 0.0;
  if (!sigma.empty()) {
    for (std::size_t i = 0; i < g2.size(); ++i) {
      const double dmu = (tau_ps[i] - mu) / m0;
      const double dvar = (tau_ps[i] * tau_ps[i] - m2 / m0) / m0 - 2.0 * mu * dmu;
      const double dst = dvar / (2.0 * sigma_tau);
      var_st += dst * dst * sigma[i] * sigma[i];
    }
  }

  BandwidthEstimate est;
  est.sigma_tau_ns = sigma_tau * 1e-3;
  est.sigma_tau_err_ns = std::sqrt(var_st) * 1e-3;
  const double st_s = sigma_tau * 1e-12;
  est.sigma_nu_mhz = 1.0 / (2.0 * std::sqrt(2.0) * kPi * st_s) * 1e-6;
  est.sigma_nu_err_mhz = est.sigma_nu_mhz * (est.sigma_tau_err_ns / est.sigma_tau_ns);
  est.fwhm_mhz = 0.0;
  est.fwhm_err_mhz = 0.0;
  est.convention = "tau-moment; sigma_nu via single-Gaussian map 1/(2*sqrt(2)*pi*sigma_tau)";
  return est;
}

namespace {

struct SpectrumWidths {
  double sigma_nu_hz;
  double fwhm_hz;
};

SpectrumWidths spectrum_widths(const SpectralModel& model) {
  double lo = 1e300, hi = -1e300;
  auto expand = [&](const SpectralComponent& c) {
    const double ext = (c.kind == LineShape::Gaussian ? 10.0 : 40.0) * c.width_hz;
    lo = std::min(lo, c.center_hz - ext);
    hi = std::max(hi, c.center_hz + ext);
  };
  for (const auto& c : model.emission) expand(c);
  if (model.filter) expand(*model.filter);

  const std::size_t n = 1 << 17;
  const double dnu = (hi - lo) / double(n - 1);
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, peak = 0.0;
  std::size_t peak_i = 0;
  std::vector<double> vals(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double nu = lo + dnu * double(i);
    const double v = eval_spectral_density(model, nu);
    vals[i] = v;
    s0 += v;
    s1 += v * nu;
    s2 += v * nu * nu;
    if (v > peak) {
      peak = v;
      peak_i = i;
    }
  }
  const double mean = s1 / s0;
  const double var = s2 / s0 - mean * mean;

  auto half_cross = [&](int dir) {
    const double target = 0.5 * peak;
    std::size_t i = peak_i;
    for (;;) {
      const std::size_t j = i + dir;
      if (j >= n) return dir > 0 ? hi : lo;
      if (vals[j] <= target) {
        const double f = (vals[i] - target) / (vals[i] - vals[j]);
        return lo + dnu * (double(i) + dir * f);
      }
      i = j;
    }
  };
  const double right = half_cross(+1), left = half_cross(-1);
  return {std::sqrt(std::max(var, 0.0)), right - left};
}

double model_sigma_tau_s(const SpectralModel& model) {
  // temporal moment of |g1|^2 on an adaptive grid
  double width_min = 1e300;
  for (const auto& c : model.emission) width_min = std::min(width_min, c.width_hz);
  if (model.filter) width_min = std::min(width_min, model.filter->width_hz);
  double tau_max = 2.0 / (kPi * width_min);
  const std::size_t n = 4096;
  for (int iter = 0; iter < 24; ++iter) {
    std::vector<double> taus{tau_max * 1e12};
    auto coh = coherence_from_spectrum(model, taus);
    if (std::norm(coh.g1[0]) < 1e-8) break;
    tau_max *= 2.0;
  }
  std::vector<double> grid(n);
  for (std::size_t i = 0; i < n; ++i) grid[i] = tau_max * 1e12 * double(i) / double(n - 1);
  auto coh = coherence_from_spectrum(model, grid);
  double m0 = 0.0, m2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double w = std::norm(coh.g1[i]) * (i == 0 || i + 1 == n ? 0.5 : 1.0);
    m0 += w;
    m2 += w * grid[i] * grid[i];  // symmetric excess: first moment vanishes
  }
  return std::sqrt(m2 / m0) * 1e-12;
}

}  // namespace

BandwidthEstimate bandwidth_from_fit(const FitResult& fit) {
  const SpectralModel model = fit.model();
  const auto w = spectrum_widths(model);

  BandwidthEstimate est;
  est.sigma_nu_mhz = w.sigma_nu_hz * 1e-6;
  est.fwhm_mhz = w.fwhm_hz * 1e-6;
  est.sigma_tau_ns = model_sigma_tau_s(model) * 1e9;
  est.convention = "model-spectrum; sigma_nu = spectral std, fwhm numeric, sigma_tau from model |g1|^2";

  // propagate fit covariance through the width functionals
  const std::size_t np = fit.names.size();
  if (np > 0 && !fit.covariance.empty()) {
    std::vector<double> g_sig(np), g_fw(np), g_st(np);
    for (std::size_t i = 0; i < np; ++i) {
      FitResult pert = fit;
      const double h = std::max(1e-6 * std::abs(fit.values[i]), 1e-12);
      pert.values[i] = fit.values[i] + h;
      const auto wp = spectrum_widths(pert.model());
      g_sig[i] = (wp.sigma_nu_hz * 1e-6 - est.sigma_nu_mhz) / h;
      g_fw[i] = (wp.fwhm_hz * 1e-6 - est.fwhm_mhz) / h;
      g_st[i] = (model_sigma_tau_s(pert.model()) * 1e9 - est.sigma_tau_ns) / h;
    }
    double vs = 0.0, vf = 0.0, vt = 0.0;
    for (std::size_t i = 0; i < np; ++i)
      for (std::size_t j = 0; j < np; ++j) {
        vs += g_sig[i] * fit.covariance[i][j] * g_sig[j];
        vf += g_fw[i] * fit.covariance[i][j] * g_fw[j];
        vt += g_st[i] * fit.covariance[i][j] * g_st[j];
      }
    est.sigma_nu_err_mhz = std::sqrt(std::max(vs, 0.0));
    est.fwhm_err_mhz = std::sqrt(std::max(vf, 0.0));
    est.sigma_tau_err_ns = std::sqrt(std::max(vt, 0.0));
  }
  return est;
}

}  // namespace photonstat
