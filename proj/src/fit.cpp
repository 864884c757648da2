#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "photonstat/errors.hpp"
#include "photonstat/rng.hpp"
#include "photonstat/spectral.hpp"

namespace photonstat {

namespace {

struct ParamDesc {
  std::string name;
  double def;
  bool def_fixed;
};

std::vector<ParamDesc> family_params(G2Family family) {
  switch (family) {
    case G2Family::FreeGaussian:
      return {{"amplitude", 1.0, false}, {"sigma_nu_mhz", 100.0, false}};
    case G2Family::FreeLorentzian:
      return {{"amplitude", 1.0, false}, {"fwhm_mhz", 100.0, false}};
    case G2Family::SingleLorentzianFiltered:
      return {{"amplitude", 1.0, false},
              {"doppler_sigma_mhz", 260.0, true},
              {"filter_fwhm_mhz", 67.0, false}};
    case G2Family::TwoGaussianPlusFilter:
      return {{"amplitude", 1.0, false},
              {"sigma_narrow_mhz", 15.0, false},
              {"sigma_broad_mhz", 260.0, false},
              {"ratio", 0.15, false},
              {"filter_fwhm_mhz", 818.0, true}};
  }
  throw ConfigError("unknown fit family");
}

SpectralModel build_model(G2Family family, const std::map<std::string, double>& p) {
  auto get = [&](const std::string& n) {
    auto it = p.find(n);
    if (it == p.end()) throw ConfigError("missing fit parameter " + n);
    return it->second;
  };
  SpectralModel m;
  switch (family) {
    case G2Family::FreeGaussian:
      m.emission = {{LineShape::Gaussian, 0.0, get("sigma_nu_mhz") * 1e6, 1.0}};
      break;
    case G2Family::FreeLorentzian:
      m.emission = {{LineShape::Lorentzian, 0.0, get("fwhm_mhz") * 1e6, 1.0}};
      break;
    case G2Family::SingleLorentzianFiltered:
      m.emission = {{LineShape::Gaussian, 0.0, get("doppler_sigma_mhz") * 1e6, 1.0}};
      m.filter = SpectralComponent{LineShape::Lorentzian, 0.0, get("filter_fwhm_mhz") * 1e6, 1.0};
      break;
    case G2Family::TwoGaussianPlusFilter:
      m.emission = {{LineShape::Gaussian, 0.0, get("sigma_narrow_mhz") * 1e6, get("ratio")},
                    {LineShape::Gaussian, 0.0, get("sigma_broad_mhz") * 1e6, 1.0}};
      m.filter = SpectralComponent{LineShape::Lorentzian, 0.0, get("filter_fwhm_mhz") * 1e6, 1.0};
      break;
  }
  return m;
}

}  // namespace

std::string family_name(G2Family family) {
  switch (family) {
    case G2Family::FreeGaussian: return "free-gaussian";
    case G2Family::FreeLorentzian: return "free-lorentzian";
    case G2Family::SingleLorentzianFiltered: return "single-lorentzian-filtered";
    case G2Family::TwoGaussianPlusFilter: return "two-gaussian-plus-filter";
  }
  return "unknown";
}

G2Family family_from_name(const std::string& name) {
  if (name == "free-gaussian") return G2Family::FreeGaussian;
  if (name == "free-lorentzian") return G2Family::FreeLorentzian;
  if (name == "single-lorentzian-filtered") return G2Family::SingleLorentzianFiltered;
  if (name == "two-gaussian-plus-filter") return G2Family::TwoGaussianPlusFilter;
  throw ConfigError("unknown fit family: " + name);
}

double FitResult::parameter(const std::string& name) const {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return values[i];
  auto it = fixed.find(name);
  if (it != fixed.end()) return it->second;
  throw ConfigError("fit has no parameter " + name);
}

double FitResult::parameter_stderr(const std::string& name) const {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return stderrs[i];
  return 0.0;  // fixed parameter
}

SpectralModel FitResult::model() const {
  std::map<std::string, double> p = fixed;
  for (std::size_t i = 0; i < names.size(); ++i) p[names[i]] = values[i];
  return build_model(family, p);
}

namespace {

/// Per-evaluation cache: |g1|^2 on the tick lattice, then per-histogram
/// jitter convolution and bin averaging.
struct ModelEvaluator {
  G2Family family;
  std::span<const G2FitData> data;
  double tick_ps;
  std::int64_t n_ticks;  // lattice [0, n_ticks)

  explicit ModelEvaluator(G2Family fam, std::span<const G2FitData> d) : family(fam), data(d) {
    if (d.empty()) throw ConfigError("fit_g2: no histograms");
    tick_ps = d.front().tick_ps;
    double sig_max = 0.0;
    std::int64_t hi = 0;
    for (const auto& h : d) {
      if (h.tick_ps != tick_ps) throw ConfigError("fit_g2: mixed tick_ps across histograms");
      if (h.lo_tick.size() != h.value.size() || h.hi_tick.size() != h.value.size() ||
          h.sigma.size() != h.value.size())
        throw ConfigError("fit_g2: ragged histogram arrays");
      for (auto t : h.hi_tick) hi = std::max(hi, std::abs(t));
      for (auto t : h.lo_tick) hi = std::max(hi, std::abs(t));
      sig_max = std::max(sig_max, h.jitter_sigma_ps);
    }
    n_ticks = hi + 1 + std::int64_t(std::ceil(7.0 * sig_max / tick_ps)) + 2;
  }

  std::size_t residual_count() const {
    std::size_t n = 0;
    for (const auto& h : data) n += h.value.size();
    return n;
  }

  void residuals(const std::map<std::string, double>& params, std::vector<double>& out) const {
    const double amplitude = params.at("amplitude");
    const SpectralModel model = build_model(family, params);

    const auto lattice = std::size_t(n_ticks);
    std::vector<double> taus(lattice);
    for (std::size_t i = 0; i < lattice; ++i) taus[i] = double(i) * tick_ps;
    const auto coh = coherence_from_spectrum(model, taus);
    std::vector<double> excess(lattice);
    for (std::size_t i = 0; i < excess.size(); ++i)
      excess[i] = amplitude * std::norm(coh.g1[i]);

    out.clear();
    out.reserve(residual_count());
    std::vector<double> conv;
    for (const auto& h : data) {
      conv = excess;
      if (h.jitter_sigma_ps > 0.25 * tick_ps) convolve_even(conv, h.jitter_sigma_ps);
      for (std::size_t k = 0; k < h.value.size(); ++k) {
        double acc = 0.0;
        for (std::int64_t d = h.lo_tick[k]; d <= h.hi_tick[k]; ++d)
          acc += conv[std::size_t(std::abs(d))];
        const double m = 1.0 + acc / double(h.hi_tick[k] - h.lo_tick[k] + 1);
        out.push_back((m - h.value[k]) / h.sigma[k]);
      }
    }
  }

 private:
  /// Gaussian convolution of an even signal given on delta >= 0.
  void convolve_even(std::vector<double>& e, double sigma_ps) const {
    const int m = int(std::ceil(6.0 * sigma_ps / tick_ps));
    std::vector<double> kernel(std::size_t(m) + 1);
    double ksum = 0.0;
    for (int i = 0; i <= m; ++i) {
      const double x = double(i) * tick_ps;
      kernel[std::size_t(i)] = std::exp(-0.5 * x * x / (sigma_ps * sigma_ps));
      ksum += (i == 0 ? 1.0 : 2.0) * kernel[std::size_t(i)];
    }
    for (auto& k : kernel) k /= ksum;
    const int n = int(e.size());
    std::vector<double> out(e.size());
    for (int i = 0; i < n; ++i) {
      double acc = kernel[0] * e[std::size_t(i)];
      for (int j = 1; j <= m; ++j) {
        const int a = std::abs(i - j);
        const int b = std::min(i + j, n - 1);  // edge padded
        acc += kernel[std::size_t(j)] * (e[std::size_t(a)] + e[std::size_t(b)]);
      }
      out[std::size_t(i)] = acc;
    }
    e.swap(out);
  }
};

double chi2_of(const std::vector<double>& r) {
  double s = 0.0;
  for (double v : r) s += v * v;
  return s;
}

struct LmOutcome {
  bool converged = false;
  double chi2 = std::numeric_limits<double>::infinity();
  Eigen::VectorXd z;
  Eigen::MatrixXd jtj;
  int iterations = 0;
};

LmOutcome levenberg_marquardt(const ModelEvaluator& eval,
                              const std::vector<std::string>& free_names,
                              const std::map<std::string, double>& fixed, Eigen::VectorXd z0,
                              int max_iter, double rel_tol) {
  const int np = int(free_names.size());
  auto to_params = [&](const Eigen::VectorXd& z) {
    std::map<std::string, double> p = fixed;
    for (int i = 0; i < np; ++i) p[free_names[std::size_t(i)]] = std::exp(z[i]);
    return p;
  };

  LmOutcome best;
  std::vector<double> r, rp;
  try {
    eval.residuals(to_params(z0), r);
  } catch (const std::exception&) {
    return best;
  }
  double chi2 = chi2_of(r);
  if (!std::isfinite(chi2)) return best;

  const int nr = int(r.size());
  Eigen::VectorXd rv(nr), delta;
  Eigen::MatrixXd J(nr, np);
  double lambda = 1e-3;
  int iter = 0;
  for (; iter < max_iter; ++iter) {
    for (int i = 0; i < nr; ++i) rv[i] = r[std::size_t(i)];
    // forward-difference Jacobian in log space
    bool jac_ok = true;
    for (int j = 0; j < np; ++j) {
      const double h = 1e-5;
      Eigen::VectorXd zp = z0;
      zp[j] += h;
      try {
        eval.residuals(to_params(zp), rp);
      } catch (const std::exception&) {
        jac_ok = false;
        break;
      }
      for (int i = 0; i < nr; ++i) J(i, j) = (rp[std::size_t(i)] - r[std::size_t(i)]) / h;
    }
    if (!jac_ok) break;

    const Eigen::MatrixXd jtj = J.transpose() * J;
    const Eigen::VectorXd g = J.transpose() * rv;

    bool stepped = false;
    for (int attempt = 0; attempt < 16; ++attempt) {
      Eigen::MatrixXd a = jtj;
      for (int d = 0; d < np; ++d) a(d, d) += lambda * std::max(jtj(d, d), 1e-12);
      delta = a.ldlt().solve(-g);
      Eigen::VectorXd zn = z0 + delta;
      for (int d = 0; d < np; ++d) zn[d] = std::clamp(zn[d], -40.0, 40.0);
      double chi2n = std::numeric_limits<double>::infinity();
      try {
        eval.residuals(to_params(zn), rp);
        chi2n = chi2_of(rp);
      } catch (const std::exception&) {
      }
      if (std::isfinite(chi2n) && chi2n <= chi2) {
        const double drop = chi2 - chi2n;
        z0 = zn;
        r = rp;
        lambda = std::max(lambda / 3.0, 1e-12);
        stepped = true;
        if (drop <= rel_tol * std::max(chi2, 1e-300)) {
          chi2 = chi2n;
          best.converged = true;
        }
        chi2 = chi2n;
        break;
      }
      lambda *= 4.0;
    }
    if (!stepped || best.converged) break;
  }

  // refresh JtJ at the solution for the covariance
  try {
    eval.residuals(to_params(z0), r);
    for (int j = 0; j < np; ++j) {
      const double h = 1e-5;
      Eigen::VectorXd zp = z0;
      zp[j] += h;
      eval.residuals(to_params(zp), rp);
      for (int i = 0; i < nr; ++i) J(i, j) = (rp[std::size_t(i)] - r[std::size_t(i)]) / h;
    }
  } catch (const std::exception&) {
    return best;
  }
  best.chi2 = chi2_of(r);
  best.z = z0;
  best.jtj = J.transpose() * J;
  best.iterations = iter + 1;
  return best;
}

/// Starting values from the pooled excess: overall moment width plus, for
/// the two-component family, a core/tail scale split.
void data_driven_inits(std::span<const G2FitData> data, G2Family family,
                       std::map<std::string, double>& init) {
  std::map<double, double> excess;  // |tau| -> mean excess
  double peak = 0.0, m0 = 0.0, m2 = 0.0;
  for (const auto& h : data) {
    for (std::size_t k = 0; k < h.value.size(); ++k) {
      const double tau = 0.5 * double(h.lo_tick[k] + h.hi_tick[k]) * h.tick_ps;
      const double c = h.value[k] - 1.0;
      peak = std::max(peak, c);
      excess[std::abs(tau)] = c;
      if (c > 0) {
        m0 += c;
        m2 += c * tau * tau;
      }
    }
  }
  const double sigma_tau_ps = m0 > 0 && m2 > 0 ? std::sqrt(m2 / m0) : 1e3;
  const double sigma_nu_mhz =
      1.0 / (2.0 * std::sqrt(2.0) * std::numbers::pi * sigma_tau_ps * 1e-12) * 1e-6;
  if (!init.count("amplitude")) init["amplitude"] = std::clamp(peak, 0.05, 3.0);
  auto put = [&](const char* n, double v) {
    if (!init.count(n)) init[n] = std::max(v, 1e-3);
  };

  // core scale: half-decay lag of the excess
  double tau_half_ps = sigma_tau_ps;
  for (const auto& [atau, c] : excess) {
    if (atau > 0 && c < 0.5 * peak) {
      tau_half_ps = std::max(atau, 81.0);
      break;
    }
  }
  // tail amplitude a^2 at four core scales estimates the mixture weight
  double tail = 0.0;
  for (const auto& [atau, c] : excess) {
    if (atau >= 4.0 * tau_half_ps) {
      tail = c;
      break;
    }
  }

  switch (family) {
    case G2Family::FreeGaussian: put("sigma_nu_mhz", sigma_nu_mhz); break;
    case G2Family::FreeLorentzian: put("fwhm_mhz", 2.0 * sigma_nu_mhz); break;
    case G2Family::SingleLorentzianFiltered: put("filter_fwhm_mhz", 2.0 * sigma_nu_mhz); break;
    case G2Family::TwoGaussianPlusFilter: {
      const double s_core_ps = tau_half_ps / 1.1774;
      put("sigma_broad_mhz",
          1.0 / (2.0 * std::sqrt(2.0) * std::numbers::pi * s_core_ps * 1e-12) * 1e-6);
      put("sigma_narrow_mhz", std::max(sigma_nu_mhz * 0.1, 1.0));
      const double a = std::sqrt(std::clamp(tail / std::max(peak, 1e-3), 1e-4, 0.81));
      put("ratio", std::clamp(a / (1.0 - a), 0.02, 0.8));
      break;
    }
  }
}

void canonicalize_two_gaussian(FitResult& fit) {
  if (fit.family != G2Family::TwoGaussianPlusFilter) return;
  int in = -1, ib = -1, ir = -1;
  for (std::size_t i = 0; i < fit.names.size(); ++i) {
    if (fit.names[i] == "sigma_narrow_mhz") in = int(i);
    if (fit.names[i] == "sigma_broad_mhz") ib = int(i);
    if (fit.names[i] == "ratio") ir = int(i);
  }
  if (in < 0 || ib < 0 || ir < 0) return;
  if (fit.values[std::size_t(in)] <= fit.values[std::size_t(ib)]) return;
  // component labels swapped during the fit: exchange widths, invert ratio
  std::swap(fit.values[std::size_t(in)], fit.values[std::size_t(ib)]);
  std::swap(fit.stderrs[std::size_t(in)], fit.stderrs[std::size_t(ib)]);
  const double r = fit.values[std::size_t(ir)];
  const double dr = fit.stderrs[std::size_t(ir)];
  fit.values[std::size_t(ir)] = 1.0 / r;
  fit.stderrs[std::size_t(ir)] = dr / (r * r);
  for (auto& row : fit.covariance) std::swap(row[std::size_t(in)], row[std::size_t(ib)]);
  std::swap(fit.covariance[std::size_t(in)], fit.covariance[std::size_t(ib)]);
  // covariance rows/cols for the inverted ratio scale by d(1/r)/dr = -1/r^2
  for (std::size_t j = 0; j < fit.names.size(); ++j) {
    fit.covariance[std::size_t(ir)][j] *= -1.0 / (r * r);
    fit.covariance[j][std::size_t(ir)] *= -1.0 / (r * r);
  }
}

}  // namespace

FitResult fit_g2(std::span<const G2FitData> data, G2Family family, const FitOptions& options) {
  ModelEvaluator eval(family, data);

  std::map<std::string, double> fixed;
  std::vector<std::string> free_names;
  std::map<std::string, double> init = options.initial;
  data_driven_inits(data, family, init);

  for (const auto& d : family_params(family)) {
    if (auto it = options.fixed.find(d.name); it != options.fixed.end()) {
      fixed[d.name] = it->second;
    } else if (d.def_fixed && !options.initial.count(d.name)) {
      fixed[d.name] = d.def;
    } else {
      free_names.push_back(d.name);
      if (!init.count(d.name)) init[d.name] = d.def;
    }
  }
  if (free_names.empty()) throw ConfigError("fit_g2: all parameters fixed");

  const int np = int(free_names.size());
  Eigen::VectorXd z_base(np);
  for (int i = 0; i < np; ++i)
    z_base[i] = std::log(std::max(init.at(free_names[std::size_t(i)]), 1e-8));

  LmOutcome best;
  int converged_starts = 0;
  for (int s = 0; s < std::max(options.multistarts, 1); ++s) {
    Eigen::VectorXd z = z_base;
    if (s > 0) {
      rng::Stream jitter(options.seed, rng::Purpose::Multistart, std::uint64_t(s));
      for (int i = 0; i < np; ++i) z[i] += 0.35 * jitter.normal();
    }
    LmOutcome o = levenberg_marquardt(eval, free_names, fixed, z, options.max_iterations,
                                      options.rel_tol);
    if (o.converged) ++converged_starts;
    if (o.chi2 < best.chi2) best = o;
  }
  if (!std::isfinite(best.chi2) || best.z.size() == 0)
    throw EstimationError("fit_g2: no start converged");

  FitResult fit;
  fit.family = family;
  fit.names = free_names;
  fit.fixed = fixed;
  fit.chi2 = best.chi2;
  fit.ndof = int(eval.residual_count()) - np;
  fit.iterations = best.iterations;
  fit.starts_converged = converged_starts;

  Eigen::MatrixXd cov_z = best.jtj.completeOrthogonalDecomposition().pseudoInverse();
  fit.values.resize(std::size_t(np));
  fit.stderrs.resize(std::size_t(np));
  fit.covariance.assign(std::size_t(np), std::vector<double>(std::size_t(np), 0.0));
  for (int i = 0; i < np; ++i) {
    const double pi_ = std::exp(best.z[i]);
    fit.values[std::size_t(i)] = pi_;
    for (int j = 0; j < np; ++j) {
      const double pj = std::exp(best.z[j]);
      fit.covariance[std::size_t(i)][std::size_t(j)] = pi_ * cov_z(i, j) * pj;
    }
  }
  for (int i = 0; i < np; ++i)
    fit.stderrs[std::size_t(i)] =
        std::sqrt(std::max(fit.covariance[std::size_t(i)][std::size_t(i)], 0.0));

  canonicalize_two_gaussian(fit);
  return fit;
}

}  // namespace photonstat
