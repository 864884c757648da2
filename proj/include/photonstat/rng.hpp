#pragma once
// Counter-based RNG (Philox4x32-10) with per-purpose substreams.
// Changing the draw pattern of one simulation stage must not perturb the
// others, and parallel workers must produce schedule-independent output;
// both follow from addressing every draw by (seed, purpose, stream, index).
#include <array>
#include <cmath>
#include <cstdint>

namespace photonstat::rng {

enum class Purpose : std::uint32_t {
  Generic = 0,
  Field = 1,
  Thinning = 2,
  Routing = 3,
  Dark = 4,
  Jitter = 5,
  Resample = 6,
  Multistart = 7,
};

namespace detail {

inline void philox_round(std::array<std::uint32_t, 4>& x, std::uint32_t k0, std::uint32_t k1) {
  constexpr std::uint64_t M0 = 0xD2511F53ull;
  constexpr std::uint64_t M1 = 0xCD9E8D57ull;
  const std::uint64_t p0 = M0 * x[0];
  const std::uint64_t p1 = M1 * x[2];
  const std::uint32_t hi0 = static_cast<std::uint32_t>(p0 >> 32);
  const std::uint32_t lo0 = static_cast<std::uint32_t>(p0);
  const std::uint32_t hi1 = static_cast<std::uint32_t>(p1 >> 32);
  const std::uint32_t lo1 = static_cast<std::uint32_t>(p1);
  x = {hi1 ^ x[1] ^ k0, lo1, hi0 ^ x[3] ^ k1, lo0};
}

inline std::array<std::uint32_t, 4> philox_block(std::array<std::uint32_t, 4> ctr,
                                                 std::uint32_t k0, std::uint32_t k1) {
  constexpr std::uint32_t W0 = 0x9E3779B9u;
  constexpr std::uint32_t W1 = 0xBB67AE85u;
  for (int r = 0; r < 10; ++r) {
    philox_round(ctr, k0, k1);
    k0 += W0;
    k1 += W1;
  }
  return ctr;
}

// log on (0,1]-ish arguments, ~1e-10 relative, deterministic across libms.
inline double fast_log(double x) {
  int e;
  double m = std::frexp(x, &e);  // m in [0.5, 1)
  if (m < 0.70710678118654752) {
    m *= 2.0;
    e -= 1;
  }
  const double z = (m - 1.0) / (m + 1.0);
  const double z2 = z * z;
  const double p = 2.0 * z *
                   (1.0 + z2 * (1.0 / 3.0 + z2 * (1.0 / 5.0 + z2 * (1.0 / 7.0 +
                    z2 * (1.0 / 9.0 + z2 * (1.0 / 11.0 + z2 / 13.0))))));
  return p + 0.6931471805599453094 * e;
}

// sin/cos of 2*pi*u for u in [0,1), ~1e-11 absolute.
inline void fast_sincos_2pi(double u, double& s, double& c) {
  const double t = 4.0 * u;
  const int q = static_cast<int>(t + 0.5);  // t in [0,4)
  const double y = (t - q) * 1.5707963267948966192;  // |y| <= pi/4
  const double y2 = y * y;
  const double sy = y * (1.0 + y2 * (-1.0 / 6.0 + y2 * (1.0 / 120.0 + y2 * (-1.0 / 5040.0 +
                    y2 * (1.0 / 362880.0 - y2 / 39916800.0)))));
  const double cy = 1.0 + y2 * (-0.5 + y2 * (1.0 / 24.0 + y2 * (-1.0 / 720.0 +
                    y2 * (1.0 / 40320.0 + y2 * (-1.0 / 3628800.0 + y2 / 479001600.0)))));
  switch (q & 3) {
    case 0: s = sy;  c = cy;  break;
    case 1: s = cy;  c = -sy; break;
    case 2: s = -sy; c = -cy; break;
    default: s = -cy; c = sy; break;
  }
}

inline double u64_to_unit_oc(std::uint64_t v) {  // (0, 1]
  return static_cast<double>((v >> 11) + 1) * 0x1p-53;
}
inline double u64_to_unit_co(std::uint64_t v) {  // [0, 1)
  return static_cast<double>(v >> 11) * 0x1p-53;
}

}  // namespace detail

/// One complex-normal draw addressed purely by counter; used for spectral
/// coloring where bins are generated in parallel.
inline void counter_normal_pair(std::uint64_t seed, Purpose purpose, std::uint64_t stream,
                                std::uint64_t index, double& n0, double& n1) {
  const std::array<std::uint32_t, 4> ctr = {
      static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32),
      static_cast<std::uint32_t>(stream),
      static_cast<std::uint32_t>(stream >> 32) ^ (static_cast<std::uint32_t>(purpose) << 24)};
  const auto out = detail::philox_block(ctr, static_cast<std::uint32_t>(seed),
                                        static_cast<std::uint32_t>(seed >> 32));
  const std::uint64_t a = (static_cast<std::uint64_t>(out[1]) << 32) | out[0];
  const std::uint64_t b = (static_cast<std::uint64_t>(out[3]) << 32) | out[2];
  const double u1 = detail::u64_to_unit_oc(a);
  const double u2 = detail::u64_to_unit_co(b);
  const double r = std::sqrt(-2.0 * detail::fast_log(u1));
  double s, c;
  detail::fast_sincos_2pi(u2, s, c);
  n0 = r * c;
  n1 = r * s;
}

/// Sequential substream: draws are indexed by an internal counter, so the
/// stream is reproducible independent of what other streams consume.
class Stream {
 public:
  Stream(std::uint64_t seed, Purpose purpose, std::uint64_t stream_id)
      : k0_(static_cast<std::uint32_t>(seed)),
        k1_(static_cast<std::uint32_t>(seed >> 32)),
        c2_(static_cast<std::uint32_t>(stream_id)),
        c3_(static_cast<std::uint32_t>(stream_id >> 32) ^
            (static_cast<std::uint32_t>(purpose) << 24)) {}

  std::uint64_t next_u64() {
    if (have_) {
      have_ = false;
      return pending_;
    }
    const auto out = detail::philox_block(
        {static_cast<std::uint32_t>(index_), static_cast<std::uint32_t>(index_ >> 32), c2_, c3_},
        k0_, k1_);
    ++index_;
    pending_ = (static_cast<std::uint64_t>(out[3]) << 32) | out[2];
    have_ = true;
    return (static_cast<std::uint64_t>(out[1]) << 32) | out[0];
  }

  double uniform() { return detail::u64_to_unit_co(next_u64()); }        // [0,1)
  double uniform_oc() { return detail::u64_to_unit_oc(next_u64()); }     // (0,1]

  double exponential(double mean) { return -mean * detail::fast_log(uniform_oc()); }

  void normal_pair(double& n0, double& n1) {
    const double u1 = uniform_oc();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * detail::fast_log(u1));
    double s, c;
    detail::fast_sincos_2pi(u2, s, c);
    n0 = r * c;
    n1 = r * s;
  }

  double normal() {
    if (have_normal_) {
      have_normal_ = false;
      return pending_normal_;
    }
    double a, b;
    normal_pair(a, b);
    pending_normal_ = b;
    have_normal_ = true;
    return a;
  }

  /// Exact binomial sample; inversion for small n*p, BTRS otherwise.
  std::uint64_t binomial(std::uint64_t n, double p);

 private:
  std::uint32_t k0_, k1_, c2_, c3_;
  std::uint64_t index_ = 0;
  std::uint64_t pending_ = 0;
  bool have_ = false;
  double pending_normal_ = 0.0;
  bool have_normal_ = false;
};

inline std::uint64_t Stream::binomial(std::uint64_t n, double p) {
  if (n == 0 || p <= 0.0) return 0;
  if (p >= 1.0) return n;
  if (p > 0.5) return n - binomial(n, 1.0 - p);
  const double np = static_cast<double>(n) * p;
  if (np < 10.0) {
    // BINV inversion
    const double q = 1.0 - p;
    const double s = p / q;
    const double a = (static_cast<double>(n) + 1.0) * s;
    double r = std::exp(static_cast<double>(n) * std::log1p(-p));
    double u = uniform();
    std::uint64_t x = 0;
    while (u > r) {
      u -= r;
      ++x;
      if (x > n) {  // numerical tail guard
        x = n;
        break;
      }
      r *= a / static_cast<double>(x) - s;
    }
    return x;
  }
  // BTRS transformed rejection (Hormann 1993)
  const double nd = static_cast<double>(n);
  const double spq = std::sqrt(np * (1.0 - p));
  const double b = 1.15 + 2.53 * spq;
  const double a = -0.0873 + 0.0248 * b + 0.01 * p;
  const double c = np + 0.5;
  const double v_r = 0.92 - 4.2 / b;
  const double alpha = (2.83 + 5.1 / b) * spq;
  const double lpq = std::log(p / (1.0 - p));
  const double m = std::floor((nd + 1.0) * p);
  const double h = std::lgamma(m + 1.0) + std::lgamma(nd - m + 1.0);
  for (;;) {
    const double u = uniform() - 0.5;
    double v = uniform();
    const double us = 0.5 - std::abs(u);
    const double kd = std::floor((2.0 * a / us + b) * u + c);
    if (kd < 0.0 || kd > nd) continue;
    if (us >= 0.07 && v <= v_r) return static_cast<std::uint64_t>(kd);
    v = v * alpha / (a / (us * us) + b);
    if (std::log(v) <= h - std::lgamma(kd + 1.0) - std::lgamma(nd - kd + 1.0) +
                           (kd - m) * lpq) {
      return static_cast<std::uint64_t>(kd);
    }
  }
}

}  // namespace photonstat::rng
