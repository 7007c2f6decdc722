#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>

// Counter-addressable pseudo-random numbers. Every draw is a pure function of
// (master seed, stream key, counter), so any shard of work can be generated
// independently of scheduling order and the full output is reproducible
// bit-for-bit for any thread count.

namespace fbfev {

namespace detail {

constexpr std::uint64_t kSplitMixGamma = 0x9E3779B97F4A7C15ULL;

constexpr std::uint64_t splitmix_mix(std::uint64_t z) {
  z ^= z >> 30;
  z *= 0xBF58476D1CE4E5B9ULL;
  z ^= z >> 27;
  z *= 0x94D049BB133111EBULL;
  z ^= z >> 31;
  return z;
}

}  // namespace detail

// SplitMix64: state advances by a fixed odd gamma, output is a bijective mix
// of the state. jump(i) addresses the i-th draw directly.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    state_ += detail::kSplitMixGamma;
    return detail::splitmix_mix(state_);
  }

  // Value of the counter-th draw after construction, without advancing.
  std::uint64_t at(std::uint64_t counter) const {
    return detail::splitmix_mix(state_ + (counter + 1) * detail::kSplitMixGamma);
  }

  void skip(std::uint64_t count) { state_ += count * detail::kSplitMixGamma; }

 private:
  std::uint64_t state_;
};

// Derives an independent stream seed from a master seed and three key words
// (e.g. cell index, shard index, purpose tag). Chained mixing with distinct
// additive constants keeps nearby keys decorrelated.
inline std::uint64_t derive_stream(std::uint64_t master, std::uint64_t a,
                                   std::uint64_t b, std::uint64_t c) {
  std::uint64_t s = master;
  s = detail::splitmix_mix(s ^ (a + 0x9E3779B97F4A7C15ULL));
  s = detail::splitmix_mix(s ^ (b + 0xC2B2AE3D27D4EB4FULL));
  s = detail::splitmix_mix(s ^ (c + 0x165667B19E3779F9ULL));
  return s;
}

// Maps 64 random bits to the open interval (0, 1): 53-bit mantissa offset by
// half an ulp, so 0 and 1 are unreachable and the quantile below stays finite.
inline double uniform_open01(std::uint64_t bits) {
  return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
}

// Inverse standard normal CDF, Wichura's PPND16 rational approximations
// (absolute error below 1e-15 over (0,1)).
inline double normal_quantile(double p) {
  if (!(p > 0.0) || !(p < 1.0))
    throw std::domain_error("normal_quantile: requires 0 < p < 1");
  const double q = p - 0.5;
  if (std::fabs(q) <= 0.425) {
    const double r = 0.180625 - q * q;
    return q *
           (((((((2.5090809287301226727e+3 * r + 3.3430575583588128105e+4) * r +
                 6.7265770927008700853e+4) * r + 4.5921953931549871457e+4) * r +
               1.3731693765509461125e+4) * r + 1.9715909503065514427e+3) * r +
             1.3314166789178437745e+2) * r + 3.3871328727963666080e+0) /
           (((((((5.2264952788528545610e+3 * r + 2.8729085735721942674e+4) * r +
                 3.9307895800092710610e+4) * r + 2.1213794301586595867e+4) * r +
               5.3941960214247511077e+3) * r + 6.8718700749205790830e+2) * r +
             4.2313330701600911252e+1) * r + 1.0);
  }
  double r = std::sqrt(-std::log(q < 0.0 ? p : 1.0 - p));
  double value;
  if (r <= 5.0) {
    r -= 1.6;
    value = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r +
                  2.41780725177450611770e-1) * r + 1.27045825245236838258e+0) * r +
                3.64784832476320460504e+0) * r + 5.76949722146069140550e+0) * r +
              4.63033784615654529590e+0) * r + 1.42343711074968357734e+0) /
            (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r +
                  1.51986665636164571966e-2) * r + 1.48103976427480074590e-1) * r +
                6.89767334985100004550e-1) * r + 1.67638483018380384940e+0) * r +
              2.05319162663775882187e+0) * r + 1.0);
  } else {
    r -= 5.0;
    value = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
                  1.24266094738807843860e-3) * r + 2.65321895265761230930e-2) * r +
                2.96560571828504891230e-1) * r + 1.78482653991729133580e+0) * r +
              5.46378491116411436990e+0) * r + 6.65790464350110377720e+0) /
            (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r +
                  1.84631831751005468180e-5) * r + 7.86869131145613259100e-4) * r +
                1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r +
              5.99832206555887937690e-1) * r + 1.0);
  }
  return q < 0.0 ? -value : value;
}

// Standard normal draw addressed by (stream seed, counter).
inline double normal_at(std::uint64_t stream_seed, std::uint64_t counter) {
  SplitMix64 rng(stream_seed);
  return normal_quantile(uniform_open01(rng.at(counter)));
}

}  // namespace fbfev
