#include "fbfev/evidence.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "fbfev/specfun.hpp"

namespace fbfev {

namespace {
constexpr double kLogTwoPi = 1.83787706640934548356;  // ln(2*pi)
}

Fraction make_fraction(double b, std::int64_t n) {
  if (n < 3) throw std::domain_error("make_fraction: requires n >= 3");
  if (!std::isfinite(b) || !(b > 1.0 / static_cast<double>(n)) || !(b <= 1.0))
    throw std::domain_error("make_fraction: requires 1/n < b <= 1");
  return {b, n};
}

Fraction min_fraction(std::int64_t n) {
  if (n < 3) throw std::domain_error("min_fraction: requires n >= 3");
  return {2.0 / static_cast<double>(n), n};
}

const char* method_label(MethodKind kind) {
  switch (kind) {
    case MethodKind::fbf: return "fbf";
    case MethodKind::haar_bf: return "haar";
    case MethodKind::inverse_p: return "invp";
  }
  return "?";
}

LogEvidence fbf_log_evidence(const TStat& ts, const Fraction& frac) {
  if (ts.n < 3) throw std::domain_error("fbf_log_evidence: requires n >= 3");
  if (frac.n != ts.n)
    throw std::invalid_argument(
        "fbf_log_evidence: fraction was validated for a different n");
  const double n = static_cast<double>(ts.n);
  const double b = frac.b;
  const double nb = n * b;
  if (!(nb > 1.0))
    throw std::domain_error("fbf_log_evidence: requires n*b > 1");
  // Grouped so that for b = 1 each difference cancels bit-exactly and the
  // exponent term is 0 * finite; the result is then exactly 0.0 at any n.
  const double log_e = (ln_gamma(0.5 * nb) - ln_gamma(0.5 * n)) +
                       (ln_gamma(0.5 * (n - 1.0)) - ln_gamma(0.5 * (nb - 1.0))) +
                       (0.5 * n * (1.0 - b)) * std::log1p(ts.t * ts.t / (n - 1.0));
  return {log_e, Method::fbf(b)};
}

LogEvidence haar_log_bf(const TStat& ts, double cauchy_scale) {
  if (ts.n < 2) throw std::domain_error("haar_log_bf: requires n >= 2");
  const double r = cauchy_scale;
  if (!(r > 0.0) || !std::isfinite(r))
    throw std::domain_error("haar_log_bf: requires cauchy_scale > 0");

  const double n = static_cast<double>(ts.n);
  const double nu = n - 1.0;
  const double t2 = ts.t * ts.t;
  const double log_den = std::log1p(t2 / nu);

  // BF10 = integral over g of
  //   (1+n g)^{-1/2} (1 + t^2/((1+n g) nu))^{-(nu+1)/2} pi(g) dg
  //   / (1 + t^2/nu)^{-(nu+1)/2},
  // pi(g) = r (2 pi)^{-1/2} g^{-3/2} exp(-r^2/(2g)) (the inverse-gamma
  // mixing density of a Cauchy(0, r) effect prior).
  //
  // Substituting g = u/(1-u) cancels the (1-u) powers and gives on (0, 1)
  //   ln r - ln(2 pi)/2 - (3/2) ln u - (1/2) ln(1-u+n u) - r^2 (1-u)/(2u)
  //   - ((nu+1)/2) [ln(1 + t^2 (1-u)/(nu (1-u+n u))) - ln(1 + t^2/nu)],
  // which decays to 0 at u -> 0 and is finite at u = 1. For large |t| the
  // mass concentrates in a sliver of width ~ nu*n/t^2 at u -> 1 that fixed
  // quadrature nodes can miss entirely, so that regime instead integrates
  // over y = -ln(1-u) = ln(1+g), where every feature is O(1) wide in y and
  // the tail falls off exactly like e^{-y}.
  QuadratureResult quad;
  double shift = -std::numeric_limits<double>::infinity();
  try {
    if (t2 <= 4096.0) {
      const auto log_integrand = [&](double u) {
        const double w = 1.0 - u + n * u;
        return std::log(r) - 0.5 * kLogTwoPi - 1.5 * std::log(u) -
               0.5 * std::log(w) - r * r * (1.0 - u) / (2.0 * u) -
               (0.5 * (nu + 1.0)) *
                   (std::log1p(t2 * (1.0 - u) / (nu * w)) - log_den);
      };
      // Factor out the approximate maximum so the scaled integrand is O(1).
      shift = log_integrand(1.0);
      for (int i = 1; i < 32; ++i)
        shift = std::max(shift, log_integrand(i / 32.0));
      const auto scaled = [&](double u) {
        return std::exp(log_integrand(u) - shift);
      };
      quad = integrate(scaled, 0.0, 1.0, 1e-11);
    } else {
      // u = -expm1(-y), Jacobian du = e^{-y} dy appended as the -y term.
      const auto log_integrand = [&](double y) {
        const double em = std::exp(-y);       // 1 - u
        const double u = -std::expm1(-y);
        const double w = n - (n - 1.0) * em;  // 1 - u + n u
        return std::log(r) - 0.5 * kLogTwoPi - 1.5 * std::log(u) -
               0.5 * std::log(w) - 0.5 * r * r / std::expm1(y) -
               (0.5 * (nu + 1.0)) * (std::log1p(t2 * em / (nu * w)) - log_den) -
               y;
      };
      // The integrand saturates around y ~ ln(1 + t^2/nu) and then falls
      // off as e^{-y}; 45 extra e-folds put the truncated tail far below
      // the tolerance.
      const double y_max = 45.0 + log_den + std::log(n);
      for (int i = 1; i <= 64; ++i)
        shift = std::max(shift, log_integrand(y_max * i / 64.0));
      for (double y : {0.01, 0.05, 0.1, 0.25, 0.5})
        shift = std::max(shift, log_integrand(y));
      const auto scaled = [&](double y) {
        return std::exp(log_integrand(y) - shift);
      };
      quad = integrate(scaled, 0.0, y_max, 1e-11);
    }
  } catch (const QuadratureError& e) {
    throw QuadratureError("haar_log_bf(t=" + std::to_string(ts.t) +
                              ", n=" + std::to_string(ts.n) +
                              ", r=" + std::to_string(r) + "): " + e.what(),
                          e.best_estimate);
  }
  return {shift + std::log(quad.value), Method::haar(r)};
}

LogEvidence inverse_p_log_evidence(const TStat& ts) {
  const double p = student_t_two_sided_p(ts.t, ts.df);
  return {-std::log(p), Method::inverse_p()};
}

}  // namespace fbfev
