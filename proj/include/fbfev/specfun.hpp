#pragma once

// Special functions and 1-D adaptive quadrature used by the evidence
// formulas: log-gamma, regularized incomplete beta, Student-t tail
// probability, and a Gauss-Kronrod integrator.
//
// All functions are pure and thread-safe.

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace fbfev {

struct QuadratureResult {
  double value = 0.0;
  double abs_error_estimate = 0.0;  // >= 0
  std::int64_t evaluations = 0;     // >= 1 on any completed call
};

// Thrown when the adaptive integrator cannot reach the requested tolerance.
// Carries the best estimate obtained so far.
class QuadratureError : public std::runtime_error {
 public:
  QuadratureError(const std::string& what, QuadratureResult best)
      : std::runtime_error(what), best_estimate(best) {}
  QuadratureResult best_estimate;
};

// ln Gamma(x) for x > 0. Lanczos approximation, target accuracy
// |err| <= 1e-12 * max(1, |ln Gamma(x)|) on [0.1, 200].
double ln_gamma(double x);

// Regularized incomplete beta I_x(a, b), a,b > 0, x in [0,1].
double reg_inc_beta(double a, double b, double x);

// Two-sided p value of a t statistic: p = I_{df/(df+t^2)}(df/2, 1/2).
double student_t_two_sided_p(double t, std::int64_t df);

namespace detail {

// 15-point Kronrod extension of the 7-point Gauss rule (positive half).
// Abscissae/weights as tabulated in QUADPACK.
inline constexpr double kGk15Nodes[8] = {
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144838258730,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000};
inline constexpr double kGk15Weights[8] = {
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714};
// Gauss-7 weights; the embedded Gauss nodes are kGk15Nodes[1,3,5,7].
inline constexpr double kG7Weights[4] = {
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327};

template <class F>
std::pair<double, double> gauss_kronrod_15(F& f, double a, double b) {
  const double mid = 0.5 * (a + b);
  const double half = 0.5 * (b - a);
  const double f_mid = f(mid);
  double k15 = kGk15Weights[7] * f_mid;
  double g7 = kG7Weights[3] * f_mid;
  for (int i = 0; i < 7; ++i) {
    const double dx = half * kGk15Nodes[i];
    const double fsum = f(mid - dx) + f(mid + dx);
    k15 += kGk15Weights[i] * fsum;
    if (i % 2 == 1) g7 += kG7Weights[i / 2] * fsum;
  }
  k15 *= half;
  g7 *= half;
  return {k15, std::fabs(k15 - g7)};
}

}  // namespace detail

// Adaptive Gauss-Kronrod integration of f over (lo, hi). Bisects until the
// per-interval error estimate meets the locally split tolerance, with a
// recursion depth cap of `max_depth` per branch and a global cap on the
// number of processed intervals. Throws QuadratureError (with the best
// estimate attached) when the tolerance cannot be met.
template <class F>
QuadratureResult integrate(F&& f, double lo, double hi, double tol,
                           int max_depth = 60,
                           std::int64_t max_intervals = 20000) {
  if (!(std::isfinite(lo) && std::isfinite(hi) && lo < hi))
    throw std::domain_error("integrate: requires finite lo < hi");
  if (!(tol > 0.0)) throw std::domain_error("integrate: requires tol > 0");

  struct Segment {
    double a, b, tol;
    int depth;
  };
  std::vector<Segment> pending{{lo, hi, tol, max_depth}};
  QuadratureResult acc;
  bool converged = true;
  std::int64_t processed = 0;

  while (!pending.empty()) {
    const Segment seg = pending.back();
    pending.pop_back();
    ++processed;
    const auto [value, err] = detail::gauss_kronrod_15(f, seg.a, seg.b);
    acc.evaluations += 15;
    if (!std::isfinite(value) || !std::isfinite(err)) {
      acc.value = value;
      throw QuadratureError("integrate: non-finite integrand value", acc);
    }
    const bool can_split = seg.depth > 0 && processed < max_intervals;
    if (err <= seg.tol || !can_split) {
      acc.value += value;
      acc.abs_error_estimate += err;
      if (err > seg.tol) converged = false;
    } else {
      const double mid = 0.5 * (seg.a + seg.b);
      pending.push_back({mid, seg.b, 0.5 * seg.tol, seg.depth - 1});
      pending.push_back({seg.a, mid, 0.5 * seg.tol, seg.depth - 1});
    }
  }
  if (!converged)
    throw QuadratureError("integrate: error estimate " +
                              std::to_string(acc.abs_error_estimate) +
                              " did not reach tolerance " + std::to_string(tol),
                          acc);
  return acc;
}

}  // namespace fbfev
