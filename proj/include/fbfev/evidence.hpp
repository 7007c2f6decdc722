#pragma once

// Evidence measures for the one-sample t test of H1: delta != 0 against
// H0: delta = 0, all reported as natural-log e-values for H1 against H0:
//
//  - the fractional Bayes factor (FBF) with training fraction b,
//  - the Bayes factor with a right Haar prior on the scale and a
//    zero-centered Cauchy prior on the standardized effect (JZS form),
//  - the reciprocal-p pseudo-evidence 1/p (not a valid e-value).
//
// Everything is computed in log space; all functions are pure.

#include <cstdint>
#include <string>

#include "fbfev/seqstats.hpp"

namespace fbfev {

// FBF training fraction b, validated against the sample size n it will be
// used with. Valid range is 1/n < b <= 1: the Gamma argument (n*b - 1)/2
// must stay positive, and b = 1 is the degenerate no-evidence case.
struct Fraction {
  double b = 1.0;
  std::int64_t n = 0;
};

// Validates 1/n < b <= 1 and n >= 3; throws std::domain_error otherwise.
Fraction make_fraction(double b, std::int64_t n);

// The minimal fraction b = 2/n that still turns the improper prior into a
// proper one. Requires n >= 3 so a nontrivial remaining fraction exists.
Fraction min_fraction(std::int64_t n);

enum class MethodKind { fbf, haar_bf, inverse_p };

struct Method {
  MethodKind kind = MethodKind::fbf;
  double param = 0.0;  // b for fbf, Cauchy scale r for haar_bf, unused otherwise

  static Method fbf(double b) { return {MethodKind::fbf, b}; }
  static Method haar(double r) { return {MethodKind::haar_bf, r}; }
  static Method inverse_p() { return {MethodKind::inverse_p, 0.0}; }
};

const char* method_label(MethodKind kind);  // "fbf" | "haar" | "invp"

struct LogEvidence {
  double log_e = 0.0;  // ln E
  Method method;
};

// FBF log evidence:
//   ln Gamma(n b/2) + ln Gamma((n-1)/2) - ln Gamma((n b - 1)/2)
//   - ln Gamma(n/2) + (n (1-b)/2) * ln(1 + t^2/(n-1)).
// Strictly increasing in |t| for b < 1; identically 0 at b = 1.
LogEvidence fbf_log_evidence(const TStat& ts, const Fraction& frac);

// Log Bayes factor BF10 for the one-sample t test with a right Haar prior
// on the scale and a Cauchy(0, r) prior on the standardized effect,
// evaluated as a single adaptive quadrature over the mixing variable
// g (Cauchy = scale mixture of normals), transformed to (0,1) via
// g = u/(1-u). Even in t, increasing in |t|.
LogEvidence haar_log_bf(const TStat& ts, double cauchy_scale);

// ln(1/p) for the two-sided t test p value; included as the canonical
// counterexample to the safety requirement E_H0[E] <= 1.
LogEvidence inverse_p_log_evidence(const TStat& ts);

}  // namespace fbfev
