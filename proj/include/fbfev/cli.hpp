#pragma once

// Command-line front end. Commands:
//
//   curve        log-expected-evidence grid over deltas x methods (CSV/JSON)
//   safety       per-method check of ln E_H0[E] <= 0 + 3 se at delta = 0
//   sequential   batched sufficient-statistics demo with coherence check
//   pvalue-demo  truncated means and running mean of 1/p under H0
//
// Every command is a pure function of its flags and seed; outputs are
// byte-identical across runs and thread counts. Exit codes: 0 success,
// 2 usage/config error, 3 numerical failure.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace fbfev {

inline constexpr const char* kCliVersion = "0.1.0";
inline constexpr const char* kCsvHeader =
    "delta,method,param,log_expected_evidence,std_error,reps,n,seed";

struct CurveRow {
  double delta = 0.0;
  std::string method;  // "fbf" | "haar" | "invp"
  double param = 0.0;  // b, r, or 0 for invp
  double log_expected_evidence = 0.0;
  double std_error = 0.0;
  std::int64_t reps = 0;
  std::int64_t n = 0;
  std::uint64_t seed = 0;
};

// Shortest decimal representation that round-trips to the same double.
std::string format_double(double v);

// "0:1.5:0.1" (inclusive grid, snapped to short decimals) or "0,0.5,1".
// Result is sorted ascending. Throws std::invalid_argument on bad syntax.
std::vector<double> parse_delta_spec(const std::string& spec);

// Writes/parses the curve CSV (LF newlines, header exactly kCsvHeader).
// parse_curve_csv throws std::runtime_error on malformed input; the
// round-trip write -> parse reproduces every field exactly.
void write_curve_csv(std::ostream& out, const std::vector<CurveRow>& rows);
std::vector<CurveRow> parse_curve_csv(std::istream& in);

// Full CLI entry point; argv[0] is the program name.
int run_cli(int argc, const char* const* argv, std::ostream& out,
            std::ostream& err);

}  // namespace fbfev
