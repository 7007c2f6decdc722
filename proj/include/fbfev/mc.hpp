#pragma once

// Monte Carlo estimation of log expected evidence, ln E[E], over a grid of
// standardized effects delta and evidence methods.
//
// Determinism contract: every estimate is a pure function of the config
// (including the seed). Replications are split into fixed-size shards; each
// shard draws from a substream keyed by (seed, delta index, method index,
// shard index) and reduces to a small partial, and partials are merged in
// shard order on one thread. The result is bit-identical for any thread
// count and any execution order.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "fbfev/evidence.hpp"
#include "fbfev/rng.hpp"
#include "fbfev/seqstats.hpp"

namespace fbfev {

struct MCConfig {
  std::int64_t n = 20;          // per-dataset sample size
  std::int64_t reps = 1000000;  // replications per (delta, method) cell
  std::uint64_t seed = 42;
  std::vector<double> deltas;   // sorted, finite
  std::vector<Method> methods;
  int threads = 1;              // <= 0 means hardware concurrency
};

// One (delta, method) cell. Both estimands are computed from the same
// replications: log_mean_e = ln((1/R) sum E_i) via log-sum-exp, and
// mean_log_e = (1/R) sum ln E_i. Standard errors are delta-method (for the
// log of the mean) and plain sample-based (for the mean of logs).
struct CellEstimate {
  double delta = 0.0;
  Method method;
  double log_mean_e = 0.0;
  double log_mean_se = 0.0;
  double mean_log_e = 0.0;
  double mean_log_se = 0.0;
  std::int64_t reps = 0;
  std::int64_t n = 0;
  std::uint64_t seed = 0;
  std::int64_t retries = 0;  // degenerate-variance redraws (measure-zero event)
  bool failed = false;       // evidence evaluation threw; values are NaN
  std::string error;
};

struct EvidenceCurve {
  std::int64_t n = 0;
  std::int64_t reps = 0;
  std::uint64_t seed = 0;
  std::vector<double> deltas;
  std::vector<Method> methods;
  std::vector<CellEstimate> cells;  // row-major: delta index major, method minor

  const CellEstimate& at(std::size_t delta_idx, std::size_t method_idx) const {
    return cells[delta_idx * methods.size() + method_idx];
  }
};

// Draws n i.i.d. Normal(delta, 1) samples from the stream and returns their
// t statistic. The measure-zero degenerate-variance event triggers a redraw
// (counted in *retries if given); 100 failures in a row is an internal fault.
TStat simulate_t(std::int64_t n, double delta, SplitMix64& stream,
                 std::int64_t* retries = nullptr);

// Single-cell estimate with the same sharded substream layout as sweep()
// (cell indices 0, 0), so the result matches a one-cell sweep bit for bit.
CellEstimate log_expected_evidence(const Method& method, std::int64_t n,
                                   double delta, std::int64_t reps,
                                   std::uint64_t seed);

// Fills the full deltas x methods grid. Per-cell failures are recorded in
// the cell and the sweep continues. Throws std::invalid_argument for an
// invalid config (reps < 100, unsorted/non-finite deltas, empty grid, or a
// fraction invalid for n).
EvidenceCurve sweep(const MCConfig& config);

struct MeanEstimate {
  double value = 0.0;
  double std_error = 0.0;
  std::int64_t reps = 0;
};

// Monte Carlo mean of min(1/p, cap) under H0 (delta = 0), with p the
// two-sided t-test p value on n samples. p is exactly Uniform(0,1) under
// H0, so the true mean is 1 + ln(cap). The stream does not depend on cap:
// for a fixed seed the estimate is pathwise monotone in cap.
MeanEstimate truncated_inverse_p_mean(double cap, std::int64_t reps,
                                      std::uint64_t seed, std::int64_t n);

// Running mean of the untruncated 1/p under H0, reported at each checkpoint
// (sorted ascending, last entry = total reps). Shares the stream layout of
// truncated_inverse_p_mean, so checkpoint k is a prefix of checkpoint k+1.
std::vector<MeanEstimate> inverse_p_running_mean(
    const std::vector<std::int64_t>& checkpoints, std::uint64_t seed,
    std::int64_t n);

}  // namespace fbfev
