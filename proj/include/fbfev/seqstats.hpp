#pragma once

// Sufficient statistics (n, sum, sum of squares) for batched one-sample
// data, their combination, and the t statistic. Batches are immutable
// values; combining returns a new value.

#include <cstdint>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace fbfev {

struct SufficientStats {
  std::int64_t n = 0;
  double sum = 0.0;     // sum of x_i
  double sum_sq = 0.0;  // sum of x_i^2
};

struct TStat {
  double t = 0.0;
  std::int64_t df = 0;  // n - 1
  std::int64_t n = 0;
};

// Raised by t_statistic when the sample variance is (relatively)
// indistinguishable from zero, i.e. the data are constant.
class DegenerateVarianceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised when a batch file record cannot be parsed or violates the
// SufficientStats invariants. `record` is the 1-based line number.
class BatchFileError : public std::runtime_error {
 public:
  BatchFileError(std::int64_t record, const std::string& what)
      : std::runtime_error("batch record " + std::to_string(record) + ": " +
                           what),
        record(record) {}
  std::int64_t record;
};

// Accumulates (n, sum, sum_sq) with compensated (Kahan) summation.
SufficientStats from_samples(std::span<const double> xs);

// Componentwise sum; associative and commutative.
SufficientStats combine(const SufficientStats& a, const SufficientStats& b);

// t = mean * sqrt(n) / sd with sd^2 = (sum_sq - sum^2/n) / (n-1).
// Requires n >= 2; throws DegenerateVarianceError when sd^2 <= eps with
// eps = 1e-12 * max(1, sum_sq/n).
TStat t_statistic(const SufficientStats& s);

// Batch file format: one JSON object per line, keys n, sum, sum_sq.
// Doubles are written in shortest round-trip form.
std::string to_json_line(const SufficientStats& s);
void write_batch_file(std::ostream& out, std::span<const SufficientStats> batches);
std::vector<SufficientStats> read_batch_file(std::istream& in);

}  // namespace fbfev
