#include "fbfev/seqstats.hpp"

#include <cmath>
#include <istream>
#include <ostream>

#include <json.hpp>

#include "fbfev/kahan.hpp"

namespace fbfev {

namespace {

void check_invariants(const SufficientStats& s, std::int64_t record) {
  if (s.n < 1) throw BatchFileError(record, "n must be >= 1");
  if (!std::isfinite(s.sum) || !std::isfinite(s.sum_sq))
    throw BatchFileError(record, "sum and sum_sq must be finite");
  // Cauchy-Schwarz: sum_sq >= sum^2 / n, with a small relative slack.
  const double lower = s.sum * s.sum / static_cast<double>(s.n);
  if (s.sum_sq + 1e-9 * std::max(1.0, std::fabs(s.sum_sq)) < lower)
    throw BatchFileError(record, "sum_sq < sum^2/n violates Cauchy-Schwarz");
}

}  // namespace

SufficientStats from_samples(std::span<const double> xs) {
  if (xs.empty())
    throw std::invalid_argument("from_samples: empty batch");
  KahanSum sum;
  KahanSum sum_sq;
  for (double x : xs) {
    if (!std::isfinite(x))
      throw std::domain_error("from_samples: non-finite sample");
    sum.add(x);
    sum_sq.add(x * x);
  }
  return {static_cast<std::int64_t>(xs.size()), sum.sum, sum_sq.sum};
}

SufficientStats combine(const SufficientStats& a, const SufficientStats& b) {
  return {a.n + b.n, a.sum + b.sum, a.sum_sq + b.sum_sq};
}

TStat t_statistic(const SufficientStats& s) {
  if (s.n < 2) throw std::domain_error("t_statistic: requires n >= 2");
  const double n = static_cast<double>(s.n);
  const double mean = s.sum / n;
  const double var = (s.sum_sq - s.sum * s.sum / n) / (n - 1.0);
  // Relative threshold: cancellation noise in var is ~2^-52 * sum_sq / (n-1),
  // so 1e-12 * (sum_sq / n) sits ~4000x above it at every n and every data
  // scale. An absolute floor would wrongly reject tiny-magnitude data.
  const double eps = 1e-12 * (s.sum_sq / n);
  if (!(var > eps))
    throw DegenerateVarianceError(
        "t_statistic: sample variance is degenerate (constant data)");
  const double t = mean * std::sqrt(n) / std::sqrt(var);
  return {t, s.n - 1, s.n};
}

std::string to_json_line(const SufficientStats& s) {
  nlohmann::json j;
  j["n"] = s.n;
  j["sum"] = s.sum;
  j["sum_sq"] = s.sum_sq;
  return j.dump();
}

void write_batch_file(std::ostream& out,
                      std::span<const SufficientStats> batches) {
  for (const auto& s : batches) out << to_json_line(s) << '\n';
}

std::vector<SufficientStats> read_batch_file(std::istream& in) {
  std::vector<SufficientStats> batches;
  std::string line;
  std::int64_t record = 0;
  while (std::getline(in, line)) {
    ++record;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw BatchFileError(record, std::string("invalid JSON: ") + e.what());
    }
    if (!j.is_object() || !j.contains("n") || !j.contains("sum") ||
        !j.contains("sum_sq"))
      throw BatchFileError(record, "expected object with n, sum, sum_sq");
    SufficientStats s;
    try {
      s.n = j.at("n").get<std::int64_t>();
      s.sum = j.at("sum").get<double>();
      s.sum_sq = j.at("sum_sq").get<double>();
    } catch (const nlohmann::json::exception& e) {
      throw BatchFileError(record, std::string("bad field type: ") + e.what());
    }
    check_invariants(s, record);
    batches.push_back(s);
  }
  return batches;
}

}  // namespace fbfev
