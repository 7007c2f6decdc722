#include "fbfev/mc.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <mutex>
#include <stdexcept>
#include <thread>

#include "fbfev/kahan.hpp"
#include "fbfev/specfun.hpp"

namespace fbfev {

namespace {

constexpr std::int64_t kShardSize = 65536;
constexpr std::uint64_t kPvalueStreamTag = 0x70766465656d6f31ULL;
constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

// Per-shard reduction of one block of replications. max_log anchors the
// shard-local log-sum-exp; partials merge exactly in shard order later.
struct ShardPartial {
  double max_log = -std::numeric_limits<double>::infinity();
  double sum_exp = 0.0;     // sum of exp(log_e - max_log)
  double sum_exp_sq = 0.0;  // sum of exp(2 (log_e - max_log))
  double sum_log = 0.0;
  double sum_log_sq = 0.0;
  std::int64_t count = 0;
  std::int64_t retries = 0;
};

using Evaluator = std::function<double(const TStat&)>;

Evaluator make_evaluator(const Method& method, std::int64_t n) {
  switch (method.kind) {
    case MethodKind::fbf: {
      const Fraction frac = make_fraction(method.param, n);
      return [frac](const TStat& ts) { return fbf_log_evidence(ts, frac).log_e; };
    }
    case MethodKind::haar_bf: {
      const double r = method.param;
      if (!(r > 0.0) || !std::isfinite(r))
        throw std::domain_error("haar method: requires scale r > 0");
      return [r](const TStat& ts) { return haar_log_bf(ts, r).log_e; };
    }
    case MethodKind::inverse_p:
      return [](const TStat& ts) { return inverse_p_log_evidence(ts).log_e; };
  }
  throw std::logic_error("make_evaluator: unknown method kind");
}

ShardPartial run_shard(const Evaluator& eval, std::int64_t n, double delta,
                       std::uint64_t stream_seed, std::int64_t count) {
  std::vector<double> log_e(static_cast<std::size_t>(count));
  SplitMix64 stream(stream_seed);
  ShardPartial part;
  part.count = count;
  for (std::int64_t i = 0; i < count; ++i) {
    const TStat ts = simulate_t(n, delta, stream, &part.retries);
    log_e[static_cast<std::size_t>(i)] = eval(ts);
  }
  for (double v : log_e) part.max_log = std::max(part.max_log, v);
  KahanSum se, se2, sl, sl2;
  for (double v : log_e) {
    const double d = v - part.max_log;
    se.add(std::exp(d));
    se2.add(std::exp(2.0 * d));
    sl.add(v);
    sl2.add(v * v);
  }
  part.sum_exp = se.sum;
  part.sum_exp_sq = se2.sum;
  part.sum_log = sl.sum;
  part.sum_log_sq = sl2.sum;
  return part;
}

CellEstimate reduce_cell(const std::vector<ShardPartial>& parts, double delta,
                         const Method& method, std::int64_t n,
                         std::uint64_t seed) {
  CellEstimate cell;
  cell.delta = delta;
  cell.method = method;
  cell.n = n;
  cell.seed = seed;

  double max_log = -std::numeric_limits<double>::infinity();
  for (const auto& p : parts)
    if (p.count > 0) max_log = std::max(max_log, p.max_log);

  KahanSum total_exp, total_exp_sq, total_log, total_log_sq;
  for (const auto& p : parts) {
    if (p.count == 0) continue;
    const double scale = std::exp(p.max_log - max_log);
    total_exp.add(p.sum_exp * scale);
    total_exp_sq.add(p.sum_exp_sq * scale * scale);
    total_log.add(p.sum_log);
    total_log_sq.add(p.sum_log_sq);
    cell.reps += p.count;
    cell.retries += p.retries;
  }
  const double r = static_cast<double>(cell.reps);

  cell.log_mean_e = max_log + std::log(total_exp.sum) - std::log(r);
  // Delta method for the log of the mean: se = sqrt((M2/M1^2 - 1)/R), with
  // the second-moment ratio formed from the shared max_log anchor.
  const double moment_ratio = total_exp_sq.sum * r / (total_exp.sum * total_exp.sum);
  cell.log_mean_se = std::sqrt(std::max(moment_ratio - 1.0, 0.0) / r);

  cell.mean_log_e = total_log.sum / r;
  const double var_log =
      (total_log_sq.sum - total_log.sum * total_log.sum / r) / (r - 1.0);
  cell.mean_log_se = std::sqrt(std::max(var_log, 0.0) / r);
  return cell;
}

void validate_config(const MCConfig& config) {
  if (config.reps < 100)
    throw std::invalid_argument("mc: reps must be >= 100");
  if (config.n < 2) throw std::invalid_argument("mc: n must be >= 2");
  if (config.deltas.empty())
    throw std::invalid_argument("mc: at least one delta required");
  if (config.methods.empty())
    throw std::invalid_argument("mc: at least one method required");
  for (std::size_t i = 0; i < config.deltas.size(); ++i) {
    if (!std::isfinite(config.deltas[i]))
      throw std::invalid_argument("mc: deltas must be finite");
    if (i > 0 && config.deltas[i] < config.deltas[i - 1])
      throw std::invalid_argument("mc: deltas must be sorted ascending");
  }
  for (const auto& m : config.methods) {
    try {
      make_evaluator(m, config.n);
    } catch (const std::exception& e) {
      throw std::invalid_argument(std::string("mc: invalid method: ") + e.what());
    }
  }
}

}  // namespace

TStat simulate_t(std::int64_t n, double delta, SplitMix64& stream,
                 std::int64_t* retries) {
  if (n < 2) throw std::domain_error("simulate_t: requires n >= 2");
  static thread_local std::vector<double> xs;
  xs.resize(static_cast<std::size_t>(n));
  for (int attempt = 0; attempt < 100; ++attempt) {
    for (auto& x : xs)
      x = delta + normal_quantile(uniform_open01(stream.next()));
    try {
      return t_statistic(from_samples(xs));
    } catch (const DegenerateVarianceError&) {
      if (retries) ++*retries;  // measure-zero event with continuous draws
    }
  }
  throw std::runtime_error(
      "simulate_t: 100 consecutive degenerate draws (internal fault)");
}

EvidenceCurve sweep(const MCConfig& config) {
  validate_config(config);
  const std::size_t n_deltas = config.deltas.size();
  const std::size_t n_methods = config.methods.size();
  const std::size_t n_cells = n_deltas * n_methods;
  const std::int64_t shards_per_cell =
      (config.reps + kShardSize - 1) / kShardSize;
  const std::size_t n_tasks = n_cells * static_cast<std::size_t>(shards_per_cell);

  std::vector<Evaluator> evaluators;
  evaluators.reserve(n_methods);
  for (const auto& m : config.methods)
    evaluators.push_back(make_evaluator(m, config.n));

  std::vector<ShardPartial> partials(n_tasks);
  std::vector<std::string> cell_errors(n_cells);
  std::mutex error_mutex;
  std::atomic<std::size_t> next_task{0};

  const auto worker = [&]() {
    for (;;) {
      const std::size_t task = next_task.fetch_add(1);
      if (task >= n_tasks) return;
      const std::size_t cell = task / static_cast<std::size_t>(shards_per_cell);
      const std::int64_t shard =
          static_cast<std::int64_t>(task % static_cast<std::size_t>(shards_per_cell));
      const std::size_t d = cell / n_methods;
      const std::size_t m = cell % n_methods;
      const std::int64_t lo = shard * kShardSize;
      const std::int64_t count = std::min(kShardSize, config.reps - lo);
      try {
        partials[task] = run_shard(
            evaluators[m], config.n, config.deltas[d],
            derive_stream(config.seed, static_cast<std::uint64_t>(d),
                          static_cast<std::uint64_t>(m),
                          static_cast<std::uint64_t>(shard)),
            count);
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (cell_errors[cell].empty()) cell_errors[cell] = e.what();
      }
    }
  };

  unsigned n_threads = config.threads > 0
                           ? static_cast<unsigned>(config.threads)
                           : std::max(1u, std::thread::hardware_concurrency());
  n_threads = static_cast<unsigned>(
      std::min<std::size_t>(n_threads, n_tasks));
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(n_threads);
    for (unsigned i = 0; i < n_threads; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  EvidenceCurve curve;
  curve.n = config.n;
  curve.reps = config.reps;
  curve.seed = config.seed;
  curve.deltas = config.deltas;
  curve.methods = config.methods;
  curve.cells.reserve(n_cells);
  std::vector<ShardPartial> cell_parts(static_cast<std::size_t>(shards_per_cell));
  for (std::size_t cell = 0; cell < n_cells; ++cell) {
    const std::size_t d = cell / n_methods;
    const std::size_t m = cell % n_methods;
    if (!cell_errors[cell].empty()) {
      CellEstimate failed;
      failed.delta = config.deltas[d];
      failed.method = config.methods[m];
      failed.n = config.n;
      failed.seed = config.seed;
      failed.reps = config.reps;
      failed.log_mean_e = failed.log_mean_se = kNan;
      failed.mean_log_e = failed.mean_log_se = kNan;
      failed.failed = true;
      failed.error = cell_errors[cell];
      curve.cells.push_back(std::move(failed));
      continue;
    }
    for (std::int64_t s = 0; s < shards_per_cell; ++s)
      cell_parts[static_cast<std::size_t>(s)] =
          partials[cell * static_cast<std::size_t>(shards_per_cell) +
                   static_cast<std::size_t>(s)];
    curve.cells.push_back(reduce_cell(cell_parts, config.deltas[d],
                                      config.methods[m], config.n,
                                      config.seed));
  }
  return curve;
}

CellEstimate log_expected_evidence(const Method& method, std::int64_t n,
                                   double delta, std::int64_t reps,
                                   std::uint64_t seed) {
  MCConfig config;
  config.n = n;
  config.reps = reps;
  config.seed = seed;
  config.deltas = {delta};
  config.methods = {method};
  config.threads = 1;
  return sweep(config).cells.front();
}

MeanEstimate truncated_inverse_p_mean(double cap, std::int64_t reps,
                                      std::uint64_t seed, std::int64_t n) {
  if (!(cap > 1.0))
    throw std::domain_error("truncated_inverse_p_mean: requires cap > 1");
  if (reps < 100)
    throw std::invalid_argument("truncated_inverse_p_mean: reps must be >= 100");
  SplitMix64 stream(derive_stream(seed, kPvalueStreamTag, 0, 0));
  KahanSum sum, sum_sq;
  for (std::int64_t i = 0; i < reps; ++i) {
    const TStat ts = simulate_t(n, 0.0, stream);
    const double x = std::min(1.0 / student_t_two_sided_p(ts.t, ts.df), cap);
    sum.add(x);
    sum_sq.add(x * x);
  }
  const double r = static_cast<double>(reps);
  const double mean = sum.sum / r;
  const double var = (sum_sq.sum - sum.sum * sum.sum / r) / (r - 1.0);
  return {mean, std::sqrt(std::max(var, 0.0) / r), reps};
}

std::vector<MeanEstimate> inverse_p_running_mean(
    const std::vector<std::int64_t>& checkpoints, std::uint64_t seed,
    std::int64_t n) {
  if (checkpoints.empty())
    throw std::invalid_argument("inverse_p_running_mean: no checkpoints");
  for (std::size_t i = 0; i < checkpoints.size(); ++i) {
    if (checkpoints[i] < 100)
      throw std::invalid_argument(
          "inverse_p_running_mean: checkpoints must be >= 100");
    if (i > 0 && checkpoints[i] <= checkpoints[i - 1])
      throw std::invalid_argument(
          "inverse_p_running_mean: checkpoints must be strictly ascending");
  }
  // Same stream tag as truncated_inverse_p_mean: for a fixed seed both walk
  // the identical p-value sequence.
  SplitMix64 stream(derive_stream(seed, kPvalueStreamTag, 0, 0));
  std::vector<MeanEstimate> out;
  out.reserve(checkpoints.size());
  KahanSum sum, sum_sq;
  std::int64_t done = 0;
  for (const std::int64_t stop : checkpoints) {
    for (; done < stop; ++done) {
      const TStat ts = simulate_t(n, 0.0, stream);
      const double x = 1.0 / student_t_two_sided_p(ts.t, ts.df);
      sum.add(x);
      sum_sq.add(x * x);
    }
    const double r = static_cast<double>(done);
    const double mean = sum.sum / r;
    const double var = (sum_sq.sum - sum.sum * sum.sum / r) / (r - 1.0);
    out.push_back({mean, std::sqrt(std::max(var, 0.0) / r), done});
  }
  return out;
}

}  // namespace fbfev
