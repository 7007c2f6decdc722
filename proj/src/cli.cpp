#include "fbfev/cli.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fbfev/evidence.hpp"
#include "fbfev/kahan.hpp"
#include "fbfev/mc.hpp"
#include "fbfev/seqstats.hpp"

namespace fbfev {

namespace {

using nlohmann::ordered_json;

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = s.find(sep, start);
    if (pos == std::string::npos) {
      out.push_back(s.substr(start));
      return out;
    }
    out.push_back(s.substr(start, pos - start));
    start = pos + 1;
  }
}

double parse_double(const std::string& raw) {
  const std::string s = trim(raw);
  if (s.empty()) throw std::invalid_argument("empty number");
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size())
    throw std::invalid_argument("bad number: '" + raw + "'");
  return v;
}

// Snaps a grid point like 0.30000000000000004 (= 3 * 0.1 in binary) to the
// nearest short decimal so emitted delta columns stay readable.
double snap_grid_point(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return std::strtod(buf, nullptr);
}

template <typename T>
T csv_number(const std::string& field, std::int64_t line) {
  T v{};
  const char* first = field.data();
  const char* last = field.data() + field.size();
  const auto res = std::from_chars(first, last, v);
  if (res.ec != std::errc() || res.ptr != last)
    throw std::runtime_error("CSV line " + std::to_string(line) +
                             ": bad numeric field '" + field + "'");
  return v;
}

void print_table(std::ostream& out, const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width;
  for (const auto& row : rows) {
    if (width.size() < row.size()) width.resize(row.size(), 0);
    for (std::size_t i = 0; i < row.size(); ++i)
      width[i] = std::max(width[i], row[i].size());
  }
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      out << row[i];
      if (i + 1 < row.size())
        out << std::string(width[i] - row[i].size() + 2, ' ');
    }
    out << '\n';
  }
}

// ---------------------------------------------------------------- options

struct CurveOpts {
  std::int64_t n = 20;
  std::int64_t reps = 1000000;
  std::uint64_t seed = 42;
  int threads = 0;
  std::string deltas_spec = "0:1.5:0.1";
  std::vector<double> fractions = {0.1, 0.3, 0.5, 0.8};
  std::vector<double> haar_scales;
  bool inverse_p = false;
  std::string out_path;
  std::string format = "csv";
  std::string estimand = "log-of-mean";
};

struct SafetyOpts {
  std::int64_t n = 20;
  std::int64_t reps = 1000000;
  std::uint64_t seed = 42;
  int threads = 0;
  std::vector<double> fractions = {0.1, 0.3, 0.5, 0.8};
  std::vector<double> haar_scales;
  std::vector<std::string> expect_unsafe = {"inverse-p"};
  std::string out_path;
  std::string format = "csv";
};

struct SequentialOpts {
  std::string batches_path;
  double fraction = 0.0;
  std::int64_t n_total = -1;
};

struct PvalueOpts {
  std::int64_t n = 20;
  std::int64_t reps = 1000000;
  std::uint64_t seed = 42;
  std::vector<double> caps = {10.0, 100.0, 1000.0};
};

// ------------------------------------------------------------- emission

ordered_json method_json(const Method& m) {
  ordered_json j;
  j["method"] = method_label(m.kind);
  j["param"] = m.kind == MethodKind::inverse_p ? 0.0 : m.param;
  return j;
}

ordered_json make_meta(const std::string& command, const MCConfig& config,
                       const std::string& estimand) {
  ordered_json meta;
  meta["tool"] = "fbfev";
  meta["version"] = kCliVersion;
  meta["command"] = command;
  ordered_json cfg;
  cfg["n"] = config.n;
  cfg["reps"] = config.reps;
  cfg["seed"] = config.seed;
  cfg["threads"] = config.threads;
  cfg["estimand"] = estimand;
  cfg["deltas"] = config.deltas;
  cfg["methods"] = ordered_json::array();
  for (const auto& m : config.methods) cfg["methods"].push_back(method_json(m));
  meta["config"] = cfg;
  return meta;
}

std::vector<CurveRow> to_rows(const EvidenceCurve& curve, bool mean_of_log) {
  std::vector<CurveRow> rows;
  rows.reserve(curve.cells.size());
  for (const auto& c : curve.cells) {
    CurveRow r;
    r.delta = c.delta;
    r.method = method_label(c.method.kind);
    r.param = c.method.kind == MethodKind::inverse_p ? 0.0 : c.method.param;
    r.log_expected_evidence = mean_of_log ? c.mean_log_e : c.log_mean_e;
    r.std_error = mean_of_log ? c.mean_log_se : c.log_mean_se;
    r.reps = c.reps;
    r.n = c.n;
    r.seed = c.seed;
    rows.push_back(std::move(r));
  }
  return rows;
}

void emit_rows(const std::vector<CurveRow>& rows, const std::string& format,
               const std::string& out_path, const ordered_json& meta,
               std::ostream& fallback) {
  std::ofstream file;
  std::ostream* target = &fallback;
  if (!out_path.empty()) {
    file.open(out_path, std::ios::binary);  // binary: exactly LF newlines
    if (!file)
      throw std::invalid_argument("cannot open output path: " + out_path);
    target = &file;
  }
  if (format == "json") {
    ordered_json doc;
    doc["meta"] = meta;
    doc["rows"] = ordered_json::array();
    for (const auto& r : rows) {
      ordered_json j;
      j["delta"] = r.delta;
      j["method"] = r.method;
      j["param"] = r.param;
      j["log_expected_evidence"] = r.log_expected_evidence;
      j["std_error"] = r.std_error;
      j["reps"] = r.reps;
      j["n"] = r.n;
      j["seed"] = r.seed;
      doc["rows"].push_back(std::move(j));
    }
    *target << doc.dump(2) << '\n';
  } else {
    write_curve_csv(*target, rows);
  }
  if (file.is_open()) {
    file.flush();
    if (!file) throw std::runtime_error("write failed: " + out_path);
  }
}

// Returns true (after reporting) if any cell of the sweep failed.
bool report_cell_failures(const EvidenceCurve& curve, std::ostream& err) {
  bool any = false;
  for (const auto& c : curve.cells) {
    if (!c.failed) continue;
    any = true;
    err << "error: cell delta=" << format_double(c.delta) << " method="
        << method_label(c.method.kind) << ": " << c.error << '\n';
  }
  return any;
}

// ------------------------------------------------------------- commands

int cmd_curve(const CurveOpts& o, std::ostream& out, std::ostream& err) {
  MCConfig config;
  config.n = o.n;
  config.reps = o.reps;
  config.seed = o.seed;
  config.threads = o.threads;
  config.deltas = parse_delta_spec(o.deltas_spec);
  for (const double b : o.fractions) {
    make_fraction(b, o.n);  // domain errors become exit code 2 here
    config.methods.push_back(Method::fbf(b));
  }
  for (const double r : o.haar_scales) config.methods.push_back(Method::haar(r));
  if (o.inverse_p) config.methods.push_back(Method::inverse_p());

  const EvidenceCurve curve = sweep(config);
  if (report_cell_failures(curve, err)) return 3;
  emit_rows(to_rows(curve, o.estimand == "mean-of-log"), o.format, o.out_path,
            make_meta("curve", config, o.estimand), out);
  return 0;
}

int cmd_safety(const SafetyOpts& o, std::ostream& out, std::ostream& err) {
  static const std::string kLabels = "fbf, haar, inverse-p";
  std::set<MethodKind> exempt;
  for (const auto& raw : o.expect_unsafe) {
    const std::string tok = trim(raw);
    if (tok == "inverse-p" || tok == "invp")
      exempt.insert(MethodKind::inverse_p);
    else if (tok == "fbf")
      exempt.insert(MethodKind::fbf);
    else if (tok == "haar")
      exempt.insert(MethodKind::haar_bf);
    else
      throw std::invalid_argument("--expect-unsafe: unknown method '" + tok +
                                  "' (expected one of: " + kLabels + ")");
  }

  MCConfig config;
  config.n = o.n;
  config.reps = o.reps;
  config.seed = o.seed;
  config.threads = o.threads;
  config.deltas = {0.0};
  for (const double b : o.fractions) {
    make_fraction(b, o.n);
    config.methods.push_back(Method::fbf(b));
  }
  for (const double r : o.haar_scales) config.methods.push_back(Method::haar(r));
  config.methods.push_back(Method::inverse_p());

  const EvidenceCurve curve = sweep(config);
  if (report_cell_failures(curve, err)) return 3;

  out << "safety check under H0 (delta = 0): n=" << o.n << " reps=" << o.reps
      << " seed=" << o.seed << '\n'
      << "PASS means ln E[E] <= 0 + 3*std_error\n";
  std::vector<std::vector<std::string>> table;
  table.push_back({"method", "param", "ln_E[E]", "std_error", "verdict"});
  bool overall = true;
  for (const auto& c : curve.cells) {
    const bool pass = c.log_mean_e <= 3.0 * c.log_mean_se;
    const bool is_exempt = exempt.count(c.method.kind) > 0;
    if (!pass && !is_exempt) overall = false;
    std::string verdict = pass ? "PASS" : "FAIL";
    if (!pass && is_exempt) verdict += " (expected unsafe)";
    table.push_back({method_label(c.method.kind),
                     c.method.kind == MethodKind::inverse_p
                         ? "-"
                         : format_double(c.method.param),
                     format_double(c.log_mean_e), format_double(c.log_mean_se),
                     verdict});
  }
  print_table(out, table);
  out << "overall: " << (overall ? "PASS" : "FAIL") << '\n';

  if (!o.out_path.empty())
    emit_rows(to_rows(curve, false), o.format, o.out_path,
              make_meta("safety", config, "log-of-mean"), out);
  if (!overall) {
    err << "error: safety check failed for a method expected to be safe\n";
    return 3;
  }
  return 0;
}

int cmd_sequential(const SequentialOpts& o, std::ostream& out,
                   std::ostream& err) {
  std::ifstream in(o.batches_path);
  if (!in)
    throw std::invalid_argument("cannot open batches file: " + o.batches_path);
  const std::vector<SufficientStats> batches = read_batch_file(in);
  if (batches.empty())
    throw std::invalid_argument("batches file has no records: " +
                                o.batches_path);

  std::int64_t total_n = 0;
  for (const auto& b : batches) total_n += b.n;
  if (o.n_total >= 0 && total_n != o.n_total)
    throw std::invalid_argument(
        "combined n is " + std::to_string(total_n) + " but --n-total says " +
        std::to_string(o.n_total));
  make_fraction(o.fraction, total_n);  // must be valid for the combined data

  out << "sequential FBF recomputation: fraction b = "
      << format_double(o.fraction) << ", combined n = " << total_n << '\n';
  std::vector<std::vector<std::string>> table;
  table.push_back({"batch", "n", "sum", "sum_sq", "t", "log_evidence"});

  SufficientStats running{};
  KahanSum re_sum, re_sum_sq;  // independent re-combination route
  std::int64_t re_n = 0;
  double max_disc = 0.0;
  bool compared = false;
  for (std::size_t k = 0; k < batches.size(); ++k) {
    running = k == 0 ? batches[k] : combine(running, batches[k]);
    re_n += batches[k].n;
    re_sum.add(batches[k].sum);
    re_sum_sq.add(batches[k].sum_sq);

    std::string t_str = "-";
    std::string le_str = "-";
    try {
      const TStat ts = t_statistic(running);
      t_str = format_double(ts.t);
      const Fraction frac = make_fraction(o.fraction, running.n);
      const double le = fbf_log_evidence(ts, frac).log_e;
      le_str = format_double(le);
      const SufficientStats re{re_n, re_sum.sum, re_sum_sq.sum};
      const double le_re = fbf_log_evidence(t_statistic(re), frac).log_e;
      max_disc = std::max(max_disc, std::fabs(le - le_re));
      compared = true;
    } catch (const DegenerateVarianceError&) {
    } catch (const std::domain_error&) {
      // fraction or sample size not yet valid at this prefix
    }
    table.push_back({std::to_string(k + 1), std::to_string(running.n),
                     format_double(running.sum), format_double(running.sum_sq),
                     t_str, le_str});
  }
  print_table(out, table);

  if (!compared) {
    err << "error: evidence could not be computed for any batch prefix\n";
    return 3;
  }
  const bool pass = max_disc <= 1e-10;
  out << "max |incremental - recombined| log evidence discrepancy = "
      << format_double(max_disc) << " (tolerance 1e-10)\n"
      << "coherence: " << (pass ? "PASS" : "FAIL") << '\n';
  if (!pass) {
    err << "error: sequential coherence check failed\n";
    return 3;
  }
  return 0;
}

int cmd_pvalue_demo(const PvalueOpts& o, std::ostream& out, std::ostream&) {
  for (const double cap : o.caps)
    if (!(cap > 1.0) || !std::isfinite(cap))
      throw std::invalid_argument("--caps: every cap must be finite and > 1");

  out << "reciprocal-p evidence under H0: n=" << o.n << " reps=" << o.reps
      << " seed=" << o.seed << '\n'
      << "truncated means E[min(1/p, cap)] (analytic truth 1 + ln cap):\n";
  std::vector<std::vector<std::string>> table;
  table.push_back({"cap", "empirical", "analytic", "std_error"});
  for (const double cap : o.caps) {
    const MeanEstimate est = truncated_inverse_p_mean(cap, o.reps, o.seed, o.n);
    table.push_back({format_double(cap), format_double(est.value),
                     format_double(1.0 + std::log(cap)),
                     format_double(est.std_error)});
  }
  print_table(out, table);

  const std::int64_t early = std::max<std::int64_t>(100, o.reps / 100);
  std::vector<std::int64_t> checkpoints;
  if (early < o.reps) checkpoints = {early, o.reps};
  else checkpoints = {o.reps};
  const auto running = inverse_p_running_mean(checkpoints, o.seed, o.n);

  out << "running mean of untruncated 1/p:\n";
  std::vector<std::vector<std::string>> rt;
  rt.push_back({"reps", "mean", "std_error"});
  for (const auto& r : running)
    rt.push_back({std::to_string(r.reps), format_double(r.value),
                  format_double(r.std_error)});
  print_table(out, rt);

  if (running.size() == 2) {
    const double diff = std::fabs(running[1].value - running[0].value);
    const double comb =
        std::hypot(running[0].std_error, running[1].std_error);
    out << "drift between checkpoints: " << format_double(diff) << " = "
        << format_double(comb > 0.0 ? diff / comb : 0.0)
        << " combined std errors (the mean of 1/p never converges: "
           "E_H0[1/p] is infinite)\n";
  }
  return 0;
}

}  // namespace

// ------------------------------------------------------------ public API

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::vector<double> parse_delta_spec(const std::string& spec) {
  std::vector<double> deltas;
  if (spec.find(':') != std::string::npos) {
    const auto parts = split(spec, ':');
    if (parts.size() != 3)
      throw std::invalid_argument("delta grid must be lo:hi:step, got '" +
                                  spec + "'");
    const double lo = parse_double(parts[0]);
    const double hi = parse_double(parts[1]);
    const double step = parse_double(parts[2]);
    if (!std::isfinite(lo) || !std::isfinite(hi) || !(step > 0.0) ||
        !std::isfinite(step))
      throw std::invalid_argument("delta grid needs finite lo <= hi, step > 0");
    if (hi < lo)
      throw std::invalid_argument("delta grid needs lo <= hi");
    for (std::int64_t i = 0;; ++i) {
      const double v = lo + static_cast<double>(i) * step;
      if (v > hi + 1e-6 * step) break;
      deltas.push_back(snap_grid_point(v));
      if (deltas.size() > 100000)
        throw std::invalid_argument("delta grid has too many points");
    }
  } else {
    for (const auto& tok : split(spec, ','))
      deltas.push_back(parse_double(tok));
  }
  if (deltas.empty())
    throw std::invalid_argument("no deltas given");
  for (const double d : deltas)
    if (!std::isfinite(d))
      throw std::invalid_argument("deltas must be finite");
  std::sort(deltas.begin(), deltas.end());
  return deltas;
}

void write_curve_csv(std::ostream& out, const std::vector<CurveRow>& rows) {
  out << kCsvHeader << '\n';
  for (const auto& r : rows) {
    out << format_double(r.delta) << ',' << r.method << ','
        << format_double(r.param) << ',' << format_double(r.log_expected_evidence)
        << ',' << format_double(r.std_error) << ',' << r.reps << ',' << r.n
        << ',' << r.seed << '\n';
  }
}

std::vector<CurveRow> parse_curve_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line))
    throw std::runtime_error("CSV input is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kCsvHeader)
    throw std::runtime_error("unexpected CSV header: '" + line + "'");
  std::vector<CurveRow> rows;
  std::int64_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split(line, ',');
    if (fields.size() != 8)
      throw std::runtime_error("CSV line " + std::to_string(lineno) +
                               ": expected 8 fields, got " +
                               std::to_string(fields.size()));
    CurveRow r;
    r.delta = csv_number<double>(fields[0], lineno);
    r.method = fields[1];
    r.param = csv_number<double>(fields[2], lineno);
    r.log_expected_evidence = csv_number<double>(fields[3], lineno);
    r.std_error = csv_number<double>(fields[4], lineno);
    r.reps = csv_number<std::int64_t>(fields[5], lineno);
    r.n = csv_number<std::int64_t>(fields[6], lineno);
    r.seed = csv_number<std::uint64_t>(fields[7], lineno);
    if (r.method.empty())
      throw std::runtime_error("CSV line " + std::to_string(lineno) +
                               ": empty method field");
    rows.push_back(std::move(r));
  }
  return rows;
}

int run_cli(int argc, const char* const* argv, std::ostream& out,
            std::ostream& err) {
  CurveOpts curve_o;
  SafetyOpts safety_o;
  SequentialOpts seq_o;
  PvalueOpts pv_o;

  CLI::App app{"Fractional-Bayes-factor e-values for the one-sample t test"};
  app.set_version_flag("--version", std::string("fbfev ") + kCliVersion);
  app.set_config("--config", "",
                 "Read defaults from an INI/TOML file (flags take precedence)");
  app.require_subcommand(1);

  const auto add_mc_opts = [](CLI::App* cmd, std::int64_t& n, std::int64_t& reps,
                              std::uint64_t& seed) {
    cmd->add_option("--n", n, "Samples per simulated dataset")
        ->check(CLI::Range(std::int64_t{2}, std::int64_t{1} << 32))
        ->capture_default_str();
    cmd->add_option("--reps", reps, "Monte Carlo replications per cell")
        ->check(CLI::Range(std::int64_t{100}, std::int64_t{1} << 40))
        ->capture_default_str();
    cmd->add_option("--seed", seed, "Master RNG seed")->capture_default_str();
  };

  auto* curve =
      app.add_subcommand("curve", "Estimate log expected evidence over a "
                                  "grid of standardized effects");
  add_mc_opts(curve, curve_o.n, curve_o.reps, curve_o.seed);
  curve->add_option("--threads", curve_o.threads,
                    "Worker threads (0 = hardware concurrency)")
      ->capture_default_str();
  curve->add_option("--deltas", curve_o.deltas_spec,
                    "Standardized effects: comma list or lo:hi:step")
      ->capture_default_str();
  curve->add_option("--fractions", curve_o.fractions,
                    "FBF training fractions b, each in (1/n, 1]")
      ->delimiter(',')
      ->capture_default_str();
  curve->add_option("--haar-scale", curve_o.haar_scales,
                    "Cauchy scales r for the Haar-prior Bayes factor")
      ->delimiter(',');
  curve->add_flag("--inverse-p", curve_o.inverse_p,
                  "Also tabulate the reciprocal-p pseudo-evidence");
  curve->add_option("--out", curve_o.out_path, "Output file (default stdout)");
  curve->add_option("--format", curve_o.format, "Output format")
      ->check(CLI::IsMember({"csv", "json"}))
      ->capture_default_str();
  curve->add_option("--estimand", curve_o.estimand,
                    "Which estimate fills the value column")
      ->check(CLI::IsMember({"log-of-mean", "mean-of-log"}))
      ->capture_default_str();

  auto* safety = app.add_subcommand(
      "safety", "Check ln E[E] <= 0 + 3*std_error under H0 per method");
  add_mc_opts(safety, safety_o.n, safety_o.reps, safety_o.seed);
  safety->add_option("--threads", safety_o.threads,
                     "Worker threads (0 = hardware concurrency)")
      ->capture_default_str();
  safety->add_option("--fractions", safety_o.fractions,
                     "FBF training fractions b, each in (1/n, 1]")
      ->delimiter(',')
      ->capture_default_str();
  safety->add_option("--haar-scale", safety_o.haar_scales,
                     "Cauchy scales r for the Haar-prior Bayes factor")
      ->delimiter(',');
  safety->add_option("--expect-unsafe", safety_o.expect_unsafe,
                     "Methods whose FAIL does not affect the exit code")
      ->delimiter(',')
      ->capture_default_str();
  safety->add_option("--out", safety_o.out_path,
                     "Also write the delta=0 rows to this file");
  safety->add_option("--format", safety_o.format, "Output format for --out")
      ->check(CLI::IsMember({"csv", "json"}))
      ->capture_default_str();

  auto* sequential = app.add_subcommand(
      "sequential", "Recompute FBF evidence over prefixes of a batch file");
  sequential
      ->add_option("--batches", seq_o.batches_path,
                   "JSON-lines file with records {\"n\",\"sum\",\"sum_sq\"}")
      ->required();
  sequential
      ->add_option("--fraction", seq_o.fraction,
                   "FBF training fraction b (validated for the combined n)")
      ->required();
  sequential->add_option(
      "--n-total", seq_o.n_total,
      "Expected combined sample size (checked against the file)");

  auto* pvalue = app.add_subcommand(
      "pvalue-demo", "Show that the mean of 1/p diverges under H0");
  add_mc_opts(pvalue, pv_o.n, pv_o.reps, pv_o.seed);
  pvalue->add_option("--caps", pv_o.caps, "Truncation caps (each > 1)")
      ->delimiter(',')
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (app.got_subcommand(curve)) return cmd_curve(curve_o, out, err);
    if (app.got_subcommand(safety)) return cmd_safety(safety_o, out, err);
    if (app.got_subcommand(sequential)) return cmd_sequential(seq_o, out, err);
    if (app.got_subcommand(pvalue)) return cmd_pvalue_demo(pv_o, out, err);
  } catch (const BatchFileError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::logic_error& e) {  // invalid_argument, domain_error
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {  // quadrature / numeric / I/O failures
    err << "error: " << e.what() << '\n';
    return 3;
  }
  err << "error: no command given\n";
  return 2;
}

}  // namespace fbfev
