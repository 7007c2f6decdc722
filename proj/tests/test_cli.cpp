#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fbfev/cli.hpp"
#include "fbfev/seqstats.hpp"

using namespace fbfev;

namespace {

struct RunResult {
  int code;
  std::string out;
  std::string err;
};

RunResult run(const std::vector<std::string>& args) {
  std::vector<const char*> argv;
  argv.push_back("fbfev");
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code =
      run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / name;
}

bool contains(const std::string& hay, const std::string& needle) {
  return hay.find(needle) != std::string::npos;
}

}  // namespace

TEST_CASE("parse_delta_spec accepts comma lists and ranges") {
  CHECK(parse_delta_spec("0,0.5,1.5") ==
        std::vector<double>{0.0, 0.5, 1.5});
  CHECK(parse_delta_spec("1.5,0,0.5") ==
        std::vector<double>{0.0, 0.5, 1.5});  // sorted on the way in
  CHECK(parse_delta_spec("0.7") == std::vector<double>{0.7});

  const auto grid = parse_delta_spec("0:1.5:0.1");
  REQUIRE(grid.size() == 16);
  CHECK(grid.front() == 0.0);
  CHECK(grid.back() == 1.5);
  CHECK(grid[3] == 0.3);  // snapped, not 0.30000000000000004

  const auto single = parse_delta_spec("2:2:0.5");
  REQUIRE(single.size() == 1);
  CHECK(single[0] == 2.0);

  CHECK_THROWS_AS(parse_delta_spec(""), std::invalid_argument);
  CHECK_THROWS_AS(parse_delta_spec("1:0:0.1"), std::invalid_argument);
  CHECK_THROWS_AS(parse_delta_spec("0:1:0"), std::invalid_argument);
  CHECK_THROWS_AS(parse_delta_spec("0:1:-0.5"), std::invalid_argument);
  CHECK_THROWS_AS(parse_delta_spec("a,b"), std::invalid_argument);
  CHECK_THROWS_AS(parse_delta_spec("0,nan"), std::invalid_argument);
  CHECK_THROWS_AS(parse_delta_spec("0:1e9:1e-6"), std::invalid_argument);
}

TEST_CASE("format_double emits shortest round-trip decimal") {
  CHECK(format_double(0.0) == "0");
  CHECK(format_double(0.1) == "0.1");
  CHECK(format_double(-3.5) == "-3.5");
  CHECK(format_double(1.0 / 3.0) == "0.3333333333333333");
  const double v = 0.1234567890123456789;
  double back = 0.0;
  std::istringstream(format_double(v)) >> back;
  CHECK(back == v);
}

TEST_CASE("curve CSV output round-trips exactly") {
  const auto res = run({"curve", "--n", "12", "--reps", "400", "--seed", "5",
                        "--deltas", "0,1", "--fractions", "0.5,1.0"});
  REQUIRE(res.code == 0);
  REQUIRE(res.err.empty());

  std::istringstream is(res.out);
  std::string header;
  std::getline(is, header);
  CHECK(header ==
        "delta,method,param,log_expected_evidence,std_error,reps,n,seed");

  std::istringstream full(res.out);
  const auto rows = parse_curve_csv(full);
  REQUIRE(rows.size() == 4);  // 2 deltas x 2 fractions
  CHECK(rows[0].delta == 0.0);
  CHECK(rows[0].method == "fbf");
  CHECK(rows[0].param == 0.5);
  CHECK(rows[0].reps == 400);
  CHECK(rows[0].n == 12);
  CHECK(rows[0].seed == 5);
  CHECK(rows[3].delta == 1.0);

  // re-serialization reproduces the bytes
  std::ostringstream re;
  write_curve_csv(re, rows);
  CHECK(re.str() == res.out);
}

TEST_CASE("full fraction rows are exactly zero in the CSV") {
  const auto res = run({"curve", "--n", "8", "--reps", "300", "--deltas",
                        "0,0.5,1", "--fractions", "1.0"});
  REQUIRE(res.code == 0);
  std::istringstream is(res.out);
  for (const auto& row : parse_curve_csv(is)) {
    CHECK(row.log_expected_evidence == 0.0);
    CHECK(row.std_error == 0.0);
  }
}

TEST_CASE("curve output is byte-identical across runs and thread counts") {
  const std::vector<std::string> base = {
      "curve",      "--n",     "20",  "--reps",      "100000",
      "--deltas",   "0:0.5:0.25",     "--fractions", "0.1,0.5",
      "--seed",     "77"};
  auto args1 = base;
  args1.push_back("--threads");
  args1.push_back("1");
  auto args4 = base;
  args4.push_back("--threads");
  args4.push_back("4");

  const auto a = run(args1);
  const auto b = run(args1);
  const auto c = run(args4);
  REQUIRE(a.code == 0);
  CHECK(a.out == b.out);
  CHECK(a.out == c.out);
}

TEST_CASE("curve JSON output carries metadata and the same rows") {
  const auto res = run({"curve", "--n", "12", "--reps", "400", "--seed", "5",
                        "--deltas", "0,1", "--fractions", "0.5", "--format",
                        "json", "--inverse-p"});
  REQUIRE(res.code == 0);
  const auto doc = nlohmann::json::parse(res.out);
  CHECK(doc.at("meta").at("tool") == "fbfev");
  CHECK(doc.at("meta").at("command") == "curve");
  CHECK(doc.at("meta").at("config").at("seed") == 5);
  CHECK(doc.at("meta").at("config").at("n") == 12);
  REQUIRE(doc.at("rows").size() == 4);  // 2 deltas x (fbf + invp)
  CHECK(doc.at("rows")[1].at("method") == "invp");
  CHECK(doc.at("rows")[1].at("param") == 0.0);
}

TEST_CASE("estimand flag switches the reported column") {
  const std::vector<std::string> base = {"curve",    "--n",   "20",
                                         "--reps",   "2000",  "--deltas",
                                         "0",        "--fractions", "0.1"};
  auto lom = base;
  lom.push_back("--estimand");
  lom.push_back("log-of-mean");
  auto mol = base;
  mol.push_back("--estimand");
  mol.push_back("mean-of-log");

  std::istringstream is1(run(lom).out), is2(run(mol).out);
  const auto r1 = parse_curve_csv(is1), r2 = parse_curve_csv(is2);
  REQUIRE(r1.size() == 1);
  REQUIRE(r2.size() == 1);
  // Jensen: mean of logs < log of mean, and by a wide margin under H0
  CHECK(r2[0].log_expected_evidence < r1[0].log_expected_evidence - 0.5);
}

TEST_CASE("config file supplies defaults and flags override them") {
  const auto path = temp_file("fbfev_test_config.ini");
  {
    std::ofstream f(path);
    f << "[curve]\n"
      << "reps=500\n"
      << "seed=7\n"
      << "deltas=\"0,1\"\n"
      << "fractions=\"0.5\"\n"
      << "n=10\n";
  }
  const auto res = run({"--config", path.string(), "curve", "--reps", "600"});
  std::filesystem::remove(path);
  REQUIRE(res.code == 0);
  std::istringstream is(res.out);
  const auto rows = parse_curve_csv(is);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].reps == 600);  // flag wins
  CHECK(rows[0].seed == 7);    // config wins over built-in default
  CHECK(rows[0].n == 10);
}

TEST_CASE("curve writes to a file when asked") {
  const auto path = temp_file("fbfev_test_out.csv");
  const auto res = run({"curve", "--n", "10", "--reps", "200", "--deltas", "0",
                        "--fractions", "0.5", "--out", path.string()});
  REQUIRE(res.code == 0);
  CHECK(res.out.empty());

  std::ifstream f(path, std::ios::binary);
  REQUIRE(f.is_open());
  std::stringstream buf;
  buf << f.rdbuf();
  f.close();
  std::filesystem::remove(path);
  std::istringstream is(buf.str());
  CHECK(parse_curve_csv(is).size() == 1);
}

TEST_CASE("usage and configuration errors exit with code 2") {
  CHECK(run({}).code == 2);                        // no subcommand
  CHECK(run({"curve", "--bogus"}).code == 2);      // unknown flag
  CHECK(run({"explode"}).code == 2);               // unknown subcommand
  CHECK(run({"curve", "--reps", "50"}).code == 2);  // below minimum
  CHECK(run({"curve", "--format", "xml"}).code == 2);
  CHECK(run({"curve", "--estimand", "median"}).code == 2);
  CHECK(run({"curve", "--deltas", "1:0:0.1", "--reps", "100"}).code == 2);
  CHECK(run({"curve", "--deltas", "abc", "--reps", "100"}).code == 2);

  // fraction invalid for the sample size: 0.05 <= 1/20
  const auto res = run({"curve", "--n", "20", "--reps", "100", "--deltas", "0",
                        "--fractions", "0.05"});
  CHECK(res.code == 2);
  CHECK(contains(res.err, "error:"));

  const auto bad_out =
      run({"curve", "--reps", "100", "--deltas", "0", "--fractions", "0.5",
           "--out", "/nonexistent_dir_zzz/x.csv"});
  CHECK(bad_out.code == 2);
  CHECK(contains(bad_out.err, "cannot open"));
}

TEST_CASE("help and version exit cleanly") {
  const auto help = run({"--help"});
  CHECK(help.code == 0);
  CHECK(contains(help.out, "curve"));
  CHECK(contains(help.out, "safety"));

  const auto ver = run({"--version"});
  CHECK(ver.code == 0);
  CHECK(contains(ver.out, "fbfev 0.1.0"));
}

TEST_CASE("safety passes for honest methods and flags the reciprocal p") {
  // small reps keep this fast; the FBF estimates sit below 0 + 3 se with
  // overwhelming probability at any seed while 1/p blows past it
  const auto res = run({"safety", "--n", "20", "--reps", "20000", "--seed",
                        "3", "--haar-scale", "1.0"});
  REQUIRE(res.err.empty());
  REQUIRE(res.code == 0);
  CHECK(contains(res.out, "overall: PASS"));
  CHECK(contains(res.out, "FAIL (expected unsafe)"));
  CHECK(contains(res.out, "invp"));
  // four default fractions + one haar row + invp row + header
  std::size_t fail_count = 0;
  std::istringstream is(res.out);
  std::string line;
  while (std::getline(is, line))
    if (contains(line, "FAIL")) ++fail_count;
  CHECK(fail_count == 1);  // only the exempt reciprocal-p row
}

TEST_CASE("safety exit code covers non-exempt methods") {
  // declaring fbf expected-unsafe (and not inverse-p) makes the overall
  // verdict hinge on the reciprocal p, which fails
  const auto res = run({"safety", "--n", "20", "--reps", "20000", "--seed",
                        "3", "--expect-unsafe", "fbf"});
  CHECK(res.code == 3);
  CHECK(contains(res.out, "overall: FAIL"));
  CHECK(contains(res.err, "expected to be safe"));

  const auto bad = run({"safety", "--reps", "100", "--expect-unsafe", "zzz"});
  CHECK(bad.code == 2);
}

TEST_CASE("sequential verifies batch prefixes against recombination") {
  const double xs[] = {0.3,  1.7, -0.4, 2.2, 0.9,  -1.1, 0.5, 1.2,
                       -0.8, 1.9, 0.4,  0.7, -0.2, 1.4,  0.6, -1.3,
                       0.8,  2.1, -0.5, 1.0};
  std::vector<SufficientStats> batches;
  batches.push_back(from_samples(std::span<const double>(xs, 6)));
  batches.push_back(from_samples(std::span<const double>(xs + 6, 8)));
  batches.push_back(from_samples(std::span<const double>(xs + 14, 6)));

  const auto path = temp_file("fbfev_test_batches.jsonl");
  {
    std::ofstream f(path);
    write_batch_file(f, batches);
  }

  const auto res = run({"sequential", "--batches", path.string(),
                        "--fraction", "0.5", "--n-total", "20"});
  REQUIRE(res.err.empty());
  CHECK(res.code == 0);
  CHECK(contains(res.out, "coherence: PASS"));
  CHECK(contains(res.out, "combined n = 20"));

  const auto mismatch = run({"sequential", "--batches", path.string(),
                             "--fraction", "0.5", "--n-total", "19"});
  CHECK(mismatch.code == 2);
  CHECK(contains(mismatch.err, "--n-total"));

  // a fraction that is invalid for the combined n
  const auto badfrac = run({"sequential", "--batches", path.string(),
                            "--fraction", "0.01"});
  CHECK(badfrac.code == 2);
  std::filesystem::remove(path);
}

TEST_CASE("sequential with a single batch still checks coherence") {
  const double xs[] = {1.0, -0.5, 2.0, 0.3, -1.2, 0.8};
  const std::vector<SufficientStats> batches = {from_samples(xs)};
  const auto path = temp_file("fbfev_test_single.jsonl");
  {
    std::ofstream f(path);
    write_batch_file(f, batches);
  }
  const auto res =
      run({"sequential", "--batches", path.string(), "--fraction", "0.5"});
  std::filesystem::remove(path);
  CHECK(res.code == 0);
  CHECK(contains(res.out, "coherence: PASS"));
}

TEST_CASE("sequential rejects corrupt batch files with the record index") {
  const auto path = temp_file("fbfev_test_bad.jsonl");
  {
    std::ofstream f(path);
    f << R"({"n": 5, "sum": 2.0, "sum_sq": 3.5})" << "\n";
    f << R"({"n": 0, "sum": 0.0, "sum_sq": 0.0})" << "\n";
  }
  const auto res =
      run({"sequential", "--batches", path.string(), "--fraction", "0.5"});
  std::filesystem::remove(path);
  CHECK(res.code == 2);
  CHECK(contains(res.err, "batch record 2"));

  const auto missing = run({"sequential", "--batches",
                            "/nonexistent_zzz/batches.jsonl", "--fraction",
                            "0.5"});
  CHECK(missing.code == 2);
  CHECK(contains(missing.err, "cannot open"));

  const auto no_flag = run({"sequential", "--fraction", "0.5"});
  CHECK(no_flag.code == 2);  // --batches is required
}

TEST_CASE("pvalue-demo prints the analytic truncated means") {
  const auto res =
      run({"pvalue-demo", "--n", "20", "--reps", "5000", "--seed", "11"});
  REQUIRE(res.err.empty());
  CHECK(res.code == 0);
  // 1 + ln 10 and friends, printed exactly
  CHECK(contains(res.out, "3.302585092994046"));
  CHECK(contains(res.out, "5.605170185988092"));
  CHECK(contains(res.out, "7.907755278982137"));
  CHECK(contains(res.out, "running mean"));
  CHECK(contains(res.out, "combined std errors"));

  const auto bad = run({"pvalue-demo", "--caps", "1.0", "--reps", "100"});
  CHECK(bad.code == 2);
  const auto bad2 = run({"pvalue-demo", "--caps", "0.5,10", "--reps", "100"});
  CHECK(bad2.code == 2);
}
