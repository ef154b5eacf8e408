#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "cli.hpp"

#include "drscore/simulation.hpp"
#include "drscore/table.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

using namespace drscore;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code = 0;
  std::string out, err;
};

Outcome invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "drscore");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  Outcome r;
  r.code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "drscore_cli_test";
  fs::create_directories(dir);
  return dir / name;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

/// Writes y, a and the non-intercept covariates x1..xq.
void write_csv(const fs::path& path, const Vector& y, const Vector& a, const DesignMatrix& L) {
  std::ofstream f(path, std::ios::binary);
  f.precision(17);
  f << "y,a";
  for (Index j = 1; j < L.p(); ++j) f << ",x" << j;
  f << '\n';
  for (Index i = 0; i < L.n(); ++i) {
    f << y[i] << ',' << a[i];
    for (Index j = 1; j < L.p(); ++j) f << ',' << L.values()(i, j);
    f << '\n';
  }
}

Dataset fixture(Scalar noise_scale, std::uint64_t seed = 5) {
  DgpConfig cfg;
  cfg.n = 150;
  cfg.p = 12;
  cfg.seed = seed;
  cfg.noise_scale = noise_scale;
  return generate_dataset(cfg);
}

std::map<std::string, std::string> parse_kv(const std::string& csv) {
  std::map<std::string, std::string> kv;
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    const auto comma = line.find(',');
    kv[line.substr(0, comma)] = line.substr(comma + 1);
  }
  return kv;
}

}  // namespace

TEST_CASE("csv parsing: header, numbers and diagnostics") {
  const Table t = parse_csv("a, b ,\"c\"\r\n1,2,3\n\n4,5.5,-6e-1\n");
  CHECK(t.names == std::vector<std::string>{"a", "b", "c"});
  CHECK(t.values.rows() == 2);
  CHECK(t.values(1, 2) == doctest::Approx(-0.6));
  CHECK(t.column("b")[1] == 5.5);
  CHECK_THROWS_WITH_AS(t.index_of("zzz"), "column 'zzz' not found", InputError);
  CHECK_THROWS_WITH_AS(parse_csv("a,b\n1,x\n"), "line 2, column 'b': not a finite number", InputError);
  CHECK_THROWS_WITH_AS(parse_csv("a,b\n1\n"), "line 2: expected 2 fields, found 1", InputError);
  CHECK_THROWS_AS(parse_csv("a,a\n1,2\n"), InputError);
  CHECK_THROWS_AS(parse_csv("a,b\n"), InputError);
  CHECK_THROWS_AS(parse_csv(""), InputError);
}

TEST_CASE("ci: missing column is an input error naming the column") {
  const Dataset d = fixture(1.0);
  const fs::path data = scratch("missing.csv");
  write_csv(data, d.y, d.a, d.L);
  const Outcome r = invoke({"ci", "--data", data.string(), "--outcome", "y", "--exposure", "treatment"});
  CHECK(r.code == cli::kInputError);
  CHECK(r.err.find("'treatment'") != std::string::npos);

  const Outcome cov = invoke({"ci", "--data", data.string(), "--outcome", "y", "--exposure", "a",
                              "--covariates", "x1,x99"});
  CHECK(cov.code == cli::kInputError);
  CHECK(cov.err.find("'x99'") != std::string::npos);

  CHECK(invoke({"ci", "--data", scratch("absent.csv").string(), "--outcome", "y", "--exposure", "a"}).code ==
        cli::kInputError);
  CHECK(invoke({"ci", "--data", data.string(), "--outcome", "y", "--exposure", "a", "--alpha", "1.5"}).code ==
        cli::kInputError);
  CHECK(invoke({"ci", "--data", data.string(), "--outcome", "y", "--exposure", "a", "--link", "probit"}).code ==
        cli::kInputError);
  CHECK(invoke({"ci", "--data", data.string(), "--outcome", "y", "--exposure", "x1"}).code == cli::kInputError);
  CHECK(invoke({"bogus"}).code == cli::kInputError);
}

TEST_CASE("ci: noiseless fixture brackets the true effect") {
  // Randomized exposure, sparse linear outcome, no noise.
  std::mt19937_64 rng(1);
  std::normal_distribution<Scalar> z;
  std::bernoulli_distribution coin(0.5);
  const Index n = 200, q = 10;
  const Scalar psi = 0.3;
  Matrix X(n, q);
  Vector a(n), y(n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < q; ++j) X(i, j) = z(rng);
    a[i] = coin(rng) ? 1.0 : 0.0;
    y[i] = psi * a[i] + X(i, 0) - 0.5 * X(i, 1) + 0.25 * X(i, 2);
  }
  const fs::path data = scratch("noiseless.csv");
  write_csv(data, y, a, DesignMatrix::with_intercept(X));
  const fs::path out = scratch("quiet_ci");
  const Outcome r = invoke({"ci", "--data", data.string(), "--outcome", "y", "--exposure", "a", "--out", out.string()});
  REQUIRE(r.code == cli::kOk);
  auto kv = parse_kv(slurp(out.string() + ".csv"));
  const Scalar lo = std::stod(kv["lower"]), hi = std::stod(kv["upper"]);
  CHECK(lo <= psi);
  CHECK(psi <= hi);
  CHECK(hi - lo < 0.02);
  CHECK(kv["empty"] == "false");
  CHECK(std::stod(kv["lambda_beta"]) > 0);
  CHECK(std::stod(kv["lambda_gamma"]) > 0);
  CHECK(kv.count("bumps") == 1);
  CHECK(kv.count("grid_expansions") == 1);
  const std::string text = slurp(out.string() + ".txt");
  CHECK(text.rfind("confidence interval\n", 0) == 0);
  CHECK(text.find("psi_hat") != std::string::npos);
}

TEST_CASE("ci: identical bytes across runs and thread counts") {
  const Dataset d = fixture(1.0, 9);
  const fs::path data = scratch("det.csv");
  write_csv(data, d.y, d.a, d.L);
  const fs::path o1 = scratch("det1"), o2 = scratch("det2");
  REQUIRE(invoke({"ci", "--data", data.string(), "--outcome", "y", "--exposure", "a", "--out", o1.string()}).code ==
          cli::kOk);
  REQUIRE(invoke({"ci", "--data", data.string(), "--outcome", "y", "--exposure", "a", "--out", o2.string(),
                  "--threads", "2"})
              .code == cli::kOk);
  CHECK(slurp(o1.string() + ".csv") == slurp(o2.string() + ".csv"));
  CHECK(slurp(o1.string() + ".txt") == slurp(o2.string() + ".txt"));
}

TEST_CASE("ci: grid overrides and unbounded intervals") {
  const Dataset d = fixture(1.0, 3);
  const fs::path data = scratch("grid.csv");
  write_csv(data, d.y, d.a, d.L);
  const Outcome r = invoke({"ci", "--data", data.string(), "--outcome", "y", "--exposure", "a", "--grid-center",
                            "0.3", "--grid-half-width", "0.002", "--grid-step", "0.001", "--max-expansions", "1"});
  CHECK(r.code == cli::kUnbounded);
  CHECK(r.err.find("unbounded") != std::string::npos);
  CHECK(invoke({"ci", "--data", data.string(), "--outcome", "y", "--exposure", "a", "--grid-step", "-1"}).code ==
        cli::kInputError);
}

TEST_CASE("ci: modifier and three-level exposure produce regions") {
  const InteractionDataset d = generate_interaction_dataset(150, 10, 0.3, 0.2, 4);
  const fs::path data = scratch("inter.csv");
  write_csv(data, d.y, d.a, d.L);
  const Outcome r = invoke({"ci", "--data", data.string(), "--outcome", "y", "--exposure", "a", "--modifier",
                            "x" + std::to_string(d.modifier_index), "--grid-points", "15"});
  REQUIRE(r.code == cli::kOk);
  CHECK(r.out.find("system               interaction") != std::string::npos);
  CHECK(r.out.find("lambda_beta2") != std::string::npos);

  const Dataset b = fixture(1.0, 6);
  Vector a3 = b.a;
  for (Index i = 0; i < a3.size(); i += 3) a3[i] = 2.0;
  const fs::path cat = scratch("cat.csv");
  write_csv(cat, b.y, a3, b.L);
  const Outcome c = invoke({"ci", "--data", cat.string(), "--outcome", "y", "--exposure", "a", "--grid-points", "9"});
  REQUIRE(c.code == cli::kOk);
  CHECK(c.out.find("categorical") != std::string::npos);
  CHECK(c.out.find("lambda_beta2") != std::string::npos);
}

TEST_CASE("simulate: one-replication smoke run and schema errors") {
  const fs::path cfg = scratch("smoke.cfg");
  const fs::path prefix = scratch("smoke_report");
  {
    std::ofstream f(cfg);
    f << "# smoke\nexperiment = 1\nn = 60\np = 8\nreplications = 1\nestimators = PDS,HDBR\n"
      << "output = " << prefix.string() << "\n";
  }
  const Outcome r = invoke({"simulate", "--config", cfg.string()});
  REQUIRE(r.code == cli::kOk);
  const std::string csv = slurp(prefix.string() + ".csv");
  const std::vector<EstimatorSummary> rows = parse_report_csv(csv);
  REQUIRE(rows.size() == 2);
  CHECK(rows[1].estimator == Estimator::Hdbr);
  CHECK(rows[1].replications + rows[1].failures == 1);
  CHECK(fs::exists(prefix.string() + ".md"));
  CHECK(r.out.find("| Est |") != std::string::npos);

  const fs::path bad = scratch("bad.cfg");
  {
    std::ofstream f(bad);
    f << "n = 60\nbogus = 3\n";
  }
  const Outcome e = invoke({"simulate", "--config", bad.string()});
  CHECK(e.code == cli::kInputError);
  CHECK(e.err.find("line 2") != std::string::npos);
  CHECK(e.err.find("bogus") != std::string::npos);
}

TEST_CASE("check: invariant suite passes") {
  const Outcome r = invoke({"check"});
  CHECK(r.code == cli::kOk);
  CHECK(r.out.find("4/4 checks passed") != std::string::npos);
  CHECK(r.out.find("[FAIL]") == std::string::npos);
}
