#include <blasso/io/csv.hpp>

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace fs = std::filesystem;
using namespace blasso;

namespace {

struct Run {
  int code = -1;
  std::string output;
};

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("blasso_cli_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

Run run(const std::string& args, const fs::path& dir) {
  const fs::path log = dir / "log.txt";
  const std::string cmd = std::string(BLASSO_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream f(log);
  std::ostringstream ss;
  ss << f.rdbuf();
  r.output = ss.str();
  return r;
}

std::string config(const std::string& name) { return std::string(BLASSO_CONFIG_DIR) + "/" + name; }

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

fs::path write(const fs::path& p, const std::string& text) {
  std::ofstream(p, std::ios::binary) << text;
  return p;
}

const char* kSmallFourier =
    "seed = 9\n[model]\nkind = \"fourier\"\ncutoff = 10\n[truth]\namplitudes = [2.0, -4.5, 4.0]\n"
    "positions = [0.1, 0.6, 0.9]\n[noise]\nsigma = 0.01\n";

}  // namespace

TEST(CliSolve, NoiselessConfigRecoversThreeSpikes) {
  const auto dir = scratch("noiseless");
  const auto r = run("solve --config " + config("fourier_noiseless.toml") + " --out " + dir.string(), dir);
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_NE(r.output.find("k=3"), std::string::npos);
  const auto t = io::read_csv((dir / "solution.csv").string());
  EXPECT_EQ(t.header, (std::vector<std::string>{"index", "x", "amplitude"}));
  ASSERT_EQ(t.rows.size(), 3u);
  std::vector<double> xs;
  for (const auto& row : t.rows) xs.push_back(io::parse_double(row[1]));
  std::sort(xs.begin(), xs.end());
  EXPECT_NEAR(xs[0], 0.1, 1e-3);
  EXPECT_NEAR(xs[1], 0.6, 1e-3);
  EXPECT_NEAR(xs[2], 0.9, 1e-3);
  const auto cert = io::read_csv((dir / "certificate.csv").string());
  EXPECT_EQ(cert.header, (std::vector<std::string>{"x", "eta"}));
  EXPECT_EQ(cert.rows.size(), 1024u);
}

TEST(CliSolve, LargeLambdaGivesEmptySolution) {
  const auto dir = scratch("large_lambda");
  const auto cfg = write(dir / "c.toml", kSmallFourier);
  const auto r = run("solve --config " + cfg.string() + " --out " + dir.string() + " --lambda 1000", dir);
  ASSERT_EQ(r.code, 0) << r.output;
  const auto t = io::read_csv((dir / "solution.csv").string());
  EXPECT_EQ(t.rows.size(), 0u);
}

TEST(CliSolve, MissingSigmaIsConfigError) {
  const auto dir = scratch("missing_sigma");
  const auto cfg = write(dir / "c.toml", "[model]\nkind = \"fourier\"\ncutoff = 10\n[solve]\nlambda = 0.1\n");
  const auto r = run("solve --config " + cfg.string() + " --out " + dir.string(), dir);
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.output.find("sigma"), std::string::npos);
}

TEST(CliSolve, UnknownKeyAndMissingFileAreConfigErrors) {
  const auto dir = scratch("unknown_key");
  const auto cfg = write(dir / "c.toml", std::string(kSmallFourier) + "[solve]\nlambda = 0.1\nlamda = 2\n");
  auto r = run("solve --config " + cfg.string() + " --out " + dir.string(), dir);
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.output.find("solve.lamda"), std::string::npos);
  r = run("solve --config " + (dir / "nope.toml").string(), dir);
  EXPECT_EQ(r.code, 1);
  r = run("solve", dir);
  EXPECT_EQ(r.code, 1);
}

TEST(CliSolve, NonConvergenceExitsTwo) {
  const auto dir = scratch("nonconv");
  const auto cfg = write(dir / "c.toml", std::string(kSmallFourier) + "[solver]\nmax_outer_iterations = 1\n");
  const auto r = run("solve --config " + cfg.string() + " --out " + dir.string() + " --lambda 0.01", dir);
  EXPECT_EQ(r.code, 2) << r.output;
}

TEST(CliSolve, ObservationFromCsv) {
  const auto dir = scratch("ycsv");
  const auto cfg = write(dir / "c.toml", kSmallFourier);
  std::string y = "y\n";
  for (int i = 0; i < 21; ++i) y += "0\n";
  write(dir / "y.csv", y);
  auto r = run("solve --config " + cfg.string() + " --out " + dir.string() + " --lambda 0.1 --y " +
                   (dir / "y.csv").string(),
               dir);
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_EQ(io::read_csv((dir / "solution.csv").string()).rows.size(), 0u);
  write(dir / "short.csv", "y\n1\n2\n");
  r = run("solve --config " + cfg.string() + " --out " + dir.string() + " --lambda 0.1 --y " +
              (dir / "short.csv").string(),
          dir);
  EXPECT_EQ(r.code, 1);
}

TEST(CliDof, ReportColumnsAndStrictGap) {
  const auto dir = scratch("dof");
  const auto cfg = write(dir / "c.toml", kSmallFourier);
  const auto r = run("dof --config " + cfg.string() + " --out " + dir.string() + " --lambda 0.5", dir);
  ASSERT_EQ(r.code, 0) << r.output;
  const auto t = io::read_csv((dir / "dof_report.csv").string());
  EXPECT_EQ(t.header, (std::vector<std::string>{"k", "P", "rank_gamma", "sigma_min_gamma", "divergence", "nu",
                                                "support_class"}));
  ASSERT_EQ(t.rows.size(), 1u);
  const double div = io::parse_double(t.rows[0][t.column("divergence")]);
  const int P = std::stoi(t.rows[0][t.column("P")]);
  EXPECT_EQ(std::stoi(t.rows[0][t.column("k")]), 3);
  EXPECT_LT(div, P);
  EXPECT_EQ(t.rows[0][t.column("support_class")], "Discrete");
}

TEST(CliDof, ZeroSolutionIsEmpty) {
  const auto dir = scratch("dof_zero");
  const auto cfg = write(dir / "c.toml", kSmallFourier);
  const auto r = run("dof --config " + cfg.string() + " --out " + dir.string() + " --lambda 1000", dir);
  ASSERT_EQ(r.code, 0) << r.output;
  const auto t = io::read_csv((dir / "dof_report.csv").string());
  EXPECT_EQ(io::parse_double(t.rows[0][t.column("divergence")]), 0.0);
  EXPECT_EQ(t.rows[0][t.column("support_class")], "Empty");
}

TEST(CliDof, NearDuplicateSpikeExitsThree) {
  const auto dir = scratch("dof_degenerate");
  const auto cfg = write(dir / "c.toml", kSmallFourier);
  auto r = run("solve --config " + cfg.string() + " --out " + dir.string() + " --lambda 0.5", dir);
  ASSERT_EQ(r.code, 0) << r.output;
  const auto sol = io::read_csv((dir / "solution.csv").string());
  io::CsvTable split{sol.header, {}};
  int idx = 0;
  for (const auto& row : sol.rows) {
    const double x = io::parse_double(row[1]);
    const double a = io::parse_double(row[2]);
    if (std::abs(x - 0.1) < 0.01) {
      split.add_row({std::to_string(idx++), io::format_double(x), io::format_double(a / 2)});
      split.add_row({std::to_string(idx++), io::format_double(x + 1e-6), io::format_double(a / 2)});
    } else {
      split.add_row(row);
    }
  }
  io::write_csv((dir / "split.csv").string(), split);
  r = run("dof --config " + cfg.string() + " --out " + dir.string() + " --lambda 0.5 --measure " +
              (dir / "split.csv").string(),
          dir);
  EXPECT_EQ(r.code, 3) << r.output;
  r = run("dof --config " + cfg.string() + " --out " + dir.string() + " --lambda 0.5 --measure " +
              (dir / "solution.csv").string(),
          dir);
  EXPECT_EQ(r.code, 0) << r.output;
}

TEST(CliSweep, SingleReplicateSingleLambda) {
  const auto dir = scratch("sweep_single");
  const auto cfg =
      write(dir / "c.toml", std::string(kSmallFourier) + "[sweep]\nlambda = [0.3]\nreplicates = 1\n");
  const auto r = run("sweep --config " + cfg.string() + " --out " + dir.string(), dir);
  ASSERT_EQ(r.code, 0) << r.output;
  const auto sweep = io::read_csv((dir / "sweep.csv").string());
  EXPECT_EQ(sweep.rows.size(), 1u);
  const auto agg = io::read_csv((dir / "aggregates.csv").string());
  ASSERT_EQ(agg.rows.size(), 1u);
  for (std::size_t c = 0; c < agg.header.size(); ++c) {
    if (agg.header[c].size() > 4 && agg.header[c].substr(agg.header[c].size() - 4) == "_std") {
      EXPECT_EQ(io::parse_double(agg.rows[0][c]), 0.0) << agg.header[c];
    }
  }
  EXPECT_EQ(agg.rows[0][agg.column("failed")], "0");
  EXPECT_NE(slurp(dir / "sure.svg").find("</svg>"), std::string::npos);
  EXPECT_NE(slurp(dir / "dof.svg").find("</svg>"), std::string::npos);
}

TEST(CliSweep, IdenticalSeedGivesIdenticalBytes) {
  const auto a = scratch("sweep_a");
  const auto b = scratch("sweep_b");
  const auto cfg = write(a / "c.toml", std::string(kSmallFourier) +
                                           "[sweep]\nlambda = [0.05, 0.5]\nreplicates = 3\nworkers = 2\n");
  ASSERT_EQ(run("sweep --config " + cfg.string() + " --out " + a.string(), a).code, 0);
  ASSERT_EQ(run("sweep --config " + cfg.string() + " --out " + b.string() + " --workers 1", b).code, 0);
  EXPECT_EQ(slurp(a / "sweep.csv"), slurp(b / "sweep.csv"));
  EXPECT_EQ(slurp(a / "aggregates.csv"), slurp(b / "aggregates.csv"));
  const auto c = scratch("sweep_c");
  ASSERT_EQ(run("sweep --config " + cfg.string() + " --out " + c.string() + " --seed 10", c).code, 0);
  EXPECT_NE(slurp(a / "sweep.csv"), slurp(c / "sweep.csv"));
}

TEST(CliGridCompare, SingleNodeGrid) {
  const auto dir = scratch("grid_single");
  const auto cfg =
      write(dir / "c.toml", std::string(kSmallFourier) + "[grid]\nsizes = [1]\nlambda = [0.5]\n");
  const auto r = run("grid-compare --config " + cfg.string() + " --out " + dir.string(), dir);
  ASSERT_EQ(r.code, 0) << r.output;
  const auto t = io::read_csv((dir / "grid_compare.csv").string());
  EXPECT_EQ(t.header, (std::vector<std::string>{"p", "lambda", "grid_dof", "grid_sure", "grid_mse",
                                                "blasso_divergence", "blasso_sure", "blasso_mse", "blasso_k",
                                                "converged"}));
  ASSERT_EQ(t.rows.size(), 1u);
  EXPECT_LE(std::stoi(t.rows[0][t.column("grid_dof")]), 1);
  EXPECT_NE(slurp(dir / "grid_compare.svg").find("</svg>"), std::string::npos);
}

TEST(CliGridCompare, ContinuousDivergenceIndependentOfGrid) {
  const auto dir = scratch("grid_multi");
  const auto cfg = write(dir / "c.toml",
                         std::string(kSmallFourier) + "[grid]\nsizes = [64, 256, 1024]\nlambda = [0.05, 0.5]\n");
  const auto r = run("grid-compare --config " + cfg.string() + " --out " + dir.string(), dir);
  ASSERT_EQ(r.code, 0) << r.output;
  const auto t = io::read_csv((dir / "grid_compare.csv").string());
  ASSERT_EQ(t.rows.size(), 6u);
  std::map<std::string, std::set<std::string>> per_lambda;
  for (const auto& row : t.rows) per_lambda[row[t.column("lambda")]].insert(row[t.column("blasso_divergence")]);
  EXPECT_EQ(per_lambda.size(), 2u);
  for (const auto& [l, values] : per_lambda) EXPECT_EQ(values.size(), 1u) << l;
}

TEST(CliSelftest, PassesAndCatchesNuSignMutation) {
  const auto dir = scratch("selftest");
  auto r = run("selftest", dir);
  EXPECT_EQ(r.code, 0) << r.output;
  EXPECT_EQ(r.output.find("FAIL"), std::string::npos);
  r = run("selftest --mutate nu-sign", dir);
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.output.find("FAIL trace_identity"), std::string::npos);
}
