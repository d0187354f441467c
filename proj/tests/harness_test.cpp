#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <regex>
#include <set>
#include <sstream>

#include "miso/errors.hpp"
#include "miso/harness.hpp"
#include "miso/report.hpp"
#include "test_support.hpp"

namespace {

namespace fs = std::filesystem;
using miso::Algorithm;
using miso::ExperimentConfig;
using miso::Philox;
using miso::RunResult;
using miso::Vector;

constexpr const char* kSmallConfig = R"(
; comment line
[problem]
source = synthetic
n = 60
d = 12
active = 3
loss = logistic
lambda = 0.05
seed = 3

[run]
algorithms = miso, saga, svrg
tau = 1, 6
multipliers = 1, 5
seeds = 1, 2
regime = strongly_convex
target_ratio = 1e-6
max_epochs = 40
trace_stride = auto

[output]
name = small
format = csv
)";

ExperimentConfig parse(const std::string& text) {
  std::istringstream in(text);
  return miso::parse_config(in);
}

std::string csv_of(const ExperimentConfig& cfg) {
  std::ostringstream out;
  miso::write_csv(miso::run_experiment(cfg).runs, out);
  return out.str();
}

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("miso_harness_test_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// ---------------------------------------------------------------------------
// Config parsing
// ---------------------------------------------------------------------------

TEST(Config, ParsesAllSections) {
  const auto cfg = parse(kSmallConfig);
  EXPECT_EQ(cfg.name, "small");
  EXPECT_EQ(cfg.problem.source, miso::ProblemSpec::Source::kSyntheticClassification);
  EXPECT_EQ(cfg.problem.n, 60u);
  EXPECT_EQ(cfg.problem.active, 3u);
  EXPECT_EQ(cfg.problem.lambda, 0.05);
  EXPECT_EQ(cfg.algorithms, (std::vector<Algorithm>{Algorithm::kMiso, Algorithm::kSaga, Algorithm::kSvrg}));
  EXPECT_EQ(cfg.taus, (std::vector<std::size_t>{1, 6}));
  EXPECT_EQ(cfg.multipliers, (std::vector<double>{1.0, 5.0}));
  EXPECT_EQ(cfg.seeds, (std::vector<std::uint64_t>{1, 2}));
  EXPECT_EQ(cfg.target_ratio, 1e-6);
  EXPECT_EQ(cfg.trace_stride, 0u);
  EXPECT_TRUE(cfg.write_csv);
  EXPECT_FALSE(cfg.write_svg);
}

TEST(Config, Defaults) {
  const auto cfg = parse("[problem]\nsource = synthetic\nn = 10\nd = 4\nactive = 2\n");
  EXPECT_EQ(cfg.multipliers, (std::vector<double>{1.0, 5.0, 10.0, 20.0}));
  EXPECT_EQ(cfg.target_ratio, 1e-10);
  EXPECT_FALSE(cfg.problem.lambda.has_value());
}

TEST(Config, RejectsUnknownKeysAndSections) {
  EXPECT_THROW(parse("[problem]\nsource = synthetic\nnn = 3\n"), miso::ConfigError);
  EXPECT_THROW(parse("[problems]\nsource = synthetic\n"), miso::ConfigError);
}

TEST(Config, RejectsBadValues) {
  const std::string head = "[problem]\nsource = synthetic\nn = 10\nd = 4\nactive = 2\n[run]\n";
  EXPECT_THROW(parse(head + "target_ratio = 1.5\n"), miso::ConfigError);
  EXPECT_THROW(parse(head + "target_ratio = 0\n"), miso::ConfigError);
  EXPECT_THROW(parse(head + "seeds = \n"), miso::ConfigError);
  EXPECT_THROW(parse(head + "tau = 0\n"), miso::ConfigError);
  EXPECT_THROW(parse(head + "algorithms = sgd\n"), miso::ConfigError);
  EXPECT_THROW(parse(head + "multipliers = -1\n"), miso::ConfigError);
  EXPECT_THROW(parse(head + "max_epochs = many\n"), miso::ConfigError);
  EXPECT_THROW(parse("[problem]\nsource = csv\n"), miso::ConfigError);
}

TEST(Config, TauAboveNIsRejectedAtRunTime) {
  auto cfg = parse(kSmallConfig);
  cfg.taus = {61};
  EXPECT_THROW(miso::run_experiment(cfg), miso::ConfigError);
}

TEST(Config, ShippedConfigsParse) {
  for (const auto& entry : fs::directory_iterator(fs::path(MISO_FIXTURE_DIR) / ".." / ".." / "configs")) {
    if (entry.path().extension() != ".ini") continue;
    SCOPED_TRACE(entry.path().string());
    EXPECT_NO_THROW(miso::load_config(entry.path().string()));
  }
}

// ---------------------------------------------------------------------------
// Synthetic problems
// ---------------------------------------------------------------------------

TEST(Synthetic, ClassificationShape) {
  const auto a = miso::synthetic_classification(50, 20, 4, 9);
  const auto b = miso::synthetic_classification(50, 20, 4, 9);
  EXPECT_EQ(miso::dataset_hash(a), miso::dataset_hash(b));
  EXPECT_NE(miso::dataset_hash(a), miso::dataset_hash(miso::synthetic_classification(50, 20, 4, 10)));
  for (Eigen::Index r = 0; r < 50; ++r) {
    EXPECT_EQ(a.features.row(r).nonZeros(), 4);
    EXPECT_DOUBLE_EQ(a.features.row(r).sum(), 4.0);
  }
  for (double y : a.labels) EXPECT_TRUE(y == 1.0 || y == -1.0);
}

TEST(Synthetic, RankDeficientLeastSquaresIsConvexOnly) {
  const auto p = miso::random_least_squares(40, 6, 3, 0.0, 5);
  EXPECT_EQ(p->constants().curvature, miso::Curvature::kConvex);
  EXPECT_EQ(p->constants().mu, 0.0);
  const auto full = miso::random_least_squares(40, 6, 0, 0.0, 5);
  EXPECT_GT(full->constants().mu, 0.0);
}

TEST(Synthetic, InitialPointIsSeededGaussian) {
  EXPECT_EQ(miso::initial_point(8, 4), miso::initial_point(8, 4));
  EXPECT_NE(miso::initial_point(8, 4), miso::initial_point(8, 5));
  const Vector big = miso::initial_point(40'000, 1);
  EXPECT_NEAR(big.squaredNorm(), 1.0, 0.03);
}

TEST(Synthetic, DatasetHashSeesSingleValueChange) {
  auto a = miso::synthetic_classification(20, 10, 2, 1);
  const auto h = miso::dataset_hash(a);
  a.features.valuePtr()[3] = std::nextafter(a.features.valuePtr()[3], 2.0);
  EXPECT_NE(h, miso::dataset_hash(a));
}

// ---------------------------------------------------------------------------
// Reference solutions
// ---------------------------------------------------------------------------

TEST(Reference, MatchesClosedFormOnQuadratic) {
  Philox rng(1);
  auto q = miso::testing::random_quadratic(20, 5, rng, 0.3);
  const auto ref = miso::reference_solve(*q, 1e-13);
  EXPECT_LE((ref.x - *q->known_minimizer()).norm(), 1e-10);
  EXPECT_LE(ref.residual, ref.tolerance);
}

TEST(Reference, StartingAtOptimumTakesNoIterations) {
  Philox rng(2);
  auto q = miso::testing::random_quadratic(10, 4, rng);
  const Vector start = *q->known_minimizer();
  EXPECT_EQ(miso::reference_solve(*q, 1e-8, &start).iterations, 0u);
}

TEST(Reference, LogisticResidualMeetsTolerance) {
  const miso::LogisticProblem p(miso::synthetic_classification(200, 30, 5, 4), 0.01);
  const auto ref = miso::reference_solve(p, 1e-12);
  const double g0 = p.full_gradient(Vector::Zero(30)).norm();
  EXPECT_LE(p.full_gradient(ref.x).norm(), 1e-12 * std::max(1.0, g0) * (1.0 + 1e-9));
}

TEST(Reference, ErrorsOnCapAndNonconvexity) {
  const miso::LogisticProblem p(miso::synthetic_classification(50, 10, 2, 4), 0.01);
  EXPECT_THROW(miso::reference_solve(p, 1e-300, nullptr, 3), miso::NumericalError);
  Philox rng(3);
  const miso::SigmoidLossProblem s(miso::testing::random_dataset(10, 3, rng), 0.0);
  EXPECT_THROW(miso::reference_solve(s), miso::ConfigError);
}

TEST(Reference, CacheHitIsBitExact) {
  const auto dir = scratch_dir("cache");
  const miso::LogisticProblem p(miso::synthetic_classification(80, 15, 3, 6), 0.02);
  const auto key = miso::dataset_hash(p.data());
  const auto first = miso::cached_reference_solve(p, key, 1e-10, dir.string());
  const auto second = miso::cached_reference_solve(p, key, 1e-10, dir.string());
  EXPECT_FALSE(first.from_cache);
  EXPECT_TRUE(second.from_cache);
  ASSERT_EQ(first.x.size(), second.x.size());
  EXPECT_EQ(std::memcmp(first.x.data(), second.x.data(), sizeof(double) * first.x.size()), 0);
  const auto other_tol = miso::cached_reference_solve(p, key, 1e-9, dir.string());
  EXPECT_FALSE(other_tol.from_cache);
  fs::remove_all(dir);
}

// ---------------------------------------------------------------------------
// Runs
// ---------------------------------------------------------------------------

TEST(Runs, SameSeedGivesByteIdenticalCsv) {
  const auto cfg = parse(kSmallConfig);
  const std::string a = csv_of(cfg);
  const std::string b = csv_of(cfg);
  EXPECT_EQ(a, b);
  EXPECT_GT(std::count(a.begin(), a.end(), '\n'), 24);
}

TEST(Runs, DifferentSeedChangesCsv) {
  auto cfg = parse(kSmallConfig);
  cfg.algorithms = {Algorithm::kMiso};
  cfg.taus = {6};
  cfg.seeds = {1};
  const std::string a = csv_of(cfg);
  cfg.seeds = {2};
  EXPECT_NE(a, csv_of(cfg));
}

TEST(Runs, EpochAccounting) {
  auto cfg = parse(kSmallConfig);
  cfg.multipliers = {1.0};
  cfg.seeds = {1};
  const auto result = miso::run_experiment(cfg);
  ASSERT_EQ(result.runs.size(), 6u);
  for (const auto& r : result.runs) {
    SCOPED_TRACE(std::string(miso::to_string(r.key.algorithm)) + " tau=" + std::to_string(r.key.tau));
    ASSERT_FALSE(r.trace.empty());
    for (const auto& row : r.trace) {
      EXPECT_DOUBLE_EQ(row.epochs, static_cast<double>(row.grad_evals) / 60.0);
      if (r.key.algorithm != Algorithm::kSvrg) {
        EXPECT_EQ(row.grad_evals, 60 + row.k * r.key.tau);
      }
    }
    if (r.key.algorithm == Algorithm::kSvrg) {
      const std::size_t m = std::max<std::size_t>(1, 2 * 60 / r.key.tau);
      EXPECT_EQ(r.constants.inner_length, m);
    }
    EXPECT_LE(r.sampled_iterate, r.trace.back().k);
    EXPECT_EQ(r.wall_ns, 0);
  }
}

TEST(Runs, QuadraticRunReachesTarget) {
  ExperimentConfig cfg;
  cfg.problem.source = miso::ProblemSpec::Source::kLeastSquares;
  cfg.problem.n = 30;
  cfg.problem.d = 5;
  cfg.problem.lambda = 0.1;
  cfg.taus = {3};
  cfg.multipliers = {1.0};
  cfg.max_epochs = 2000;
  cfg.lyapunov = ExperimentConfig::Lyapunov::kConvex;
  const auto result = miso::run_experiment(cfg);
  ASSERT_EQ(result.runs.size(), 1u);
  const auto& r = result.runs[0];
  ASSERT_TRUE(r.epochs_to_target.has_value());
  EXPECT_LE(r.trace.back().dist_sq_ratio, 1e-10);
  EXPECT_EQ(r.trace.front().dist_sq_ratio, 1.0);
  for (std::size_t i = 1; i < r.trace.size(); ++i) EXPECT_TRUE(std::isfinite(r.trace[i].lyapunov));
}

TEST(Runs, NonconvexRunsHaveNoDistance) {
  ExperimentConfig cfg;
  cfg.problem.source = miso::ProblemSpec::Source::kSyntheticClassification;
  cfg.problem.loss = miso::ProblemSpec::Loss::kSigmoid;
  cfg.problem.n = 200;
  cfg.problem.d = 10;
  cfg.problem.active = 3;
  cfg.regime = miso::StepsizePolicy::Regime::kNonconvex;
  cfg.unit_b = true;
  cfg.multipliers = {1.0};
  cfg.max_epochs = 3;
  cfg.lyapunov = ExperimentConfig::Lyapunov::kNonconvex;
  const auto result = miso::run_experiment(cfg);
  EXPECT_FALSE(result.reference.has_value());
  for (const auto& row : result.runs[0].trace) {
    EXPECT_TRUE(std::isnan(row.dist_sq_ratio));
    EXPECT_TRUE(std::isfinite(row.lyapunov));
    EXPECT_TRUE(std::isfinite(row.grad_norm_sq));
  }
}

TEST(Runs, MultiplierSelection) {
  auto make = [](double mult, std::uint64_t seed, std::optional<double> epochs) {
    RunResult r;
    r.key = {Algorithm::kSaga, 4, mult, seed};
    r.epochs_to_target = epochs;
    return r;
  };
  const std::vector<RunResult> runs{make(1, 1, 30.0), make(1, 2, 50.0),  make(5, 1, 20.0), make(5, 2, 60.0),
                                    make(10, 1, 5.0), make(10, 2, std::nullopt), make(20, 1, 39.0),
                                    make(20, 2, 41.0)};
  const auto sel = miso::select_multipliers(runs);
  ASSERT_EQ(sel.size(), 1u);
  // 1, 5 and 20 all average 40 epochs: the smallest multiplier wins.
  EXPECT_EQ(sel[0].multiplier, 1.0);
  EXPECT_EQ(sel[0].mean_epochs, 40.0);
  EXPECT_TRUE(sel[0].all_reached);

  const auto none = miso::select_multipliers({make(1, 1, std::nullopt)});
  EXPECT_TRUE(std::isinf(none[0].mean_epochs));
  EXPECT_FALSE(none[0].all_reached);
}

// ---------------------------------------------------------------------------
// Output formats
// ---------------------------------------------------------------------------

RunResult three_row_run() {
  RunResult r;
  r.key = {Algorithm::kMiso, 2, 5.0, 7};
  for (std::uint64_t k = 0; k < 3; ++k) {
    miso::TraceRow row;
    row.k = k;
    row.grad_evals = 10 + 2 * k;
    row.epochs = static_cast<double>(row.grad_evals) / 10.0;
    row.dist_sq_ratio = std::pow(0.1, static_cast<double>(k)) / 3.0;
    row.subopt = 1.0 / (k + 7.0);
    row.grad_norm_sq = 0.1 * static_cast<double>(k);
    r.trace.push_back(row);
  }
  return r;
}

TEST(Report, FormatDouble) {
  EXPECT_EQ(miso::format_double(0.1), "0.1");
  EXPECT_EQ(miso::format_double(1e-10), "1e-10");
  EXPECT_EQ(miso::format_double(std::nan("")), "nan");
  EXPECT_EQ(miso::format_double(-INFINITY), "-inf");
  Philox rng(4);
  for (int i = 0; i < 1000; ++i) {
    const double v = rng.normal() * std::pow(10.0, static_cast<double>(rng.uniform_index(600)) - 300.0);
    EXPECT_EQ(std::strtod(miso::format_double(v).c_str(), nullptr), v);
  }
}

TEST(Report, CsvHasHeaderPlusOneLinePerRow) {
  std::ostringstream out;
  miso::write_csv({three_row_run()}, out);
  const std::string csv = out.str();
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), std::string(miso::kCsvHeader));
}

TEST(Report, CsvValuesRoundTrip) {
  const RunResult run = three_row_run();
  std::ostringstream out;
  miso::write_csv({run}, out);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  for (const auto& row : run.trace) {
    ASSERT_TRUE(std::getline(in, line));
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    ASSERT_EQ(f.size(), 12u);
    EXPECT_EQ(f[0], "miso");
    EXPECT_EQ(std::stoull(f[4]), row.k);
    EXPECT_EQ(std::stoull(f[5]), row.grad_evals);
    EXPECT_EQ(std::strtod(f[6].c_str(), nullptr), row.epochs);
    EXPECT_EQ(std::strtod(f[7].c_str(), nullptr), row.dist_sq_ratio);
    EXPECT_EQ(std::strtod(f[8].c_str(), nullptr), row.subopt);
    EXPECT_EQ(std::strtod(f[9].c_str(), nullptr), row.grad_norm_sq);
    EXPECT_EQ(f[10], "nan");
  }
}

TEST(Report, SvgUsesBasicElementsOnly) {
  auto a = three_row_run();
  auto b = three_row_run();
  b.key.tau = 8;
  std::ostringstream out;
  miso::write_svg({a, b}, out, "title <&>");
  const std::string svg = out.str();
  EXPECT_NE(svg.find("viewBox=\"0 0 960 600\""), std::string::npos);
  EXPECT_NE(svg.find("title &lt;&amp;&gt;"), std::string::npos);
  const std::set<std::string> allowed{"svg", "g", "path", "line", "text"};
  const std::regex tag("<(/?)([a-zA-Z]+)");
  std::map<std::string, int> open;
  for (auto it = std::sregex_iterator(svg.begin(), svg.end(), tag); it != std::sregex_iterator(); ++it) {
    const std::string name = (*it)[2];
    EXPECT_TRUE(allowed.count(name)) << name;
    open[name] += (*it)[1].length() == 0 ? 1 : -1;
  }
  // Self-closing line/path elements never get a closing tag.
  EXPECT_EQ(open["svg"], 0);
  EXPECT_EQ(open["g"], 0);
  EXPECT_EQ(open["text"], 0);
  EXPECT_GE(std::count(svg.begin(), svg.end(), 'M'), 2);
}

// ---------------------------------------------------------------------------
// Command-line tool
// ---------------------------------------------------------------------------

int run_cli(const std::string& args) {
  const std::string cmd = std::string(MISO_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

TEST(Cli, ExitCodes) {
  const auto dir = scratch_dir("cli");
  {
    std::ofstream(dir / "ok.ini") << kSmallConfig;
    std::ofstream(dir / "bad.ini") << "[problem]\nsource = synthetic\nbogus = 1\n";
  }
  const std::string out = " --out-dir " + dir.string();
  EXPECT_EQ(run_cli("run --config " + (dir / "ok.ini").string() + out), 0);
  EXPECT_TRUE(fs::exists(dir / "small.csv"));
  EXPECT_TRUE(fs::exists(dir / "small_summary.csv"));
  EXPECT_FALSE(fs::exists(dir / "small.svg"));

  EXPECT_EQ(run_cli("run --config " + (dir / "bad.ini").string()), 1);
  EXPECT_EQ(run_cli("run --config " + (dir / "missing.ini").string()), 1);

  const std::string data = std::string(MISO_FIXTURE_DIR) + "/libsvm/";
  EXPECT_EQ(run_cli("solve-ref --data " + data + "01_basic.svm --lambda 0.1" + out), 0);
  EXPECT_TRUE(fs::exists(dir / "x_star.txt"));
  EXPECT_EQ(run_cli("solve-ref --data " + data + "13_nonmonotone.svm --lambda 0.1" + out), 1);
  EXPECT_EQ(run_cli("solve-ref --data " + data + "01_basic.svm --lambda 0.1 --tol 1e-300 --max-iter 2" + out), 2);
  EXPECT_NE(run_cli(""), 0);
  fs::remove_all(dir);
}

}  // namespace
