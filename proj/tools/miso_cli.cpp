// Command-line front end: experiment runs, reference solves and the oracle suite.

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>

#include "miso/errors.hpp"
#include "miso/harness.hpp"
#include "miso/libsvm.hpp"
#include "miso/oracle.hpp"
#include "miso/report.hpp"

namespace {

constexpr int kExitConfig = 1;
constexpr int kExitNumerical = 2;

struct Globals {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  std::optional<std::string> format;
};

void apply_format(miso::ExperimentConfig& cfg, const std::string& format) {
  cfg.write_csv = format == "csv" || format == "both";
  cfg.write_svg = format == "svg" || format == "both";
}

std::string output_path(const std::string& dir, const std::string& file) {
  return (std::filesystem::path(dir) / file).string();
}

int cmd_run(const std::string& config_path, const Globals& g) {
  miso::ExperimentConfig cfg = miso::load_config(config_path);
  if (g.seed) cfg.seeds = {*g.seed};
  if (g.out_dir) cfg.out_dir = *g.out_dir;
  if (g.format) apply_format(cfg, *g.format);
  cfg.validate();

  const miso::ExperimentResult result = miso::run_experiment(cfg);
  std::error_code ec;
  std::filesystem::create_directories(cfg.out_dir, ec);
  if (cfg.write_csv) {
    std::ostringstream csv;
    miso::write_csv(result.runs, csv);
    miso::write_file(output_path(cfg.out_dir, cfg.name + ".csv"), csv.str());
  }
  if (cfg.write_svg) {
    std::ostringstream svg;
    miso::write_svg(result.runs, svg, cfg.name);
    miso::write_file(output_path(cfg.out_dir, cfg.name + ".svg"), svg.str());
  }
  std::ostringstream summary;
  miso::write_summary(result, summary);
  miso::write_file(output_path(cfg.out_dir, cfg.name + "_summary.csv"), summary.str());

  for (const auto& r : result.runs) {
    std::cout << miso::to_string(r.key.algorithm) << " tau=" << r.key.tau
              << " c=" << miso::format_double(r.key.multiplier) << " seed=" << r.key.seed
              << " gamma=" << miso::format_double(r.constants.gamma) << " epochs_to_target="
              << (r.epochs_to_target ? miso::format_double(*r.epochs_to_target)
                                     : std::string(r.diverged ? "diverged" : "not reached"))
              << '\n';
  }
  for (const auto& s : result.selections) {
    std::cout << "best " << miso::to_string(s.algorithm) << " tau=" << s.tau
              << ": multiplier " << miso::format_double(s.multiplier) << " (mean epochs "
              << miso::format_double(s.mean_epochs) << ")\n";
  }
  return 0;
}

int cmd_solve_ref(const std::string& data, double lambda, const std::string& mapping, double tol,
                  std::uint64_t max_iter, const Globals& g) {
  miso::IngestConfig ingest;
  ingest.path = data;
  ingest.label_mapping = miso::parse_label_mapping(mapping);
  miso::LogisticProblem problem(miso::parse_libsvm(ingest), lambda);
  const miso::ReferenceSolution ref = miso::reference_solve(problem, tol, nullptr, max_iter);
  std::cout << "n=" << problem.size() << " d=" << problem.dim() << " iterations=" << ref.iterations
            << " residual=" << miso::format_double(ref.residual)
            << " f*=" << miso::format_double(problem.value(ref.x)) << '\n';
  const std::string dir = g.out_dir.value_or(".");
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  std::ostringstream out;
  for (Eigen::Index j = 0; j < ref.x.size(); ++j) out << miso::format_double(ref.x[j]) << '\n';
  const std::string path = output_path(dir, "x_star.txt");
  miso::write_file(path, out.str());
  std::cout << "wrote " << path << '\n';
  return 0;
}

// ---------------------------------------------------------------------------
// Oracle suite
// ---------------------------------------------------------------------------

std::shared_ptr<const miso::QuadraticProblem> toy_quadratic(std::size_t n, Eigen::Index d, miso::Philox& rng) {
  std::vector<miso::Matrix> Q(n);
  std::vector<miso::Vector> b(n);
  for (std::size_t i = 0; i < n; ++i) {
    miso::Matrix G(d, d);
    for (Eigen::Index j = 0; j < G.size(); ++j) G.data()[j] = rng.normal();
    Q[i] = G * G.transpose() / static_cast<double>(d) + 0.1 * miso::Matrix::Identity(d, d);
    Q[i] = 0.5 * (Q[i] + Q[i].transpose());
    b[i] = miso::Vector::NullaryExpr(d, [&](Eigen::Index) { return rng.normal(); });
  }
  return std::make_shared<miso::QuadraticProblem>(std::move(Q), std::move(b));
}

miso::Dataset toy_data(std::size_t n, Eigen::Index d, miso::Philox& rng) {
  miso::Dataset data;
  std::vector<Eigen::Triplet<double>> entries;
  for (std::size_t i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) entries.emplace_back(static_cast<int>(i), static_cast<int>(j), rng.normal());
    data.labels.push_back(rng.uniform() < 0.5 ? -1.0 : 1.0);
  }
  data.features.resize(static_cast<Eigen::Index>(n), d);
  data.features.setFromTriplets(entries.begin(), entries.end());
  return data;
}

miso::Matrix random_table(std::size_t n, Eigen::Index d, miso::Philox& rng) {
  miso::Matrix phi(d, static_cast<Eigen::Index>(n));
  for (Eigen::Index j = 0; j < phi.size(); ++j) phi.data()[j] = rng.normal();
  return phi;
}

struct Tally {
  int checks = 0;
  int failures = 0;
  void report(const std::string& name, bool ok, double worst) {
    ++checks;
    if (!ok) ++failures;
    std::cout << (ok ? "PASS " : "FAIL ") << name << " (worst " << miso::format_double(worst) << ")\n";
  }
};

int cmd_verify(const Globals& g) {
  miso::Philox rng(g.seed.value_or(2024));
  Tally tally;

  double worst = 0.0;
  for (std::size_t n = 2; n <= 6; ++n) {
    for (std::size_t tau = 1; tau <= n; ++tau) {
      const auto report = miso::oracle::verify_ab(miso::Sampling::tau_nice(n, tau), random_table(n, 3, rng));
      worst = std::max(worst, report.rel_error);
    }
  }
  tally.report("sampling identity, tau-nice n <= 6", worst <= 1e-10, worst);

  worst = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t n = 5;
    auto q = toy_quadratic(n, 3, rng);
    miso::LogisticProblem logistic(toy_data(n, 3, rng), 0.1);
    for (std::size_t tau : {std::size_t{1}, std::size_t{2}, n}) {
      const auto s = miso::Sampling::tau_nice(n, tau);
      const miso::oracle::TableState state{random_table(n, 3, rng), 0.3};
      worst = std::max(worst, miso::oracle::verify_unbiased_step(*q, state, s).rel_error);
      worst = std::max(worst, miso::oracle::verify_unbiased_step(logistic, state, s).rel_error);
    }
  }
  tally.report("unbiased step, quadratic and logistic toys", worst <= 1e-10, worst);

  double min_slack = std::numeric_limits<double>::infinity();
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t n = 6;
    auto q = toy_quadratic(n, 3, rng);
    const miso::Vector x_star = *q->known_minimizer();
    for (std::size_t tau : {std::size_t{1}, std::size_t{3}}) {
      const auto s = miso::Sampling::tau_nice(n, tau);
      const auto c = s.constants();
      const auto& pc = q->constants();
      const double gamma = miso::gamma_strongly_convex(c, pc.L_f, pc.L, n);
      miso::Matrix phi = x_star.replicate(1, static_cast<Eigen::Index>(n)) + random_table(n, 3, rng);
      const auto report =
          miso::oracle::verify_contraction_strongly_convex(*q, {std::move(phi), gamma}, s, c, x_star);
      min_slack = std::min(min_slack, report.slack + 1e-10 * std::abs(report.exact));
    }
  }
  tally.report("strongly convex one-step contraction", min_slack >= 0.0, min_slack);

  {
    const std::size_t n = 200;
    miso::SigmoidLossProblem problem(toy_data(n, 4, rng), 0.0);
    const auto s = miso::Sampling::tau_nice(n, 1);
    miso::SamplingConstants c = s.constants();
    c.B = 1.0;
    const auto step = miso::gamma_nonconvex(c, problem.constants().L_f, problem.constants().L, n);
    min_slack = std::numeric_limits<double>::infinity();
    for (int trial = 0; trial < 5; ++trial) {
      const auto report =
          miso::oracle::verify_expected_lyapunov_nonconvex(problem, {random_table(n, 4, rng), step.gamma}, s,
                                                           step.alpha);
      min_slack = std::min(min_slack, report.slack + 1e-10);
    }
    tally.report("nonconvex Lyapunov decrease, sigmoid loss n = 200", min_slack >= 0.0, min_slack);
  }

  std::cout << tally.checks - tally.failures << "/" << tally.checks << " checks passed\n";
  return tally.failures == 0 ? 0 : kExitNumerical;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Minibatch MISO experiments and verification"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  std::uint64_t seed = 0;
  std::string out_dir;
  std::string format;
  auto* seed_opt = app.add_option("--seed", seed, "Override the seed list with one seed");
  auto* out_opt = app.add_option("--out-dir", out_dir, "Output directory");
  auto* format_opt =
      app.add_option("--format", format, "Output format")->check(CLI::IsMember({"csv", "svg", "both"}));

  std::string config_path;
  auto* run = app.add_subcommand("run", "Run the experiment described by a config file");
  run->add_option("--config", config_path, "Config file")->required();

  std::string data;
  double lambda = 0.0;
  std::string mapping = "strict_pm1";
  double tol = 1e-12;
  auto* solve = app.add_subcommand("solve-ref", "Reference minimizer of l2-regularized logistic regression");
  solve->add_option("--data", data, "LIBSVM file ('-' for stdin)")->required();
  solve->add_option("--lambda", lambda, "Ridge parameter")->required();
  solve->add_option("--label-mapping", mapping, "strict_pm1, map_01_to_pm1 or threshold");
  solve->add_option("--tol", tol, "Relative gradient-norm tolerance");
  std::uint64_t max_iter = miso::kReferenceMaxIterations;
  solve->add_option("--max-iter", max_iter, "Gradient descent iteration cap");

  auto* verify = app.add_subcommand("verify", "Run the enumeration oracle suite");

  CLI11_PARSE(app, argc, argv);
  if (*seed_opt) g.seed = seed;
  if (*out_opt) g.out_dir = out_dir;
  if (*format_opt) g.format = format;

  try {
    if (*run) return cmd_run(config_path, g);
    if (*solve) return cmd_solve_ref(data, lambda, mapping, tol, max_iter, g);
    if (*verify) return cmd_verify(g);
  } catch (const miso::ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const miso::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const miso::NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const miso::SupportTooLarge& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return kExitNumerical;
  }
  return 0;
}
