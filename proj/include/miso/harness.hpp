#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "miso/baselines.hpp"
#include "miso/diagnostics.hpp"
#include "miso/libsvm.hpp"
#include "miso/miso.hpp"
#include "miso/objective.hpp"
#include "miso/rng.hpp"
#include "miso/sampling.hpp"

namespace miso {

// ---------------------------------------------------------------------------
// Synthetic problems
// ---------------------------------------------------------------------------

/// Sparse binary features in the style of the LIBSVM "a" datasets: every row
/// has `active` ones, one in each of `active` equal-width feature groups.
/// Labels are drawn from a planted logistic model.
Dataset synthetic_classification(std::size_t n, std::size_t d, std::size_t active, std::uint64_t seed);

/// f_i(x) = (1/2)(<a_i, x> - b_i)^2 + (ridge/2)||x||^2 as a QuadraticProblem.
/// The a_i span a subspace of dimension `rank` (rank = d gives full rank);
/// with ridge = 0 and rank < d the average Hessian is singular but the
/// problem is still bounded below.
std::shared_ptr<const QuadraticProblem> random_least_squares(std::size_t n, std::size_t d, std::size_t rank,
                                                             double ridge, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Reference solution
// ---------------------------------------------------------------------------

struct ReferenceSolution {
  Vector x;
  double residual = 0.0;          ///< ||f'(x)||
  double tolerance = 0.0;         ///< absolute threshold used
  std::uint64_t iterations = 0;
  bool from_cache = false;
};

inline constexpr std::uint64_t kReferenceMaxIterations = 10'000'000;

/// Gradient descent with stepsize 1/L_f from `start` until
/// ||f'(x)|| <= rel_tol * max(1, ||f'(start)||). Throws NumericalError at the
/// iteration cap and ConfigError for nonconvex problems.
ReferenceSolution reference_solve(const Problem& problem, double rel_tol = 1e-12, const Vector* start = nullptr,
                                  std::uint64_t max_iterations = kReferenceMaxIterations);

/// Content hash of a problem's data (FNV-1a over shapes, indices, values, labels).
std::uint64_t dataset_hash(const Dataset& data);

/// reference_solve with an on-disk cache in `cache_dir` keyed by
/// (key, rel_tol). An empty cache_dir disables caching.
ReferenceSolution cached_reference_solve(const Problem& problem, std::uint64_t key, double rel_tol,
                                         const std::string& cache_dir);

// ---------------------------------------------------------------------------
// Experiments
// ---------------------------------------------------------------------------

enum class Algorithm { kMiso, kSaga, kSvrg };

const char* to_string(Algorithm a) noexcept;
Algorithm parse_algorithm(const std::string& name);

struct ProblemSpec {
  enum class Source { kLibsvm, kSyntheticClassification, kLeastSquares };
  enum class Loss { kLogistic, kSigmoid };

  Source source = Source::kSyntheticClassification;
  Loss loss = Loss::kLogistic;
  IngestConfig ingest;
  /// Ridge parameter; unset means 1/n.
  std::optional<double> lambda;
  std::size_t n = 0;
  std::size_t d = 0;
  std::size_t active = 0;  ///< synthetic classification: nonzeros per row
  std::size_t rank = 0;    ///< least squares: rank of the data (0 = d)
  std::uint64_t seed = 1;
};

struct ExperimentConfig {
  std::string name = "experiment";
  ProblemSpec problem;

  std::vector<Algorithm> algorithms{Algorithm::kMiso};
  std::vector<std::size_t> taus{1};
  std::vector<double> multipliers{1.0, 5.0, 10.0, 20.0};
  std::vector<std::uint64_t> seeds{1};

  StepsizePolicy::Regime regime = StepsizePolicy::Regime::kStronglyConvex;
  double manual_gamma = 0.0;
  /// Use B = 1 in the MISO stepsize (the tau-nice corollary form) instead of
  /// the exact tau-nice B.
  bool unit_b = false;
  /// SAGA smoothness constant: expected smoothness (default) or L_f.
  bool saga_uses_lf = false;
  SnapshotRule svrg_snapshot = SnapshotRule::kLastIterate;
  GradientTable table = GradientTable::kFull;
  /// Lyapunov value recorded in MISO traces.
  enum class Lyapunov { kNone, kConvex, kNonconvex } lyapunov = Lyapunov::kNone;

  double target_ratio = 1e-10;
  double max_epochs = 100.0;
  /// Iterations between trace rows; 0 = about one row per epoch.
  std::size_t trace_stride = 0;
  double reference_tol = 1e-12;
  bool record_wall_time = false;

  std::string out_dir = ".";
  bool write_csv = true;
  bool write_svg = false;

  /// Throws ConfigError when values are out of range.
  void validate() const;
};

/// Reads a sectioned key = value file (see configs/ for examples).
ExperimentConfig load_config(const std::string& path);
ExperimentConfig parse_config(std::istream& in, const std::string& origin = "<config>");

struct RunKey {
  Algorithm algorithm = Algorithm::kMiso;
  std::size_t tau = 1;
  double multiplier = 1.0;
  std::uint64_t seed = 1;

  friend bool operator<(const RunKey& a, const RunKey& b);
  friend bool operator==(const RunKey& a, const RunKey& b) = default;
};

struct ResolvedConstants {
  double L = 0.0;
  double L_f = 0.0;
  double mu = 0.0;
  double A = 0.0;
  double B = 0.0;
  double gamma = 0.0;
  std::size_t inner_length = 0;  ///< SVRG m
};

struct RunResult {
  RunKey key;
  ResolvedConstants constants;
  Trace trace;
  std::optional<double> epochs_to_target;
  bool diverged = false;
  /// Index of the iterate x^a drawn uniformly from {0..k_final}.
  std::uint64_t sampled_iterate = 0;
  std::int64_t wall_ns = 0;
};

/// Post-hoc choice of the best stepsize multiplier for one (algorithm, tau):
/// smallest mean epochs-to-target over seeds; runs that never reach the
/// target count as infinite.
struct MultiplierSelection {
  Algorithm algorithm = Algorithm::kMiso;
  std::size_t tau = 1;
  double multiplier = 1.0;
  double mean_epochs = 0.0;  ///< +inf if no seed reached the target
  bool all_reached = false;
};

struct ExperimentResult {
  std::vector<RunResult> runs;  ///< sorted by RunKey
  std::vector<MultiplierSelection> selections;
  std::optional<ReferenceSolution> reference;
  std::size_t n = 0;
  double lambda = 0.0;
};

/// Builds the problem a spec describes.
std::shared_ptr<const Problem> build_problem(const ProblemSpec& spec);

/// Starting point for a seed: N(0, 1/d) per coordinate on its own stream.
Vector initial_point(Eigen::Index d, std::uint64_t seed);

/// Runs every (algorithm, tau, multiplier, seed) combination. Independent
/// runs execute in parallel; the result order does not depend on it.
ExperimentResult run_experiment(const ExperimentConfig& config);
ExperimentResult run_experiment(const ExperimentConfig& config, std::shared_ptr<const Problem> problem,
                                std::optional<ReferenceSolution> reference);

std::vector<MultiplierSelection> select_multipliers(const std::vector<RunResult>& runs);

/// Plain minibatch SVRG run with tau-nice sampling for `outer_iters` outer
/// loops; one trace row per inner step.
Trace svrg_run(std::shared_ptr<const Problem> problem, std::size_t tau, double gamma, std::size_t m,
               std::size_t outer_iters, const Vector& x0, Philox rng, const OptimumReference* opt = nullptr);

/// Sub-streams of a run seed.
inline constexpr std::uint64_t kInitStream = 1;
inline constexpr std::uint64_t kSamplingStream = 2;
inline constexpr std::uint64_t kIterateStream = 3;

}  // namespace miso
