#include "miso/harness.hpp"

#include <algorithm>
#include <bit>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <exception>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include "miso/errors.hpp"

namespace miso {

// ---------------------------------------------------------------------------
// Synthetic problems
// ---------------------------------------------------------------------------

Dataset synthetic_classification(std::size_t n, std::size_t d, std::size_t active, std::uint64_t seed) {
  if (n == 0 || d == 0 || active == 0 || active > d) {
    throw ConfigError("synthetic classification: need n, d >= 1 and 1 <= active <= d");
  }
  Philox root(seed);
  Philox model_rng = root.split(10);
  Philox feature_rng = root.split(11);
  Philox label_rng = root.split(12);

  Vector planted(static_cast<Eigen::Index>(d));
  for (auto& w : planted) w = model_rng.normal();
  // Margins of order one: each row sums `active` planted weights.
  planted /= std::sqrt(static_cast<double>(active));

  const std::size_t width = d / active;
  std::vector<Eigen::Triplet<double>> entries;
  entries.reserve(n * active);
  Dataset data;
  data.labels.resize(n);
  for (std::size_t r = 0; r < n; ++r) {
    double margin = 0.0;
    for (std::size_t g = 0; g < active; ++g) {
      const std::size_t begin = g * width;
      const std::size_t span = g + 1 == active ? d - begin : width;
      const std::size_t col = begin + feature_rng.uniform_index(span);
      entries.emplace_back(static_cast<int>(r), static_cast<int>(col), 1.0);
      margin += planted[static_cast<Eigen::Index>(col)];
    }
    data.labels[r] = label_rng.uniform() < sigmoid(2.0 * margin) ? 1.0 : -1.0;
  }
  data.features.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  data.features.setFromTriplets(entries.begin(), entries.end());
  data.features.makeCompressed();
  return data;
}

std::shared_ptr<const QuadraticProblem> random_least_squares(std::size_t n, std::size_t d, std::size_t rank,
                                                             double ridge, std::uint64_t seed) {
  if (n == 0 || d == 0) throw ConfigError("least squares: need n, d >= 1");
  if (rank == 0) rank = d;
  if (rank > d) throw ConfigError("least squares: rank exceeds d");
  if (ridge < 0.0) throw ConfigError("least squares: ridge must be nonnegative");
  Philox root(seed);
  Philox basis_rng = root.split(20);
  Philox row_rng = root.split(21);
  const auto dd = static_cast<Eigen::Index>(d);
  const auto rr = static_cast<Eigen::Index>(rank);
  Matrix basis(dd, rr);
  for (Eigen::Index j = 0; j < basis.size(); ++j) basis.data()[j] = basis_rng.normal();
  Vector truth = basis * Vector::NullaryExpr(rr, [&](Eigen::Index) { return basis_rng.normal(); });

  std::vector<Matrix> Q(n);
  std::vector<Vector> b(n);
  const Matrix ridge_term = ridge * Matrix::Identity(dd, dd);
  for (std::size_t i = 0; i < n; ++i) {
    Vector z(rr);
    for (auto& v : z) v = row_rng.normal() / std::sqrt(static_cast<double>(rank));
    const Vector a = basis * z;
    const double target = a.dot(truth) + 0.1 * row_rng.normal();
    Q[i] = a * a.transpose() + ridge_term;
    Q[i] = 0.5 * (Q[i] + Q[i].transpose());
    b[i] = target * a;
  }
  return std::make_shared<QuadraticProblem>(std::move(Q), std::move(b));
}

// ---------------------------------------------------------------------------
// Reference solution
// ---------------------------------------------------------------------------

ReferenceSolution reference_solve(const Problem& problem, double rel_tol, const Vector* start,
                                  std::uint64_t max_iterations) {
  const auto& c = problem.constants();
  if (c.curvature == Curvature::kNonconvex) throw ConfigError("reference solve needs a convex problem");
  if (!(rel_tol > 0.0)) throw ConfigError("reference solve: tolerance must be positive");
  if (!(c.L_f > 0.0)) throw ConfigError("reference solve: L_f must be positive");
  ReferenceSolution out;
  out.x = start != nullptr ? *start : Vector::Zero(problem.dim());
  Vector g;
  problem.full_gradient(out.x, g);
  double norm = g.norm();
  out.tolerance = rel_tol * std::max(1.0, norm);
  const double step = 1.0 / c.L_f;
  while (norm > out.tolerance) {
    if (out.iterations >= max_iterations) {
      throw NumericalError("reference solve: no convergence after " + std::to_string(max_iterations) +
                           " iterations (gradient norm " + std::to_string(norm) + ")");
    }
    out.x -= step * g;
    problem.full_gradient(out.x, g);
    norm = g.norm();
    if (!std::isfinite(norm)) throw NumericalError("reference solve: gradient became non-finite");
    ++out.iterations;
  }
  out.residual = norm;
  return out;
}

namespace {

constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ull;
constexpr std::uint64_t kFnvPrime = 0x100000001b3ull;

void fnv_bytes(std::uint64_t& h, const void* data, std::size_t size) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < size; ++i) {
    h ^= p[i];
    h *= kFnvPrime;
  }
}

template <class T>
void fnv_value(std::uint64_t& h, T v) {
  fnv_bytes(h, &v, sizeof v);
}

std::string hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

constexpr char kCacheMagic[8] = {'M', 'I', 'S', 'O', 'R', 'E', 'F', '1'};

std::optional<ReferenceSolution> read_cache(const std::filesystem::path& file, Eigen::Index d) {
  std::ifstream in(file, std::ios::binary);
  if (!in) return std::nullopt;
  char magic[8];
  std::uint64_t dim = 0;
  ReferenceSolution r;
  in.read(magic, sizeof magic);
  in.read(reinterpret_cast<char*>(&dim), sizeof dim);
  in.read(reinterpret_cast<char*>(&r.iterations), sizeof r.iterations);
  in.read(reinterpret_cast<char*>(&r.residual), sizeof r.residual);
  in.read(reinterpret_cast<char*>(&r.tolerance), sizeof r.tolerance);
  if (!in || std::memcmp(magic, kCacheMagic, sizeof magic) != 0 || dim != static_cast<std::uint64_t>(d)) {
    return std::nullopt;
  }
  r.x.resize(d);
  in.read(reinterpret_cast<char*>(r.x.data()), static_cast<std::streamsize>(sizeof(double) * dim));
  if (!in) return std::nullopt;
  r.from_cache = true;
  return r;
}

void write_cache(const std::filesystem::path& file, const ReferenceSolution& r) {
  const auto tmp = file.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) return;  // caching is best effort
    const auto dim = static_cast<std::uint64_t>(r.x.size());
    out.write(kCacheMagic, sizeof kCacheMagic);
    out.write(reinterpret_cast<const char*>(&dim), sizeof dim);
    out.write(reinterpret_cast<const char*>(&r.iterations), sizeof r.iterations);
    out.write(reinterpret_cast<const char*>(&r.residual), sizeof r.residual);
    out.write(reinterpret_cast<const char*>(&r.tolerance), sizeof r.tolerance);
    out.write(reinterpret_cast<const char*>(r.x.data()), static_cast<std::streamsize>(sizeof(double) * dim));
    if (!out) return;
  }
  std::error_code ec;
  std::filesystem::rename(tmp, file, ec);
}

}  // namespace

std::uint64_t dataset_hash(const Dataset& data) {
  std::uint64_t h = kFnvOffset;
  fnv_value(h, static_cast<std::int64_t>(data.features.rows()));
  fnv_value(h, static_cast<std::int64_t>(data.features.cols()));
  for (Eigen::Index r = 0; r < data.features.outerSize(); ++r) {
    for (SparseRows::InnerIterator it(data.features, r); it; ++it) {
      fnv_value(h, static_cast<std::int64_t>(r));
      fnv_value(h, static_cast<std::int64_t>(it.index()));
      fnv_value(h, std::bit_cast<std::uint64_t>(it.value()));
    }
  }
  for (double y : data.labels) fnv_value(h, std::bit_cast<std::uint64_t>(y));
  return h;
}

ReferenceSolution cached_reference_solve(const Problem& problem, std::uint64_t key, double rel_tol,
                                         const std::string& cache_dir) {
  if (cache_dir.empty()) return reference_solve(problem, rel_tol);
  std::uint64_t h = key;
  fnv_value(h, std::bit_cast<std::uint64_t>(rel_tol));
  const std::filesystem::path file = std::filesystem::path(cache_dir) / ("ref_" + hex(h) + ".bin");
  if (auto hit = read_cache(file, problem.dim())) return *hit;
  ReferenceSolution r = reference_solve(problem, rel_tol);
  std::error_code ec;
  std::filesystem::create_directories(cache_dir, ec);
  write_cache(file, r);
  return r;
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

const char* to_string(Algorithm a) noexcept {
  switch (a) {
    case Algorithm::kMiso:
      return "miso";
    case Algorithm::kSaga:
      return "saga";
    case Algorithm::kSvrg:
      return "svrg";
  }
  return "?";
}

Algorithm parse_algorithm(const std::string& name) {
  if (name == "miso") return Algorithm::kMiso;
  if (name == "saga") return Algorithm::kSaga;
  if (name == "svrg") return Algorithm::kSvrg;
  throw ConfigError("unknown algorithm '" + name + "' (miso, saga, svrg)");
}

bool operator<(const RunKey& a, const RunKey& b) {
  return std::tie(a.algorithm, a.tau, a.multiplier, a.seed) < std::tie(b.algorithm, b.tau, b.multiplier, b.seed);
}

void ExperimentConfig::validate() const {
  if (algorithms.empty()) throw ConfigError("run.algorithms is empty");
  if (taus.empty()) throw ConfigError("run.tau is empty");
  if (seeds.empty()) throw ConfigError("run.seeds needs at least one seed");
  if (multipliers.empty()) throw ConfigError("run.multipliers is empty");
  for (double m : multipliers) {
    if (!(m > 0.0) || !std::isfinite(m)) throw ConfigError("run.multipliers must be positive");
  }
  for (std::size_t t : taus) {
    if (t == 0) throw ConfigError("run.tau values must be at least 1");
  }
  if (!(target_ratio > 0.0 && target_ratio < 1.0)) throw ConfigError("run.target_ratio must lie in (0, 1)");
  if (!(max_epochs > 0.0)) throw ConfigError("run.max_epochs must be positive");
  if (!(reference_tol > 0.0 && reference_tol < 1.0)) throw ConfigError("run.reference_tol must lie in (0, 1)");
  if (regime == StepsizePolicy::Regime::kManual && !(manual_gamma > 0.0)) {
    throw ConfigError("run.gamma must be positive with regime = manual");
  }
  if (problem.lambda && *problem.lambda < 0.0) throw ConfigError("problem.lambda must be nonnegative");
}

namespace {

using boost::property_tree::ptree;

class Section {
 public:
  Section(const ptree* tree, std::string name, std::set<std::string> known)
      : tree_(tree), name_(std::move(name)), known_(std::move(known)) {
    if (tree_ == nullptr) return;
    for (const auto& [key, child] : *tree_) {
      if (!known_.count(key)) throw ConfigError("unknown key '" + name_ + "." + key + "'");
    }
  }

  std::optional<std::string> get(const std::string& key) const {
    if (tree_ == nullptr) return std::nullopt;
    auto v = tree_->get_optional<std::string>(key);
    if (!v) return std::nullopt;
    std::string s = *v;
    const auto first = s.find_first_not_of(" \t");
    const auto last = s.find_last_not_of(" \t");
    return first == std::string::npos ? std::string() : s.substr(first, last - first + 1);
  }

  std::string qualified(const std::string& key) const { return name_ + "." + key; }

 private:
  const ptree* tree_;
  std::string name_;
  std::set<std::string> known_;
};

double to_double(const std::string& text, const std::string& key) {
  double v = 0.0;
  std::string_view s = text;
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || end != s.data() + s.size() || !std::isfinite(v)) {
    throw ConfigError(key + ": cannot parse '" + text + "' as a number");
  }
  return v;
}

std::uint64_t to_uint(const std::string& text, const std::string& key) {
  std::uint64_t v = 0;
  const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (text.empty() || ec != std::errc() || end != text.data() + text.size()) {
    throw ConfigError(key + ": cannot parse '" + text + "' as a nonnegative integer");
  }
  return v;
}

bool to_bool(const std::string& text, const std::string& key) {
  if (text == "true" || text == "yes" || text == "1") return true;
  if (text == "false" || text == "no" || text == "0") return false;
  throw ConfigError(key + ": expected true or false, got '" + text + "'");
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::string item;
  for (char ch : text + ",") {
    if (ch == ',' || ch == ' ' || ch == '\t') {
      if (!item.empty()) out.push_back(item);
      item.clear();
    } else {
      item.push_back(ch);
    }
  }
  return out;
}

}  // namespace

ExperimentConfig parse_config(std::istream& in, const std::string& origin) {
  ptree root;
  try {
    boost::property_tree::read_ini(in, root);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ParseError(e.line(), origin + ": " + e.message());
  }
  for (const auto& [name, child] : root) {
    if (name != "problem" && name != "run" && name != "output") {
      throw ConfigError(origin + ": unknown section or top-level key '" + name + "'");
    }
  }
  auto child = [&](const char* name) -> const ptree* {
    auto c = root.get_child_optional(name);
    return c ? &*c : nullptr;
  };

  ExperimentConfig cfg;
  const Section problem(child("problem"), "problem",
                        {"source", "path", "label_mapping", "threshold", "normalize", "bias", "loss", "lambda", "n",
                         "d", "active", "rank", "seed"});
  ProblemSpec& spec = cfg.problem;
  if (auto v = problem.get("source")) {
    if (*v == "libsvm") {
      spec.source = ProblemSpec::Source::kLibsvm;
    } else if (*v == "synthetic") {
      spec.source = ProblemSpec::Source::kSyntheticClassification;
    } else if (*v == "least_squares") {
      spec.source = ProblemSpec::Source::kLeastSquares;
    } else {
      throw ConfigError("problem.source: unknown value '" + *v + "' (libsvm, synthetic, least_squares)");
    }
  }
  if (auto v = problem.get("path")) spec.ingest.path = *v;
  if (auto v = problem.get("label_mapping")) spec.ingest.label_mapping = parse_label_mapping(*v);
  if (auto v = problem.get("threshold")) spec.ingest.threshold = to_double(*v, "problem.threshold");
  if (auto v = problem.get("normalize")) spec.ingest.normalize = parse_normalization(*v);
  if (auto v = problem.get("bias")) spec.ingest.add_bias_column = to_bool(*v, "problem.bias");
  if (auto v = problem.get("loss")) {
    if (*v == "logistic") {
      spec.loss = ProblemSpec::Loss::kLogistic;
    } else if (*v == "sigmoid") {
      spec.loss = ProblemSpec::Loss::kSigmoid;
    } else {
      throw ConfigError("problem.loss: unknown value '" + *v + "' (logistic, sigmoid)");
    }
  }
  if (auto v = problem.get("lambda"); v && *v != "auto") spec.lambda = to_double(*v, "problem.lambda");
  if (auto v = problem.get("n")) spec.n = to_uint(*v, "problem.n");
  if (auto v = problem.get("d")) spec.d = to_uint(*v, "problem.d");
  if (auto v = problem.get("active")) spec.active = to_uint(*v, "problem.active");
  if (auto v = problem.get("rank")) spec.rank = to_uint(*v, "problem.rank");
  if (auto v = problem.get("seed")) spec.seed = to_uint(*v, "problem.seed");
  if (spec.source == ProblemSpec::Source::kLibsvm && spec.ingest.path.empty()) {
    throw ConfigError("problem.path is required with source = libsvm");
  }

  const Section run(child("run"), "run",
                    {"algorithms", "tau", "multipliers", "seeds", "regime", "gamma", "b_constant", "saga_smoothness",
                     "svrg_snapshot", "table", "lyapunov", "target_ratio", "max_epochs", "trace_stride",
                     "reference_tol", "record_wall_time"});
  if (auto v = run.get("algorithms")) {
    cfg.algorithms.clear();
    for (const auto& a : split_list(*v)) cfg.algorithms.push_back(parse_algorithm(a));
  }
  if (auto v = run.get("tau")) {
    cfg.taus.clear();
    for (const auto& t : split_list(*v)) cfg.taus.push_back(to_uint(t, "run.tau"));
  }
  if (auto v = run.get("multipliers")) {
    cfg.multipliers.clear();
    for (const auto& m : split_list(*v)) cfg.multipliers.push_back(to_double(m, "run.multipliers"));
  }
  if (auto v = run.get("seeds")) {
    cfg.seeds.clear();
    for (const auto& s : split_list(*v)) cfg.seeds.push_back(to_uint(s, "run.seeds"));
  }
  if (auto v = run.get("regime")) {
    using R = StepsizePolicy::Regime;
    if (*v == "strongly_convex") {
      cfg.regime = R::kStronglyConvex;
    } else if (*v == "convex") {
      cfg.regime = R::kConvex;
    } else if (*v == "nonconvex") {
      cfg.regime = R::kNonconvex;
    } else if (*v == "manual") {
      cfg.regime = R::kManual;
    } else {
      throw ConfigError("run.regime: unknown value '" + *v + "'");
    }
  }
  if (auto v = run.get("gamma")) cfg.manual_gamma = to_double(*v, "run.gamma");
  if (auto v = run.get("b_constant")) {
    if (*v != "exact" && *v != "one") throw ConfigError("run.b_constant: expected exact or one");
    cfg.unit_b = *v == "one";
  }
  if (auto v = run.get("saga_smoothness")) {
    if (*v != "expected" && *v != "lf") throw ConfigError("run.saga_smoothness: expected 'expected' or 'lf'");
    cfg.saga_uses_lf = *v == "lf";
  }
  if (auto v = run.get("svrg_snapshot")) {
    if (*v != "last" && *v != "average") throw ConfigError("run.svrg_snapshot: expected last or average");
    cfg.svrg_snapshot = *v == "last" ? SnapshotRule::kLastIterate : SnapshotRule::kAverage;
  }
  if (auto v = run.get("table")) {
    if (*v != "full" && *v != "compact") throw ConfigError("run.table: expected full or compact");
    cfg.table = *v == "full" ? GradientTable::kFull : GradientTable::kLinearModelResiduals;
  }
  if (auto v = run.get("lyapunov")) {
    using L = ExperimentConfig::Lyapunov;
    if (*v == "none") {
      cfg.lyapunov = L::kNone;
    } else if (*v == "convex") {
      cfg.lyapunov = L::kConvex;
    } else if (*v == "nonconvex") {
      cfg.lyapunov = L::kNonconvex;
    } else {
      throw ConfigError("run.lyapunov: expected none, convex or nonconvex");
    }
  }
  if (auto v = run.get("target_ratio")) cfg.target_ratio = to_double(*v, "run.target_ratio");
  if (auto v = run.get("max_epochs")) cfg.max_epochs = to_double(*v, "run.max_epochs");
  if (auto v = run.get("trace_stride"); v && *v != "auto") cfg.trace_stride = to_uint(*v, "run.trace_stride");
  if (auto v = run.get("reference_tol")) cfg.reference_tol = to_double(*v, "run.reference_tol");
  if (auto v = run.get("record_wall_time")) cfg.record_wall_time = to_bool(*v, "run.record_wall_time");

  const Section output(child("output"), "output", {"name", "dir", "format"});
  if (auto v = output.get("name")) cfg.name = *v;
  if (auto v = output.get("dir")) cfg.out_dir = *v;
  if (auto v = output.get("format")) {
    if (*v == "csv") {
      cfg.write_csv = true;
      cfg.write_svg = false;
    } else if (*v == "svg") {
      cfg.write_csv = false;
      cfg.write_svg = true;
    } else if (*v == "both") {
      cfg.write_csv = cfg.write_svg = true;
    } else {
      throw ConfigError("output.format: expected csv, svg or both");
    }
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  return parse_config(in, path);
}

// ---------------------------------------------------------------------------
// Runs
// ---------------------------------------------------------------------------

std::shared_ptr<const Problem> build_problem(const ProblemSpec& spec) {
  if (spec.source == ProblemSpec::Source::kLeastSquares) {
    return random_least_squares(spec.n, spec.d, spec.rank, spec.lambda.value_or(0.0), spec.seed);
  }
  Dataset data = spec.source == ProblemSpec::Source::kLibsvm
                     ? parse_libsvm(spec.ingest)
                     : synthetic_classification(spec.n, spec.d, spec.active, spec.seed);
  if (spec.source != ProblemSpec::Source::kLibsvm) normalize(data, spec.ingest.normalize);
  const double lambda = spec.lambda.value_or(1.0 / static_cast<double>(data.size()));
  if (spec.loss == ProblemSpec::Loss::kSigmoid) return std::make_shared<SigmoidLossProblem>(std::move(data), lambda);
  return std::make_shared<LogisticProblem>(std::move(data), lambda);
}

Vector initial_point(Eigen::Index d, std::uint64_t seed) {
  Philox rng = Philox(seed).split(kInitStream);
  const double scale = 1.0 / std::sqrt(static_cast<double>(std::max<Eigen::Index>(d, 1)));
  Vector x(d);
  for (auto& v : x) v = scale * rng.normal();
  return x;
}

namespace {

struct RunPlan {
  RunKey key;
  ResolvedConstants constants;
};

SamplingConstants stepsize_constants(const Sampling& sampling, bool unit_b) {
  SamplingConstants c = sampling.constants();
  if (unit_b) c.B = 1.0;
  return c;
}

ResolvedConstants resolve(const ExperimentConfig& cfg, const Problem& problem, const RunKey& key) {
  const auto& pc = problem.constants();
  const std::size_t n = problem.size();
  const Sampling sampling = Sampling::tau_nice(n, key.tau);
  const SamplingConstants c = stepsize_constants(sampling, cfg.unit_b);
  ResolvedConstants r{pc.L, pc.L_f, pc.mu, c.A, c.B, 0.0, 0};
  switch (key.algorithm) {
    case Algorithm::kMiso: {
      StepsizePolicy policy{cfg.regime, key.multiplier, cfg.manual_gamma};
      r.gamma = resolve_gamma(policy, c, problem);
      break;
    }
    case Algorithm::kSaga: {
      const auto* linear = dynamic_cast<const LinearModel*>(&problem);
      const double lambda = linear != nullptr ? linear->ridge() : 0.0;
      const double lcal =
          cfg.saga_uses_lf ? pc.L_f : saga_expected_smoothness(n, static_cast<double>(key.tau), pc.L, pc.L_f);
      r.gamma = key.multiplier * saga_gamma(lcal, pc.L, pc.mu, lambda, n, static_cast<double>(key.tau));
      break;
    }
    case Algorithm::kSvrg:
      r.gamma = key.multiplier * svrg_gamma(pc.L);
      r.inner_length = svrg_inner_length(n, static_cast<double>(key.tau));
      break;
  }
  return r;
}

using Clock = std::chrono::steady_clock;

/// Shared bookkeeping for one run: trace rows, stopping rule, divergence.
class Recorder {
 public:
  Recorder(const ExperimentConfig& cfg, const Problem& problem, const OptimumReference* opt, Exec exec)
      : cfg_(cfg), problem_(problem), opt_(opt), exec_(exec), start_(Clock::now()) {}

  void set_origin(const Vector& x0) {
    if (opt_ != nullptr) dist0_ = (x0 - opt_->x_star()).squaredNorm();
  }

  double ratio(const Vector& x) const {
    if (opt_ == nullptr) return kNotAvailable;
    const double dist = (x - opt_->x_star()).squaredNorm();
    return dist0_ > 0.0 ? dist / dist0_ : (dist == 0.0 ? 0.0 : std::numeric_limits<double>::infinity());
  }

  void record(Trace& trace, std::uint64_t k, std::uint64_t grad_evals, const Vector& x, double lyapunov) const {
    TraceRow row;
    row.k = k;
    row.grad_evals = grad_evals;
    row.epochs = static_cast<double>(grad_evals) / static_cast<double>(problem_.size());
    if (opt_ != nullptr) {
      row.dist_sq = (x - opt_->x_star()).squaredNorm();
      row.dist_sq_ratio = ratio(x);
      row.subopt = problem_.value(x, exec_) - opt_->f_star();
    }
    row.grad_norm_sq = problem_.full_gradient(x, exec_).squaredNorm();
    row.lyapunov = lyapunov;
    if (cfg_.record_wall_time) {
      row.wall_ns = std::chrono::duration_cast<std::chrono::nanoseconds>(Clock::now() - start_).count();
    }
    trace.push_back(row);
  }

  std::int64_t elapsed_ns() const {
    return std::chrono::duration_cast<std::chrono::nanoseconds>(Clock::now() - start_).count();
  }

 private:
  const ExperimentConfig& cfg_;
  const Problem& problem_;
  const OptimumReference* opt_;
  Exec exec_;
  Clock::time_point start_;
  double dist0_ = 0.0;
};

constexpr double kDivergenceRatio = 1e30;

template <class State, class Lyapunov>
void drive(State& state, const ExperimentConfig& cfg, const Problem& problem, const OptimumReference* opt,
           SubsetSampler& sampler, std::size_t stride, Exec exec, Lyapunov&& lyapunov, RunResult& out) {
  Recorder rec(cfg, problem, opt, exec);
  rec.set_origin(state.x());
  const double max_evals = cfg.max_epochs * static_cast<double>(problem.size());
  auto epochs = [&] { return static_cast<double>(state.grad_evals()) / static_cast<double>(problem.size()); };

  rec.record(out.trace, state.k(), state.grad_evals(), state.x(), lyapunov(state));
  double r = rec.ratio(state.x());
  if (opt != nullptr && r <= cfg.target_ratio) out.epochs_to_target = epochs();

  std::uint64_t last_recorded = state.k();
  while (!out.epochs_to_target && static_cast<double>(state.grad_evals()) < max_evals) {
    state.step(sampler.draw());
    if (opt != nullptr) {
      r = rec.ratio(state.x());
      if (!std::isfinite(r) || r > kDivergenceRatio) {
        out.diverged = true;
        break;
      }
      if (r <= cfg.target_ratio) {
        out.epochs_to_target = epochs();
        break;
      }
    } else if (!state.x().allFinite()) {
      out.diverged = true;
      break;
    }
    if (state.k() - last_recorded >= stride) {
      rec.record(out.trace, state.k(), state.grad_evals(), state.x(), lyapunov(state));
      last_recorded = state.k();
    }
  }
  if (state.k() != last_recorded) {
    const bool finite = state.x().allFinite();
    rec.record(out.trace, state.k(), state.grad_evals(), state.x(), finite ? lyapunov(state) : kNotAvailable);
  }
  out.wall_ns = cfg.record_wall_time ? rec.elapsed_ns() : 0;
}

RunResult execute(const ExperimentConfig& cfg, const std::shared_ptr<const Problem>& problem,
                  const OptimumReference* opt, const RunPlan& plan, Exec exec) {
  RunResult out;
  out.key = plan.key;
  out.constants = plan.constants;
  const std::size_t n = problem->size();
  const std::size_t tau = plan.key.tau;
  const Vector x0 = initial_point(problem->dim(), plan.key.seed);
  const Sampling sampling = Sampling::tau_nice(n, tau);
  SubsetSampler sampler(sampling, Philox(plan.key.seed).split(kSamplingStream));
  const std::size_t stride =
      cfg.trace_stride != 0 ? cfg.trace_stride : std::max<std::size_t>(1, (n + tau - 1) / tau);
  auto none = [](const auto&) { return kNotAvailable; };

  switch (plan.key.algorithm) {
    case Algorithm::kMiso: {
      MisoOptions options;
      options.table = cfg.table;
      options.exec = exec;
      options.recompute_period = (n + tau - 1) / tau;
      MisoState state(problem, plan.constants.gamma, x0.replicate(1, static_cast<Eigen::Index>(n)), options);
      const SamplingConstants c = stepsize_constants(sampling, cfg.unit_b);
      if (cfg.lyapunov == ExperimentConfig::Lyapunov::kConvex && opt != nullptr) {
        drive(state, cfg, *problem, opt, sampler, stride, exec,
              [&](const MisoState& s) { return lyapunov_convex(s, *opt, 2.0, c); }, out);
      } else if (cfg.lyapunov == ExperimentConfig::Lyapunov::kNonconvex) {
        const double q = std::max(4.0, 2.0 * c.B * (6.0 * c.M / c.tau + 1.0));
        const double alpha = 1.0 / (2.0 * plan.constants.gamma * q);
        drive(state, cfg, *problem, opt, sampler, stride, exec,
              [&](const MisoState& s) { return lyapunov_nonconvex(s, alpha); }, out);
      } else {
        drive(state, cfg, *problem, opt, sampler, stride, exec, none, out);
      }
      out.sampled_iterate = Philox(plan.key.seed).split(kIterateStream).uniform_index(state.k() + 1);
      break;
    }
    case Algorithm::kSaga: {
      SagaState state(problem, plan.constants.gamma, static_cast<double>(tau), x0, kRecomputeAuto, exec);
      drive(state, cfg, *problem, opt, sampler, stride, exec, none, out);
      out.sampled_iterate = Philox(plan.key.seed).split(kIterateStream).uniform_index(state.k() + 1);
      break;
    }
    case Algorithm::kSvrg: {
      SvrgState state(problem, plan.constants.gamma, static_cast<double>(tau), plan.constants.inner_length, x0,
                      cfg.svrg_snapshot, exec);
      drive(state, cfg, *problem, opt, sampler, stride, exec, none, out);
      out.sampled_iterate = Philox(plan.key.seed).split(kIterateStream).uniform_index(state.k() + 1);
      break;
    }
  }
  return out;
}

std::uint64_t problem_key(const ProblemSpec& spec, const Problem& problem) {
  const auto* linear = dynamic_cast<const LinearModel*>(&problem);
  std::uint64_t h = linear != nullptr ? dataset_hash(linear->data()) : kFnvOffset;
  fnv_value(h, static_cast<int>(spec.loss));
  fnv_value(h, std::bit_cast<std::uint64_t>(linear != nullptr ? linear->ridge() : 0.0));
  return h;
}

}  // namespace

std::vector<MultiplierSelection> select_multipliers(const std::vector<RunResult>& runs) {
  struct Acc {
    double sum = 0.0;
    std::size_t count = 0;
    bool all = true;
  };
  std::map<std::tuple<Algorithm, std::size_t, double>, Acc> acc;
  for (const auto& r : runs) {
    auto& a = acc[{r.key.algorithm, r.key.tau, r.key.multiplier}];
    if (r.epochs_to_target) {
      a.sum += *r.epochs_to_target;
    } else {
      a.all = false;
    }
    ++a.count;
  }
  std::vector<MultiplierSelection> out;
  for (const auto& [key, a] : acc) {
    const auto& [algo, tau, mult] = key;
    const double mean = a.all ? a.sum / static_cast<double>(a.count) : std::numeric_limits<double>::infinity();
    if (out.empty() || out.back().algorithm != algo || out.back().tau != tau) {
      out.push_back({algo, tau, mult, mean, a.all});
    } else if (mean < out.back().mean_epochs) {
      out.back() = {algo, tau, mult, mean, a.all};
    }
  }
  return out;
}

ExperimentResult run_experiment(const ExperimentConfig& config) {
  auto problem = build_problem(config.problem);
  std::optional<ReferenceSolution> reference;
  if (problem->constants().curvature != Curvature::kNonconvex) {
    if (const auto& known = problem->known_minimizer()) {
      ReferenceSolution r;
      r.x = *known;
      r.residual = problem->full_gradient(r.x).norm();
      reference = std::move(r);
    } else {
      const char* dir = std::getenv("MISO_CACHE_DIR");
      reference = cached_reference_solve(*problem, problem_key(config.problem, *problem), config.reference_tol,
                                         dir != nullptr ? dir : "");
    }
  }
  return run_experiment(config, std::move(problem), std::move(reference));
}

ExperimentResult run_experiment(const ExperimentConfig& config, std::shared_ptr<const Problem> problem,
                                std::optional<ReferenceSolution> reference) {
  config.validate();
  if (!problem) throw std::invalid_argument("null problem");
  const std::size_t n = problem->size();
  for (std::size_t t : config.taus) {
    if (t > n) throw ConfigError("run.tau = " + std::to_string(t) + " exceeds n = " + std::to_string(n));
  }

  std::vector<RunPlan> plans;
  for (Algorithm a : config.algorithms) {
    for (std::size_t t : config.taus) {
      for (double m : config.multipliers) {
        for (std::uint64_t s : config.seeds) {
          RunKey key{a, t, m, s};
          try {
            plans.push_back({key, resolve(config, *problem, key)});
          } catch (const ConfigError& e) {
            throw ConfigError(std::string(to_string(a)) + " tau=" + std::to_string(t) + ": " + e.what());
          }
        }
      }
    }
  }
  std::sort(plans.begin(), plans.end(), [](const RunPlan& x, const RunPlan& y) { return x.key < y.key; });
  plans.erase(std::unique(plans.begin(), plans.end(), [](const RunPlan& x, const RunPlan& y) { return x.key == y.key; }),
              plans.end());

  std::optional<OptimumReference> opt;
  if (reference) opt.emplace(*problem, reference->x);

  ExperimentResult result;
  result.n = n;
  if (const auto* linear = dynamic_cast<const LinearModel*>(problem.get())) result.lambda = linear->ridge();
  result.reference = reference;
  result.runs.resize(plans.size());
  std::vector<std::exception_ptr> errors(plans.size());
  const auto count = static_cast<std::ptrdiff_t>(plans.size());
  const Exec inner = count > 1 ? Exec::kSerial : Exec::kParallel;
#pragma omp parallel for schedule(dynamic) if (count > 1)
  for (std::ptrdiff_t i = 0; i < count; ++i) {
    const auto idx = static_cast<std::size_t>(i);
    try {
      result.runs[idx] = execute(config, problem, opt ? &*opt : nullptr, plans[idx], inner);
    } catch (...) {
      errors[idx] = std::current_exception();
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  result.selections = select_multipliers(result.runs);
  return result;
}

Trace svrg_run(std::shared_ptr<const Problem> problem, std::size_t tau, double gamma, std::size_t m,
               std::size_t outer_iters, const Vector& x0, Philox rng, const OptimumReference* opt) {
  if (!problem) throw std::invalid_argument("null problem");
  if (m == 0) throw ConfigError("svrg: inner loop length m must be at least 1");
  ExperimentConfig cfg;
  Recorder rec(cfg, *problem, opt, Exec::kParallel);
  SvrgState state(problem, gamma, static_cast<double>(tau), m, x0);
  rec.set_origin(x0);
  SubsetSampler sampler(Sampling::tau_nice(problem->size(), tau), rng);
  Trace trace;
  rec.record(trace, 0, state.grad_evals(), state.x(), kNotAvailable);
  for (std::size_t outer = 0; outer < outer_iters; ++outer) {
    for (std::size_t j = 0; j < m; ++j) {
      state.step(sampler.draw());
      rec.record(trace, state.k(), state.grad_evals(), state.x(), kNotAvailable);
    }
  }
  return trace;
}

}  // namespace miso
