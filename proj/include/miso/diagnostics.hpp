#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "miso/kernels.hpp"
#include "miso/miso.hpp"
#include "miso/objective.hpp"
#include "miso/sampling.hpp"

namespace miso {

inline constexpr double kNotAvailable = std::numeric_limits<double>::quiet_NaN();

struct TraceRow {
  std::uint64_t k = 0;
  std::uint64_t grad_evals = 0;
  double epochs = 0.0;         ///< grad_evals / n
  double dist_sq = kNotAvailable;        ///< ||x - x*||^2
  double dist_sq_ratio = kNotAvailable;  ///< ||x - x*||^2 / ||x0 - x*||^2
  double subopt = kNotAvailable;         ///< f(x) - f*
  double grad_norm_sq = 0.0;             ///< ||f'(x)||^2
  double lyapunov = kNotAvailable;
  std::int64_t wall_ns = 0;
};

using Trace = std::vector<TraceRow>;

/// A minimizer with everything the error quantities need: f*, and the
/// component gradients f_i'(x*) (evaluated once).
class OptimumReference {
 public:
  OptimumReference(const Problem& problem, Vector x_star, Exec exec = Exec::kParallel);

  const Vector& x_star() const noexcept { return x_star_; }
  double f_star() const noexcept { return f_star_; }
  /// ||f'(x*)||, the residual of the reference solution.
  double residual() const noexcept { return residual_; }
  /// d x n, column i is f_i'(x*).
  const Matrix& component_gradients() const noexcept { return grads_; }

 private:
  Vector x_star_;
  double f_star_;
  double residual_;
  Matrix grads_;
};

/// W = sum_i || phi_i - x* - gamma (g_i - f_i'(x*)) ||^2 using the stored g_i.
double error_W(const MisoState& state, const OptimumReference& opt);

/// Coefficient of W in the convex Lyapunov function: (2 + p) A tau / n^3.
double lyapunov_coefficient(double p, const SamplingConstants& c, std::size_t n);

/// Psi_p = ||x - x*||^2 + (2 + p) A tau / n^3 * W.
double lyapunov_convex(const MisoState& state, const OptimumReference& opt, double p, const SamplingConstants& c);

/// (1/n) sum_i ||x - phi_i||^2.
double mean_sq_distance_to_table(const MisoState& state);

/// Psi = f(x) + alpha (1/n) sum_i ||x - phi_i||^2; alpha must be positive.
double lyapunov_nonconvex(const MisoState& state, double alpha);

/// min{tau/(2n), mu/(2 lcal), mu n^2 / (8 A tau lcal)}; the last term is
/// dropped when A = 0.
double strongly_convex_rate(double tau, std::size_t n, double mu, double lcal, double A);

/// (1 - rate)^k psi0.
double bound_strongly_convex(std::uint64_t k, double tau, std::size_t n, double mu, double lcal, double A,
                             double psi0);

/// 2 (B L_f + 4 A L / n) psi0 / (k + 1), where psi0 is Psi_0 at the start.
double bound_convex(std::uint64_t k, const SamplingConstants& c, double L_f, double L, std::size_t n, double psi0);

/// Iteration-count guarantees for tau-nice sampling (and the general
/// nonconvex one).
enum class Corollary {
  kStronglyConvex,    ///< linear rate; needs n >= 4
  kConvex,            ///< O(1/eps) for the uniformly sampled iterate
  kNonconvexGeneral,  ///< O(1/eps) gradient norm for any A, B, M
  kNonconvexTauNice   ///< the general one with tau-nice A, B = 1, M = tau, q = 14; needs n >= 168
};

struct CorollaryParams {
  std::size_t n = 0;
  double tau = 1.0;
  double L = 0.0;
  double L_f = 0.0;
  double mu = 0.0;
  /// Psi^0 for the convex forms, f(x0) - f* for the nonconvex ones.
  double initial_gap = 0.0;
  /// Sampling constants for kNonconvexGeneral.
  double A = 0.0;
  double B = 1.0;
  double M = 1.0;
};

struct IterationEstimate {
  std::uint64_t iterations = 0;  ///< saturates at UINT64_MAX
  double exact = 0.0;            ///< the expression before rounding up
  std::vector<std::string> warnings;
};

IterationEstimate iterations_to_eps(Corollary which, const CorollaryParams& params, double eps);

}  // namespace miso
