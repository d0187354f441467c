#include "miso/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "miso/errors.hpp"

namespace miso {

OptimumReference::OptimumReference(const Problem& problem, Vector x_star, Exec exec) : x_star_(std::move(x_star)) {
  if (x_star_.size() != problem.dim()) throw std::invalid_argument("x* dimension mismatch");
  const auto n = static_cast<std::ptrdiff_t>(problem.size());
  grads_.resize(problem.dim(), n);
#pragma omp parallel for schedule(static) if (exec == Exec::kParallel)
  for (std::ptrdiff_t i = 0; i < n; ++i) problem.component_gradient(static_cast<std::size_t>(i), x_star_, grads_.col(i));
  f_star_ = problem.value(x_star_, exec);
  residual_ = problem.full_gradient(x_star_, exec).norm();
}

double error_W(const MisoState& state, const OptimumReference& opt) {
  const std::size_t n = state.size();
  const double gamma = state.gamma();
  const Matrix& phi = state.phi();
  const Matrix& at_opt = opt.component_gradients();
  if (phi.rows() != opt.x_star().size() || static_cast<std::size_t>(at_opt.cols()) != n) {
    throw std::invalid_argument("error_W: state and optimum reference disagree on shape");
  }
  Vector g(phi.rows());
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto col = static_cast<Eigen::Index>(i);
    state.stored_gradient(i, g);
    total += (phi.col(col) - opt.x_star() - gamma * (g - at_opt.col(col))).squaredNorm();
  }
  return total;
}

double lyapunov_coefficient(double p, const SamplingConstants& c, std::size_t n) {
  if (!(p >= 0.0)) throw std::invalid_argument("lyapunov: p must be nonnegative");
  const auto nd = static_cast<double>(n);
  return (2.0 + p) * c.A * c.tau / (nd * nd * nd);
}

double lyapunov_convex(const MisoState& state, const OptimumReference& opt, double p, const SamplingConstants& c) {
  const double coeff = lyapunov_coefficient(p, c, state.size());
  const double dist = (state.x() - opt.x_star()).squaredNorm();
  return coeff == 0.0 ? dist : dist + coeff * error_W(state, opt);
}

double mean_sq_distance_to_table(const MisoState& state) {
  const Matrix& phi = state.phi();
  double mean = 0.0;
  for (Eigen::Index i = 0; i < phi.cols(); ++i) {
    mean += ((state.x() - phi.col(i)).squaredNorm() - mean) / static_cast<double>(i + 1);
  }
  return mean;
}

double lyapunov_nonconvex(const MisoState& state, double alpha) {
  if (!(alpha > 0.0)) throw std::invalid_argument("lyapunov: alpha must be positive");
  return state.problem().value(state.x()) + alpha * mean_sq_distance_to_table(state);
}

double strongly_convex_rate(double tau, std::size_t n, double mu, double lcal, double A) {
  if (n == 0 || !(tau > 0.0) || !(mu > 0.0) || !(lcal > 0.0) || A < 0.0) {
    throw ConfigError("rate: need n, tau, mu, lcal > 0 and A >= 0");
  }
  const auto nd = static_cast<double>(n);
  double rate = std::min(tau / (2.0 * nd), mu / (2.0 * lcal));
  if (A > 0.0) rate = std::min(rate, mu * nd * nd / (8.0 * A * tau * lcal));
  return rate;
}

double bound_strongly_convex(std::uint64_t k, double tau, std::size_t n, double mu, double lcal, double A,
                             double psi0) {
  const double rate = strongly_convex_rate(tau, n, mu, lcal, A);
  return std::pow(1.0 - rate, static_cast<double>(k)) * psi0;
}

double bound_convex(std::uint64_t k, const SamplingConstants& c, double L_f, double L, std::size_t n, double psi0) {
  if (n == 0) throw ConfigError("bound: n must be positive");
  const double lead = c.B * L_f + 4.0 * c.A * L / static_cast<double>(n);
  return 2.0 * lead * psi0 / (static_cast<double>(k) + 1.0);
}

namespace {

double spread(std::size_t n, double tau) {
  return n > 1 ? (static_cast<double>(n) - tau) / (static_cast<double>(n) - 1.0) : 0.0;
}

double nonconvex_expression(const CorollaryParams& p, double A, double B, double M, double q,
                            std::vector<std::string>& warnings) {
  const auto nd = static_cast<double>(p.n);
  const double batch_factor = 6.0 * M / p.tau + 1.0;
  const double r = A > 0.0 ? nd * nd / (p.tau * A) : std::numeric_limits<double>::infinity();
  if (r < 24.0 * batch_factor) {
    warnings.push_back("n^2/(tau A) = " + std::to_string(r) + " is below 24(6M/tau + 1) = " +
                       std::to_string(24.0 * batch_factor) + "; the nonconvex guarantee does not apply");
  }
  double worst = 2.0 * B * p.L_f * p.tau / nd;
  if (std::isfinite(r)) {
    worst = std::max({worst, 24.0 * q * p.L_f / r, std::cbrt(24.0 * q * p.L_f * p.L * p.L / r),
                      std::sqrt(24.0 * batch_factor * p.L * p.L / r)});
  }
  return 4.0 * nd / p.tau * worst;
}

}  // namespace

IterationEstimate iterations_to_eps(Corollary which, const CorollaryParams& p, double eps) {
  if (!(eps > 0.0)) throw ConfigError("iterations_to_eps: eps must be positive");
  if (p.n == 0 || !(p.tau >= 1.0) || p.tau > static_cast<double>(p.n)) {
    throw ConfigError("iterations_to_eps: need 1 <= tau <= n");
  }
  IterationEstimate out;
  const auto nd = static_cast<double>(p.n);
  switch (which) {
    case Corollary::kStronglyConvex: {
      if (!(p.mu > 0.0)) throw ConfigError("iterations_to_eps: strongly convex form needs mu > 0");
      if (p.n < 4) out.warnings.push_back("n < 4: the strongly convex iteration bound assumes n >= 4");
      const double lead = std::max(nd / p.tau, p.L_f / p.mu + 6.0 * p.L / (p.tau * p.mu) * spread(p.n, p.tau));
      out.exact = 2.0 * lead * std::max(0.0, std::log(p.initial_gap / eps));
      break;
    }
    case Corollary::kConvex:
      out.exact = 2.0 * (p.L_f + 4.0 * p.L / p.tau * spread(p.n, p.tau)) * p.initial_gap / eps;
      break;
    case Corollary::kNonconvexGeneral: {
      const double q = std::max(4.0, 2.0 * p.B * (6.0 * p.M / p.tau + 1.0));
      out.exact = nonconvex_expression(p, p.A, p.B, p.M, q, out.warnings) * p.initial_gap / eps;
      break;
    }
    case Corollary::kNonconvexTauNice: {
      if (p.n < 168) out.warnings.push_back("n < 168: the tau-nice nonconvex bound assumes n >= 168");
      const double A = p.n > 1 ? nd * (nd - p.tau) / (p.tau * (nd - 1.0)) : 0.0;
      out.exact = nonconvex_expression(p, A, 1.0, p.tau, 14.0, out.warnings) * p.initial_gap / eps;
      break;
    }
  }
  const double up = std::ceil(out.exact);
  out.iterations = up >= 1.8e19 ? std::numeric_limits<std::uint64_t>::max() : static_cast<std::uint64_t>(up);
  return out;
}

}  // namespace miso
