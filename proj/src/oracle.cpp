#include "miso/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "miso/errors.hpp"

namespace miso::oracle {

void CompensatedSum::add(double v) noexcept {
  const double t = sum_ + v;
  if (std::abs(sum_) >= std::abs(v)) {
    comp_ += (sum_ - t) + v;
  } else {
    comp_ += (v - t) + sum_;
  }
  sum_ = t;
}

void CompensatedVector::add(const Eigen::Ref<const Vector>& v, double weight) {
  for (Eigen::Index j = 0; j < sum_.size(); ++j) {
    const double term = weight * v[j];
    const double t = sum_[j] + term;
    if (std::abs(sum_[j]) >= std::abs(term)) {
      comp_[j] += (sum_[j] - t) + term;
    } else {
      comp_[j] += (term - t) + sum_[j];
    }
    sum_[j] = t;
  }
}

namespace {

void finish(EnumerationReport& r) {
  r.abs_error = std::abs(r.exact - r.implementation);
  r.slack = r.implementation - r.exact;
  const double scale = std::max(std::abs(r.exact), std::abs(r.implementation));
  r.rel_error = scale > 0.0 ? r.abs_error / scale : 0.0;
}

void finish_vector(EnumerationReport& r, const Vector& exact, const Vector& closed) {
  r.exact = exact.norm();
  r.implementation = closed.norm();
  r.abs_error = (exact - closed).norm();
  r.slack = 0.0;
  const double scale = std::max(r.exact, r.implementation);
  r.rel_error = scale > 0.0 ? r.abs_error / scale : 0.0;
}

double compensated_squared_norm(const Eigen::Ref<const Vector>& v) {
  CompensatedSum s;
  for (Eigen::Index j = 0; j < v.size(); ++j) s.add(v[j] * v[j]);
  return s.value();
}

double compensated_value(const Problem& problem, const Vector& x) {
  CompensatedSum s;
  for (std::size_t i = 0; i < problem.size(); ++i) s.add(problem.component_value(i, x));
  return s.value() / static_cast<double>(problem.size());
}

Vector compensated_gradient(const Problem& problem, const Vector& x) {
  return iterate_from_table(Matrix::Zero(x.size(), static_cast<Eigen::Index>(problem.size())),
                            table_gradients(problem, x.replicate(1, static_cast<Eigen::Index>(problem.size()))),
                            -1.0);
}

/// Everything about the current state that all successor computations share.
struct Prepared {
  Matrix grads;     ///< f_i'(phi_i)
  Vector x;         ///< x^k from scratch
  Matrix grads_x;   ///< f_i'(x^k)
};

Prepared prepare(const Problem& problem, const TableState& state) {
  if (state.phi.rows() != problem.dim() || static_cast<std::size_t>(state.phi.cols()) != problem.size()) {
    throw std::invalid_argument("oracle: table must be d x n");
  }
  Prepared p;
  p.grads = table_gradients(problem, state.phi);
  p.x = iterate_from_table(state.phi, p.grads, state.gamma);
  p.grads_x = table_gradients(problem, p.x.replicate(1, static_cast<Eigen::Index>(problem.size())));
  return p;
}

/// Successor state for `subset`, recomputed from scratch.
struct Successor {
  Matrix phi;
  Matrix grads;
  Vector x;
};

Successor successor(const TableState& state, const Prepared& prep, const Subset& subset) {
  Successor s{state.phi, prep.grads, Vector()};
  for (std::size_t i : subset) {
    const auto col = static_cast<Eigen::Index>(i);
    s.phi.col(col) = prep.x;
    s.grads.col(col) = prep.grads_x.col(col);
  }
  s.x = iterate_from_table(s.phi, s.grads, state.gamma);
  return s;
}

/// sum over the support of prob(S) * eval(S), evaluated in parallel and
/// reduced in support order.
template <class Eval>
double enumerate_scalar(const std::vector<WeightedSubset>& support, Eval&& eval, double& mass) {
  const auto count = static_cast<std::ptrdiff_t>(support.size());
  std::vector<double> values(support.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t s = 0; s < count; ++s) values[static_cast<std::size_t>(s)] = eval(support[static_cast<std::size_t>(s)].indices);
  CompensatedSum total;
  CompensatedSum m;
  for (std::size_t s = 0; s < support.size(); ++s) {
    total.add(support[s].probability * values[s]);
    m.add(support[s].probability);
  }
  mass = m.value();
  return total.value();
}

template <class Eval>
Vector enumerate_vector(const std::vector<WeightedSubset>& support, Eigen::Index d, Eval&& eval, double& mass) {
  const auto count = static_cast<std::ptrdiff_t>(support.size());
  Matrix values(d, count);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t s = 0; s < count; ++s) values.col(s) = eval(support[static_cast<std::size_t>(s)].indices);
  CompensatedVector total(d);
  CompensatedSum m;
  for (std::size_t s = 0; s < support.size(); ++s) {
    total.add(values.col(static_cast<Eigen::Index>(s)), support[s].probability);
    m.add(support[s].probability);
  }
  mass = m.value();
  return total.value();
}

double W_from(const Matrix& phi, const Matrix& grads, const Matrix& grads_opt, const Vector& x_star, double gamma) {
  CompensatedSum s;
  for (Eigen::Index i = 0; i < phi.cols(); ++i) {
    s.add(compensated_squared_norm(phi.col(i) - x_star - gamma * (grads.col(i) - grads_opt.col(i))));
  }
  return s.value();
}

double mean_sq_distance(const Matrix& phi, const Vector& x) {
  CompensatedSum s;
  for (Eigen::Index i = 0; i < phi.cols(); ++i) s.add(compensated_squared_norm(x - phi.col(i)));
  return s.value() / static_cast<double>(phi.cols());
}

}  // namespace

Matrix table_gradients(const Problem& problem, const Matrix& phi) {
  const auto n = static_cast<Eigen::Index>(problem.size());
  Matrix grads(problem.dim(), n);
  Vector point;
  for (Eigen::Index i = 0; i < n; ++i) {
    point = phi.col(i);
    problem.component_gradient(static_cast<std::size_t>(i), point, grads.col(i));
  }
  return grads;
}

Vector iterate_from_table(const Matrix& phi, const Matrix& grads, double gamma) {
  const Eigen::Index d = phi.rows();
  CompensatedVector phi_sum(d);
  CompensatedVector grad_sum(d);
  for (Eigen::Index i = 0; i < phi.cols(); ++i) {
    phi_sum.add(phi.col(i));
    grad_sum.add(grads.col(i));
  }
  const auto n = static_cast<double>(phi.cols());
  return phi_sum.value() / n - gamma * (grad_sum.value() / n);
}

Vector iterate_from_table(const Problem& problem, const TableState& state) {
  return iterate_from_table(state.phi, table_gradients(problem, state.phi), state.gamma);
}

TableState next_table(const TableState& state, const Vector& x, std::span<const std::size_t> subset) {
  TableState next = state;
  for (std::size_t i : subset) {
    if (i >= static_cast<std::size_t>(state.phi.cols())) throw std::out_of_range("oracle: subset index out of range");
    next.phi.col(static_cast<Eigen::Index>(i)) = x;
  }
  return next;
}

EnumerationReport verify_ab(const Sampling& sampling, const Matrix& a, std::size_t cap) {
  if (static_cast<std::size_t>(a.cols()) != sampling.n()) throw std::invalid_argument("verify_ab: need d x n vectors");
  const auto support = sampling.enumerate_support(cap);
  const SamplingConstants c = sampling.constants();
  EnumerationReport r;
  r.quantity = "E||sum_S a_i/p||^2 vs A sum||a_i||^2 + B||sum a_i||^2";
  r.subsets = support.size();
  r.exact = enumerate_scalar(
      support,
      [&](const Subset& s) {
        CompensatedVector v(a.rows());
        for (std::size_t i : s) v.add(a.col(static_cast<Eigen::Index>(i)), 1.0 / c.p);
        return compensated_squared_norm(v.value());
      },
      r.probability_mass);
  CompensatedSum norms;
  CompensatedVector total(a.rows());
  for (Eigen::Index i = 0; i < a.cols(); ++i) {
    norms.add(compensated_squared_norm(a.col(i)));
    total.add(a.col(i));
  }
  r.implementation = c.A * norms.value() + c.B * compensated_squared_norm(total.value());
  finish(r);
  return r;
}

Vector expected_step(const Problem& problem, const TableState& state, const Sampling& sampling, std::size_t cap) {
  const auto support = sampling.enumerate_support(cap);
  const Prepared prep = prepare(problem, state);
  double mass = 0.0;
  return enumerate_vector(
      support, problem.dim(), [&](const Subset& s) -> Vector { return successor(state, prep, s).x - prep.x; }, mass);
}

EnumerationReport verify_unbiased_step(const Problem& problem, const TableState& state, const Sampling& sampling,
                                       std::size_t cap) {
  const auto support = sampling.enumerate_support(cap);
  const Prepared prep = prepare(problem, state);
  EnumerationReport r;
  r.quantity = "E[x+ - x] vs -(gamma tau/n) f'(x)";
  r.subsets = support.size();
  const Vector exact = enumerate_vector(
      support, problem.dim(), [&](const Subset& s) -> Vector { return successor(state, prep, s).x - prep.x; },
      r.probability_mass);
  const SamplingConstants c = sampling.constants();
  const Vector closed =
      -(state.gamma * c.tau / static_cast<double>(problem.size())) * compensated_gradient(problem, prep.x);
  finish_vector(r, exact, closed);
  return r;
}

EnumerationReport verify_unbiased_step(const MisoState& state, const Sampling& sampling, std::size_t cap) {
  return verify_unbiased_step(state.problem(), TableState{state.phi(), state.gamma()}, sampling, cap);
}

Vector expected_step_of_implementation(const MisoState& state, const Sampling& sampling, std::size_t cap) {
  const auto support = sampling.enumerate_support(cap);
  double mass = 0.0;
  return enumerate_vector(
      support, state.problem().dim(),
      [&](const Subset& s) -> Vector {
        MisoState copy = state;
        copy.step(s);
        return copy.x() - state.x();
      },
      mass);
}

MonteCarloReport monte_carlo_unbiased_step(const Problem& problem, const TableState& state, const Sampling& sampling,
                                           std::uint64_t draws, Philox rng) {
  if (draws < 2) throw std::invalid_argument("monte carlo: need at least two draws");
  const Prepared prep = prepare(problem, state);
  SubsetSampler sampler(sampling, rng);
  const Eigen::Index d = problem.dim();
  Vector mean = Vector::Zero(d);
  Vector m2 = Vector::Zero(d);
  Subset subset;
  for (std::uint64_t t = 1; t <= draws; ++t) {
    const auto drawn = sampler.draw();
    subset.assign(drawn.begin(), drawn.end());
    const Vector step = successor(state, prep, subset).x - prep.x;
    const Vector delta = step - mean;
    mean += delta / static_cast<double>(t);
    m2 += delta.cwiseProduct(step - mean);
  }
  MonteCarloReport r;
  r.draws = draws;
  r.mean = mean;
  const auto nd = static_cast<double>(draws);
  r.standard_error = (m2 / (nd - 1.0) / nd).cwiseSqrt();
  const SamplingConstants c = sampling.constants();
  r.reference = -(state.gamma * c.tau / static_cast<double>(problem.size())) * compensated_gradient(problem, prep.x);
  for (Eigen::Index j = 0; j < d; ++j) {
    const double diff = std::abs(r.mean[j] - r.reference[j]);
    const double se = r.standard_error[j];
    if (se > 0.0) {
      r.max_z = std::max(r.max_z, diff / se);
    } else if (diff > 0.0) {
      r.max_z = std::numeric_limits<double>::infinity();
    }
  }
  return r;
}

double error_W(const Problem& problem, const TableState& state, const Vector& x_star) {
  const Matrix grads = table_gradients(problem, state.phi);
  const Matrix grads_opt = table_gradients(problem, x_star.replicate(1, state.phi.cols()));
  return W_from(state.phi, grads, grads_opt, x_star, state.gamma);
}

namespace {

struct ConvexPieces {
  double dist_sq;
  double W;
  double gap;
  double expected_next;  ///< E[Psi_p^{k+1}]
  std::size_t subsets;
  double mass;
};

ConvexPieces convex_pieces(const Problem& problem, const TableState& state, const Sampling& sampling,
                           const SamplingConstants& c, const Vector& x_star, double p, std::size_t cap) {
  const auto support = sampling.enumerate_support(cap);
  const Prepared prep = prepare(problem, state);
  const Matrix grads_opt = table_gradients(problem, x_star.replicate(1, state.phi.cols()));
  const auto n = static_cast<double>(problem.size());
  const double coeff = (2.0 + p) * c.A * c.tau / (n * n * n);
  ConvexPieces out{};
  out.dist_sq = compensated_squared_norm(prep.x - x_star);
  out.W = W_from(state.phi, prep.grads, grads_opt, x_star, state.gamma);
  out.gap = compensated_value(problem, prep.x) - compensated_value(problem, x_star);
  out.subsets = support.size();
  out.expected_next = enumerate_scalar(
      support,
      [&](const Subset& s) {
        const Successor next = successor(state, prep, s);
        return compensated_squared_norm(next.x - x_star) +
               coeff * W_from(next.phi, next.grads, grads_opt, x_star, state.gamma);
      },
      out.mass);
  return out;
}

}  // namespace

EnumerationReport verify_expected_lyapunov_convex(const Problem& problem, const TableState& state,
                                                  const Sampling& sampling, const SamplingConstants& c,
                                                  const Vector& x_star, double p, std::size_t cap) {
  const auto& k = problem.constants();
  if (k.curvature == Curvature::kNonconvex) throw ConfigError("convex Lyapunov check on a nonconvex problem");
  const ConvexPieces pc = convex_pieces(problem, state, sampling, c, x_star, p, cap);
  const auto n = static_cast<double>(problem.size());
  const double g = state.gamma;
  const double t = c.tau;
  EnumerationReport r;
  r.quantity = "E[Psi_p+] vs one-step bound";
  r.parameter = p;
  r.subsets = pc.subsets;
  r.probability_mass = pc.mass;
  r.exact = pc.expected_next;
  r.implementation = (1.0 - t / n * (g * k.mu - c.A * t * p / (n * n))) * pc.dist_sq +
                     c.A * t * (2.0 + p) / (n * n * n) * (1.0 - t / n * p / (2.0 + p)) * pc.W -
                     2.0 * g * t / n * (1.0 - t * g / n * (c.B * k.L_f + (4.0 + p) * c.A * k.L / n)) * pc.gap;
  finish(r);
  return r;
}

EnumerationReport verify_contraction_strongly_convex(const Problem& problem, const TableState& state,
                                                     const Sampling& sampling, const SamplingConstants& c,
                                                     const Vector& x_star, std::size_t cap) {
  const auto& k = problem.constants();
  if (!(k.mu > 0.0)) throw ConfigError("contraction check needs mu > 0");
  const auto n = static_cast<double>(problem.size());
  const double lcal = c.B * k.L_f + 6.0 * c.A * k.L / n;
  double p = 2.0;
  double rate = std::min(c.tau / (2.0 * n), k.mu / (2.0 * lcal));
  if (c.A > 0.0 && n * n * n < 4.0 * c.A * c.tau * c.tau * lcal / k.mu) {
    p = state.gamma * k.mu * n * n / (2.0 * c.A * c.tau);
    rate = std::min(k.mu / (2.0 * lcal), k.mu * n * n / (8.0 * c.A * c.tau * lcal));
  }
  const ConvexPieces pc = convex_pieces(problem, state, sampling, c, x_star, p, cap);
  EnumerationReport r;
  r.quantity = "E[Psi_p+] vs (1 - rate) Psi_p";
  r.parameter = p;
  r.subsets = pc.subsets;
  r.probability_mass = pc.mass;
  r.exact = pc.expected_next;
  r.implementation = (1.0 - rate) * (pc.dist_sq + (2.0 + p) * c.A * c.tau / (n * n * n) * pc.W);
  finish(r);
  return r;
}

EnumerationReport verify_expected_lyapunov_nonconvex(const Problem& problem, const TableState& state,
                                                     const Sampling& sampling, double alpha, std::size_t cap) {
  if (!(alpha > 0.0)) throw std::invalid_argument("nonconvex Lyapunov check: alpha must be positive");
  const auto support = sampling.enumerate_support(cap);
  const Prepared prep = prepare(problem, state);
  const SamplingConstants c = sampling.constants();
  EnumerationReport r;
  r.quantity = "E[Psi+] vs Psi - (gamma tau/4n)||f'(x)||^2";
  r.parameter = alpha;
  r.subsets = support.size();
  r.exact = enumerate_scalar(
      support,
      [&](const Subset& s) {
        const Successor next = successor(state, prep, s);
        return compensated_value(problem, next.x) + alpha * mean_sq_distance(next.phi, next.x);
      },
      r.probability_mass);
  const double psi = compensated_value(problem, prep.x) + alpha * mean_sq_distance(state.phi, prep.x);
  const double grad_sq = compensated_squared_norm(compensated_gradient(problem, prep.x));
  r.implementation = psi - state.gamma * c.tau / (4.0 * static_cast<double>(problem.size())) * grad_sq;
  finish(r);
  return r;
}

EnumerationReport verify_step_distance(const Problem& problem, const TableState& state, const Sampling& sampling,
                                       const SamplingConstants& c, std::size_t cap) {
  const auto support = sampling.enumerate_support(cap);
  const Prepared prep = prepare(problem, state);
  EnumerationReport r;
  r.quantity = "E||x+ - x||^2 vs step-distance bound";
  r.subsets = support.size();
  r.exact = enumerate_scalar(
      support, [&](const Subset& s) { return compensated_squared_norm(successor(state, prep, s).x - prep.x); },
      r.probability_mass);
  const auto n = static_cast<double>(problem.size());
  const double g = state.gamma;
  const double L = problem.constants().L;
  const double grad_sq = compensated_squared_norm(compensated_gradient(problem, prep.x));
  r.implementation = 2.0 * c.tau * c.tau * c.A * (1.0 + g * g * L * L) / (n * n * n) * mean_sq_distance(state.phi, prep.x) +
                     c.tau * c.tau * g * g * c.B / (n * n) * grad_sq;
  finish(r);
  return r;
}

}  // namespace miso::oracle
