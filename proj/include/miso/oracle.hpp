#pragma once

// Brute-force verifiers. Everything here recomputes states from the table
// of auxiliary points with compensated summation; nothing goes through the
// incremental averages of MisoState.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "miso/kernels.hpp"
#include "miso/miso.hpp"
#include "miso/objective.hpp"
#include "miso/rng.hpp"
#include "miso/sampling.hpp"

namespace miso::oracle {

/// Neumaier's compensated summation.
class CompensatedSum {
 public:
  void add(double v) noexcept;
  double value() const noexcept { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

/// Coordinate-wise compensated summation of vectors.
class CompensatedVector {
 public:
  explicit CompensatedVector(Eigen::Index d) : sum_(Vector::Zero(d)), comp_(Vector::Zero(d)) {}
  void add(const Eigen::Ref<const Vector>& v, double weight = 1.0);
  Vector value() const { return sum_ + comp_; }

 private:
  Vector sum_;
  Vector comp_;
};

/// One comparison between an enumerated (exact) expectation and the value it
/// is checked against: a closed form, or a theoretical upper bound.
struct EnumerationReport {
  std::string quantity;
  double exact = 0.0;           ///< by enumeration of the support
  double implementation = 0.0;  ///< closed form or bound being checked
  double abs_error = 0.0;       ///< |exact - implementation| (vector norm for vector quantities)
  double rel_error = 0.0;       ///< abs_error / max(|exact|, |implementation|); 0 when both vanish
  double slack = 0.0;           ///< implementation - exact; >= 0 means an upper bound holds
  double probability_mass = 0.0;
  std::size_t subsets = 0;
  double parameter = 0.0;       ///< auxiliary value (the Lyapunov p where relevant)
};

/// Minimal from-scratch MISO state: the table and the stepsize. The iterate
/// is derived, x = mean(phi) - gamma mean(f_i'(phi_i)).
struct TableState {
  Matrix phi;  ///< d x n
  double gamma = 0.0;
};

/// Component gradients of every column of phi (d x n).
Matrix table_gradients(const Problem& problem, const Matrix& phi);

/// x = mean(phi) - gamma mean(grads) with compensated sums.
Vector iterate_from_table(const Matrix& phi, const Matrix& grads, double gamma);
Vector iterate_from_table(const Problem& problem, const TableState& state);

/// Table after the step on `subset`: phi_i <- x for i in S.
TableState next_table(const TableState& state, const Vector& x, std::span<const std::size_t> subset);

/// E || sum_{i in S} a_i / p ||^2 by enumeration versus A sum ||a_i||^2 + B ||sum a_i||^2.
/// `a` is d x n.
EnumerationReport verify_ab(const Sampling& sampling, const Matrix& a, std::size_t cap = kDefaultSupportCap);

/// E_S[x^{k+1}] - x^k by enumeration.
Vector expected_step(const Problem& problem, const TableState& state, const Sampling& sampling,
                     std::size_t cap = kDefaultSupportCap);

/// Enumerated expected step versus -(gamma tau / n) f'(x^k).
EnumerationReport verify_unbiased_step(const Problem& problem, const TableState& state, const Sampling& sampling,
                                       std::size_t cap = kDefaultSupportCap);

/// The same for a MisoState (only its table and stepsize are read).
EnumerationReport verify_unbiased_step(const MisoState& state, const Sampling& sampling,
                                       std::size_t cap = kDefaultSupportCap);

/// E_S of the step taken by MisoState::step itself, by enumeration over
/// copies of the state. Used to cross-check the implementation against
/// expected_step.
Vector expected_step_of_implementation(const MisoState& state, const Sampling& sampling,
                                       std::size_t cap = kDefaultSupportCap);

/// Monte Carlo estimate of the expected step for supports too large to enumerate.
struct MonteCarloReport {
  Vector mean;
  Vector standard_error;
  Vector reference;
  std::uint64_t draws = 0;
  /// max_j |mean_j - reference_j| / standard_error_j (0/0 counts as 0).
  double max_z = 0.0;
  bool within(double z) const noexcept { return max_z <= z; }
};

MonteCarloReport monte_carlo_unbiased_step(const Problem& problem, const TableState& state, const Sampling& sampling,
                                           std::uint64_t draws, Philox rng);

/// sum_i || phi_i - x* - gamma (f_i'(phi_i) - f_i'(x*)) ||^2 from scratch.
double error_W(const Problem& problem, const TableState& state, const Vector& x_star);

/// E[Psi_p^{k+1}] by enumeration versus the one-step bound
///   (1 - tau/n (gamma mu - A tau p / n^2)) ||x - x*||^2
///   + A tau (2+p)/n^3 (1 - tau p / (n (2+p))) W
///   - 2 gamma tau / n (1 - tau gamma / n (B L_f + (4+p) A L / n)) (f(x) - f*).
/// Requires convex f_i and an exact minimizer x*.
EnumerationReport verify_expected_lyapunov_convex(const Problem& problem, const TableState& state,
                                                  const Sampling& sampling, const SamplingConstants& c,
                                                  const Vector& x_star, double p,
                                                  std::size_t cap = kDefaultSupportCap);

/// E[Psi_p^{k+1}] <= (1 - rate) Psi_p^k for the strongly convex stepsize
/// gamma = n / (tau lcal). p = 2 when n^3 >= 4 A tau^2 lcal / mu, otherwise
/// p = gamma mu n^2 / (2 A tau); the rate is the matching two-term minimum.
/// The chosen p is returned in `parameter`.
EnumerationReport verify_contraction_strongly_convex(const Problem& problem, const TableState& state,
                                                     const Sampling& sampling, const SamplingConstants& c,
                                                     const Vector& x_star, std::size_t cap = kDefaultSupportCap);

/// E[Psi^{k+1}] by enumeration versus Psi^k - (gamma tau / 4n) ||f'(x^k)||^2
/// for Psi = f(x) + alpha (1/n) sum ||x - phi_i||^2.
EnumerationReport verify_expected_lyapunov_nonconvex(const Problem& problem, const TableState& state,
                                                     const Sampling& sampling, double alpha,
                                                     std::size_t cap = kDefaultSupportCap);

/// E||x^{k+1} - x^k||^2 by enumeration versus
///   2 tau^2 A (1 + gamma^2 L^2) / n^3 * (1/n) sum ||x - phi_i||^2 + tau^2 gamma^2 B / n^2 ||f'(x)||^2.
EnumerationReport verify_step_distance(const Problem& problem, const TableState& state, const Sampling& sampling,
                                       const SamplingConstants& c, std::size_t cap = kDefaultSupportCap);

}  // namespace miso::oracle
