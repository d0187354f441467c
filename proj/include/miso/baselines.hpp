#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "miso/kernels.hpp"
#include "miso/miso.hpp"
#include "miso/objective.hpp"

namespace miso {

// ---------------------------------------------------------------------------
// Minibatch SAGA
// ---------------------------------------------------------------------------

/// Expected smoothness of tau-nice sampling:
///   (1/tau) (n - tau)/(n - 1) L + n (tau - 1)/(tau (n - 1)) L_f.
/// For n = 1 this is L_f.
double saga_expected_smoothness(std::size_t n, double tau, double L, double L_f);

/// 1/4 / max{lcal + lambda, (1/tau)(n - tau)/(n - 1) L + (mu/4)(n/tau)}.
/// `lcal` is the expected-smoothness constant (see saga_expected_smoothness).
double saga_gamma(double lcal, double L, double mu, double lambda, std::size_t n, double tau);

/// x <- x - gamma [ (1/tau) sum_{i in S} (f_i'(x) - g_i) + g_bar ], then
/// g_i <- f_i'(x) for i in S. With tau the expected batch size the direction
/// is unbiased for every proper uniform sampling; for tau-nice it equals 1/|S|.
class SagaState {
 public:
  SagaState(std::shared_ptr<const Problem> problem, double gamma, double tau, const Vector& x0,
            std::size_t recompute_period = kRecomputeAuto, Exec exec = Exec::kParallel);

  void step(std::span<const std::size_t> subset);
  void recompute_average();

  const Problem& problem() const noexcept { return *problem_; }
  const Vector& x() const noexcept { return x_; }
  const Vector& g_bar() const noexcept { return g_bar_; }
  const Matrix& table() const noexcept { return grads_; }
  double gamma() const noexcept { return gamma_; }
  std::uint64_t k() const noexcept { return k_; }
  std::uint64_t grad_evals() const noexcept { return grad_evals_; }

 private:
  std::shared_ptr<const Problem> problem_;
  Exec exec_;
  std::size_t n_;
  double gamma_;
  double inv_tau_;
  std::size_t recompute_period_;
  std::size_t since_recompute_ = 0;
  Vector x_;
  Matrix grads_;
  Vector g_bar_;
  std::uint64_t k_ = 0;
  std::uint64_t grad_evals_ = 0;
  Matrix scratch_;
  Vector direction_;
  std::vector<char> touched_;
};

// ---------------------------------------------------------------------------
// Minibatch SVRG
// ---------------------------------------------------------------------------

/// floor(2n / tau), at least 1.
std::size_t svrg_inner_length(std::size_t n, double tau);

/// 0.1 / L.
double svrg_gamma(double L);

enum class SnapshotRule {
  kLastIterate,  ///< y <- last inner iterate
  kAverage       ///< y <- mean of the inner iterates of the loop
};

/// Outer loop: snapshot y and mu = f'(y) (n evaluations). Inner loop of m
/// steps: x <- x - gamma [ (1/tau) sum_{i in S} (f_i'(x) - f_i'(y)) + mu ].
///
/// Component gradients at y are cached when the snapshot is taken, so an
/// inner step costs |S| evaluations.
class SvrgState {
 public:
  SvrgState(std::shared_ptr<const Problem> problem, double gamma, double tau, std::size_t m, const Vector& x0,
            SnapshotRule rule = SnapshotRule::kLastIterate, Exec exec = Exec::kParallel);

  /// One inner step. Takes a fresh snapshot first when the previous loop
  /// finished its m steps.
  void step(std::span<const std::size_t> subset);

  const Problem& problem() const noexcept { return *problem_; }
  const Vector& x() const noexcept { return x_; }
  const Vector& snapshot() const noexcept { return y_; }
  const Vector& snapshot_gradient() const noexcept { return mu_full_; }
  double gamma() const noexcept { return gamma_; }
  std::size_t inner_length() const noexcept { return m_; }
  std::uint64_t k() const noexcept { return k_; }
  std::uint64_t outer() const noexcept { return outer_; }
  std::uint64_t grad_evals() const noexcept { return grad_evals_; }

 private:
  void take_snapshot(const Vector& y);
  void snapshot_component(std::size_t i, Eigen::Ref<Vector> out) const;

  std::shared_ptr<const Problem> problem_;
  const LinearModel* linear_ = nullptr;
  Exec exec_;
  std::size_t n_;
  double gamma_;
  double inv_tau_;
  std::size_t m_;
  SnapshotRule rule_;
  Vector x_;
  Vector y_;
  Vector mu_full_;
  Matrix snapshot_grads_;
  Vector snapshot_residuals_;
  Vector inner_mean_;
  std::size_t inner_done_ = 0;
  std::uint64_t k_ = 0;
  std::uint64_t outer_ = 0;
  std::uint64_t grad_evals_ = 0;
  Matrix scratch_;
  Vector direction_;
  std::vector<char> touched_;
};

}  // namespace miso
