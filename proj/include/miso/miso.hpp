#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <memory>
#include <span>
#include <vector>

#include "miso/kernels.hpp"
#include "miso/objective.hpp"
#include "miso/sampling.hpp"

namespace miso {

// ---------------------------------------------------------------------------
// Stepsizes
// ---------------------------------------------------------------------------

/// Strongly convex regime: gamma = n / (tau * Lcal) with Lcal = B L_f + 6 A L / n.
double gamma_strongly_convex(const SamplingConstants& c, double L_f, double L, std::size_t n);

/// Convex regime: gamma = n / (2 tau (B L_f + 4 A L / n)).
double gamma_convex(const SamplingConstants& c, double L_f, double L, std::size_t n);

/// Nonconvex stepsize and the Lyapunov weights derived from it.
struct NonconvexStepsize {
  double gamma = 0.0;
  double q = 0.0;      ///< max{4, 2B(6M/tau + 1)}
  double beta = 0.0;   ///< 1 / (2 gamma)
  double alpha = 0.0;  ///< beta / q
  /// The four candidates whose minimum is gamma; +inf where a term degenerates.
  std::array<double, 4> terms{};
};

/// Largest stepsize admitted by the nonconvex theory. Throws ConfigError when
/// n^2 / (tau A) < 24 (6M/tau + 1), i.e. the minibatch is too large for the
/// nonconvex guarantee to apply.
NonconvexStepsize gamma_nonconvex(const SamplingConstants& c, double L_f, double L, std::size_t n);

struct StepsizePolicy {
  enum class Regime { kStronglyConvex, kConvex, kNonconvex, kManual };

  Regime regime = Regime::kStronglyConvex;
  double multiplier = 1.0;
  double manual_gamma = 0.0;  ///< used only by kManual
};

/// multiplier * (theoretical gamma for the regime). Throws ConfigError on a
/// policy/problem mismatch such as kStronglyConvex with mu = 0.
double resolve_gamma(const StepsizePolicy& policy, const SamplingConstants& c, const Problem& problem);

// ---------------------------------------------------------------------------
// State
// ---------------------------------------------------------------------------

/// How stored gradients are kept.
enum class GradientTable {
  kFull,                 ///< d x n table of f_i'(phi_i)
  kLinearModelResiduals  ///< one scalar per component; needs a LinearModel problem
};

inline constexpr std::size_t kRecomputeAuto = std::numeric_limits<std::size_t>::max();

struct MisoOptions {
  GradientTable table = GradientTable::kFull;
  /// Steps between full recomputations of the averages. kRecomputeAuto uses
  /// ceil(n / tau) (one epoch); 0 never recomputes.
  std::size_t recompute_period = kRecomputeAuto;
  Exec exec = Exec::kParallel;
};

/// Minibatch MISO.
///
/// Keeps auxiliary points phi_i, their stored gradients g_i = f_i'(phi_i) and
/// the running averages phi_bar and g_bar. After every step
///   x = phi_bar - gamma * g_bar
/// and each step touches only the sampled components: O(|S| d) work.
class MisoState {
 public:
  /// Resolves gamma from the policy and sets every phi_i to `phi0`.
  static MisoState init(std::shared_ptr<const Problem> problem, const Sampling& sampling,
                        const StepsizePolicy& policy, const Vector& phi0, MisoOptions options = {});
  /// Same with an explicit d x n table of initial auxiliary points.
  static MisoState init(std::shared_ptr<const Problem> problem, const Sampling& sampling,
                        const StepsizePolicy& policy, Matrix phi0, MisoOptions options = {});

  /// Direct construction with a known stepsize. With kRecomputeAuto the
  /// recompute period is n steps.
  MisoState(std::shared_ptr<const Problem> problem, double gamma, Matrix phi0, MisoOptions options = {});

  /// phi_i <- x for i in S, refresh g_i, update averages, x <- phi_bar - gamma g_bar.
  /// An empty subset leaves everything but k unchanged.
  void step(std::span<const std::size_t> subset);

  /// Recomputes phi_bar and g_bar by full summation and resets x.
  void recompute_averages();

  const Problem& problem() const noexcept { return *problem_; }
  const std::shared_ptr<const Problem>& problem_ptr() const noexcept { return problem_; }
  std::size_t size() const noexcept { return n_; }
  double gamma() const noexcept { return gamma_; }
  const Vector& x() const noexcept { return x_; }
  /// d x n, column i is phi_i.
  const Matrix& phi() const noexcept { return phi_; }
  const Vector& phi_bar() const noexcept { return phi_bar_; }
  Vector g_bar() const;
  /// g_i = f_i'(phi_i) as stored (reconstructed from the residual in compact mode).
  void stored_gradient(std::size_t i, Eigen::Ref<Vector> out) const;
  std::uint64_t k() const noexcept { return k_; }
  std::uint64_t grad_evals() const noexcept { return grad_evals_; }
  GradientTable table() const noexcept { return options_.table; }

 private:
  void evaluate_all();
  void update_x();

  std::shared_ptr<const Problem> problem_;
  const LinearModel* linear_ = nullptr;
  MisoOptions options_;
  std::size_t n_;
  double gamma_;
  Vector x_;
  Matrix phi_;
  Matrix grads_;
  Vector residuals_;
  Vector phi_bar_;
  Vector g_bar_;  ///< full mode: mean g_i; compact mode: mean residual_i a_i
  std::uint64_t k_ = 0;
  std::uint64_t grad_evals_ = 0;
  std::size_t since_recompute_ = 0;

  Matrix scratch_;
  std::vector<double> scratch_residuals_;
  std::vector<char> touched_;
};

/// Validates that `subset` holds distinct indices below n. Throws std::out_of_range.
void check_subset(std::span<const std::size_t> subset, std::size_t n, std::vector<char>& marks);

}  // namespace miso
