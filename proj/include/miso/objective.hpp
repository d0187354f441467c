#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <optional>
#include <vector>

#include "miso/kernels.hpp"

namespace miso {

/// Sparse binary-classification data: n rows of features, labels in {-1, +1}.
struct Dataset {
  SparseRows features;          ///< n x d, row-major, 0-based column indices
  std::vector<double> labels;   ///< one of -1, +1 per row

  std::size_t size() const noexcept { return labels.size(); }
  Eigen::Index dim() const noexcept { return features.cols(); }

  /// Throws ConfigError if labels are not +-1 or the shapes disagree.
  void validate() const;
};

enum class Curvature { kStronglyConvex, kConvex, kNonconvex };

struct ProblemConstants {
  std::vector<double> component_smoothness;  ///< L_i
  double L = 0.0;                            ///< max_i L_i
  double L_f = 0.0;                          ///< smoothness of the average f
  double mu = 0.0;                           ///< strong convexity of f; 0 unless strongly convex
  Curvature curvature = Curvature::kConvex;
};

/// Finite sum f(x) = (1/n) sum_i f_i(x) with per-component gradient oracles.
///
/// Implementations are immutable and safe to share between threads.
class Problem {
 public:
  virtual ~Problem() = default;

  std::size_t size() const noexcept { return n_; }
  Eigen::Index dim() const noexcept { return d_; }
  const ProblemConstants& constants() const noexcept { return constants_; }
  /// Closed-form minimizer when the problem knows one.
  const std::optional<Vector>& known_minimizer() const noexcept { return minimizer_; }

  virtual double component_value(std::size_t i, const Vector& x) const = 0;
  virtual void component_gradient(std::size_t i, const Vector& x, Eigen::Ref<Vector> out) const = 0;

  /// f(x). The default averages component values with kernels::mean_of_scalars.
  virtual double value(const Vector& x, Exec exec = Exec::kParallel) const;
  /// f'(x). The default averages component gradients with kernels::mean_of.
  virtual void full_gradient(const Vector& x, Vector& out, Exec exec = Exec::kParallel) const;
  Vector full_gradient(const Vector& x, Exec exec = Exec::kParallel) const;

 protected:
  Problem(std::size_t n, Eigen::Index d) : n_(n), d_(d) {}

  void check_dim(const Vector& x) const;

  std::size_t n_;
  Eigen::Index d_;
  ProblemConstants constants_;
  std::optional<Vector> minimizer_;
};

/// Generalized linear model: f_i(x) = loss_i(<a_i, x>) + (lambda/2)||x||^2.
/// Component gradients are residual_i * a_i + lambda x with a scalar
/// residual, which lets solvers store one number per component.
class LinearModel : public Problem {
 public:
  const Dataset& data() const noexcept { return data_; }
  double ridge() const noexcept { return lambda_; }

  virtual double loss(std::size_t i, double margin) const = 0;
  /// d loss_i / d margin.
  virtual double residual(std::size_t i, double margin) const = 0;

  double margin(std::size_t i, Eigen::Ref<const Vector> x) const;

  double component_value(std::size_t i, const Vector& x) const override;
  void component_gradient(std::size_t i, const Vector& x, Eigen::Ref<Vector> out) const override;
  double value(const Vector& x, Exec exec = Exec::kParallel) const override;
  void full_gradient(const Vector& x, Vector& out, Exec exec = Exec::kParallel) const override;
  using Problem::full_gradient;

 protected:
  LinearModel(Dataset data, double lambda);

  Dataset data_;
  double lambda_;
  std::vector<double> row_norms_sq_;
};

/// f_i(x) = log(1 + exp(-y_i <a_i, x>)) + (lambda/2)||x||^2, lambda > 0.
/// L_i = ||a_i||^2/4 + lambda, L_f = lambda_max(A^T A / (4n)) + lambda, mu = lambda.
class LogisticProblem final : public LinearModel {
 public:
  LogisticProblem(Dataset data, double lambda);

  double loss(std::size_t i, double margin) const override;
  double residual(std::size_t i, double margin) const override;
};

/// Smooth nonconvex sigmoid loss: f_i(x) = 1/(1 + exp(y_i <a_i, x>)) + (lambda/2)||x||^2.
///
/// The second derivative of the sigmoid is bounded by 1/(6 sqrt 3) < 0.1, so
/// L_i = 0.1 ||a_i||^2 + lambda and L_f = 0.1 lambda_max(A^T A / n) + lambda.
class SigmoidLossProblem final : public LinearModel {
 public:
  static constexpr double kCurvatureBound = 0.1;

  SigmoidLossProblem(Dataset data, double lambda);

  double loss(std::size_t i, double margin) const override;
  double residual(std::size_t i, double margin) const override;
};

/// f_i(x) = x^T Q_i x / 2 - b_i^T x with symmetric positive semidefinite Q_i.
/// Constants are exact: L_i = lambda_max(Q_i), L_f = lambda_max(Qbar),
/// mu = lambda_min(Qbar). The minimizer solves Qbar x = bbar (minimum-norm
/// solution when Qbar is singular).
class QuadraticProblem final : public Problem {
 public:
  QuadraticProblem(std::vector<Matrix> Q, std::vector<Vector> b);

  double component_value(std::size_t i, const Vector& x) const override;
  void component_gradient(std::size_t i, const Vector& x, Eigen::Ref<Vector> out) const override;

  const Matrix& average_hessian() const noexcept { return q_bar_; }
  const Vector& average_linear_term() const noexcept { return b_bar_; }

 private:
  std::vector<Matrix> q_;
  std::vector<Vector> b_;
  Matrix q_bar_;
  Vector b_bar_;
};

/// Largest eigenvalue of A^T A by power iteration; stops when the relative
/// change of the estimate falls below `tol`.
double gram_top_eigenvalue(const SparseRows& A, double tol = 1e-8, int max_iter = 10'000,
                           Exec exec = Exec::kParallel);

double sigmoid(double z) noexcept;

}  // namespace miso
