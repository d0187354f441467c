#include "miso/objective.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "miso/errors.hpp"
#include "miso/rng.hpp"

namespace miso {

double sigmoid(double z) noexcept {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

void Dataset::validate() const {
  if (static_cast<std::size_t>(features.rows()) != labels.size()) {
    throw ConfigError("dataset: " + std::to_string(features.rows()) + " feature rows but " +
                      std::to_string(labels.size()) + " labels");
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 1.0 && labels[i] != -1.0) {
      throw ConfigError("dataset: label of row " + std::to_string(i) + " is not +-1");
    }
  }
}

void Problem::check_dim(const Vector& x) const {
  if (x.size() != d_) {
    throw std::invalid_argument("dimension mismatch: expected " + std::to_string(d_) + ", got " +
                                std::to_string(x.size()));
  }
}

double Problem::value(const Vector& x, Exec exec) const {
  check_dim(x);
  return kernels::mean_of_scalars(n_, [&](std::size_t i) { return component_value(i, x); }, exec);
}

void Problem::full_gradient(const Vector& x, Vector& out, Exec exec) const {
  check_dim(x);
  kernels::mean_of(n_, d_, [&](std::size_t i, Vector& g) { component_gradient(i, x, g); }, out, exec);
}

Vector Problem::full_gradient(const Vector& x, Exec exec) const {
  Vector out;
  full_gradient(x, out, exec);
  return out;
}

double gram_top_eigenvalue(const SparseRows& A, double tol, int max_iter, Exec exec) {
  const Eigen::Index d = A.cols();
  if (d == 0 || A.nonZeros() == 0) return 0.0;
  Philox rng(0x5eed);
  Vector v(d);
  for (Eigen::Index j = 0; j < d; ++j) v[j] = 1.0 + 0.1 * rng.normal();
  v.normalize();
  Vector w;
  double estimate = 0.0;
  for (int iter = 0; iter < max_iter; ++iter) {
    kernels::gram_apply(A, v, w, exec);
    const double next = v.dot(w);  // Rayleigh quotient, v has unit norm
    const double norm = w.norm();
    if (norm == 0.0) return 0.0;
    v = w / norm;
    if (iter > 0 && std::abs(next - estimate) <= tol * std::abs(next)) return next;
    estimate = next;
  }
  return estimate;
}

LinearModel::LinearModel(Dataset data, double lambda)
    : Problem(data.size(), data.dim()), data_(std::move(data)), lambda_(lambda) {
  data_.validate();
  if (data_.size() == 0) throw ConfigError("problem: dataset is empty");
  data_.features.makeCompressed();
  row_norms_sq_.resize(n_);
  for (std::size_t i = 0; i < n_; ++i) row_norms_sq_[i] = data_.features.row(static_cast<Eigen::Index>(i)).squaredNorm();
}

double LinearModel::margin(std::size_t i, Eigen::Ref<const Vector> x) const {
  double acc = 0.0;
  for (SparseRows::InnerIterator it(data_.features, static_cast<Eigen::Index>(i)); it; ++it) {
    acc += it.value() * x[it.index()];
  }
  return acc;
}

double LinearModel::component_value(std::size_t i, const Vector& x) const {
  return loss(i, margin(i, x)) + 0.5 * lambda_ * x.squaredNorm();
}

void LinearModel::component_gradient(std::size_t i, const Vector& x, Eigen::Ref<Vector> out) const {
  const double r = residual(i, margin(i, x));
  out = lambda_ * x;
  for (SparseRows::InnerIterator it(data_.features, static_cast<Eigen::Index>(i)); it; ++it) {
    out[it.index()] += r * it.value();
  }
}

double LinearModel::value(const Vector& x, Exec exec) const {
  check_dim(x);
  Vector margins;
  kernels::row_dots(data_.features, x, margins, exec);
  const double data_term =
      kernels::mean_of_scalars(n_, [&](std::size_t i) { return loss(i, margins[static_cast<Eigen::Index>(i)]); }, exec);
  return data_term + 0.5 * lambda_ * x.squaredNorm();
}

void LinearModel::full_gradient(const Vector& x, Vector& out, Exec exec) const {
  check_dim(x);
  Vector margins;
  kernels::row_dots(data_.features, x, margins, exec);
  for (Eigen::Index i = 0; i < margins.size(); ++i) margins[i] = residual(static_cast<std::size_t>(i), margins[i]);
  kernels::weighted_row_mean(data_.features, margins, out, exec);
  out += lambda_ * x;
}

LogisticProblem::LogisticProblem(Dataset data, double lambda) : LinearModel(std::move(data), lambda) {
  if (!(lambda > 0.0)) throw ConfigError("logistic problem: lambda must be positive");
  auto& c = constants_;
  c.component_smoothness.resize(n_);
  for (std::size_t i = 0; i < n_; ++i) c.component_smoothness[i] = 0.25 * row_norms_sq_[i] + lambda_;
  c.L = *std::max_element(c.component_smoothness.begin(), c.component_smoothness.end());
  c.L_f = gram_top_eigenvalue(data_.features) / (4.0 * static_cast<double>(n_)) + lambda_;
  c.L_f = std::min(c.L_f, c.L);
  c.mu = lambda_;
  c.curvature = Curvature::kStronglyConvex;
}

double LogisticProblem::loss(std::size_t i, double margin) const {
  const double z = -data_.labels[i] * margin;  // log(1 + e^z), computed stably
  return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z)));
}

double LogisticProblem::residual(std::size_t i, double margin) const {
  const double y = data_.labels[i];
  return -y * sigmoid(-y * margin);
}

SigmoidLossProblem::SigmoidLossProblem(Dataset data, double lambda) : LinearModel(std::move(data), lambda) {
  if (!(lambda >= 0.0)) throw ConfigError("sigmoid-loss problem: lambda must be nonnegative");
  auto& c = constants_;
  c.component_smoothness.resize(n_);
  for (std::size_t i = 0; i < n_; ++i) c.component_smoothness[i] = kCurvatureBound * row_norms_sq_[i] + lambda_;
  c.L = *std::max_element(c.component_smoothness.begin(), c.component_smoothness.end());
  c.L_f = kCurvatureBound * gram_top_eigenvalue(data_.features) / static_cast<double>(n_) + lambda_;
  c.L_f = std::min(c.L_f, c.L);
  c.mu = 0.0;
  c.curvature = Curvature::kNonconvex;
}

double SigmoidLossProblem::loss(std::size_t i, double margin) const {
  return sigmoid(-data_.labels[i] * margin);
}

double SigmoidLossProblem::residual(std::size_t i, double margin) const {
  const double y = data_.labels[i];
  const double s = sigmoid(-y * margin);
  return -y * s * (1.0 - s);
}

namespace {

constexpr double kSymmetryTol = 1e-10;

}  // namespace

QuadraticProblem::QuadraticProblem(std::vector<Matrix> Q, std::vector<Vector> b)
    : Problem(Q.size(), Q.empty() ? 0 : Q.front().rows()), q_(std::move(Q)), b_(std::move(b)) {
  if (q_.empty()) throw ConfigError("quadratic problem: no components");
  if (b_.size() != q_.size()) throw ConfigError("quadratic problem: Q and b lists differ in length");
  auto& c = constants_;
  c.component_smoothness.resize(n_);
  q_bar_ = Matrix::Zero(d_, d_);
  b_bar_ = Vector::Zero(d_);
  for (std::size_t i = 0; i < n_; ++i) {
    const Matrix& q = q_[i];
    if (q.rows() != d_ || q.cols() != d_ || b_[i].size() != d_) {
      throw ConfigError("quadratic problem: component " + std::to_string(i) + " has inconsistent shape");
    }
    const double scale = std::max(1.0, q.cwiseAbs().maxCoeff());
    if ((q - q.transpose()).cwiseAbs().maxCoeff() > kSymmetryTol * scale) {
      throw ConfigError("quadratic problem: Q_" + std::to_string(i) + " is not symmetric");
    }
    Eigen::SelfAdjointEigenSolver<Matrix> eig(q, Eigen::EigenvaluesOnly);
    if (eig.eigenvalues().minCoeff() < -kSymmetryTol * scale) {
      throw ConfigError("quadratic problem: Q_" + std::to_string(i) + " is not positive semidefinite");
    }
    c.component_smoothness[i] = std::max(0.0, eig.eigenvalues().maxCoeff());
    q_bar_ += q;
    b_bar_ += b_[i];
  }
  q_bar_ /= static_cast<double>(n_);
  b_bar_ /= static_cast<double>(n_);

  c.L = *std::max_element(c.component_smoothness.begin(), c.component_smoothness.end());
  Eigen::SelfAdjointEigenSolver<Matrix> eig(q_bar_, Eigen::EigenvaluesOnly);
  c.L_f = std::min(c.L, std::max(0.0, eig.eigenvalues().maxCoeff()));
  const double lambda_min = eig.eigenvalues().minCoeff();
  if (lambda_min > 1e-12 * std::max(1.0, c.L_f)) {
    c.mu = lambda_min;
    c.curvature = Curvature::kStronglyConvex;
    minimizer_ = q_bar_.ldlt().solve(b_bar_);
  } else {
    c.mu = 0.0;
    c.curvature = Curvature::kConvex;
    Vector x = q_bar_.completeOrthogonalDecomposition().solve(b_bar_);
    if ((q_bar_ * x - b_bar_).norm() > 1e-9 * std::max(1.0, b_bar_.norm())) {
      throw ConfigError("quadratic problem: bbar is outside the range of Qbar, f is unbounded below");
    }
    minimizer_ = std::move(x);
  }
}

double QuadraticProblem::component_value(std::size_t i, const Vector& x) const {
  return 0.5 * x.dot(q_[i] * x) - b_[i].dot(x);
}

void QuadraticProblem::component_gradient(std::size_t i, const Vector& x, Eigen::Ref<Vector> out) const {
  out.noalias() = q_[i] * x;
  out -= b_[i];
}

}  // namespace miso
