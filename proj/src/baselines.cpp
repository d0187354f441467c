#include "miso/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "miso/errors.hpp"

namespace miso {

double saga_expected_smoothness(std::size_t n, double tau, double L, double L_f) {
  if (n <= 1) return L_f;
  const auto nd = static_cast<double>(n);
  return (nd - tau) / (tau * (nd - 1.0)) * L + nd * (tau - 1.0) / (tau * (nd - 1.0)) * L_f;
}

double saga_gamma(double lcal, double L, double mu, double lambda, std::size_t n, double tau) {
  if (n == 0 || !(tau >= 1.0)) throw ConfigError("saga stepsize: need n >= 1 and tau >= 1");
  if (lcal < 0.0 || L < 0.0 || mu < 0.0 || lambda < 0.0) throw ConfigError("saga stepsize: negative constant");
  const auto nd = static_cast<double>(n);
  const double spread = n > 1 ? (nd - tau) / (nd - 1.0) : 0.0;
  const double denom = std::max(lcal + lambda, spread * L / tau + 0.25 * mu * nd / tau);
  if (!(denom > 0.0)) throw ConfigError("saga stepsize: zero denominator");
  return 0.25 / denom;
}

SagaState::SagaState(std::shared_ptr<const Problem> problem, double gamma, double tau, const Vector& x0,
                     std::size_t recompute_period, Exec exec)
    : problem_(std::move(problem)), exec_(exec), gamma_(gamma) {
  if (!problem_) throw std::invalid_argument("null problem");
  if (!(gamma_ > 0.0) || !std::isfinite(gamma_)) throw ConfigError("saga: stepsize must be positive");
  if (!(tau >= 1.0)) throw ConfigError("saga: tau must be at least 1");
  if (x0.size() != problem_->dim()) throw std::invalid_argument("x0 dimension mismatch");
  n_ = problem_->size();
  inv_tau_ = 1.0 / tau;
  recompute_period_ = recompute_period == kRecomputeAuto
                          ? static_cast<std::size_t>(std::ceil(static_cast<double>(n_) / tau))
                          : recompute_period;
  x_ = x0;
  grads_.resize(problem_->dim(), static_cast<Eigen::Index>(n_));
  const auto n = static_cast<std::ptrdiff_t>(n_);
#pragma omp parallel for schedule(static) if (exec_ == Exec::kParallel)
  for (std::ptrdiff_t i = 0; i < n; ++i) problem_->component_gradient(static_cast<std::size_t>(i), x_, grads_.col(i));
  grad_evals_ = n_;
  recompute_average();
}

void SagaState::recompute_average() {
  kernels::column_mean(grads_, g_bar_, exec_);
  since_recompute_ = 0;
}

void SagaState::step(std::span<const std::size_t> subset) {
  check_subset(subset, n_, touched_);
  ++k_;
  if (subset.empty()) {
    x_ -= gamma_ * g_bar_;
    return;
  }
  const auto m = static_cast<std::ptrdiff_t>(subset.size());
  scratch_.resize(problem_->dim(), m);
#pragma omp parallel for schedule(static) if (exec_ == Exec::kParallel && m > 1)
  for (std::ptrdiff_t j = 0; j < m; ++j) {
    problem_->component_gradient(subset[static_cast<std::size_t>(j)], x_, scratch_.col(j));
  }

  direction_.setZero(problem_->dim());
  for (std::ptrdiff_t j = 0; j < m; ++j) {
    direction_ += scratch_.col(j) - grads_.col(static_cast<Eigen::Index>(subset[static_cast<std::size_t>(j)]));
  }
  direction_ = inv_tau_ * direction_ + g_bar_;
  x_ -= gamma_ * direction_;

  const double inv_n = 1.0 / static_cast<double>(n_);
  for (std::ptrdiff_t j = 0; j < m; ++j) {
    const auto i = static_cast<Eigen::Index>(subset[static_cast<std::size_t>(j)]);
    g_bar_ += (scratch_.col(j) - grads_.col(i)) * inv_n;
    grads_.col(i) = scratch_.col(j);
  }
  grad_evals_ += subset.size();
  if (recompute_period_ != 0 && ++since_recompute_ >= recompute_period_) recompute_average();
}

std::size_t svrg_inner_length(std::size_t n, double tau) {
  if (!(tau >= 1.0)) throw ConfigError("svrg: tau must be at least 1");
  const auto m = static_cast<std::size_t>(std::floor(2.0 * static_cast<double>(n) / tau));
  return std::max<std::size_t>(1, m);
}

double svrg_gamma(double L) {
  if (!(L > 0.0)) throw ConfigError("svrg stepsize: L must be positive");
  return 0.1 / L;
}

SvrgState::SvrgState(std::shared_ptr<const Problem> problem, double gamma, double tau, std::size_t m,
                     const Vector& x0, SnapshotRule rule, Exec exec)
    : problem_(std::move(problem)), exec_(exec), gamma_(gamma), m_(m), rule_(rule) {
  if (!problem_) throw std::invalid_argument("null problem");
  if (m_ == 0) throw ConfigError("svrg: inner loop length m must be at least 1");
  if (!(gamma_ > 0.0) || !std::isfinite(gamma_)) throw ConfigError("svrg: stepsize must be positive");
  if (!(tau >= 1.0)) throw ConfigError("svrg: tau must be at least 1");
  if (x0.size() != problem_->dim()) throw std::invalid_argument("x0 dimension mismatch");
  n_ = problem_->size();
  inv_tau_ = 1.0 / tau;
  linear_ = dynamic_cast<const LinearModel*>(problem_.get());
  x_ = x0;
  take_snapshot(x0);
}

void SvrgState::take_snapshot(const Vector& y) {
  y_ = y;
  const auto n = static_cast<std::ptrdiff_t>(n_);
  const bool parallel = exec_ == Exec::kParallel;
  if (linear_ != nullptr) {
    snapshot_residuals_.resize(n);
#pragma omp parallel for schedule(static) if (parallel)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
      const auto idx = static_cast<std::size_t>(i);
      snapshot_residuals_[i] = linear_->residual(idx, linear_->margin(idx, y_));
    }
    kernels::weighted_row_mean(linear_->data().features, snapshot_residuals_, mu_full_, exec_);
    mu_full_ += linear_->ridge() * y_;
  } else {
    snapshot_grads_.resize(problem_->dim(), n);
#pragma omp parallel for schedule(static) if (parallel)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
      problem_->component_gradient(static_cast<std::size_t>(i), y_, snapshot_grads_.col(i));
    }
    kernels::column_mean(snapshot_grads_, mu_full_, exec_);
  }
  grad_evals_ += n_;
  ++outer_;
  inner_done_ = 0;
  inner_mean_.setZero(problem_->dim());
}

void SvrgState::snapshot_component(std::size_t i, Eigen::Ref<Vector> out) const {
  const auto col = static_cast<Eigen::Index>(i);
  if (linear_ == nullptr) {
    out = snapshot_grads_.col(col);
    return;
  }
  out = linear_->ridge() * y_;
  for (SparseRows::InnerIterator it(linear_->data().features, col); it; ++it) {
    out[it.index()] += snapshot_residuals_[col] * it.value();
  }
}

void SvrgState::step(std::span<const std::size_t> subset) {
  check_subset(subset, n_, touched_);
  if (inner_done_ == m_) take_snapshot(rule_ == SnapshotRule::kLastIterate ? x_ : inner_mean_);
  ++k_;

  const auto m = static_cast<std::ptrdiff_t>(subset.size());
  scratch_.resize(problem_->dim(), 2 * m);
#pragma omp parallel for schedule(static) if (exec_ == Exec::kParallel && m > 1)
  for (std::ptrdiff_t j = 0; j < m; ++j) {
    const std::size_t i = subset[static_cast<std::size_t>(j)];
    problem_->component_gradient(i, x_, scratch_.col(2 * j));
    snapshot_component(i, scratch_.col(2 * j + 1));
  }
  direction_.setZero(problem_->dim());
  for (std::ptrdiff_t j = 0; j < m; ++j) direction_ += scratch_.col(2 * j) - scratch_.col(2 * j + 1);
  direction_ = inv_tau_ * direction_ + mu_full_;
  x_ -= gamma_ * direction_;
  grad_evals_ += subset.size();

  ++inner_done_;
  inner_mean_ += (x_ - inner_mean_) / static_cast<double>(inner_done_);
}

}  // namespace miso
