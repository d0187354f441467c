#include "miso/miso.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "miso/errors.hpp"

namespace miso {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double checked_gamma(double numerator, double denominator, const char* regime) {
  if (!(denominator > 0.0) || !std::isfinite(denominator)) {
    throw ConfigError(std::string(regime) + " stepsize: denominator must be positive and finite");
  }
  return numerator / denominator;
}

}  // namespace

double gamma_strongly_convex(const SamplingConstants& c, double L_f, double L, std::size_t n) {
  const auto nd = static_cast<double>(n);
  const double lcal = c.B * L_f + 6.0 * c.A * L / nd;
  return checked_gamma(nd, c.tau * lcal, "strongly convex");
}

double gamma_convex(const SamplingConstants& c, double L_f, double L, std::size_t n) {
  const auto nd = static_cast<double>(n);
  return checked_gamma(nd, 2.0 * c.tau * (c.B * L_f + 4.0 * c.A * L / nd), "convex");
}

NonconvexStepsize gamma_nonconvex(const SamplingConstants& c, double L_f, double L, std::size_t n) {
  const auto nd = static_cast<double>(n);
  const double tau = c.tau;
  const double batch_factor = 6.0 * c.M / tau + 1.0;
  const double ratio = c.A > 0.0 ? nd * nd / (tau * c.A) : kInf;  // n^2 / (tau A)
  if (ratio < 24.0 * batch_factor) {
    throw ConfigError("minibatch too large for nonconvex theory: n^2/(tau A) = " + std::to_string(ratio) +
                      " < 24(6M/tau + 1) = " + std::to_string(24.0 * batch_factor));
  }
  NonconvexStepsize out;
  out.q = std::max(4.0, 2.0 * c.B * batch_factor);
  const double q = out.q;
  auto term = [](double num, double den) { return den > 0.0 ? num / den : kInf; };
  out.terms[0] = term(nd, 2.0 * c.B * L_f * tau);
  if (std::isinf(ratio)) {
    out.terms[1] = out.terms[2] = out.terms[3] = kInf;
  } else {
    out.terms[1] = term(ratio, 24.0 * q * L_f);
    out.terms[2] = term(std::cbrt(ratio), std::cbrt(24.0 * q * L_f * L * L));
    out.terms[3] = term(std::sqrt(ratio), std::sqrt(24.0 * batch_factor * L * L));
  }
  out.gamma = *std::min_element(out.terms.begin(), out.terms.end());
  if (!std::isfinite(out.gamma) || !(out.gamma > 0.0)) {
    throw ConfigError("nonconvex stepsize: no finite positive stepsize (are L and L_f zero?)");
  }
  out.beta = 1.0 / (2.0 * out.gamma);
  out.alpha = out.beta / q;
  return out;
}

double resolve_gamma(const StepsizePolicy& policy, const SamplingConstants& c, const Problem& problem) {
  if (!(policy.multiplier > 0.0)) throw ConfigError("stepsize multiplier must be positive");
  const auto& k = problem.constants();
  double gamma = 0.0;
  switch (policy.regime) {
    case StepsizePolicy::Regime::kStronglyConvex:
      if (k.curvature != Curvature::kStronglyConvex || !(k.mu > 0.0)) {
        throw ConfigError("strongly convex stepsize requested for a problem with mu = 0");
      }
      gamma = gamma_strongly_convex(c, k.L_f, k.L, problem.size());
      break;
    case StepsizePolicy::Regime::kConvex:
      if (k.curvature == Curvature::kNonconvex) {
        throw ConfigError("convex stepsize requested for a nonconvex problem");
      }
      gamma = gamma_convex(c, k.L_f, k.L, problem.size());
      break;
    case StepsizePolicy::Regime::kNonconvex:
      gamma = gamma_nonconvex(c, k.L_f, k.L, problem.size()).gamma;
      break;
    case StepsizePolicy::Regime::kManual:
      gamma = policy.manual_gamma;
      break;
  }
  gamma *= policy.multiplier;
  if (!(gamma > 0.0) || !std::isfinite(gamma)) throw ConfigError("resolved stepsize is not positive");
  return gamma;
}

void check_subset(std::span<const std::size_t> subset, std::size_t n, std::vector<char>& marks) {
  marks.assign(n, 0);
  for (std::size_t i : subset) {
    if (i >= n) throw std::out_of_range("subset index " + std::to_string(i) + " out of range");
    if (marks[i]) throw std::out_of_range("subset index " + std::to_string(i) + " repeated");
    marks[i] = 1;
  }
}

MisoState MisoState::init(std::shared_ptr<const Problem> problem, const Sampling& sampling,
                          const StepsizePolicy& policy, const Vector& phi0, MisoOptions options) {
  if (!problem) throw std::invalid_argument("null problem");
  if (phi0.size() != problem->dim()) throw std::invalid_argument("phi0 dimension mismatch");
  Matrix table = phi0.replicate(1, static_cast<Eigen::Index>(problem->size()));
  return init(std::move(problem), sampling, policy, std::move(table), options);
}

MisoState MisoState::init(std::shared_ptr<const Problem> problem, const Sampling& sampling,
                          const StepsizePolicy& policy, Matrix phi0, MisoOptions options) {
  if (!problem) throw std::invalid_argument("null problem");
  if (sampling.n() != problem->size()) throw std::invalid_argument("sampling and problem disagree on n");
  const SamplingConstants c = sampling.constants();
  const double gamma = resolve_gamma(policy, c, *problem);
  if (options.recompute_period == kRecomputeAuto) {
    options.recompute_period =
        static_cast<std::size_t>(std::ceil(static_cast<double>(problem->size()) / c.tau));
  }
  return MisoState(std::move(problem), gamma, std::move(phi0), options);
}

MisoState::MisoState(std::shared_ptr<const Problem> problem, double gamma, Matrix phi0, MisoOptions options)
    : problem_(std::move(problem)), options_(options), gamma_(gamma) {
  if (!problem_) throw std::invalid_argument("null problem");
  n_ = problem_->size();
  if (!(gamma_ > 0.0) || !std::isfinite(gamma_)) throw ConfigError("stepsize must be positive and finite");
  if (phi0.rows() != problem_->dim() || static_cast<std::size_t>(phi0.cols()) != n_) {
    throw std::invalid_argument("phi0 must be a d x n matrix");
  }
  if (options_.recompute_period == kRecomputeAuto) options_.recompute_period = n_;
  if (options_.table == GradientTable::kLinearModelResiduals) {
    linear_ = dynamic_cast<const LinearModel*>(problem_.get());
    if (linear_ == nullptr) throw ConfigError("compact gradient table needs a linear-model problem");
  }
  phi_ = std::move(phi0);
  evaluate_all();
  recompute_averages();
}

void MisoState::evaluate_all() {
  const auto n = static_cast<std::ptrdiff_t>(n_);
  const bool parallel = options_.exec == Exec::kParallel;
  if (linear_ != nullptr) {
    residuals_.resize(n);
#pragma omp parallel for schedule(static) if (parallel)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
      const auto idx = static_cast<std::size_t>(i);
      residuals_[i] = linear_->residual(idx, linear_->margin(idx, phi_.col(i)));
    }
  } else {
    grads_.resize(problem_->dim(), n);
#pragma omp parallel for schedule(static) if (parallel)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
      problem_->component_gradient(static_cast<std::size_t>(i), phi_.col(i), grads_.col(i));
    }
  }
  grad_evals_ += n_;
}

void MisoState::recompute_averages() {
  kernels::column_mean(phi_, phi_bar_, options_.exec);
  if (linear_ != nullptr) {
    kernels::weighted_row_mean(linear_->data().features, residuals_, g_bar_, options_.exec);
  } else {
    kernels::column_mean(grads_, g_bar_, options_.exec);
  }
  since_recompute_ = 0;
  update_x();
}

void MisoState::update_x() {
  if (linear_ != nullptr) {
    x_ = phi_bar_ - gamma_ * (g_bar_ + linear_->ridge() * phi_bar_);
  } else {
    x_ = phi_bar_ - gamma_ * g_bar_;
  }
}

Vector MisoState::g_bar() const {
  if (linear_ != nullptr) return g_bar_ + linear_->ridge() * phi_bar_;
  return g_bar_;
}

void MisoState::stored_gradient(std::size_t i, Eigen::Ref<Vector> out) const {
  if (i >= n_) throw std::out_of_range("component index out of range");
  const auto col = static_cast<Eigen::Index>(i);
  if (linear_ == nullptr) {
    out = grads_.col(col);
    return;
  }
  out = linear_->ridge() * phi_.col(col);
  for (SparseRows::InnerIterator it(linear_->data().features, col); it; ++it) {
    out[it.index()] += residuals_[col] * it.value();
  }
}

void MisoState::step(std::span<const std::size_t> subset) {
  check_subset(subset, n_, touched_);
  ++k_;
  if (subset.empty()) return;

  const auto m = static_cast<std::ptrdiff_t>(subset.size());
  const bool parallel = options_.exec == Exec::kParallel && m > 1;
  const double inv_n = 1.0 / static_cast<double>(n_);

  // Fresh gradients at x^k for the sampled components, evaluated before any
  // table entry changes.
  if (linear_ != nullptr) {
    scratch_residuals_.resize(subset.size());
#pragma omp parallel for schedule(static) if (parallel)
    for (std::ptrdiff_t j = 0; j < m; ++j) {
      const std::size_t i = subset[static_cast<std::size_t>(j)];
      scratch_residuals_[static_cast<std::size_t>(j)] = linear_->residual(i, linear_->margin(i, x_));
    }
  } else {
    scratch_.resize(problem_->dim(), m);
#pragma omp parallel for schedule(static) if (parallel)
    for (std::ptrdiff_t j = 0; j < m; ++j) {
      problem_->component_gradient(subset[static_cast<std::size_t>(j)], x_, scratch_.col(j));
    }
  }

  for (std::ptrdiff_t j = 0; j < m; ++j) {
    const auto i = static_cast<Eigen::Index>(subset[static_cast<std::size_t>(j)]);
    phi_bar_ += (x_ - phi_.col(i)) * inv_n;
    phi_.col(i) = x_;
    if (linear_ != nullptr) {
      const double fresh = scratch_residuals_[static_cast<std::size_t>(j)];
      const double delta = (fresh - residuals_[i]) * inv_n;
      for (SparseRows::InnerIterator it(linear_->data().features, i); it; ++it) {
        g_bar_[it.index()] += delta * it.value();
      }
      residuals_[i] = fresh;
    } else {
      g_bar_ += (scratch_.col(j) - grads_.col(i)) * inv_n;
      grads_.col(i) = scratch_.col(j);
    }
  }
  grad_evals_ += subset.size();

  if (options_.recompute_period != 0 && ++since_recompute_ >= options_.recompute_period) {
    recompute_averages();
  } else {
    update_x();
  }
}

}  // namespace miso
