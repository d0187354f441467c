#include "miso/kernels.hpp"

namespace miso::kernels {

void column_mean(const Matrix& columns, Vector& out, Exec exec) {
  mean_of(
      static_cast<std::size_t>(columns.cols()), columns.rows(),
      [&](std::size_t i, Vector& v) { v = columns.col(static_cast<Eigen::Index>(i)); }, out, exec);
}

void row_dots(const SparseRows& A, const Vector& x, Vector& margins, Exec exec) {
  const auto rows = static_cast<std::ptrdiff_t>(A.rows());
  margins.resize(A.rows());
  auto dot = [&](std::ptrdiff_t r) {
    double acc = 0.0;
    for (SparseRows::InnerIterator it(A, r); it; ++it) acc += it.value() * x[it.index()];
    margins[r] = acc;
  };
  if (exec == Exec::kParallel) {
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t r = 0; r < rows; ++r) dot(r);
  } else {
    for (std::ptrdiff_t r = 0; r < rows; ++r) dot(r);
  }
}

namespace {

// out = sum_r w_r A_r accumulated in fixed row chunks, combined in order.
void weighted_row_sum(const SparseRows& A, const Vector& weights, Vector& out, Exec exec) {
  const auto n = static_cast<std::size_t>(A.rows());
  const Eigen::Index d = A.cols();
  out.setZero(d);
  if (n == 0) return;
  const std::size_t len = chunk_length(n);
  const std::size_t chunks = chunk_count(n);
  Matrix partial = Matrix::Zero(d, static_cast<Eigen::Index>(chunks));

  auto run_chunk = [&](std::size_t c) {
    auto acc = partial.col(static_cast<Eigen::Index>(c));
    const std::size_t end = std::min(n, (c + 1) * len);
    for (std::size_t r = c * len; r < end; ++r) {
      const double w = weights[static_cast<Eigen::Index>(r)];
      for (SparseRows::InnerIterator it(A, static_cast<Eigen::Index>(r)); it; ++it) acc[it.index()] += w * it.value();
    }
  };
  if (exec == Exec::kParallel && chunks > 1) {
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t c = 0; c < static_cast<std::ptrdiff_t>(chunks); ++c) run_chunk(static_cast<std::size_t>(c));
  } else {
    for (std::size_t c = 0; c < chunks; ++c) run_chunk(c);
  }
  for (std::size_t c = 0; c < chunks; ++c) out += partial.col(static_cast<Eigen::Index>(c));
}

}  // namespace

void gram_apply(const SparseRows& A, const Vector& v, Vector& out, Exec exec) {
  Vector margins;
  row_dots(A, v, margins, exec);
  weighted_row_sum(A, margins, out, exec);
}

void weighted_row_mean(const SparseRows& A, const Vector& weights, Vector& out, Exec exec) {
  weighted_row_sum(A, weights, out, exec);
  if (A.rows() > 0) out /= static_cast<double>(A.rows());
}

}  // namespace miso::kernels
