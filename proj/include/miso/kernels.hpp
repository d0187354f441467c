#pragma once

// Data-parallel building blocks shared by objectives, solvers and the oracle.
//
// Every kernel partitions its index range into fixed chunks whose layout
// depends only on the problem size, reduces each chunk independently, then
// combines chunk results serially in chunk order. The serial and OpenMP
// variants therefore produce bit-identical results for any thread count.

#include <Eigen/Core>
#include <Eigen/SparseCore>
#include <algorithm>
#include <cstddef>
#include <vector>

namespace miso {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using SparseRows = Eigen::SparseMatrix<double, Eigen::RowMajor>;

enum class Exec { kSerial, kParallel };

namespace kernels {

inline constexpr std::size_t kMinChunk = 64;
inline constexpr std::size_t kMaxChunks = 64;

/// Fixed chunk length for a range of n items.
inline std::size_t chunk_length(std::size_t n) {
  return std::max(kMinChunk, (n + kMaxChunks - 1) / kMaxChunks);
}

inline std::size_t chunk_count(std::size_t n) {
  const std::size_t len = chunk_length(n);
  return (n + len - 1) / len;
}

/// Mean of n d-vectors produced by eval(i, out) for i in [0, n).
///
/// Uses running means (m += (v - m) / j) inside each chunk and weighted
/// combination across chunks, so the mean of n identical vectors is exactly
/// that vector.
template <class Eval>
void mean_of(std::size_t n, Eigen::Index d, Eval&& eval, Vector& out, Exec exec) {
  out.setZero(d);
  if (n == 0) return;
  const std::size_t len = chunk_length(n);
  const std::size_t chunks = chunk_count(n);
  Matrix chunk_means(d, static_cast<Eigen::Index>(chunks));

  auto run_chunk = [&](std::size_t c, Vector& scratch) {
    auto mean = chunk_means.col(static_cast<Eigen::Index>(c));
    mean.setZero();
    const std::size_t begin = c * len;
    const std::size_t end = std::min(n, begin + len);
    for (std::size_t i = begin; i < end; ++i) {
      eval(i, scratch);
      mean += (scratch - mean) / static_cast<double>(i - begin + 1);
    }
  };

  if (exec == Exec::kParallel && chunks > 1) {
#pragma omp parallel
    {
      Vector scratch(d);
#pragma omp for schedule(static)
      for (std::ptrdiff_t c = 0; c < static_cast<std::ptrdiff_t>(chunks); ++c) {
        run_chunk(static_cast<std::size_t>(c), scratch);
      }
    }
  } else {
    Vector scratch(d);
    for (std::size_t c = 0; c < chunks; ++c) run_chunk(c, scratch);
  }

  std::size_t seen = 0;
  for (std::size_t c = 0; c < chunks; ++c) {
    const std::size_t count = std::min(n, (c + 1) * len) - c * len;
    seen += count;
    out += (chunk_means.col(static_cast<Eigen::Index>(c)) - out) *
           (static_cast<double>(count) / static_cast<double>(seen));
  }
}

/// Scalar analogue of mean_of.
template <class Eval>
double mean_of_scalars(std::size_t n, Eval&& eval, Exec exec) {
  if (n == 0) return 0.0;
  const std::size_t len = chunk_length(n);
  const std::size_t chunks = chunk_count(n);
  std::vector<double> chunk_means(chunks, 0.0);

  auto run_chunk = [&](std::size_t c) {
    double mean = 0.0;
    const std::size_t begin = c * len;
    const std::size_t end = std::min(n, begin + len);
    for (std::size_t i = begin; i < end; ++i) mean += (eval(i) - mean) / static_cast<double>(i - begin + 1);
    chunk_means[c] = mean;
  };

  if (exec == Exec::kParallel && chunks > 1) {
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t c = 0; c < static_cast<std::ptrdiff_t>(chunks); ++c) run_chunk(static_cast<std::size_t>(c));
  } else {
    for (std::size_t c = 0; c < chunks; ++c) run_chunk(c);
  }

  double out = 0.0;
  std::size_t seen = 0;
  for (std::size_t c = 0; c < chunks; ++c) {
    const std::size_t count = std::min(n, (c + 1) * len) - c * len;
    seen += count;
    out += (chunk_means[c] - out) * (static_cast<double>(count) / static_cast<double>(seen));
  }
  return out;
}

/// Mean of the columns of a d x n matrix.
void column_mean(const Matrix& columns, Vector& out, Exec exec);

/// out = A^T (A v).
void gram_apply(const SparseRows& A, const Vector& v, Vector& out, Exec exec);

/// out = (1/n) sum_i w_i A_i: where A_i is row i and n = rows(A).
void weighted_row_mean(const SparseRows& A, const Vector& weights, Vector& out, Exec exec);

/// margins_i = <A_i, x> for every row.
void row_dots(const SparseRows& A, const Vector& x, Vector& margins, Exec exec);

}  // namespace kernels
}  // namespace miso
