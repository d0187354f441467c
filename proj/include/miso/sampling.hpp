#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "miso/rng.hpp"

namespace miso {

/// Component indices are 0-based internally.
using Subset = std::vector<std::size_t>;

struct WeightedSubset {
  Subset indices;
  double probability = 0.0;
};

/// Constants of a proper uniform sampling that drive stepsizes and bounds.
///
/// `A` and `B` satisfy
///   E || sum_{i in S} a_i / p ||^2  <=  A sum ||a_i||^2 + B || sum a_i ||^2
/// for all vectors a_1..a_n. `M` is max_i E[|S| given i in S].
struct SamplingConstants {
  double tau = 1.0;  ///< expected minibatch size E|S|
  double p = 1.0;    ///< common inclusion probability, tau / n
  double A = 0.0;
  double B = 0.0;
  double M = 1.0;
};

inline constexpr std::size_t kDefaultSupportCap = 1'000'000;

/// A proper uniform distribution over subsets of {0..n-1}. Immutable after
/// construction and safe to share; drawing goes through SubsetSampler.
class Sampling {
 public:
  enum class Kind { kTauNice, kSingleElement, kExplicit };

  /// Uniform over all subsets of cardinality tau.
  static Sampling tau_nice(std::size_t n, std::size_t tau);
  /// Uniform over the n singletons.
  static Sampling single_element(std::size_t n);
  /// Arbitrary distribution; validated to be proper and uniform within 1e-12.
  static Sampling explicit_distribution(std::size_t n, std::vector<WeightedSubset> support);

  Kind kind() const noexcept { return kind_; }
  std::size_t n() const noexcept { return n_; }
  /// Cardinality for tau-nice samplings, 1 for single-element, 0 otherwise.
  std::size_t fixed_size() const noexcept { return fixed_size_; }
  const std::vector<WeightedSubset>& explicit_support() const noexcept { return support_; }

  /// tau-nice: closed form A = n(n-tau)/(tau(n-1)), B = n(tau-1)/(tau(n-1)),
  /// M = tau. Single-element: A = n, B = 0. Explicit: A = max_i E^i|S| / p_i,
  /// B = 0, computed from the support.
  SamplingConstants constants() const;

  /// Exact support with probabilities. Throws SupportTooLarge above `cap`.
  std::vector<WeightedSubset> enumerate_support(std::size_t cap = kDefaultSupportCap) const;

  /// Number of subsets in the support (saturates at SIZE_MAX).
  std::size_t support_size() const;

 private:
  Sampling(Kind kind, std::size_t n, std::size_t fixed_size) : kind_(kind), n_(n), fixed_size_(fixed_size) {}

  Kind kind_;
  std::size_t n_;
  std::size_t fixed_size_;
  std::vector<WeightedSubset> support_;
};

/// C(n, k), saturating at SIZE_MAX.
std::size_t binomial(std::size_t n, std::size_t k);

/// Per-consumer drawing state for a Sampling.
///
/// tau-nice draws use a partial Fisher-Yates shuffle over a persistent index
/// buffer: O(tau) work and no allocation per draw. The returned span is valid
/// until the next call to draw().
class SubsetSampler {
 public:
  SubsetSampler(Sampling sampling, Philox rng);

  std::span<const std::size_t> draw();

  const Sampling& sampling() const noexcept { return sampling_; }

 private:
  Sampling sampling_;
  Philox rng_;
  std::vector<std::size_t> buffer_;
  std::vector<double> cumulative_;
};

}  // namespace miso
