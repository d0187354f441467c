#include "miso/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <string>

#include "miso/errors.hpp"

namespace miso {

namespace {

constexpr double kUniformityTol = 1e-12;

}  // namespace

std::size_t binomial(std::size_t n, std::size_t k) {
  if (k > n) return 0;
  k = std::min(k, n - k);
  unsigned __int128 result = 1;
  for (std::size_t i = 1; i <= k; ++i) {
    // result * (n - k + i) / i stays integral at every step.
    result = result * (n - k + i) / i;
    if (result > std::numeric_limits<std::size_t>::max()) return std::numeric_limits<std::size_t>::max();
  }
  return static_cast<std::size_t>(result);
}

Sampling Sampling::tau_nice(std::size_t n, std::size_t tau) {
  if (n == 0) throw ConfigError("sampling: n must be positive");
  if (tau < 1 || tau > n) {
    throw ConfigError("sampling: tau = " + std::to_string(tau) + " outside [1, " + std::to_string(n) + "]");
  }
  return Sampling(Kind::kTauNice, n, tau);
}

Sampling Sampling::single_element(std::size_t n) {
  if (n == 0) throw ConfigError("sampling: n must be positive");
  return Sampling(Kind::kSingleElement, n, 1);
}

Sampling Sampling::explicit_distribution(std::size_t n, std::vector<WeightedSubset> support) {
  if (n == 0) throw ConfigError("sampling: n must be positive");
  if (support.empty()) throw ConfigError("sampling: explicit support is empty");

  double total = 0.0;
  std::vector<double> inclusion(n, 0.0);
  std::set<Subset> seen;
  for (auto& entry : support) {
    if (!(entry.probability >= 0.0) || !std::isfinite(entry.probability)) {
      throw ConfigError("sampling: subset probabilities must be finite and nonnegative");
    }
    std::sort(entry.indices.begin(), entry.indices.end());
    if (std::adjacent_find(entry.indices.begin(), entry.indices.end()) != entry.indices.end()) {
      throw ConfigError("sampling: subset lists an index twice");
    }
    for (std::size_t i : entry.indices) {
      if (i >= n) throw ConfigError("sampling: subset index " + std::to_string(i) + " out of range");
      inclusion[i] += entry.probability;
    }
    if (!seen.insert(entry.indices).second) throw ConfigError("sampling: subset listed twice in support");
    total += entry.probability;
  }
  if (std::abs(total - 1.0) > kUniformityTol) {
    throw ConfigError("sampling: probabilities sum to " + std::to_string(total) + ", not 1");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!(inclusion[i] > 0.0)) {
      throw ConfigError("sampling: not proper, index " + std::to_string(i) + " is never sampled");
    }
    if (std::abs(inclusion[i] - inclusion[0]) > kUniformityTol) {
      throw ConfigError("sampling: not uniform, inclusion probabilities differ at index " + std::to_string(i));
    }
  }

  Sampling s(Kind::kExplicit, n, 0);
  s.support_ = std::move(support);
  return s;
}

SamplingConstants Sampling::constants() const {
  const auto n = static_cast<double>(n_);
  SamplingConstants c;
  switch (kind_) {
    case Kind::kTauNice: {
      const auto tau = static_cast<double>(fixed_size_);
      c.tau = tau;
      c.p = tau / n;
      c.M = tau;
      if (n_ == 1) {
        c.A = 0.0;
        c.B = 1.0;
      } else {
        c.A = n * (n - tau) / (tau * (n - 1.0));
        c.B = n * (tau - 1.0) / (tau * (n - 1.0));
      }
      break;
    }
    case Kind::kSingleElement:
      c.tau = 1.0;
      c.p = 1.0 / n;
      c.A = n;
      c.B = 0.0;
      c.M = 1.0;
      break;
    case Kind::kExplicit: {
      std::vector<double> inclusion(n_, 0.0);
      std::vector<double> size_mass(n_, 0.0);
      double tau = 0.0;
      for (const auto& entry : support_) {
        const auto size = static_cast<double>(entry.indices.size());
        tau += entry.probability * size;
        for (std::size_t i : entry.indices) {
          inclusion[i] += entry.probability;
          size_mass[i] += entry.probability * size;
        }
      }
      c.tau = tau;
      c.p = tau / n;
      double max_conditional_size = 0.0;
      double max_ratio = 0.0;
      for (std::size_t i = 0; i < n_; ++i) {
        const double conditional = size_mass[i] / inclusion[i];
        max_conditional_size = std::max(max_conditional_size, conditional);
        max_ratio = std::max(max_ratio, conditional / inclusion[i]);
      }
      c.M = max_conditional_size;
      c.A = max_ratio;
      c.B = 0.0;
      break;
    }
  }
  return c;
}

std::size_t Sampling::support_size() const {
  switch (kind_) {
    case Kind::kTauNice:
      return binomial(n_, fixed_size_);
    case Kind::kSingleElement:
      return n_;
    case Kind::kExplicit:
      return support_.size();
  }
  return 0;
}

std::vector<WeightedSubset> Sampling::enumerate_support(std::size_t cap) const {
  const std::size_t count = support_size();
  if (count > cap) {
    throw SupportTooLarge("sampling: support has " + std::to_string(count) + " subsets, cap is " +
                          std::to_string(cap));
  }
  std::vector<WeightedSubset> out;
  switch (kind_) {
    case Kind::kExplicit:
      return support_;
    case Kind::kSingleElement:
      out.reserve(n_);
      for (std::size_t i = 0; i < n_; ++i) out.push_back({{i}, 1.0 / static_cast<double>(n_)});
      return out;
    case Kind::kTauNice: {
      out.reserve(count);
      const double prob = 1.0 / static_cast<double>(count);
      Subset combo(fixed_size_);
      std::iota(combo.begin(), combo.end(), std::size_t{0});
      const std::size_t k = fixed_size_;
      while (true) {
        out.push_back({combo, prob});
        // Advance to the next combination in lexicographic order.
        std::size_t pos = k;
        while (pos > 0 && combo[pos - 1] == n_ - k + pos - 1) --pos;
        if (pos == 0) break;
        ++combo[pos - 1];
        for (std::size_t j = pos; j < k; ++j) combo[j] = combo[j - 1] + 1;
      }
      return out;
    }
  }
  return out;
}

SubsetSampler::SubsetSampler(Sampling sampling, Philox rng) : sampling_(std::move(sampling)), rng_(rng) {
  if (sampling_.kind() == Sampling::Kind::kTauNice) {
    buffer_.resize(sampling_.n());
    std::iota(buffer_.begin(), buffer_.end(), std::size_t{0});
  } else if (sampling_.kind() == Sampling::Kind::kSingleElement) {
    buffer_.resize(1);
  } else {
    double acc = 0.0;
    for (const auto& entry : sampling_.explicit_support()) {
      acc += entry.probability;
      cumulative_.push_back(acc);
    }
  }
}

std::span<const std::size_t> SubsetSampler::draw() {
  const std::size_t n = sampling_.n();
  switch (sampling_.kind()) {
    case Sampling::Kind::kTauNice: {
      const std::size_t tau = sampling_.fixed_size();
      if (tau == n) return {buffer_.data(), n};
      for (std::size_t j = 0; j < tau; ++j) {
        const std::size_t r = j + rng_.uniform_index(n - j);
        std::swap(buffer_[j], buffer_[r]);
      }
      return {buffer_.data(), tau};
    }
    case Sampling::Kind::kSingleElement:
      buffer_[0] = rng_.uniform_index(n);
      return {buffer_.data(), 1};
    case Sampling::Kind::kExplicit: {
      // Scale by the accumulated total so rounding in the sum cannot leave a
      // gap at the top of the unit interval.
      const double u = rng_.uniform() * cumulative_.back();
      auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
      if (it == cumulative_.end()) --it;
      const auto& subset = sampling_.explicit_support()[static_cast<std::size_t>(it - cumulative_.begin())];
      return {subset.indices.data(), subset.indices.size()};
    }
  }
  return {};
}

}  // namespace miso
