#pragma once

#include <array>
#include <cstdint>
#include <limits>

namespace miso {

/// Philox4x32-10 counter-based generator (Salmon et al., Random123).
///
/// State is a 64-bit key (the seed) and a 128-bit counter. The upper 64 bits
/// of the counter hold a stream id, so `split()` yields statistically
/// independent streams without any shared mutable state. Every output is a
/// pure function of (seed, stream, position), which keeps traces
/// bit-reproducible across platforms and thread schedules.
class Philox {
 public:
  using result_type = std::uint64_t;
  using Block = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  explicit Philox(std::uint64_t seed = 0, std::uint64_t stream = 0) noexcept
      : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
        stream_(stream) {}

  /// The raw bijection: 10 Philox rounds of `counter` under `key`.
  static Block generate_block(Block counter, Key key) noexcept;

  /// Child stream; the same (parent, id) always produces the same child.
  Philox split(std::uint64_t id) const noexcept;

  std::uint64_t seed() const noexcept {
    return static_cast<std::uint64_t>(key_[0]) | (static_cast<std::uint64_t>(key_[1]) << 32);
  }
  std::uint64_t stream() const noexcept { return stream_; }

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept { return next_u64(); }
  std::uint64_t next_u64() noexcept;
  std::uint32_t next_u32() noexcept;

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() noexcept;

  /// Uniform integer in [0, bound); bound must be positive. Lemire's
  /// multiply-and-reject, so the result is exactly uniform.
  std::uint64_t uniform_index(std::uint64_t bound) noexcept;

  /// Standard normal via the Marsaglia polar method (uses only log and sqrt).
  double normal() noexcept;

 private:
  void refill() noexcept;

  Key key_;
  std::uint64_t stream_;
  std::uint64_t position_ = 0;
  Block buffer_{};
  int available_ = 0;
  bool has_spare_normal_ = false;
  double spare_normal_ = 0.0;
};

}  // namespace miso
