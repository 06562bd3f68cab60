#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <string_view>

#include "softmoe/tensor.hpp"

namespace softmoe {

/// Counter-based random stream keyed by (seed, stream name).
///
/// Draw i is a pure function of (seed, name, i): the key is derived once from
/// the seed and an FNV-1a hash of the name, and each 64-bit output is the
/// SplitMix64 finalizer applied to key + i * golden-gamma. Satisfies
/// UniformRandomBitGenerator, so it can drive std::shuffle and friends, but the
/// project's own samplers below are used wherever cross-platform bitwise
/// reproducibility matters.
///
/// A stream is single-owner. Use fork() to hand an independent stream to each
/// unit of work.
class RngStream {
 public:
  using result_type = std::uint64_t;

  RngStream(std::uint64_t seed, std::string_view name);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() { return next_u64(); }

  std::uint64_t next_u64();
  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  /// Uniform integer on [0, bound). bound must be >= 1.
  std::uint64_t uniform_index(std::uint64_t bound);
  /// Standard normal via Box-Muller; consumes exactly two draws.
  double normal();

  /// Child stream named "<name>/<child>" with the same seed.
  RngStream fork(std::string_view child) const;

  std::uint64_t seed() const noexcept { return seed_; }
  const std::string& name() const noexcept { return name_; }
  std::uint64_t counter() const noexcept { return counter_; }

 private:
  std::uint64_t seed_;
  std::string name_;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

std::uint64_t fnv1a64(std::string_view bytes);

/// rows x cols matrix of i.i.d. N(mean, std^2). Throws if std < 0.
Matrix sample_gaussian(RngStream& stream, std::size_t rows, std::size_t cols, double mean,
                       double std);

}  // namespace softmoe
