#include "softmoe/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace softmoe {

namespace {

constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ULL;

std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

RngStream::RngStream(std::uint64_t seed, std::string_view name)
    : seed_(seed), name_(name), key_(mix64(mix64(seed) ^ fnv1a64(name))) {}

std::uint64_t RngStream::next_u64() { return mix64(key_ + kGamma * ++counter_); }

double RngStream::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

std::uint64_t RngStream::uniform_index(std::uint64_t bound) {
  if (bound == 0) throw std::invalid_argument("uniform_index: bound must be >= 1");
  // Rejection sampling removes modulo bias.
  const std::uint64_t limit = max() - max() % bound;
  std::uint64_t v;
  do {
    v = next_u64();
  } while (v >= limit);
  return v % bound;
}

double RngStream::normal() {
  // 1 - u keeps the log argument in (0, 1].
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

RngStream RngStream::fork(std::string_view child) const {
  std::string n = name_;
  n += '/';
  n += child;
  return RngStream(seed_, n);
}

Matrix sample_gaussian(RngStream& stream, std::size_t rows, std::size_t cols, double mean,
                       double std) {
  if (!(std >= 0.0)) throw std::invalid_argument("sample_gaussian: std must be >= 0");
  Matrix out(rows, cols);
  for (double& v : out.flat()) v = mean + std * stream.normal();
  return out;
}

}  // namespace softmoe
