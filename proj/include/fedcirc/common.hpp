#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace fedcirc {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

/// Thrown when a conditioning event has zero probability mass.
class ZeroEvidence : public std::runtime_error {
 public:
  explicit ZeroEvidence(const std::string& what) : std::runtime_error(what) {}
};

/// Thrown on inconsistent run configuration (e.g. aligned wiring with P != K).
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// log(sum_i exp(xs[i])) reduced in index order. The reduction order is part
/// of the evaluation contract: results are bit-identical across runs.
inline double log_sum_exp(std::span<const double> xs) {
  double hi = kNegInf;
  for (double x : xs) hi = std::max(hi, x);
  if (!std::isfinite(hi)) return hi;  // all -inf (or a NaN propagates below)
  double acc = 0.0;
  for (double x : xs) acc += std::exp(x - hi);
  return hi + std::log(acc);
}

inline double log_sum_exp(double a, double b) {
  const double xs[2] = {a, b};
  return log_sum_exp(std::span<const double>(xs, 2));
}

/// Standard normal CDF.
inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

inline double normal_log_pdf(double x, double mu, double sigma) {
  static const double kLogSqrt2Pi = 0.5 * std::log(2.0 * M_PI);
  const double z = (x - mu) / sigma;
  return -0.5 * z * z - std::log(sigma) - kLogSqrt2Pi;
}

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Named, documented PRNG streams: every random decision in the library draws
/// from a stream derived as derive(root_seed, call-site tag, index). Two call
/// sites never share a stream, so adding a consumer cannot perturb another.
struct SeedStream {
  std::uint64_t state = 0;

  static SeedStream derive(std::uint64_t seed, std::string_view tag, std::uint64_t index = 0) {
    return SeedStream{splitmix64(seed ^ fnv1a64(tag) ^ splitmix64(index))};
  }

  std::mt19937_64 rng() const { return std::mt19937_64(state); }
};

}  // namespace fedcirc
