#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <variant>
#include <vector>

#include "fedcirc/common.hpp"

namespace fedcirc {

// Variance clamp applied when fitting continuous leaves on data.
inline constexpr double kMinVar = 1e-3;
inline constexpr double kMaxVar = 0.25;

// Additive smoothing for categorical frequency fits.
inline constexpr double kCategoricalAlpha = 1.0;

// Grid step of the discretized-Gaussian bucket scale: bucket index x sits at
// value x/255, so 255 buckets tile [0, 1).
inline constexpr int kDefaultNumBuckets = 255;
inline constexpr double kBucketStep = 1.0 / 255.0;

/// Log probability mass of bucket `x` of a Gaussian discretized on the 1/255
/// grid: mass(x) = Phi((v - mu + 1/255)/sigma) - Phi((v - mu)/sigma) with
/// v = x/255. With `absorb_tails` (the default, and what circuit leaves use)
/// bucket 0 additionally absorbs the left tail and the top bucket the right
/// tail, so the masses form a proper distribution summing to one. With
/// absorb_tails=false the raw formula is returned for every bucket.
inline double discretized_gaussian_log_mass(double mu, double sigma, int x,
                                            int num_buckets = kDefaultNumBuckets,
                                            bool absorb_tails = true) {
  if (!(sigma > 0.0)) throw std::domain_error("discretized_gaussian_log_mass: sigma must be > 0");
  if (num_buckets < 2) throw std::domain_error("discretized_gaussian_log_mass: need >= 2 buckets");
  if (x < 0 || x >= num_buckets) throw std::domain_error("discretized_gaussian_log_mass: bucket out of range");
  const double v = static_cast<double>(x) * kBucketStep;
  if (absorb_tails && x == 0) return std::log(normal_cdf((v + kBucketStep - mu) / sigma));
  if (absorb_tails && x == num_buckets - 1) {
    // 1 - Phi(z) computed as Phi(-z) to keep precision in the far tail.
    return std::log(normal_cdf(-(v - mu) / sigma));
  }
  const double hi = normal_cdf((v + kBucketStep - mu) / sigma);
  const double lo = normal_cdf((v - mu) / sigma);
  const double mass = hi - lo;
  return mass > 0.0 ? std::log(mass) : kNegInf;
}

struct Gaussian {
  double mu = 0.0;
  double sigma = 1.0;

  double log_density(double x) const { return normal_log_pdf(x, mu, sigma); }
};

struct Categorical {
  std::vector<double> log_probs;

  std::uint32_t arity() const { return static_cast<std::uint32_t>(log_probs.size()); }

  double log_mass(double x) const {
    if (std::isnan(x)) throw std::domain_error("categorical value is NaN");
    const double r = std::nearbyint(x);
    if (r != x) throw std::domain_error("categorical value is not an integer");
    if (r < 0.0 || r >= static_cast<double>(log_probs.size()))
      throw std::domain_error("categorical value out of arity");
    return log_probs[static_cast<std::size_t>(r)];
  }
};

struct DiscretizedGaussian {
  // Parameters live on the 1/255 grid scale (value = bucket index / 255).
  double mu = 0.0;
  double sigma = 1.0;
  std::uint32_t num_buckets = kDefaultNumBuckets;

  double log_mass(double x) const {
    if (std::isnan(x)) throw std::domain_error("discretized value is NaN");
    const double r = std::nearbyint(x);
    if (r != x) throw std::domain_error("discretized value is not an integer bucket");
    return discretized_gaussian_log_mass(mu, sigma, static_cast<int>(r),
                                         static_cast<int>(num_buckets));
  }
};

using LeafDistribution = std::variant<Gaussian, Categorical, DiscretizedGaussian>;

/// Natural-log density/mass of a leaf distribution at an observed value.
inline double leaf_log_density(const LeafDistribution& dist, double x) {
  if (std::isnan(x)) throw std::domain_error("observed value is NaN");
  return std::visit([x](const auto& d) -> double {
    using T = std::decay_t<decltype(d)>;
    if constexpr (std::is_same_v<T, Gaussian>) return d.log_density(x);
    else if constexpr (std::is_same_v<T, Categorical>) return d.log_mass(x);
    else return d.log_mass(x);
  }, dist);
}

/// Number of free real parameters; drives ModelUpload message accounting.
inline std::size_t leaf_parameter_count(const LeafDistribution& dist) {
  return std::visit([](const auto& d) -> std::size_t {
    using T = std::decay_t<decltype(d)>;
    if constexpr (std::is_same_v<T, Categorical>) return d.log_probs.size();
    else return 2;  // mu, sigma
  }, dist);
}

}  // namespace fedcirc
