#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace vsem {

/// Distribution of sum_j w_j Z_j^2 with Z_j iid N(0, 1). Weights may be negative.
class WeightedChiSq {
 public:
  /// Weights with |w| < 1e-10 * max|w| are dropped. Throws std::invalid_argument on
  /// non-finite weights.
  explicit WeightedChiSq(std::vector<double> weights);

  const std::vector<double>& weights() const { return weights_; }
  /// True when no weight survives the drop rule (the sum is identically zero).
  bool degenerate() const { return weights_.empty(); }

  struct Probability {
    double value = 0.0;
    double error = 0.0;          // absolute error estimate (MC standard error after a fallback)
    bool monte_carlo = false;
  };

  /// P(Q <= x) by Imhof inversion of the characteristic function. Falls back to a
  /// Monte-Carlo estimate if the quadrature fails.
  Probability cdf_detail(double x) const;
  double cdf(double x) const { return cdf_detail(x).value; }
  /// 1 - cdf, clipped to [0, 1].
  double upper_p(double x) const;

  /// Smallest x with cdf(x) >= prob (bisection on the CDF).
  double quantile(double prob) const;

  double mean() const;
  double variance() const;

  /// `n` iid draws; identical for identical (weights, n, seed).
  std::vector<double> sample(std::size_t n, std::uint64_t seed) const;

 private:
  std::vector<double> weights_;
};

}  // namespace vsem
