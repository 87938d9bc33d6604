#pragma once

#include "metobench/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace metobench {

// Linear-interpolation quantile (Hyndman-Fan type 7) of an unsorted sample.
template <typename Scalar>
Scalar quantile(Vector<Scalar> samples, Scalar q) {
  if (samples.size() == 0) throw std::invalid_argument("quantile of empty sample");
  std::sort(samples.data(), samples.data() + samples.size());
  const Scalar pos = q * static_cast<Scalar>(samples.size() - 1);
  const auto lo = static_cast<Eigen::Index>(std::floor(pos));
  const auto hi = std::min<Eigen::Index>(lo + 1, samples.size() - 1);
  const Scalar frac = pos - static_cast<Scalar>(lo);
  return samples[lo] + frac * (samples[hi] - samples[lo]);
}

// Silverman's rule of thumb, 0.9 * min(sd, IQR / 1.34) * n^(-1/5). Falls back
// to whichever spread estimate is positive, and to `floor` when the sample
// has no spread at all.
template <typename Scalar>
Scalar silverman_bandwidth(const Vector<Scalar>& samples, Scalar floor) {
  const auto n = samples.size();
  if (n < 2) return floor;
  const Scalar mean = samples.mean();
  const Scalar sd = std::sqrt((samples.array() - mean).square().sum() / static_cast<Scalar>(n - 1));
  const Scalar iqr = (quantile<Scalar>(samples, Scalar(0.75)) - quantile<Scalar>(samples, Scalar(0.25))) /
                     Scalar(1.34);
  Scalar spread = std::min(sd, iqr);
  if (!(spread > 0)) spread = std::max(sd, iqr);
  if (!(spread > 0)) return floor;
  const Scalar h = Scalar(0.9) * spread * std::pow(static_cast<Scalar>(n), Scalar(-0.2));
  return std::max(h, floor);
}

// log of the Gaussian kernel density estimate at each grid point, evaluated
// with log-sum-exp so that well separated samples do not underflow.
template <typename Scalar>
Vector<Scalar> gaussian_kde_log(const Vector<Scalar>& samples, const Vector<Scalar>& grid,
                                Scalar bandwidth) {
  if (samples.size() == 0) throw std::invalid_argument("kde of empty sample");
  if (!(bandwidth > 0)) throw std::invalid_argument("bandwidth must be positive");
  const Scalar log_norm = std::log(static_cast<Scalar>(samples.size()) * bandwidth *
                                   std::sqrt(Scalar(2) * std::numbers::pi_v<Scalar>));
  Vector<Scalar> out(grid.size());
  for (Eigen::Index g = 0; g < grid.size(); ++g) {
    const auto z = ((samples.array() - grid[g]) / bandwidth).eval();
    const auto exponents = (Scalar(-0.5) * z.square()).eval();
    const Scalar peak = exponents.maxCoeff();
    out[g] = peak + std::log((exponents - peak).exp().sum()) - log_norm;
  }
  return out;
}

template <typename Scalar>
Vector<Scalar> uniform_grid(Scalar lo, Scalar hi, Eigen::Index points) {
  if (points < 2) throw std::invalid_argument("grid needs at least two points");
  return Vector<Scalar>::LinSpaced(points, lo, hi);
}

}  // namespace metobench
