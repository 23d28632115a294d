#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "calibnash/rng.hpp"

namespace calibnash {

// Float drift tolerated on construction: coordinates may dip this far below
// zero (clamped to 0) and the total mass may drift this far from 1 (then the
// vector is renormalized exactly).
inline constexpr double kNegativeCoordSlack = 1e-12;
inline constexpr double kUnitMassTolerance = 1e-9;

// A probability vector over a finite outcome set. The universal currency for
// forecasts, mixed strategies and smoothed best responses.
class SimplexPoint {
 public:
  explicit SimplexPoint(std::vector<double> coords) : coords_(std::move(coords)) {
    if (coords_.size() < 2) {
      throw std::invalid_argument("SimplexPoint: dimension must be at least 2");
    }
    double sum = 0;
    for (std::size_t i = 0; i < coords_.size(); ++i) {
      double& c = coords_[i];
      if (!std::isfinite(c)) {
        throw std::invalid_argument("SimplexPoint: coordinate " + std::to_string(i) +
                                    " is not finite");
      }
      if (c < -kNegativeCoordSlack) {
        throw std::invalid_argument("SimplexPoint: coordinate " + std::to_string(i) + " is " +
                                    std::to_string(c) + ", below the allowed slack");
      }
      if (c < 0) c = 0;
      sum += c;
    }
    if (std::abs(sum - 1.0) > kUnitMassTolerance) {
      throw std::invalid_argument("SimplexPoint: coordinates sum to " + std::to_string(sum) +
                                  ", not 1");
    }
    for (double& c : coords_) c /= sum;
  }

  static SimplexPoint uniform(std::size_t dim) {
    return SimplexPoint(std::vector<double>(dim, 1.0 / static_cast<double>(dim)));
  }

  static SimplexPoint basis(std::size_t dim, std::size_t index) {
    if (index >= dim) throw std::invalid_argument("SimplexPoint::basis: index out of range");
    std::vector<double> v(dim, 0.0);
    v[index] = 1.0;
    return SimplexPoint(std::move(v));
  }

  std::size_t dim() const noexcept { return coords_.size(); }
  double operator[](std::size_t i) const { return coords_[i]; }
  const std::vector<double>& coords() const noexcept { return coords_; }

 private:
  std::vector<double> coords_;
};

// Realized outcome: an index into [D], embedded as a one-hot vector.
struct Outcome {
  std::size_t index = 0;

  std::vector<double> one_hot(std::size_t dim) const {
    if (index >= dim) {
      throw std::invalid_argument("Outcome: index " + std::to_string(index) +
                                  " out of range for dimension " + std::to_string(dim));
    }
    std::vector<double> v(dim, 0.0);
    v[index] = 1.0;
    return v;
  }
};

inline double l1_norm(const std::vector<double>& v) {
  double s = 0;
  for (const double x : v) s += std::abs(x);
  return s;
}

inline double l1_distance(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) {
    throw std::invalid_argument("l1_distance: dimension mismatch (" + std::to_string(a.size()) +
                                " vs " + std::to_string(b.size()) + ")");
  }
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return s;
}

inline double l1_distance(const SimplexPoint& a, const SimplexPoint& b) {
  return l1_distance(a.coords(), b.coords());
}

// Euclidean projection onto the simplex, in place; sort-then-threshold.
// `scratch` is reused across calls so hot loops avoid reallocation.
inline void project_l2_inplace(std::vector<double>& x, std::vector<double>& scratch) {
  const std::size_t n = x.size();
  scratch.assign(x.begin(), x.end());
  std::sort(scratch.begin(), scratch.end(), std::greater<>());
  double cumulative = 0;
  double theta = 0;
  for (std::size_t k = 1; k <= n; ++k) {
    cumulative += scratch[k - 1];
    const double t = (cumulative - 1.0) / static_cast<double>(k);
    if (scratch[k - 1] > t) theta = t;
  }
  for (double& c : x) c = std::max(c - theta, 0.0);
}

inline SimplexPoint project_l2(std::vector<double> x) {
  if (x.size() < 2) throw std::invalid_argument("project_l2: dimension must be at least 2");
  for (const double c : x) {
    if (!std::isfinite(c)) throw std::invalid_argument("project_l2: non-finite input");
  }
  std::vector<double> scratch;
  project_l2_inplace(x, scratch);
  return SimplexPoint(std::move(x));
}

// A distribution over ordered pairs (i, j) in [d] x [d], stored row-major
// with the first player's outcome as the row.
class JointDistribution {
 public:
  JointDistribution(std::size_t side, SimplexPoint mass) : side_(side), mass_(std::move(mass)) {
    if (side_ < 2) throw std::invalid_argument("JointDistribution: side must be at least 2");
    if (mass_.dim() != side_ * side_) {
      throw std::invalid_argument("JointDistribution: mass dimension " +
                                  std::to_string(mass_.dim()) + " is not side^2");
    }
  }

  std::size_t side() const noexcept { return side_; }
  const SimplexPoint& mass() const noexcept { return mass_; }
  double at(std::size_t i, std::size_t j) const { return mass_[i * side_ + j]; }

 private:
  std::size_t side_;
  SimplexPoint mass_;
};

inline JointDistribution outer(const SimplexPoint& row, const SimplexPoint& col) {
  if (row.dim() != col.dim()) {
    throw std::invalid_argument("outer: factor dimensions differ");
  }
  const std::size_t d = row.dim();
  std::vector<double> m(d * d);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < d; ++j) m[i * d + j] = row[i] * col[j];
  }
  return JointDistribution(d, SimplexPoint(std::move(m)));
}

// Row and column sums: ([p]_1, [p]_2).
inline std::pair<SimplexPoint, SimplexPoint> marginals(const JointDistribution& p) {
  const std::size_t d = p.side();
  std::vector<double> row(d, 0.0);
  std::vector<double> col(d, 0.0);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      const double m = p.at(i, j);
      row[i] += m;
      col[j] += m;
    }
  }
  return {SimplexPoint(std::move(row)), SimplexPoint(std::move(col))};
}

// Uniformly distributed point on the simplex (normalized exponentials).
// Draw indices are offset by `draw` so one stream can yield many points.
inline SimplexPoint random_simplex_point(const rng::Stream& s, std::size_t dim,
                                         std::uint64_t draw = 0) {
  std::vector<double> v(dim);
  double sum = 0;
  for (std::size_t i = 0; i < dim; ++i) {
    v[i] = -std::log1p(-s.uniform(draw * dim + i));
    sum += v[i];
  }
  if (!(sum > 0)) return SimplexPoint::uniform(dim);
  for (double& c : v) c /= sum;
  return SimplexPoint(std::move(v));
}

}  // namespace calibnash
