#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <mutex>
#include <numeric>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "calibnash/rng.hpp"
#include "calibnash/simplex.hpp"

namespace calibnash {

using VertexId = std::uint32_t;

// Barycentric weights of a query point: (vertex id, weight) for the corners
// of the containing cell. Zero-weight corners are dropped, so at most D
// entries remain and every entry carries weight > 0.
struct TestWeights {
  std::vector<std::pair<VertexId, double>> entries;
};

// Kuhn (Freudenthal) triangulation of the probability simplex at grid
// spacing 1/k. Vertices are lattice points p/k with integer p summing to k;
// they are materialized lazily, since the full vertex set is combinatorially
// large while one run only ever touches a sliver of it.
//
// Queries go through the staircase transform s_i = q_1 + ... + q_i, which
// maps the simplex onto the monotone region 0 <= s_1 <= ... <= s_{D-1} <= 1
// of the unit cube. There the cells are standard Kuhn simplices of the
// scaled grid: floor(k*s) picks the base corner and the descending order of
// the fractional parts picks the chain of axis increments. The transform is
// affine, so barycentric weights computed in s-space are exactly the weights
// of q in the original cell. Equal fractional parts are ordered higher axis
// first; that is the one increment order whose chain stays inside the
// monotone region.
class GridTriangulation {
 public:
  GridTriangulation(std::size_t dim, int resolution) : dim_(dim), k_(resolution) {
    if (dim_ < 2) throw std::invalid_argument("GridTriangulation: dimension must be at least 2");
    if (k_ < 1) throw std::invalid_argument("GridTriangulation: resolution must be positive");
    bound_ = diameter_bound(dim_, k_);
    certified_ = measure_canonical_cell();
    if (certified_ > bound_ + 1e-12) {
      throw std::logic_error("GridTriangulation: cell diameter certification failed");
    }
  }

  // Upper bound on the l1 diameter of any cell. The 2*ceil((D-1)/2)/k factor
  // is the largest number of index-contiguous runs an axis subset can have,
  // times the per-run cost 2/k; nothing on the simplex exceeds diameter 2.
  static double diameter_bound(std::size_t dim, int resolution) {
    const double n = static_cast<double>(dim - 1);
    return std::min(2.0, 2.0 * std::ceil(n / 2.0) / static_cast<double>(resolution));
  }

  // Smallest k whose certified cell diameter is at most epsilon.
  static int resolution_for_precision(std::size_t dim, double epsilon) {
    if (!(epsilon > 0)) {
      throw std::invalid_argument("resolution_for_precision: epsilon must be positive");
    }
    int k = std::max(1, static_cast<int>(std::ceil(2.0 / epsilon)));
    while (diameter_bound(dim, k) > epsilon) {
      if (k > 100000000) {
        throw std::invalid_argument("resolution_for_precision: epsilon too small");
      }
      ++k;
    }
    return k;
  }

  static GridTriangulation for_precision(std::size_t dim, double epsilon) {
    return GridTriangulation(dim, resolution_for_precision(dim, epsilon));
  }

  std::size_t dim() const noexcept { return dim_; }
  int resolution() const noexcept { return k_; }
  double cell_diameter_bound() const noexcept { return bound_; }
  // Measured diameter of the canonical worst-case cell (equals the bound
  // whenever the grid is fine enough for that cell to exist).
  double certified_cell_diameter() const noexcept { return certified_; }

  // Containing cell corners with barycentric weights.
  TestWeights locate(const SimplexPoint& q) const {
    check_dim(q);
    const std::size_t n = dim_ - 1;
    std::vector<double> frac(n);
    std::vector<std::int32_t> cube(n);
    staircase(q, cube, frac);

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&frac](std::size_t a, std::size_t b) {
      if (frac[a] != frac[b]) return frac[a] > frac[b];
      return a > b;
    });

    TestWeights w;
    w.entries.reserve(dim_);
    emit(w, cube, 1.0 - frac[order[0]]);
    for (std::size_t j = 0; j < n; ++j) {
      ++cube[order[j]];
      const double next = (j + 1 < n) ? frac[order[j + 1]] : 0.0;
      emit(w, cube, frac[order[j]] - next);
    }
    return w;
  }

  // Nearest grid vertex in l1; ties resolved to the lexicographically
  // smallest key. Largest-remainder rounding of k*q is the exact minimizer.
  VertexId strong_indicator(const SimplexPoint& q) const {
    check_dim(q);
    std::vector<std::int32_t> key(dim_);
    std::vector<double> frac(dim_);
    std::int64_t missing = k_;
    for (std::size_t i = 0; i < dim_; ++i) {
      const double x = std::clamp(q[i] * k_, 0.0, static_cast<double>(k_));
      key[i] = static_cast<std::int32_t>(std::floor(x));
      frac[i] = x - key[i];
      missing -= key[i];
    }
    if (missing > 0) {
      std::vector<std::size_t> order(dim_);
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::sort(order.begin(), order.end(), [&frac](std::size_t a, std::size_t b) {
        if (frac[a] != frac[b]) return frac[a] > frac[b];
        return a > b;
      });
      for (std::size_t j = 0; j < static_cast<std::size_t>(missing) && j < dim_; ++j) {
        ++key[order[j]];
      }
    }
    return intern(std::move(key));
  }

  // omega_p(q): the weight of vertex p at q, zero when p is not a corner of
  // the containing cell.
  double weight_at(VertexId p, const SimplexPoint& q) const {
    const TestWeights w = locate(q);
    for (const auto& [id, wt] : w.entries) {
      if (id == p) return wt;
    }
    return 0.0;
  }

  SimplexPoint vertex_point(VertexId id) const {
    const std::vector<std::int32_t> key = vertex_key(id);
    std::vector<double> v(dim_);
    for (std::size_t i = 0; i < dim_; ++i) v[i] = static_cast<double>(key[i]) / k_;
    return SimplexPoint(std::move(v));
  }

  std::vector<std::int32_t> vertex_key(VertexId id) const {
    std::lock_guard<std::mutex> lock(mu_);
    if (id >= keys_.size()) throw std::out_of_range("GridTriangulation: unknown vertex id");
    return keys_[id];
  }

  // Registers (or finds) the vertex with the given lattice key.
  VertexId vertex_id(std::vector<std::int32_t> key) const {
    if (key.size() != dim_) throw std::invalid_argument("vertex_id: key dimension mismatch");
    std::int64_t total = 0;
    for (const std::int32_t c : key) {
      if (c < 0 || c > k_) throw std::invalid_argument("vertex_id: key entry out of range");
      total += c;
    }
    if (total != k_) throw std::invalid_argument("vertex_id: key does not sum to resolution");
    return intern(std::move(key));
  }

  std::size_t registered_vertex_count() const {
    std::lock_guard<std::mutex> lock(mu_);
    return keys_.size();
  }

 private:
  struct KeyHash {
    std::size_t operator()(const std::vector<std::int32_t>& key) const noexcept {
      std::uint64_t h = 0x9ae16a3b2f90404fULL;
      for (const std::int32_t c : key) {
        h = rng::mix64(h ^ static_cast<std::uint64_t>(static_cast<std::uint32_t>(c)));
      }
      return static_cast<std::size_t>(h);
    }
  };

  void check_dim(const SimplexPoint& q) const {
    if (q.dim() != dim_) {
      throw std::invalid_argument("GridTriangulation: query dimension " +
                                  std::to_string(q.dim()) + " does not match " +
                                  std::to_string(dim_));
    }
  }

  void staircase(const SimplexPoint& q, std::vector<std::int32_t>& cube,
                 std::vector<double>& frac) const {
    const std::size_t n = dim_ - 1;
    double acc = 0;
    for (std::size_t i = 0; i < n; ++i) {
      acc += q[i];
      const double y = std::clamp(acc * k_, 0.0, static_cast<double>(k_));
      double base = std::floor(y);
      if (base >= k_) base = k_;  // exact upper corner
      cube[i] = static_cast<std::int32_t>(base);
      frac[i] = std::clamp(y - base, 0.0, 1.0);
    }
  }

  // Converts a cube (staircase) vertex to the simplex lattice key and
  // appends it with its weight; zero weights are skipped.
  void emit(TestWeights& w, const std::vector<std::int32_t>& cube, double weight) const {
    if (!(weight > 0)) return;
    std::vector<std::int32_t> key(dim_);
    key[0] = cube[0];
    for (std::size_t i = 1; i + 1 < dim_; ++i) key[i] = cube[i] - cube[i - 1];
    key[dim_ - 1] = k_ - cube[dim_ - 2];
    w.entries.emplace_back(intern(std::move(key)), weight);
  }

  VertexId intern(std::vector<std::int32_t>&& key) const {
    std::lock_guard<std::mutex> lock(mu_);
    const auto it = ids_.find(key);
    if (it != ids_.end()) return it->second;
    const auto id = static_cast<VertexId>(keys_.size());
    keys_.push_back(key);
    ids_.emplace(std::move(key), id);
    return id;
  }

  // Worst-case cell: increment even axes first, then odd axes, from a
  // staircase base; this alternation maximizes the number of index runs.
  // When the grid is too coarse for that base, fall back to the chain that
  // descends the axes from the zero base (the k = 1 whole-simplex cell).
  double measure_canonical_cell() const {
    const std::size_t n = dim_ - 1;
    std::vector<std::size_t> order;
    std::vector<std::int32_t> base(n, 0);
    for (std::size_t i = 0; i < n; i += 2) order.push_back(i);
    for (std::size_t i = 1; i < n; i += 2) order.push_back(i);
    for (std::size_t i = 0; i < n; ++i) base[i] = static_cast<std::int32_t>((i + 1) / 2);
    if (base[n - 1] + 1 > k_) {
      order.clear();
      for (std::size_t i = n; i-- > 0;) order.push_back(i);
      std::fill(base.begin(), base.end(), 0);
    }

    std::vector<std::vector<std::int32_t>> corners;
    corners.push_back(to_key(base));
    std::vector<std::int32_t> cube = base;
    for (const std::size_t axis : order) {
      ++cube[axis];
      corners.push_back(to_key(cube));
    }
    double diameter = 0;
    for (std::size_t a = 0; a < corners.size(); ++a) {
      for (std::size_t b = a + 1; b < corners.size(); ++b) {
        double dist = 0;
        for (std::size_t i = 0; i < dim_; ++i) dist += std::abs(corners[a][i] - corners[b][i]);
        diameter = std::max(diameter, dist / k_);
      }
    }
    return diameter;
  }

  std::vector<std::int32_t> to_key(const std::vector<std::int32_t>& cube) const {
    std::vector<std::int32_t> key(dim_);
    key[0] = cube[0];
    for (std::size_t i = 1; i + 1 < dim_; ++i) key[i] = cube[i] - cube[i - 1];
    key[dim_ - 1] = k_ - cube[dim_ - 2];
    return key;
  }

  std::size_t dim_;
  int k_;
  double bound_ = 0;
  double certified_ = 0;
  mutable std::mutex mu_;
  mutable std::unordered_map<std::vector<std::int32_t>, VertexId, KeyHash> ids_;
  mutable std::vector<std::vector<std::int32_t>> keys_;
};

}  // namespace calibnash
