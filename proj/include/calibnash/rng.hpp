#pragma once

#include <cstdint>
#include <stdexcept>
#include <string_view>
#include <vector>

namespace calibnash::rng {

// SplitMix64 finalizer: a bijective 64-bit mixer with good avalanche.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t fnv1a(std::string_view s) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const char c : s) {
    h ^= static_cast<std::uint64_t>(static_cast<unsigned char>(c));
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Counter-based uniform stream. A stream is identified by a key folded from
// the seed and any number of tag words; the i-th draw depends only on
// (key, i). Partitioning draws across workers or reordering evaluation
// cannot change the values produced.
class Stream {
 public:
  explicit Stream(std::uint64_t seed) : key_(mix64(seed ^ 0x6a09e667f3bcc908ULL)) {}

  [[nodiscard]] Stream with(std::uint64_t word) const {
    Stream s = *this;
    s.key_ = mix64(s.key_ ^ mix64(word));
    return s;
  }
  [[nodiscard]] Stream with(std::string_view tag) const { return with(fnv1a(tag)); }

  std::uint64_t bits(std::uint64_t i) const noexcept {
    return mix64(key_ + (i + 1) * 0x9e3779b97f4a7c15ULL);
  }

  // U[0,1) with 53 random mantissa bits.
  double uniform(std::uint64_t i) const noexcept {
    return static_cast<double>(bits(i) >> 11) * 0x1.0p-53;
  }

  double uniform(std::uint64_t i, double lo, double hi) const noexcept {
    return lo + (hi - lo) * uniform(i);
  }

  std::size_t index(std::uint64_t i, std::size_t n) const {
    if (n == 0) throw std::invalid_argument("Stream::index: n must be positive");
    return static_cast<std::size_t>(bits(i) % n);
  }

  // Inverse-CDF draw from unnormalized non-negative weights.
  std::size_t categorical(std::uint64_t i, const std::vector<double>& weights) const {
    double total = 0;
    for (const double w : weights) {
      if (w < 0) throw std::invalid_argument("Stream::categorical: negative weight");
      total += w;
    }
    if (!(total > 0)) throw std::invalid_argument("Stream::categorical: weights sum to zero");
    const double u = uniform(i) * total;
    double acc = 0;
    for (std::size_t j = 0; j + 1 < weights.size(); ++j) {
      acc += weights[j];
      if (u < acc) return j;
    }
    return weights.size() - 1;
  }

 private:
  std::uint64_t key_;
};

// substream(seed, "purpose", round, player, ...) builds a Stream whose key
// encodes every tag, so distinct call sites can never collide by accident.
template <class... Tags>
Stream substream(std::uint64_t seed, Tags&&... tags) {
  Stream s{seed};
  ((s = s.with(tags)), ...);
  return s;
}

// Sequential view for call sites that do not want to index draws themselves.
class Sequence {
 public:
  explicit Sequence(Stream s) : stream_(s) {}
  double uniform() { return stream_.uniform(n_++); }
  double uniform(double lo, double hi) { return stream_.uniform(n_++, lo, hi); }
  std::size_t index(std::size_t n) { return stream_.index(n_++, n); }
  std::size_t categorical(const std::vector<double>& w) { return stream_.categorical(n_++, w); }

 private:
  Stream stream_;
  std::uint64_t n_ = 0;
};

}  // namespace calibnash::rng
