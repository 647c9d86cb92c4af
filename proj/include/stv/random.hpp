#pragma once

// Reproducible random streams.
//
// Every stream is keyed by a 64-bit value derived from (master seed, tags...)
// and produces its i-th output as mix64(key + (i + 1) * kGolden), where mix64
// is the SplitMix64 finalizer:
//
//   z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//   z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//   z =  z ^ (z >> 31)
//
// with kGolden = 0x9E3779B97F4A7C15. Uniform doubles use the top 53 bits.
// Normal variates use the Box-Muller transform on two consecutive uniforms,
// caching the second variate. Nothing here depends on std:: distributions,
// whose algorithms are implementation-defined, so streams are bit-identical
// across platforms and standard libraries.

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <numbers>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace stv {

inline constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// FNV-1a, used to turn stream names into tags.
constexpr std::uint64_t tag_of(std::string_view name) noexcept {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (char c : name) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ULL;
  }
  return h;
}

constexpr std::uint64_t derive_seed(std::uint64_t seed,
                                    std::initializer_list<std::uint64_t> tags) noexcept {
  std::uint64_t key = mix64(seed + kGolden);
  for (std::uint64_t t : tags) key = mix64(key ^ mix64(t + kGolden));
  return key;
}

class RandomStream {
 public:
  using result_type = std::uint64_t;

  explicit RandomStream(std::uint64_t key = 0) noexcept : key_(key) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept {
    return std::numeric_limits<result_type>::max();
  }

  result_type operator()() noexcept {
    ++counter_;
    return mix64(key_ + counter_ * kGolden);
  }

  // Uniform on [0, 1).
  double uniform() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  // Uniform on (0, 1].
  double uniform_open_low() noexcept {
    return static_cast<double>(((*this)() >> 11) + 1) * 0x1.0p-53;
  }

  double normal() noexcept {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform_open_low();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

  // Uniform integer in [0, n), n > 0, by rejection (no modulo bias).
  std::uint64_t below(std::uint64_t n) noexcept {
    const std::uint64_t limit = max() - max() % n;
    std::uint64_t x;
    do {
      x = (*this)();
    } while (x >= limit);
    return x % n;
  }

  Eigen::VectorXd normal_vector(Eigen::Index d) {
    Eigen::VectorXd v(d);
    for (Eigen::Index i = 0; i < d; ++i) v(i) = normal();
    return v;
  }

  // n x d matrix of independent standard normals, filled row by row.
  Eigen::MatrixXd normal_matrix(Eigen::Index n, Eigen::Index d) {
    Eigen::MatrixXd m(n, d);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < d; ++j) m(i, j) = normal();
    return m;
  }

  // Uniform point on the unit sphere in R^d.
  Eigen::VectorXd unit_vector(Eigen::Index d) {
    Eigen::VectorXd v = normal_vector(d);
    double nrm = v.norm();
    while (nrm == 0.0) {
      v = normal_vector(d);
      nrm = v.norm();
    }
    return v / nrm;
  }

  std::uint64_t key() const noexcept { return key_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

inline RandomStream make_stream(std::uint64_t seed, std::string_view name,
                                std::uint64_t index = 0) {
  return RandomStream(derive_seed(seed, {tag_of(name), index}));
}

// Fisher-Yates with our own stream, so permutations are portable.
template <class T>
void shuffle(std::vector<T>& v, RandomStream& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.below(i));
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace stv
