#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

namespace fedau {

// Every random draw in the library comes from a SplitMix64 stream. The
// algorithm is pinned here, byte for byte, so reference implementations in
// tests (or other languages) can reproduce any stream exactly:
//
//   next(state):  state += 0x9E3779B97F4A7C15
//                 z = state
//                 z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//                 z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//                 return z ^ (z >> 31)
//
// SplitMix64 is counter-based: the i-th output is a pure function of
// seed + i * 0x9E3779B97F4A7C15.
//
// Stream keys are derived by folding tags into the seed one at a time:
//
//   derive(key, tag): y = key + (tag + 1) * 0x9E3779B97F4A7C15
//                     y = (y ^ (y >> 30)) * 0xBF58476D1CE4E5B9
//                     y = (y ^ (y >> 27)) * 0x94D049BB133111EB
//                     return y ^ (y >> 31)
//
// Derived quantities, in terms of consecutive next() outputs:
//
//   u01()        (next() >> 11) * 2^-53                    in [0, 1)
//   u01_pos()    ((next() >> 11) + 1) * 2^-53              in (0, 1]
//   uniform_real(a, b)   a + (b - a) * u01()
//   uniform_index(n)     min(floor(u01() * n), n - 1)
//   normal()     u = u01_pos(), v = u01()
//                sqrt(-2 ln u) * cos(2 pi v)               (Box-Muller, cosine half)
//   gamma(a)     a >= 1: Marsaglia-Tsang: d = a - 1/3, c = 1/sqrt(9 d)
//                  repeat: x = normal(); v = (1 + c x)^3 until v > 0
//                          u = u01_pos()
//                          accept d*v if u < 1 - 0.0331 x^4
//                          accept d*v if ln u < x^2 / 2 + d (1 - v + ln v)
//                a < 1:  gamma(a + 1) * u01_pos()^(1/a)
//   dirichlet(conc, k)   k gamma(conc) draws in order, normalized by their sum

// Tags reserving a distinct stream per consumer of a run seed.
enum class StreamTag : std::uint64_t {
  ModelInit = 1,
  Shuffle = 2,       // local training minibatch order; further keyed (client, round)
  Dirichlet = 3,     // partition proportions; further keyed (attempt, class)
  Backdoor = 4,      // trigger example selection; further keyed (client)
  AuxRelabel = 5,    // uniform-wrong-label resampling; further keyed (client)
  BlobNoise = 6,     // synthetic blob noise; further keyed (class)
  BlobAnchor = 7,    // synthetic blob anchors (fixed key, not the run seed)
  Mia = 8,           // attack subsampling and calibration split
  Finetune = 9,      // random-label baseline relabel + minibatch order
  AuxShuffle = 10,   // aux head training minibatch order; keyed (client, round)
};

inline std::uint64_t splitmix_finalize(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

inline std::uint64_t derive_key(std::uint64_t key, std::uint64_t tag) {
  return splitmix_finalize(key + (tag + 1) * 0x9E3779B97F4A7C15ull);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    state_ += 0x9E3779B97F4A7C15ull;
    return splitmix_finalize(state_);
  }

  // [0, 1), 53-bit resolution
  double u01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  // (0, 1], safe as a log() argument
  double u01_pos() { return static_cast<double>((next() >> 11) + 1) * 0x1.0p-53; }

  double uniform_real(double a, double b) { return a + (b - a) * u01(); }

  std::size_t uniform_index(std::size_t n) {
    if (n == 0) throw std::invalid_argument("uniform_index: n must be positive");
    auto idx = static_cast<std::size_t>(u01() * static_cast<double>(n));
    return idx >= n ? n - 1 : idx;
  }

  double normal() {
    double u = u01_pos();
    double v = u01();
    return std::sqrt(-2.0 * std::log(u)) * std::cos(2.0 * 3.14159265358979323846 * v);
  }

  double gamma(double shape) {
    if (!(shape > 0.0)) throw std::invalid_argument("gamma: shape must be positive");
    if (shape < 1.0) {
      double g = gamma(shape + 1.0);
      return g * std::pow(u01_pos(), 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x, v;
      do {
        x = normal();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      const double u = u01_pos();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
      if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
  }

  // Symmetric Dirichlet over k components, drawn in component order.
  std::vector<double> dirichlet(double concentration, std::size_t k) {
    if (k == 0) throw std::invalid_argument("dirichlet: k must be positive");
    std::vector<double> out(k);
    double sum = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      out[i] = gamma(concentration);
      sum += out[i];
    }
    for (auto& p : out) p /= sum;
    return out;
  }

  // Fisher-Yates, descending index
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = uniform_index(i);
      using std::swap;
      swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t state_;
};

// Stream for (seed, tag, extra...) — tags fold left to right.
inline Rng make_stream(std::uint64_t seed, StreamTag tag) {
  return Rng(derive_key(seed, static_cast<std::uint64_t>(tag)));
}
inline Rng make_stream(std::uint64_t seed, StreamTag tag, std::uint64_t a) {
  return Rng(derive_key(derive_key(seed, static_cast<std::uint64_t>(tag)), a));
}
inline Rng make_stream(std::uint64_t seed, StreamTag tag, std::uint64_t a, std::uint64_t b) {
  return Rng(derive_key(derive_key(derive_key(seed, static_cast<std::uint64_t>(tag)), a), b));
}

}  // namespace fedau
