#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace rfloss {

// ---------------------------------------------------------------------------
// Error types
// ---------------------------------------------------------------------------

class PipelineError : public std::runtime_error {
 public:
  explicit PipelineError(const std::string& msg) : std::runtime_error(msg) {}
};

class DegenerateGeometry : public PipelineError {
 public:
  explicit DegenerateGeometry(const std::string& msg) : PipelineError(msg) {}
};

class ParseError : public PipelineError {
 public:
  explicit ParseError(const std::string& msg) : PipelineError(msg) {}
};

class AmbiguousJoin : public PipelineError {
 public:
  explicit AmbiguousJoin(const std::string& msg) : PipelineError(msg) {}
};

class InsufficientData : public PipelineError {
 public:
  explicit InsufficientData(const std::string& msg) : PipelineError(msg) {}
};

class DegenerateCluster : public PipelineError {
 public:
  explicit DegenerateCluster(const std::string& msg) : PipelineError(msg) {}
};

class NonFiniteGradient : public PipelineError {
 public:
  explicit NonFiniteGradient(const std::string& msg) : PipelineError(msg) {}
};

class SchemaMismatch : public PipelineError {
 public:
  explicit SchemaMismatch(const std::string& msg) : PipelineError(msg) {}
};

class LengthMismatch : public PipelineError {
 public:
  explicit LengthMismatch(const std::string& msg) : PipelineError(msg) {}
};

class InvalidDistribution : public PipelineError {
 public:
  explicit InvalidDistribution(const std::string& msg) : PipelineError(msg) {}
};

class SingleCluster : public PipelineError {
 public:
  explicit SingleCluster(const std::string& msg) : PipelineError(msg) {}
};

class ConfigError : public PipelineError {
 public:
  explicit ConfigError(const std::string& msg) : PipelineError(msg) {}
};

class EmptyLabeledSet : public PipelineError {
 public:
  explicit EmptyLabeledSet(const std::string& msg) : PipelineError(msg) {}
};

// ---------------------------------------------------------------------------
// Deterministic RNG
// ---------------------------------------------------------------------------

// splitmix64; used everywhere so runs are reproducible independent of the
// standard library's distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // uniform in [0, 1)
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // uniform integer in [0, n)
  std::uint64_t below(std::uint64_t n) { return next() % n; }

  // standard normal via Box-Muller (uses two uniforms per pair, caches one)
  double normal() {
    if (has_cache_) {
      has_cache_ = false;
      return cache_;
    }
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 1e-300) u1 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    cache_ = r * std::sin(a);
    has_cache_ = true;
    return r * std::cos(a);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t state_;
  bool has_cache_ = false;
  double cache_ = 0.0;
};

// FNV-1a, used to derive per-component seeds from a global one and to hash
// configs for output metadata headers.
inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t deriveSeed(std::uint64_t seed, const std::string& component) {
  return seed ^ fnv1a(component);
}

// ---------------------------------------------------------------------------
// Gaussian CDF / quantile
// ---------------------------------------------------------------------------

inline double normCdf(double x) { return 0.5 * std::erfc(-x * 0.7071067811865475244); }

// Acklam's rational approximation, refined with one Halley step.
double normQuantile(double p);

}  // namespace rfloss
