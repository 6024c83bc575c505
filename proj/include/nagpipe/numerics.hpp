#pragma once

#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace nagpipe {

/// Flat vector of 64-bit floats. Every construction path verifies that all
/// entries are finite and throws DivergenceError otherwise.
class DenseVector {
 public:
  DenseVector() = default;
  explicit DenseVector(std::size_t n, double fill = 0.0);
  explicit DenseVector(std::vector<double> values);
  DenseVector(std::initializer_list<double> values);
  explicit DenseVector(std::span<const double> values);

  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  double operator[](std::size_t i) const { return values_[i]; }
  double& operator[](std::size_t i) { return values_[i]; }

  std::span<const double> view() const { return values_; }
  // Mutable access for in-place kernels. Callers that may produce non-finite
  // values must call ensure_finite() afterwards.
  std::span<double> mut() { return values_; }
  const std::vector<double>& values() const { return values_; }

  void ensure_finite(const char* context = "DenseVector") const;

  bool operator==(const DenseVector&) const = default;

 private:
  std::vector<double> values_;
};

DenseVector operator+(const DenseVector& a, const DenseVector& b);
DenseVector operator-(const DenseVector& a, const DenseVector& b);
DenseVector operator*(double s, const DenseVector& a);

double dot(std::span<const double> a, std::span<const double> b);
double l2_norm(std::span<const double> a);

/// a·b / (‖a‖‖b‖). Throws DimensionError on length mismatch and
/// DegenerateInputError when either norm is zero.
double cosine_similarity(const DenseVector& a, const DenseVector& b);

/// sqrt(mean((a-b)^2)); empty input is degenerate.
double rmse(const DenseVector& a, const DenseVector& b);

// SplitMix64 (Steele, Lea, Flood 2014): state advances by a fixed odd constant
// and each output is a bijective mix of the counter. Bit-exact everywhere.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed) : seed_(seed), state_(seed) {}

  std::uint64_t next_u64();
  // Uniform in [0, 1) with 53 random mantissa bits.
  double uniform01();
  double uniform(double lo, double hi);
  // Box-Muller on uniform01(); one fresh pair per call, second value discarded
  // so the stream position depends only on the number of calls.
  double normal();
  // Uniform integer in [0, n), n > 0, by rejection (unbiased).
  std::uint64_t below(std::uint64_t n);

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  std::uint64_t state_;
};

// Derives an independent child seed; used to give each (seed, step) pair its own stream.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt);

/// n draws in [lo, hi). Throws InvalidRangeError when lo >= hi.
DenseVector sample_uniform(SeededRng& rng, std::size_t n, double lo, double hi);

// FNV-1a over the IEEE-754 bit patterns; used as a cheap trajectory fingerprint.
std::uint64_t hash_values(std::span<const double> values);
std::string hex64(std::uint64_t v);

// Shortest-round-trip-safe text form: 17 significant digits, '.' separator.
std::string format_double(double v);

}  // namespace nagpipe
