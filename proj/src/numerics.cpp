#include "nagpipe/numerics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <numbers>

#include "nagpipe/errors.hpp"

namespace nagpipe {

DenseVector::DenseVector(std::size_t n, double fill) : values_(n, fill) { ensure_finite(); }

DenseVector::DenseVector(std::vector<double> values) : values_(std::move(values)) {
  ensure_finite();
}

DenseVector::DenseVector(std::initializer_list<double> values) : values_(values) {
  ensure_finite();
}

DenseVector::DenseVector(std::span<const double> values)
    : values_(values.begin(), values.end()) {
  ensure_finite();
}

void DenseVector::ensure_finite(const char* context) const {
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (!std::isfinite(values_[i])) {
      throw DivergenceError(std::string(context) + ": non-finite value at index " +
                            std::to_string(i));
    }
  }
}

DenseVector operator+(const DenseVector& a, const DenseVector& b) {
  require_same_size(a.size(), b.size(), "vector add");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return DenseVector(std::move(out));
}

DenseVector operator-(const DenseVector& a, const DenseVector& b) {
  require_same_size(a.size(), b.size(), "vector sub");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
  return DenseVector(std::move(out));
}

DenseVector operator*(double s, const DenseVector& a) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = s * a[i];
  return DenseVector(std::move(out));
}

double dot(std::span<const double> a, std::span<const double> b) {
  require_same_size(a.size(), b.size(), "dot");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double l2_norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

double cosine_similarity(const DenseVector& a, const DenseVector& b) {
  require_same_size(a.size(), b.size(), "cosine_similarity");
  const double na = l2_norm(a.view());
  const double nb = l2_norm(b.view());
  if (na == 0.0 || nb == 0.0) {
    throw DegenerateInputError("cosine_similarity: zero-norm input");
  }
  const double c = dot(a.view(), b.view()) / (na * nb);
  // Rounding can push |c| a hair past 1.
  return std::clamp(c, -1.0, 1.0);
}

double rmse(const DenseVector& a, const DenseVector& b) {
  require_same_size(a.size(), b.size(), "rmse");
  if (a.empty()) throw DegenerateInputError("rmse: empty vectors");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return std::sqrt(acc / static_cast<double>(a.size()));
}

std::uint64_t SeededRng::next_u64() {
  std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

double SeededRng::uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double SeededRng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

double SeededRng::normal() {
  const double u1 = 1.0 - uniform01();  // (0, 1]
  const double u2 = uniform01();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t SeededRng::below(std::uint64_t n) {
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit);
  return x % n;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  SeededRng r(seed ^ (salt * 0xD1B54A32D192ED03ULL));
  r.next_u64();
  return r.next_u64();
}

DenseVector sample_uniform(SeededRng& rng, std::size_t n, double lo, double hi) {
  if (!(lo < hi)) throw InvalidRangeError("sample_uniform: require lo < hi");
  std::vector<double> out(n);
  for (auto& v : out) v = rng.uniform(lo, hi);
  return DenseVector(std::move(out));
}

std::uint64_t hash_values(std::span<const double> values) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (double v : values) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    for (int b = 0; b < 8; ++b) {
      h ^= (bits >> (8 * b)) & 0xffu;
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = digits[v & 0xf];
  return s;
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

}  // namespace nagpipe
