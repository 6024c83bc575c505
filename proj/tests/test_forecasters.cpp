#include <doctest.h>

#include <cmath>
#include <numbers>

#include "nagpipe/errors.hpp"
#include "nagpipe/forecasters.hpp"

using namespace nagpipe;

namespace {

GradientHistory history_of(const std::vector<double>& ys, long first_step = 1) {
  GradientHistory h(ys.size());
  for (std::size_t k = 0; k < ys.size(); ++k) h.push(first_step + static_cast<long>(k), {ys[k]});
  return h;
}

}  // namespace

TEST_CASE("second-order correction") {
  CHECK(second_order_forecast({2.0}, {0.5}, 0.1) == DenseVector{2.2});
  CHECK(second_order_forecast({1.0, -3.0}, {0.0, 0.0}, 5.0) == DenseVector{1.0, -3.0});
  CHECK(second_order_forecast({1.0, -3.0}, {4.0, 2.0}, 0.0) == DenseVector{1.0, -3.0});
  CHECK_THROWS_AS(second_order_forecast({1.0}, {1.0}, -1.0), InvalidRangeError);
  CHECK_THROWS_AS(second_order_forecast({1.0}, {1.0, 2.0}, 1.0), DimensionError);

  // linear in dw for fixed g
  SeededRng rng(8);
  const auto g = sample_uniform(rng, 5, -2, 2);
  const auto a = sample_uniform(rng, 5, -1, 1);
  const auto b = sample_uniform(rng, 5, -1, 1);
  const auto fa = second_order_forecast(g, a, 0.3) - g;
  const auto fb = second_order_forecast(g, b, 0.3) - g;
  const auto fab = second_order_forecast(g, a + b, 0.3) - g;
  for (std::size_t j = 0; j < 5; ++j) CHECK(fab[j] == doctest::Approx(fa[j] + fb[j]).epsilon(1e-12));
}

TEST_CASE("gradient history") {
  GradientHistory h(3);
  h.push(1, {1.0});
  h.push(2, {2.0});
  h.push(5, {3.0});
  h.push(6, {4.0});
  CHECK(h.size() == 3);
  CHECK(h[0].step == 2);
  CHECK(h.newest().gradient == DenseVector{4.0});
  CHECK_THROWS_AS(h.push(6, {1.0}), InvalidRangeError);
  CHECK_THROWS_AS(h.push(7, {1.0, 1.0}), DimensionError);
  CHECK_THROWS_AS(GradientHistory(0), InvalidRangeError);
}

TEST_CASE("polynomial trends extrapolate exactly") {
  CHECK(poly_fft_forecast(history_of({1, 2, 3, 4, 5, 6, 7, 8}), 1).gradient[0] ==
        doctest::Approx(9.0).epsilon(1e-12));
  // k^2 for k = 1..8, two steps ahead
  CHECK(poly_fft_forecast(history_of({1, 4, 9, 16, 25, 36, 49, 64}), 2).gradient[0] ==
        doctest::Approx(100.0).epsilon(1e-12));
  const auto c = poly_fft_forecast(history_of({0.25, 0.25, 0.25, 0.25, 0.25}), 3);
  CHECK_FALSE(c.fallback);
  CHECK(c.gradient[0] == doctest::Approx(0.25).epsilon(1e-13));
}

TEST_CASE("periodic residual is continued") {
  // Quadratic trend plus a period-4 pattern with no quadratic component over
  // 16 samples: the fit leaves the pattern as residual and the synthesis
  // continues it.
  const double pattern[4] = {-1, 3, -3, 1};
  std::vector<double> ys;
  for (int k = 0; k < 16; ++k) ys.push_back(0.5 * k * k - 2 * k + 1 + pattern[k % 4]);
  for (std::size_t horizon : {1u, 2u, 3u, 5u}) {
    const int k = 15 + static_cast<int>(horizon);
    const double want = 0.5 * k * k - 2 * k + 1 + pattern[k % 4];
    const auto f = poly_fft_forecast(history_of(ys, 0), horizon);
    CHECK(f.gradient[0] == doctest::Approx(want).epsilon(1e-9));
  }
}

TEST_CASE("a sinusoid off the DFT grid is not reproduced exactly") {
  // Known limitation: the quadratic fit absorbs part of a sinusoid, so the
  // residual is no longer periodic and the extrapolation has an error.
  std::vector<double> ys;
  for (int k = 0; k < 12; ++k) ys.push_back(std::sin(0.7 * k));
  const auto f = poly_fft_forecast(history_of(ys, 0), 1);
  CHECK(std::abs(f.gradient[0] - std::sin(0.7 * 12)) > 1e-3);
}

TEST_CASE("forecaster edge cases") {
  CHECK_THROWS_AS(poly_fft_forecast(GradientHistory(4), 1), DegenerateInputError);
  const auto short_h = history_of({1.0, 2.0});
  const auto fb = poly_fft_forecast(short_h, 1);
  CHECK(fb.fallback);
  CHECK(fb.gradient == DenseVector{2.0});
  CHECK_THROWS_AS(poly_fft_forecast(history_of({1, 2, 3}), 0), InvalidRangeError);
}

TEST_CASE("serial and parallel forecasts agree bit for bit") {
  SeededRng rng(12);
  GradientHistory h(10);
  for (long s = 1; s <= 10; ++s) h.push(s * 3, sample_uniform(rng, 4096, -1, 1));
  const auto a = poly_fft_forecast(h, 4);
  const auto b = serial::poly_fft_forecast(h, 4);
  CHECK(a.gradient == b.gradient);
}
