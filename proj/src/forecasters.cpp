#include "nagpipe/forecasters.hpp"

#include <array>
#include <cmath>
#include <mutex>
#include <new>
#include <numbers>
#include <vector>

#include <fftw3.h>

#include "nagpipe/errors.hpp"
#include "nagpipe/kernels.hpp"

namespace nagpipe {

DenseVector second_order_forecast(const DenseVector& g_stale, const DenseVector& dw,
                                  double lambda) {
  require_same_size(g_stale.size(), dw.size(), "second_order_forecast");
  if (!(lambda >= 0.0)) throw InvalidRangeError("second_order_forecast: lambda must be >= 0");
  std::vector<double> out(g_stale.size());
  for (std::size_t j = 0; j < out.size(); ++j) {
    const double g = g_stale[j];
    out[j] = g + lambda * (g * g) * dw[j];
  }
  return DenseVector(std::move(out));
}

GradientHistory::GradientHistory(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw InvalidRangeError("GradientHistory: capacity must be >= 1");
}

void GradientHistory::push(long step, DenseVector gradient) {
  if (!entries_.empty()) {
    if (step <= entries_.back().step) {
      throw InvalidRangeError("GradientHistory: steps must be strictly increasing");
    }
    require_same_size(gradient.size(), entries_.back().gradient.size(), "GradientHistory");
  }
  if (entries_.size() == capacity_) entries_.pop_front();
  entries_.push_back({step, std::move(gradient)});
}

namespace {

// FFTW's planner is not reentrant; sweeps forecast from several threads.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

// Residual columns laid out row-per-coordinate, transformed in one batched
// real-to-complex plan. Row j of the output holds bins 0..n/2 of coordinate j.
class ResidualSpectra {
 public:
  ResidualSpectra(std::size_t dim, std::size_t n)
      : n_(n), bins_(n / 2 + 1),
        in_(static_cast<double*>(fftw_malloc(sizeof(double) * dim * n))),
        out_(static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * dim * bins_))) {
    if (!in_ || !out_) throw std::bad_alloc();
    int len = static_cast<int>(n);
    std::lock_guard<std::mutex> lock(planner_mutex());
    plan_ = fftw_plan_many_dft_r2c(1, &len, static_cast<int>(dim), in_, nullptr, 1, len, out_,
                                   nullptr, 1, static_cast<int>(bins_), FFTW_ESTIMATE);
  }
  ~ResidualSpectra() {
    {
      std::lock_guard<std::mutex> lock(planner_mutex());
      fftw_destroy_plan(plan_);
    }
    fftw_free(in_);
    fftw_free(out_);
  }
  ResidualSpectra(const ResidualSpectra&) = delete;
  ResidualSpectra& operator=(const ResidualSpectra&) = delete;

  double* row(std::size_t j) { return in_ + j * n_; }
  void transform() { fftw_execute(plan_); }

  // Trigonometric interpolant of row j evaluated at sample index m.
  double synthesize(std::size_t j, std::size_t m) const {
    const fftw_complex* x = out_ + j * bins_;
    const double n = static_cast<double>(n_);
    double acc = x[0][0];
    for (std::size_t k = 1; k < bins_; ++k) {
      const double ang = 2.0 * std::numbers::pi * static_cast<double>(k * (m % n_) % n_) / n;
      const double term = x[k][0] * std::cos(ang) - x[k][1] * std::sin(ang);
      // the Nyquist bin of an even length has no mirrored partner
      acc += (2 * k == n_) ? term : 2.0 * term;
    }
    return acc / n;
  }

 private:
  std::size_t n_;
  std::size_t bins_;
  double* in_;
  fftw_complex* out_;
  fftw_plan plan_;
};

// Least-squares quadratic shared by every coordinate: coefficient rows
// (3 x H) mapping a history column to (c0, c1, c2) in the centred step variable.
struct QuadraticFit {
  std::vector<std::array<double, 3>> pinv;  // pinv[k] = weights of sample k
  std::vector<double> x;                    // centred abscissae
  double x_target = 0.0;
};

bool build_fit(const GradientHistory& h, std::size_t horizon, QuadraticFit& fit) {
  const std::size_t n = h.size();
  double mean = 0.0;
  for (std::size_t k = 0; k < n; ++k) mean += static_cast<double>(h[k].step);
  mean /= static_cast<double>(n);
  fit.x.resize(n);
  for (std::size_t k = 0; k < n; ++k) fit.x[k] = static_cast<double>(h[k].step) - mean;
  fit.x_target = static_cast<double>(h.newest().step) + static_cast<double>(horizon) - mean;

  // Normal matrix A = X^T X, X rows (1, x, x^2); invert by Gauss-Jordan.
  std::array<std::array<double, 6>, 3> m{};
  for (std::size_t k = 0; k < n; ++k) {
    const double p[3] = {1.0, fit.x[k], fit.x[k] * fit.x[k]};
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) m[r][c] += p[r] * p[c];
  }
  for (int r = 0; r < 3; ++r) m[r][3 + r] = 1.0;
  for (int col = 0; col < 3; ++col) {
    int piv = col;
    for (int r = col + 1; r < 3; ++r)
      if (std::abs(m[r][col]) > std::abs(m[piv][col])) piv = r;
    if (std::abs(m[piv][col]) < 1e-12) return false;
    std::swap(m[piv], m[col]);
    const double inv = 1.0 / m[col][col];
    for (auto& v : m[col]) v *= inv;
    for (int r = 0; r < 3; ++r) {
      if (r == col) continue;
      const double f = m[r][col];
      for (int c = 0; c < 6; ++c) m[r][c] -= f * m[col][c];
    }
  }
  fit.pinv.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double p[3] = {1.0, fit.x[k], fit.x[k] * fit.x[k]};
    for (int r = 0; r < 3; ++r) {
      fit.pinv[k][r] = m[r][3] * p[0] + m[r][4] * p[1] + m[r][5] * p[2];
    }
  }
  return true;
}

// Fits the trend of coordinate j, writes its residual into `resid` and
// returns the trend extrapolated to the target step.
double fit_coordinate(const GradientHistory& h, const QuadraticFit& fit, std::size_t j,
                      double* resid) {
  const std::size_t n = h.size();
  double c[3] = {0.0, 0.0, 0.0};
  for (std::size_t k = 0; k < n; ++k) {
    const double y = h[k].gradient[j];
    for (int r = 0; r < 3; ++r) c[r] += fit.pinv[k][r] * y;
  }
  for (std::size_t k = 0; k < n; ++k) {
    const double x = fit.x[k];
    resid[k] = h[k].gradient[j] - (c[0] + c[1] * x + c[2] * x * x);
  }
  const double xt = fit.x_target;
  return c[0] + c[1] * xt + c[2] * xt * xt;
}

template <bool Parallel>
ForecastResult forecast_impl(const GradientHistory& history, std::size_t horizon) {
  if (history.empty()) throw DegenerateInputError("poly_fft_forecast: empty history");
  if (horizon == 0) throw InvalidRangeError("poly_fft_forecast: horizon must be >= 1");
  QuadraticFit fit;
  if (history.size() < 3 || !build_fit(history, horizon, fit)) {
    return {history.newest().gradient, true};
  }
  const std::size_t n = history.size();
  const std::size_t dim = history.newest().gradient.size();
  ResidualSpectra spectra(dim, n);
  std::vector<double> out(dim);
  const auto sdim = static_cast<std::ptrdiff_t>(dim);
  const bool par = Parallel && dim * n >= kernels::kParallelThreshold;
#pragma omp parallel for if (par)
  for (std::ptrdiff_t j = 0; j < sdim; ++j) {
    const auto u = static_cast<std::size_t>(j);
    out[u] = fit_coordinate(history, fit, u, spectra.row(u));
  }
  spectra.transform();
#pragma omp parallel for if (par)
  for (std::ptrdiff_t j = 0; j < sdim; ++j) {
    const auto u = static_cast<std::size_t>(j);
    out[u] += spectra.synthesize(u, n - 1 + horizon);
  }
  return {DenseVector(std::move(out)), false};
}

}  // namespace

ForecastResult poly_fft_forecast(const GradientHistory& history, std::size_t horizon) {
  return forecast_impl<true>(history, horizon);
}

namespace serial {
ForecastResult poly_fft_forecast(const GradientHistory& history, std::size_t horizon) {
  return forecast_impl<false>(history, horizon);
}
}  // namespace serial

}  // namespace nagpipe
