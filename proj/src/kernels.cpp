#include "nagpipe/kernels.hpp"

#include <cmath>
#include <cstddef>

namespace nagpipe::kernels {
namespace {

using Index = std::ptrdiff_t;

inline Index ssize(std::size_t n) { return static_cast<Index>(n); }

template <bool Parallel>
void affine_forward_impl(std::span<const double> W, std::span<const double> b,
                         std::span<const double> x, std::span<double> z) {
  const Index rows = ssize(z.size());
  const std::size_t cols = x.size();
#pragma omp parallel for if (Parallel && z.size() * cols >= kParallelThreshold)
  for (Index r = 0; r < rows; ++r) {
    const double* row = W.data() + static_cast<std::size_t>(r) * cols;
    double acc = b[static_cast<std::size_t>(r)];
    for (std::size_t c = 0; c < cols; ++c) acc += row[c] * x[c];
    z[static_cast<std::size_t>(r)] = acc;
  }
}

template <bool Parallel>
void affine_backward_impl(std::span<const double> W, std::span<const double> x,
                          std::span<const double> delta, std::span<double> grad_W,
                          std::span<double> grad_b, std::span<double> e_in) {
  const std::size_t rows = delta.size();
  const std::size_t cols = x.size();
  const bool par = Parallel && rows * cols >= kParallelThreshold;
#pragma omp parallel for if (par)
  for (Index r = 0; r < ssize(rows); ++r) {
    const std::size_t ur = static_cast<std::size_t>(r);
    double* grow = grad_W.data() + ur * cols;
    for (std::size_t c = 0; c < cols; ++c) grow[c] += delta[ur] * x[c];
    grad_b[ur] += delta[ur];
  }
#pragma omp parallel for if (par)
  for (Index c = 0; c < ssize(cols); ++c) {
    const std::size_t uc = static_cast<std::size_t>(c);
    double acc = 0.0;
    for (std::size_t r = 0; r < rows; ++r) acc += W[r * cols + uc] * delta[r];
    e_in[uc] = acc;
  }
}

template <bool Parallel>
void nag_update_impl(std::span<const double> w, std::span<const double> w_prev,
                     std::span<const double> g, double gamma, double step, std::span<double> d,
                     std::span<double> w_next) {
#pragma omp parallel for if (Parallel && w.size() >= kParallelThreshold)
  for (Index i = 0; i < ssize(w.size()); ++i) {
    const std::size_t u = static_cast<std::size_t>(i);
    d[u] = gamma * (w[u] - w_prev[u]);
    w_next[u] = w[u] + d[u] - step * g[u];
  }
}

template <bool Parallel>
void lookahead_impl(std::span<const double> w, std::span<const double> w_prev, double gamma,
                    std::span<double> out) {
#pragma omp parallel for if (Parallel && w.size() >= kParallelThreshold)
  for (Index i = 0; i < ssize(w.size()); ++i) {
    const std::size_t u = static_cast<std::size_t>(i);
    out[u] = w[u] + gamma * (w[u] - w_prev[u]);
  }
}

template <bool Parallel>
void adam_update_impl(std::span<double> w, std::span<double> m, std::span<double> v,
                      std::span<const double> g, const AdamCoefficients& c) {
  const double decay = c.lr * c.weight_decay;
#pragma omp parallel for if (Parallel && w.size() >= kParallelThreshold)
  for (Index i = 0; i < ssize(w.size()); ++i) {
    const std::size_t u = static_cast<std::size_t>(i);
    double wi = w[u];
    if (decay != 0.0) wi -= decay * wi;
    m[u] = c.beta1 * m[u] + (1.0 - c.beta1) * g[u];
    v[u] = c.beta2 * v[u] + (1.0 - c.beta2) * g[u] * g[u];
    const double denom = std::sqrt(v[u] / c.bias2) + c.eps;
    w[u] = wi - c.lr * (c.coef_m * m[u] + c.coef_g * g[u]) / denom;
  }
}

template <bool Parallel>
void axpy_impl(double scale, std::span<const double> x, std::span<double> acc) {
#pragma omp parallel for if (Parallel && x.size() >= kParallelThreshold)
  for (Index i = 0; i < ssize(x.size()); ++i) {
    const std::size_t u = static_cast<std::size_t>(i);
    acc[u] += scale * x[u];
  }
}

}  // namespace

#define NAGPIPE_DEFINE_KERNELS(NS, PAR)                                                     \
  namespace NS {                                                                            \
  void affine_forward(std::span<const double> W, std::span<const double> b,                 \
                      std::span<const double> x, std::span<double> z) {                     \
    affine_forward_impl<PAR>(W, b, x, z);                                                   \
  }                                                                                         \
  void affine_backward(std::span<const double> W, std::span<const double> x,                \
                       std::span<const double> delta, std::span<double> grad_W,             \
                       std::span<double> grad_b, std::span<double> e_in) {                  \
    affine_backward_impl<PAR>(W, x, delta, grad_W, grad_b, e_in);                           \
  }                                                                                         \
  void nag_update(std::span<const double> w, std::span<const double> w_prev,                \
                  std::span<const double> g, double gamma, double step, std::span<double> d, \
                  std::span<double> w_next) {                                               \
    nag_update_impl<PAR>(w, w_prev, g, gamma, step, d, w_next);                             \
  }                                                                                         \
  void lookahead(std::span<const double> w, std::span<const double> w_prev, double gamma,   \
                 std::span<double> out) {                                                   \
    lookahead_impl<PAR>(w, w_prev, gamma, out);                                             \
  }                                                                                         \
  void adam_update(std::span<double> w, std::span<double> m, std::span<double> v,           \
                   std::span<const double> g, const AdamCoefficients& c) {                  \
    adam_update_impl<PAR>(w, m, v, g, c);                                                   \
  }                                                                                         \
  void axpy(double scale, std::span<const double> x, std::span<double> acc) {               \
    axpy_impl<PAR>(scale, x, acc);                                                          \
  }                                                                                         \
  }

NAGPIPE_DEFINE_KERNELS(serial, false)
NAGPIPE_DEFINE_KERNELS(parallel, true)

#undef NAGPIPE_DEFINE_KERNELS

}  // namespace nagpipe::kernels
