#pragma once

// Inner loops shared by the stage models and the optimizers.
//
// Every kernel exists twice: `serial` is the reference, `parallel` splits the
// outer loop across OpenMP threads. Each output element is produced by the same
// serial instruction sequence in both, so results are bit-identical regardless
// of thread count. No kernel performs a cross-thread reduction.

#include <cstddef>
#include <span>

namespace nagpipe::kernels {

// Below this many output elements the parallel variants run inline.
inline constexpr std::size_t kParallelThreshold = 4096;

struct AdamCoefficients {
  double lr;
  double beta1;
  double beta2;
  double eps;
  double weight_decay;
  double coef_m;   // multiplies the updated first moment
  double coef_g;   // multiplies the raw gradient (Nesterov blend; 0 for AdamW)
  double bias2;    // 1 - beta2^t
};

namespace serial {
// z = W x + b, W row-major with z.size() rows and x.size() columns.
void affine_forward(std::span<const double> W, std::span<const double> b,
                    std::span<const double> x, std::span<double> z);
// grad_W += delta x^T, grad_b += delta, e_in = W^T delta.
void affine_backward(std::span<const double> W, std::span<const double> x,
                     std::span<const double> delta, std::span<double> grad_W,
                     std::span<double> grad_b, std::span<double> e_in);
// d = gamma (w - w_prev); w_next = w + d - step * g.
void nag_update(std::span<const double> w, std::span<const double> w_prev,
                std::span<const double> g, double gamma, double step, std::span<double> d,
                std::span<double> w_next);
// out = w + gamma (w - w_prev).
void lookahead(std::span<const double> w, std::span<const double> w_prev, double gamma,
               std::span<double> out);
void adam_update(std::span<double> w, std::span<double> m, std::span<double> v,
                 std::span<const double> g, const AdamCoefficients& c);
// acc += scale * x.
void axpy(double scale, std::span<const double> x, std::span<double> acc);
}  // namespace serial

namespace parallel {
// z = W x + b, W row-major with z.size() rows and x.size() columns.
void affine_forward(std::span<const double> W, std::span<const double> b,
                    std::span<const double> x, std::span<double> z);
// grad_W += delta x^T, grad_b += delta, e_in = W^T delta.
void affine_backward(std::span<const double> W, std::span<const double> x,
                     std::span<const double> delta, std::span<double> grad_W,
                     std::span<double> grad_b, std::span<double> e_in);
// d = gamma (w - w_prev); w_next = w + d - step * g.
void nag_update(std::span<const double> w, std::span<const double> w_prev,
                std::span<const double> g, double gamma, double step, std::span<double> d,
                std::span<double> w_next);
// out = w + gamma (w - w_prev).
void lookahead(std::span<const double> w, std::span<const double> w_prev, double gamma,
               std::span<double> out);
void adam_update(std::span<double> w, std::span<double> m, std::span<double> v,
                 std::span<const double> g, const AdamCoefficients& c);
// acc += scale * x.
void axpy(double scale, std::span<const double> x, std::span<double> acc);
}  // namespace parallel

}  // namespace nagpipe::kernels
