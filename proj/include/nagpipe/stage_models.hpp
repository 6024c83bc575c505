#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "nagpipe/numerics.hpp"

namespace nagpipe {

enum class StageKind { quadratic, affine_activation, loss_head };
enum class Activation { identity, tanh };
enum class LossKind { mse, softmax_xent, passthrough };

/// Separable convex quadratic 0.5 * sum_j c_j (w_j - w*_j)^2 with c_j > 0.
/// Its gradient is Lipschitz with constant beta() = max_j c_j.
struct QuadraticSpec {
  DenseVector optimum;
  DenseVector curvature;

  QuadraticSpec(DenseVector optimum, DenseVector curvature);
  static QuadraticSpec isotropic(DenseVector optimum, double beta);

  std::size_t dim() const { return optimum.size(); }
  double beta() const;
};

/// Curvatures log-spaced from 1 down to 1/condition (so beta = 1), optimum
/// drawn uniformly from [-1, 1) per coordinate.
QuadraticSpec make_spread_quadratic(std::size_t dim, double condition, std::uint64_t seed);

/// Coordinates [offset, offset + len) of `spec` as a standalone quadratic.
QuadraticSpec quadratic_block(const QuadraticSpec& spec, std::size_t offset, std::size_t len);

struct AffineActivationSpec {
  std::size_t input_dim;
  std::size_t output_dim;
  Activation activation;
};

struct LossHeadSpec {
  LossKind kind;
  std::size_t input_dim;
};

/// One pipeline stage f_i with its backward pair (g_i, h_i).
///
/// quadratic: carries a running scalar; y = x + f(w). Chaining several of them
///   splits one separable quadratic across stages, each stage owning a block.
/// affine_activation: y = act(W x + b), parameters laid out as [W row-major, b].
/// loss_head: parameterless, y = [loss(x, target)].
class StageFunction {
 public:
  explicit StageFunction(QuadraticSpec spec) : spec_(std::move(spec)) {}
  explicit StageFunction(AffineActivationSpec spec);
  explicit StageFunction(LossHeadSpec spec);

  StageKind kind() const;
  std::size_t parameter_count() const;
  std::size_t input_dim() const;
  std::size_t output_dim() const;

  const QuadraticSpec* quadratic() const { return std::get_if<QuadraticSpec>(&spec_); }
  const AffineActivationSpec* affine() const {
    return std::get_if<AffineActivationSpec>(&spec_);
  }
  const LossHeadSpec* loss_head() const { return std::get_if<LossHeadSpec>(&spec_); }

 private:
  std::variant<QuadraticSpec, AffineActivationSpec, LossHeadSpec> spec_;
};

/// What backward needs from forward. Stores values, not closures, so a backward
/// may run against different weights than the forward used.
struct ForwardCache {
  StageKind kind = StageKind::quadratic;
  std::vector<double> input;
  std::vector<double> pre_activation;  // affine: W x + b; loss head: input copy
  std::vector<double> target;
  bool consumed = false;
};

struct ForwardResult {
  DenseVector output;
  ForwardCache cache;
};

struct BackwardResult {
  DenseVector grad_w;
  DenseVector e_in;
};

ForwardResult stage_forward(const StageFunction& stage, const DenseVector& w,
                            const DenseVector& x, std::span<const double> target = {});

/// Consumes `cache`; a second call with the same cache throws Error.
BackwardResult stage_backward(const StageFunction& stage, const DenseVector& w,
                              ForwardCache& cache, const DenseVector& e_out);

struct ValueGrad {
  double loss;
  DenseVector grad;
};

ValueGrad quadratic_value_grad(const QuadraticSpec& spec, const DenseVector& w);

using LossFunction = std::function<double(const DenseVector&)>;

/// Central differences (f(w + eps e_i) - f(w - eps e_i)) / (2 eps).
DenseVector finite_diff_grad(const LossFunction& eval, const DenseVector& w,
                             double eps = 1e-5);

struct Batch {
  std::vector<DenseVector> inputs;
  // Regression: target vectors. Classification: one-element vectors holding the
  // class index.
  std::vector<DenseVector> targets;

  std::size_t size() const { return inputs.size(); }
  void validate() const;
};

enum class DatasetKind { regression, classification };

struct SyntheticOptions {
  std::size_t output_dim = 2;   // regression target width
  std::size_t num_classes = 3;  // classification
  std::size_t teacher_hidden = 8;
  double noise = 0.1;
};

/// Deterministic per seed. Regression targets come from a random one-hidden-layer
/// tanh teacher plus Gaussian noise; classification labels are the argmax of a
/// random linear teacher's scores perturbed by noise, so a few labels violate the
/// margin.
Batch make_synthetic_dataset(DatasetKind kind, std::size_t n, std::size_t input_dim,
                             std::uint64_t seed, const SyntheticOptions& opts = {});

/// Plain-text rows of whitespace-separated floats preceded by a header line
/// `# dim=<d> targets=<k>`; the last k columns are targets.
Batch load_dataset_file(const std::filesystem::path& path);

/// Stages 1..P of an MLP: input->hidden (tanh), hidden->hidden (tanh) ...,
/// hidden->output (identity). With P == 1 the single stage maps input->output.
std::vector<StageFunction> make_mlp_stages(std::size_t num_stages, std::size_t input_dim,
                                           std::size_t hidden_dim, std::size_t output_dim);

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights and zero bias for affine
/// stages; empty for loss heads; `optimum + U(-1, 1)` for quadratic stages.
DenseVector init_weights(const StageFunction& stage, SeededRng& rng);

std::string to_string(StageKind kind);

}  // namespace nagpipe
