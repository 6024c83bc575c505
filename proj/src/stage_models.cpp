#include "nagpipe/stage_models.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "nagpipe/errors.hpp"
#include "nagpipe/kernels.hpp"

namespace nagpipe {

QuadraticSpec::QuadraticSpec(DenseVector opt, DenseVector curv)
    : optimum(std::move(opt)), curvature(std::move(curv)) {
  require_same_size(optimum.size(), curvature.size(), "QuadraticSpec");
  for (std::size_t j = 0; j < curvature.size(); ++j) {
    if (!(curvature[j] > 0.0)) {
      throw InvalidRangeError("QuadraticSpec: curvature must be strictly positive");
    }
  }
}

QuadraticSpec make_spread_quadratic(std::size_t dim, double condition, std::uint64_t seed) {
  if (dim == 0) throw InvalidRangeError("make_spread_quadratic: dim must be >= 1");
  if (!(condition >= 1.0)) throw InvalidRangeError("make_spread_quadratic: condition must be >= 1");
  std::vector<double> c(dim, 1.0);
  for (std::size_t j = 1; j < dim; ++j) {
    c[j] = std::pow(condition, -static_cast<double>(j) / static_cast<double>(dim - 1));
  }
  SeededRng rng(seed);
  return QuadraticSpec(sample_uniform(rng, dim, -1.0, 1.0), DenseVector(std::move(c)));
}

QuadraticSpec quadratic_block(const QuadraticSpec& spec, std::size_t offset, std::size_t len) {
  if (len == 0 || offset + len > spec.dim()) throw InvalidRangeError("quadratic_block: out of range");
  const auto o = spec.optimum.view().subspan(offset, len);
  const auto c = spec.curvature.view().subspan(offset, len);
  return QuadraticSpec(DenseVector(o), DenseVector(c));
}

QuadraticSpec QuadraticSpec::isotropic(DenseVector optimum, double beta) {
  const std::size_t n = optimum.size();
  return QuadraticSpec(std::move(optimum), DenseVector(n, beta));
}

double QuadraticSpec::beta() const {
  double b = 0.0;
  for (double c : curvature.view()) b = std::max(b, c);
  return b;
}

StageFunction::StageFunction(AffineActivationSpec spec) : spec_(spec) {
  if (spec.input_dim == 0 || spec.output_dim == 0) {
    throw InvalidRangeError("affine stage dimensions must be >= 1");
  }
}

StageFunction::StageFunction(LossHeadSpec spec) : spec_(spec) {
  if (spec.input_dim == 0) throw InvalidRangeError("loss head input_dim must be >= 1");
  if (spec.kind == LossKind::passthrough && spec.input_dim != 1) {
    throw InvalidRangeError("passthrough loss head takes a scalar input");
  }
  if (spec.kind == LossKind::softmax_xent && spec.input_dim < 2) {
    throw InvalidRangeError("softmax cross-entropy needs at least two classes");
  }
}

StageKind StageFunction::kind() const {
  if (quadratic()) return StageKind::quadratic;
  if (affine()) return StageKind::affine_activation;
  return StageKind::loss_head;
}

std::size_t StageFunction::parameter_count() const {
  if (auto* q = quadratic()) return q->dim();
  if (auto* a = affine()) return a->output_dim * a->input_dim + a->output_dim;
  return 0;
}

std::size_t StageFunction::input_dim() const {
  if (quadratic()) return 1;
  if (auto* a = affine()) return a->input_dim;
  return loss_head()->input_dim;
}

std::size_t StageFunction::output_dim() const {
  if (auto* a = affine()) return a->output_dim;
  return 1;
}

namespace {

void check_shapes(const StageFunction& stage, const DenseVector& w, std::size_t x_len) {
  require_same_size(w.size(), stage.parameter_count(), "stage weights");
  require_same_size(x_len, stage.input_dim(), "stage input");
}

double quadratic_value(const QuadraticSpec& q, std::span<const double> w) {
  double acc = 0.0;
  for (std::size_t j = 0; j < w.size(); ++j) {
    const double r = w[j] - q.optimum[j];
    acc += q.curvature[j] * r * r;
  }
  return 0.5 * acc;
}

// Loss value and dL/dx for a loss head.
double loss_forward(const LossHeadSpec& head, std::span<const double> x,
                    std::span<const double> target, std::vector<double>* grad) {
  switch (head.kind) {
    case LossKind::passthrough:
      if (grad) grad->assign(1, 1.0);
      return x[0];
    case LossKind::mse: {
      require_same_size(target.size(), x.size(), "mse target");
      const double k = static_cast<double>(x.size());
      double acc = 0.0;
      if (grad) grad->resize(x.size());
      for (std::size_t j = 0; j < x.size(); ++j) {
        const double r = x[j] - target[j];
        acc += r * r;
        if (grad) (*grad)[j] = 2.0 * r / k;
      }
      return acc / k;
    }
    case LossKind::softmax_xent: {
      if (target.size() != 1) throw DimensionError("softmax_xent target must be a class index");
      const double idx = target[0];
      if (idx < 0 || idx >= static_cast<double>(x.size()) || idx != std::floor(idx)) {
        throw InvalidRangeError("softmax_xent: class index out of range");
      }
      const auto cls = static_cast<std::size_t>(idx);
      const double mx = *std::max_element(x.begin(), x.end());
      double z = 0.0;
      for (double v : x) z += std::exp(v - mx);
      const double log_z = mx + std::log(z);
      if (grad) {
        grad->resize(x.size());
        for (std::size_t j = 0; j < x.size(); ++j) {
          (*grad)[j] = std::exp(x[j] - log_z) - (j == cls ? 1.0 : 0.0);
        }
      }
      return log_z - x[cls];
    }
  }
  return 0.0;
}

}  // namespace

ForwardResult stage_forward(const StageFunction& stage, const DenseVector& w,
                            const DenseVector& x, std::span<const double> target) {
  check_shapes(stage, w, x.size());
  ForwardResult out;
  out.cache.kind = stage.kind();
  out.cache.input = x.values();

  if (auto* q = stage.quadratic()) {
    out.output = DenseVector{x[0] + quadratic_value(*q, w.view())};
  } else if (auto* a = stage.affine()) {
    const std::size_t nW = a->output_dim * a->input_dim;
    std::vector<double> z(a->output_dim);
    kernels::parallel::affine_forward(w.view().first(nW), w.view().subspan(nW), x.view(), z);
    std::vector<double> y(z);
    if (a->activation == Activation::tanh) {
      for (auto& v : y) v = std::tanh(v);
    }
    out.cache.pre_activation = std::move(z);
    out.output = DenseVector(std::move(y));
  } else {
    auto* h = stage.loss_head();
    out.cache.target.assign(target.begin(), target.end());
    out.output = DenseVector{loss_forward(*h, x.view(), target, nullptr)};
  }
  return out;
}

BackwardResult stage_backward(const StageFunction& stage, const DenseVector& w,
                              ForwardCache& cache, const DenseVector& e_out) {
  if (cache.consumed) throw Error("stage_backward: forward cache already consumed");
  if (cache.kind != stage.kind()) throw DimensionError("stage_backward: cache kind mismatch");
  check_shapes(stage, w, cache.input.size());
  require_same_size(e_out.size(), stage.output_dim(), "stage_backward error signal");
  cache.consumed = true;

  if (auto* q = stage.quadratic()) {
    std::vector<double> g(q->dim());
    const double s = e_out[0];
    for (std::size_t j = 0; j < g.size(); ++j) {
      g[j] = s * (q->curvature[j] * (w[j] - q->optimum[j]));
    }
    return {DenseVector(std::move(g)), DenseVector{s}};
  }
  if (auto* a = stage.affine()) {
    const std::size_t nW = a->output_dim * a->input_dim;
    std::vector<double> delta(e_out.values());
    if (a->activation == Activation::tanh) {
      for (std::size_t r = 0; r < delta.size(); ++r) {
        const double t = std::tanh(cache.pre_activation[r]);
        delta[r] *= 1.0 - t * t;
      }
    }
    std::vector<double> grad(stage.parameter_count(), 0.0);
    std::vector<double> e_in(a->input_dim);
    std::span<double> gs(grad);
    kernels::parallel::affine_backward(w.view().first(nW), cache.input, delta, gs.first(nW),
                                       gs.subspan(nW), e_in);
    return {DenseVector(std::move(grad)), DenseVector(std::move(e_in))};
  }
  auto* h = stage.loss_head();
  std::vector<double> dx;
  loss_forward(*h, cache.input, cache.target, &dx);
  for (auto& v : dx) v *= e_out[0];
  return {DenseVector(), DenseVector(std::move(dx))};
}

ValueGrad quadratic_value_grad(const QuadraticSpec& spec, const DenseVector& w) {
  require_same_size(w.size(), spec.dim(), "quadratic_value_grad");
  std::vector<double> g(w.size());
  for (std::size_t j = 0; j < g.size(); ++j) {
    g[j] = spec.curvature[j] * (w[j] - spec.optimum[j]);
  }
  return {quadratic_value(spec, w.view()), DenseVector(std::move(g))};
}

DenseVector finite_diff_grad(const LossFunction& eval, const DenseVector& w, double eps) {
  if (!(eps > 0.0)) throw InvalidRangeError("finite_diff_grad: eps must be positive");
  std::vector<double> g(w.size());
  DenseVector probe = w;
  for (std::size_t i = 0; i < w.size(); ++i) {
    probe[i] = w[i] + eps;
    const double up = eval(probe);
    probe[i] = w[i] - eps;
    const double down = eval(probe);
    probe[i] = w[i];
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw DivergenceError("finite_diff_grad: non-finite loss while probing");
    }
    g[i] = (up - down) / (2.0 * eps);
  }
  return DenseVector(std::move(g));
}

void Batch::validate() const {
  if (inputs.size() != targets.size()) {
    throw DimensionError("Batch: inputs and targets differ in count");
  }
  if (inputs.empty()) throw DegenerateInputError("Batch: empty");
}

Batch make_synthetic_dataset(DatasetKind kind, std::size_t n, std::size_t input_dim,
                             std::uint64_t seed, const SyntheticOptions& opts) {
  if (n == 0 || input_dim == 0) {
    throw InvalidRangeError("make_synthetic_dataset: n and input_dim must be >= 1");
  }
  SeededRng teacher_rng(mix_seed(seed, 0x7eac4e7));
  SeededRng data_rng(mix_seed(seed, 0xda7a));
  const double scale = 1.0 / std::sqrt(static_cast<double>(input_dim));

  Batch out;
  out.inputs.reserve(n);
  out.targets.reserve(n);

  if (kind == DatasetKind::regression) {
    const std::size_t h = opts.teacher_hidden;
    const std::size_t k = opts.output_dim;
    std::vector<double> W1(h * input_dim), b1(h), W2(k * h), b2(k);
    for (auto& v : W1) v = 2.0 * scale * teacher_rng.normal();
    for (auto& v : b1) v = 0.5 * teacher_rng.normal();
    for (auto& v : W2) v = teacher_rng.normal() / std::sqrt(static_cast<double>(h));
    for (auto& v : b2) v = 0.1 * teacher_rng.normal();
    std::vector<double> x(input_dim), z(h), y(k);
    for (std::size_t s = 0; s < n; ++s) {
      for (auto& v : x) v = data_rng.normal();
      kernels::serial::affine_forward(W1, b1, x, z);
      for (auto& v : z) v = std::tanh(v);
      kernels::serial::affine_forward(W2, b2, z, y);
      for (auto& v : y) v += opts.noise * data_rng.normal();
      out.inputs.emplace_back(x);
      out.targets.emplace_back(y);
    }
  } else {
    const std::size_t c = opts.num_classes;
    if (c < 2) throw InvalidRangeError("classification needs at least two classes");
    std::vector<double> W(c * input_dim), b(c, 0.0), scores(c);
    for (auto& v : W) v = 3.0 * scale * teacher_rng.normal();
    std::vector<double> x(input_dim);
    for (std::size_t s = 0; s < n; ++s) {
      for (auto& v : x) v = data_rng.normal();
      kernels::serial::affine_forward(W, b, x, scores);
      for (auto& v : scores) v += opts.noise * 3.0 * data_rng.normal();
      const auto label = static_cast<double>(
          std::max_element(scores.begin(), scores.end()) - scores.begin());
      out.inputs.emplace_back(x);
      out.targets.push_back(DenseVector{label});
    }
  }
  return out;
}

Batch load_dataset_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open dataset file " + path.string());
  std::string line;
  std::size_t dim = 0, targets = 0, line_no = 0;
  bool have_header = false;
  Batch out;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line[0] == '#') {
      if (have_header) continue;
      std::istringstream hs(line.substr(1));
      std::string tok;
      while (hs >> tok) {
        auto eq = tok.find('=');
        if (eq == std::string::npos) continue;
        const auto key = tok.substr(0, eq);
        const auto val = std::stoul(tok.substr(eq + 1));
        if (key == "dim") dim = val;
        if (key == "targets") targets = val;
      }
      if (dim == 0 || targets == 0) {
        throw ConfigError("dataset header must be `# dim=<d> targets=<k>`", line_no);
      }
      have_header = true;
      continue;
    }
    if (!have_header) throw ConfigError("dataset file is missing its header line", line_no);
    std::istringstream rs(line);
    std::vector<double> row;
    double v;
    while (rs >> v) row.push_back(v);
    if (!rs.eof()) throw ConfigError("dataset row contains a non-numeric token", line_no);
    if (row.size() != dim + targets) {
      throw ConfigError("dataset row has " + std::to_string(row.size()) + " columns, expected " +
                            std::to_string(dim + targets),
                        line_no);
    }
    out.inputs.emplace_back(std::vector<double>(row.begin(), row.begin() + dim));
    out.targets.emplace_back(std::vector<double>(row.begin() + dim, row.end()));
  }
  out.validate();
  return out;
}

std::vector<StageFunction> make_mlp_stages(std::size_t num_stages, std::size_t input_dim,
                                           std::size_t hidden_dim, std::size_t output_dim) {
  if (num_stages == 0) throw InvalidRangeError("make_mlp_stages: need at least one stage");
  std::vector<StageFunction> stages;
  stages.reserve(num_stages);
  for (std::size_t i = 0; i < num_stages; ++i) {
    const bool first = i == 0;
    const bool last = i + 1 == num_stages;
    stages.emplace_back(AffineActivationSpec{first ? input_dim : hidden_dim,
                                             last ? output_dim : hidden_dim,
                                             last ? Activation::identity : Activation::tanh});
  }
  return stages;
}

DenseVector init_weights(const StageFunction& stage, SeededRng& rng) {
  if (auto* q = stage.quadratic()) {
    std::vector<double> w(q->dim());
    for (std::size_t j = 0; j < w.size(); ++j) w[j] = q->optimum[j] + rng.uniform(-1.0, 1.0);
    return DenseVector(std::move(w));
  }
  if (auto* a = stage.affine()) {
    std::vector<double> w(stage.parameter_count(), 0.0);
    const double lim = 1.0 / std::sqrt(static_cast<double>(a->input_dim));
    for (std::size_t j = 0; j < a->input_dim * a->output_dim; ++j) w[j] = rng.uniform(-lim, lim);
    return DenseVector(std::move(w));
  }
  return DenseVector();
}

std::string to_string(StageKind kind) {
  switch (kind) {
    case StageKind::quadratic: return "quadratic";
    case StageKind::affine_activation: return "affine_activation";
    case StageKind::loss_head: return "loss_head";
  }
  return "?";
}

}  // namespace nagpipe
