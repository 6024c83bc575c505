#include "nagpipe/optimizers.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "nagpipe/errors.hpp"
#include "nagpipe/kernels.hpp"

namespace nagpipe {

double gamma_nesterov(long t) {
  if (t < 1) throw InvalidRangeError("gamma_nesterov: step must be >= 1");
  return std::max(0.0, static_cast<double>(t - 2) / static_cast<double>(t));
}

double gamma_stagewise(std::size_t stage, std::size_t num_stages) {
  if (stage < 1 || stage > num_stages) {
    throw InvalidRangeError("gamma_stagewise: stage index out of range");
  }
  return 0.9 + static_cast<double>(num_stages - stage) / static_cast<double>(num_stages) * 0.09;
}

double MomentumSchedule::at(long t) const {
  switch (kind) {
    case Kind::constant: return gamma;
    case Kind::nesterov_sequence: return gamma_nesterov(t);
    case Kind::stagewise: return gamma_stagewise(stage, num_stages);
  }
  return gamma;
}

double lr_at(const LrSchedule& s, std::size_t t, std::size_t tau) {
  const double td = static_cast<double>(t);
  double lr = s.base;
  if (t < s.warmup_steps) {
    lr = s.warmup_start +
         (s.base - s.warmup_start) * td / static_cast<double>(s.warmup_steps);
  } else if (s.cosine) {
    if (t >= s.total_steps) {
      lr = s.final_lr;
    } else {
      const double span = static_cast<double>(s.total_steps - s.warmup_steps);
      const double progress = (td - static_cast<double>(s.warmup_steps)) / span;
      lr = s.final_lr +
           (s.base - s.final_lr) * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
    }
  }
  if (s.discount_horizon) {
    const double horizon = static_cast<double>(std::max<std::size_t>(*s.discount_horizon, 1));
    const double rho = 1.0 - std::min(td / horizon, 1.0);
    const double tau_eff = static_cast<double>(std::max<std::size_t>(tau, 1));
    if (rho > 0.0) lr /= std::pow(tau_eff, rho);
  }
  return lr;
}

NagState NagState::start(DenseVector w1) {
  NagState s;
  s.w_prev = w1;
  s.d = DenseVector(w1.size());
  s.w = std::move(w1);
  return s;
}

DenseVector lookahead_point(const NagState& state, double gamma) {
  std::vector<double> out(state.w.size());
  kernels::parallel::lookahead(state.w.view(), state.w_prev.view(), gamma, out);
  return DenseVector(std::move(out));
}

NagState nag_step(const NagState& state, const DenseVector& g, double gamma, double eta,
                  bool discounted) {
  require_same_size(g.size(), state.w.size(), "nag_step gradient");
  require_same_size(state.w_prev.size(), state.w.size(), "nag_step state");
  const double step = discounted ? eta * (1.0 - gamma) : eta;
  std::vector<double> d(state.w.size());
  std::vector<double> w_next(state.w.size());
  kernels::parallel::nag_update(state.w.view(), state.w_prev.view(), g.view(), gamma, step, d,
                                w_next);
  NagState next;
  next.w = DenseVector(std::move(w_next));
  next.w_prev = state.w;
  next.d = DenseVector(std::move(d));
  next.t = state.t + 1;
  return next;
}

AdaptiveState AdaptiveState::start(DenseVector w1) {
  AdaptiveState s;
  s.m = DenseVector(w1.size());
  s.v = DenseVector(w1.size());
  s.w = std::move(w1);
  return s;
}

double nadam_mu(double beta1, long t, bool momentum_warmup) {
  if (!momentum_warmup) return beta1;
  return beta1 * (1.0 - 0.5 * std::pow(0.96, static_cast<double>(t) * 0.004));
}

AdaptiveState adaptive_step(const AdaptiveState& state, const DenseVector& g, double eta,
                            const AdaptiveParams& p) {
  require_same_size(g.size(), state.w.size(), "adaptive_step gradient");
  if (!(p.beta1 >= 0.0 && p.beta1 < 1.0 && p.beta2 >= 0.0 && p.beta2 < 1.0)) {
    throw InvalidRangeError("adaptive_step: betas must lie in [0, 1)");
  }
  if (!(eta > 0.0 && p.eps > 0.0 && p.weight_decay >= 0.0)) {
    throw InvalidRangeError("adaptive_step: need eta > 0, eps > 0, weight_decay >= 0");
  }
  AdaptiveState next = state;
  const double td = static_cast<double>(state.t);
  kernels::AdamCoefficients c{};
  c.lr = eta;
  c.beta1 = p.beta1;
  c.beta2 = p.beta2;
  c.eps = p.eps;
  c.weight_decay = p.weight_decay;
  c.bias2 = 1.0 - std::pow(p.beta2, td);
  if (p.nesterov) {
    const double mu_t = nadam_mu(p.beta1, state.t, p.momentum_warmup);
    const double mu_next = nadam_mu(p.beta1, state.t + 1, p.momentum_warmup);
    next.mu_product = state.mu_product * mu_t;
    c.coef_g = (1.0 - mu_t) / (1.0 - next.mu_product);
    c.coef_m = mu_next / (1.0 - next.mu_product * mu_next);
  } else {
    c.coef_m = 1.0 / (1.0 - std::pow(p.beta1, td));
    c.coef_g = 0.0;
  }
  kernels::parallel::adam_update(next.w.mut(), next.m.mut(), next.v.mut(), g.view(), c);
  next.w.ensure_finite("adaptive_step");
  next.t = state.t + 1;
  return next;
}

std::optional<OptimizerKind> parse_optimizer_kind(const std::string& s) {
  if (s == "sgd") return OptimizerKind::sgd;
  if (s == "nag") return OptimizerKind::nag;
  if (s == "nag_discounted") return OptimizerKind::nag_discounted;
  if (s == "nag_base") return OptimizerKind::nag_base;
  if (s == "adamw") return OptimizerKind::adamw;
  if (s == "nadamw") return OptimizerKind::nadamw;
  return std::nullopt;
}

std::string to_string(OptimizerKind kind) {
  switch (kind) {
    case OptimizerKind::sgd: return "sgd";
    case OptimizerKind::nag: return "nag";
    case OptimizerKind::nag_discounted: return "nag_discounted";
    case OptimizerKind::nag_base: return "nag_base";
    case OptimizerKind::adamw: return "adamw";
    case OptimizerKind::nadamw: return "nadamw";
  }
  return "?";
}

bool is_nag_family(OptimizerKind kind) {
  return kind == OptimizerKind::nag || kind == OptimizerKind::nag_discounted ||
         kind == OptimizerKind::nag_base;
}

bool is_discounted(OptimizerKind kind) { return kind == OptimizerKind::nag_discounted; }

StageOptimizer::StageOptimizer(OptimizerKind kind, DenseVector w1, AdaptiveParams adaptive)
    : kind_(kind), adaptive_params_(adaptive), w_prev_(w1), last_d_(w1.size()) {
  if (kind == OptimizerKind::adamw || kind == OptimizerKind::nadamw) {
    adaptive_params_.nesterov = kind == OptimizerKind::nadamw;
    adaptive_ = AdaptiveState::start(std::move(w1));
  } else {
    nag_ = NagState::start(std::move(w1));
  }
}

long StageOptimizer::t() const { return nag_ ? nag_->t : adaptive_->t; }

const DenseVector& StageOptimizer::weights() const { return nag_ ? nag_->w : adaptive_->w; }

DenseVector StageOptimizer::forward_weights(double gamma) const {
  if (nag_ && kind_ != OptimizerKind::sgd) return lookahead_point(*nag_, gamma);
  return weights();
}

const DenseVector& StageOptimizer::step(const DenseVector& g, double gamma, double eta) {
  if (nag_) {
    const double gm = kind_ == OptimizerKind::sgd ? 0.0 : gamma;
    *nag_ = nag_step(*nag_, g, gm, eta, is_discounted(kind_));
    w_prev_ = nag_->w_prev;
    last_d_ = nag_->d;
  } else {
    // Adaptive optimizers have no explicit look-ahead; record the momentum
    // extrapolation beta1 (w_t - w_{t-1}) so alignment metrics stay defined.
    std::vector<double> d(adaptive_->w.size());
    for (std::size_t j = 0; j < d.size(); ++j) {
      d[j] = adaptive_params_.beta1 * (adaptive_->w[j] - w_prev_[j]);
    }
    last_d_ = DenseVector(std::move(d));
    w_prev_ = adaptive_->w;
    *adaptive_ = adaptive_step(*adaptive_, g, eta, adaptive_params_);
  }
  return last_d_;
}

}  // namespace nagpipe
