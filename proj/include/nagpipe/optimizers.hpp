#pragma once

#include <cstddef>
#include <optional>
#include <string>

#include "nagpipe/numerics.hpp"

namespace nagpipe {

/// gamma_t = max(0, (t - 2) / t); gamma_1 = gamma_2 = 0, increasing toward 1.
/// This is the sequence for which lambda_t = t satisfies
/// 1 + lambda_{t+1} gamma_{t+1} = lambda_t.
double gamma_nesterov(long t);

/// Stage-dependent momentum for the no-stash variant:
/// 0.9 + 0.09 (P - i) / P, so the last stage gets 0.9 and stage 1 the most.
double gamma_stagewise(std::size_t stage, std::size_t num_stages);

struct MomentumSchedule {
  enum class Kind { constant, nesterov_sequence, stagewise };
  Kind kind = Kind::constant;
  double gamma = 0.9;          // constant
  std::size_t stage = 1;       // stagewise
  std::size_t num_stages = 1;  // stagewise

  double at(long t) const;
};

struct LrSchedule {
  double base = 3e-4;
  std::size_t warmup_steps = 0;
  double warmup_start = 0.0;
  bool cosine = false;
  double final_lr = 0.0;
  std::size_t total_steps = 0;
  // Delay discount eta / max(tau, 1)^rho_t, rho_t = 1 - min(t / T, 1).
  std::optional<std::size_t> discount_horizon;
};

/// Scheduled learning rate at 0-based update index t for a stage with delay tau.
double lr_at(const LrSchedule& schedule, std::size_t t, std::size_t tau);

/// Weights w_t and w_{t-1} of a Nesterov iteration; t counts from 1.
struct NagState {
  DenseVector w;
  DenseVector w_prev;
  long t = 1;
  DenseVector d;  // look-ahead d_t applied by the most recent step

  static NagState start(DenseVector w1);
};

/// w_t + gamma (w_t - w_{t-1}), the point at which the caller evaluates the
/// gradient it later hands to nag_step.
DenseVector lookahead_point(const NagState& state, double gamma);

/// d_t = gamma (w_t - w_{t-1});
/// w_{t+1} = w_t + d_t - eta (1 - gamma) g  when discounted,
/// w_{t+1} = w_t + d_t - eta g              otherwise.
/// Throws DivergenceError if the new weights are not finite.
NagState nag_step(const NagState& state, const DenseVector& g, double gamma, double eta,
                  bool discounted);

struct AdaptiveParams {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
  bool nesterov = false;
  bool momentum_warmup = false;
};

struct AdaptiveState {
  DenseVector w;
  DenseVector m;
  DenseVector v;
  long t = 1;
  double mu_product = 1.0;  // running product of momentum coefficients (NAdam)

  static AdaptiveState start(DenseVector w1);
};

/// AdamW (nesterov = false) or NAdamW (nesterov = true) with decoupled weight
/// decay applied before the moment update.
AdaptiveState adaptive_step(const AdaptiveState& state, const DenseVector& g, double eta,
                            const AdaptiveParams& params);

/// Momentum coefficient mu_t used by NAdam at step t.
double nadam_mu(double beta1, long t, bool momentum_warmup);

enum class OptimizerKind { sgd, nag, nag_discounted, nag_base, adamw, nadamw };

std::optional<OptimizerKind> parse_optimizer_kind(const std::string& s);
std::string to_string(OptimizerKind kind);
bool is_nag_family(OptimizerKind kind);
bool is_discounted(OptimizerKind kind);

/// Per-stage optimizer behind one interface, as the pipeline runner uses it.
class StageOptimizer {
 public:
  StageOptimizer(OptimizerKind kind, DenseVector w1, AdaptiveParams adaptive);

  OptimizerKind kind() const { return kind_; }
  long t() const;
  const DenseVector& weights() const;
  const DenseVector& previous_weights() const { return w_prev_; }

  /// Weights the forward pass should run on: the look-ahead point for the NAG
  /// family, the raw weights otherwise.
  DenseVector forward_weights(double gamma) const;

  /// Applies one update; returns the look-ahead (momentum) vector of this step.
  const DenseVector& step(const DenseVector& g, double gamma, double eta);

 private:
  OptimizerKind kind_;
  AdaptiveParams adaptive_params_;
  std::optional<NagState> nag_;
  std::optional<AdaptiveState> adaptive_;
  DenseVector w_prev_;
  DenseVector last_d_;
};

}  // namespace nagpipe
