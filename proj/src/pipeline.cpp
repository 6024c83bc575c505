#include "nagpipe/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <deque>

#include "nagpipe/errors.hpp"

namespace nagpipe {

std::optional<ForecasterKind> parse_forecaster_kind(const std::string& s) {
  if (s == "none") return ForecasterKind::none;
  if (s == "second_order") return ForecasterKind::second_order;
  if (s == "poly_fft") return ForecasterKind::poly_fft;
  return std::nullopt;
}

std::string to_string(ForecasterKind kind) {
  switch (kind) {
    case ForecasterKind::none: return "none";
    case ForecasterKind::second_order: return "second_order";
    case ForecasterKind::poly_fft: return "poly_fft";
  }
  return "?";
}

MomentumSchedule PipelineConfig::momentum_for_stage(std::size_t stage) const {
  MomentumSchedule m;
  m.kind = gamma_mode;
  m.gamma = gamma;
  m.stage = stage;
  m.num_stages = num_stages;
  return m;
}

void PipelineConfig::validate() const {
  if (num_stages < 1) throw ValidationError("stages must be >= 1");
  if (update_interval < 1) throw ValidationError("update_interval must be >= 1");
  if (microbatches < 1) throw ValidationError("microbatches must be >= 1");
  if (microbatch_size < 1) throw ValidationError("microbatch size must be >= 1");
  if (total_steps < 1) throw ValidationError("steps must be >= 1");
  if (probe_interval < 1) throw ValidationError("probe_interval must be >= 1");
  if (!(gamma >= 0.0 && gamma < 1.0)) throw ValidationError("gamma must lie in [0, 1)");
  if (!(lr.base > 0.0)) throw ValidationError("lr must be > 0");
  if (lr.warmup_steps > 0 && !(lr.warmup_start > 0.0)) {
    throw ValidationError("warmup_start must be > 0 when warmup is enabled");
  }
  if (lr.cosine && (!(lr.final_lr > 0.0) || lr.total_steps <= lr.warmup_steps)) {
    throw ValidationError("cosine decay needs lr_final > 0 and lr_total_steps > warmup_steps");
  }
  if (history_size < 1) throw ValidationError("history_size must be >= 1");
  if (fisher_lambda < 0.0) throw ValidationError("fisher_lambda must be >= 0");
  if (forecaster == ForecasterKind::second_order && mode == PipelineMode::async_no_stash) {
    throw ValidationError(
        "forecaster=second_order needs the stashed forward weights; not available in "
        "async_no_stash");
  }
}

void PipelineModel::validate() const {
  if (stages.empty()) throw ValidationError("model has no stages");
  if (initial_weights.size() != stages.size()) {
    throw ValidationError("model: one initial weight vector per stage required");
  }
  for (std::size_t s = 0; s < stages.size(); ++s) {
    if (initial_weights[s].size() != stages[s].parameter_count()) {
      throw ValidationError("model: initial weights of stage " + std::to_string(s + 1) +
                            " have the wrong length");
    }
    if (s + 1 < stages.size() && stages[s].output_dim() != stages[s + 1].input_dim()) {
      throw ValidationError("model: stage " + std::to_string(s + 1) + " output does not feed stage " +
                            std::to_string(s + 2));
    }
  }
  if (stages.back().output_dim() != head.input_dim()) {
    throw ValidationError("model: last stage output does not match the loss head");
  }
  if (head.kind() != StageKind::loss_head) throw ValidationError("model: head must be a loss head");
  if (!data.inputs.empty()) {
    data.validate();
    if (data.inputs.front().size() != stages.front().input_dim()) {
      throw ValidationError("model: dataset input width does not match stage 1");
    }
  } else if (stages.front().input_dim() != 1 || stages.front().kind() != StageKind::quadratic) {
    throw ValidationError("model: only quadratic pipelines may run without data");
  }
}

void WeightStash::put(long version, const DenseVector& weights) {
  auto it = slots_.find(version);
  if (it != slots_.end()) {
    ++it->second.refs;
    return;
  }
  if (slots_.size() >= capacity_) {
    throw Error("WeightStash: capacity " + std::to_string(capacity_) + " exceeded");
  }
  slots_.emplace(version, Slot{weights, 1});
  peak_ = std::max(peak_, slots_.size());
}

const DenseVector& WeightStash::get(long version) const {
  auto it = slots_.find(version);
  if (it == slots_.end()) throw Error("WeightStash: version " + std::to_string(version) + " missing");
  return it->second.weights;
}

void WeightStash::release(long version) {
  auto it = slots_.find(version);
  if (it == slots_.end()) throw Error("WeightStash: release of unknown version");
  if (--it->second.refs == 0) slots_.erase(it);
}

std::size_t stash_capacity(std::size_t stage, std::size_t num_stages, std::size_t update_interval) {
  if (stage < 1 || stage > num_stages || update_interval < 1) {
    throw InvalidRangeError("stash_capacity: bad arguments");
  }
  const std::size_t a = num_stages - stage;
  return (a + update_interval - 1) / update_interval + 1;
}

namespace {

void hash_mix(std::uint64_t& h, const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
}

}  // namespace

std::uint64_t TrainingTrace::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& r : rows) {
    hash_mix(h, &r.step, sizeof r.step);
    hash_mix(h, &r.stage, sizeof r.stage);
    hash_mix(h, &r.loss, sizeof r.loss);
    hash_mix(h, &r.lr, sizeof r.lr);
    hash_mix(h, &r.gamma, sizeof r.gamma);
    hash_mix(h, &r.update_count, sizeof r.update_count);
    hash_mix(h, &r.weight_hash, sizeof r.weight_hash);
  }
  for (const auto& p : probes) {
    hash_mix(h, &p.step, sizeof p.step);
    hash_mix(h, &p.stage, sizeof p.stage);
    hash_mix(h, &p.kind, sizeof p.kind);
    hash_mix(h, p.values.data(), p.values.size() * sizeof(double));
  }
  return h;
}

std::vector<std::size_t> microbatch_indices(std::uint64_t seed, long microbatch,
                                            std::size_t microbatch_size, std::size_t data_size) {
  std::vector<std::size_t> idx(microbatch_size, 0);
  if (data_size == 0) return idx;
  SeededRng rng(mix_seed(seed, static_cast<std::uint64_t>(microbatch) + 1));
  for (auto& i : idx) i = static_cast<std::size_t>(rng.below(data_size));
  return idx;
}

namespace {

struct ProbeWindowEntry {
  long step;
  DenseVector w, d, g;
};

struct StageRuntime {
  StageRuntime(std::size_t i, const StageFunction* f, StageOptimizer o, MomentumSchedule m,
               std::size_t delay, std::size_t stash_cap)
      : index(i), fn(f), opt(std::move(o)), momentum(m), tau(delay), stash(stash_cap) {}

  std::size_t index;  // 1-based
  const StageFunction* fn;
  StageOptimizer opt;
  MomentumSchedule momentum;
  std::size_t tau;
  WeightStash stash;
  std::optional<GradientHistory> history;

  std::optional<DenseVector> group_grad;
  std::size_t group_count = 0;
  double group_loss = 0.0;
  long consumed = 0;
  std::optional<DenseVector> last_backward_weights;

  std::deque<ProbeWindowEntry> window;
  long last_dumped = 0;
};

struct InFlight {
  long version;
  std::vector<ForwardCache> caches;
};

// Everything that flows between stages for one microbatch.
struct MicrobatchData {
  std::vector<DenseVector> inputs;
  std::vector<std::vector<double>> targets;
};

class Runner {
 public:
  Runner(const PipelineConfig& cfg, const PipelineModel& model, const RunObserver* observer)
      : cfg_(cfg), model_(model), observer_(observer) {
    const std::size_t P = model.stages.size();
    trace_.discounted = is_discounted(cfg.optimizer);
    for (std::size_t s = 0; s < P; ++s) {
      const std::size_t i = s + 1;
      const std::size_t tau =
          cfg.mode == PipelineMode::sync ? 0 : compute_delay(i, P, cfg.update_interval);
      trace_.delays.push_back(tau);
      stages_.emplace_back(
          i, &model.stages[s], StageOptimizer(cfg.optimizer, model.initial_weights[s], cfg.adaptive),
          cfg.momentum_for_stage(i), tau, stash_capacity(i, P, cfg.update_interval));
      if (cfg.forecaster == ForecasterKind::poly_fft && cfg.mode != PipelineMode::sync) {
        stages_.back().history.emplace(cfg.history_size);
      }
    }
    in_flight_.resize(P);
    outputs_.resize(P);
    errors_.resize(P);
  }

  TrainingTrace run() {
    try {
      if (cfg_.mode == PipelineMode::sync) {
        run_sync();
      } else {
        run_async();
      }
    } catch (const DivergenceError& e) {
      trace_.diverged = true;
      trace_.divergence_message = e.what();
    }
    finish();
    return std::move(trace_);
  }

 private:
  double gamma_now(const StageRuntime& rt) const { return rt.momentum.at(rt.opt.t()); }

  MicrobatchData load_microbatch(long mb) const {
    MicrobatchData out;
    if (model_.data.inputs.empty()) {
      out.inputs.assign(cfg_.microbatch_size, DenseVector{0.0});
      out.targets.assign(cfg_.microbatch_size, {});
      return out;
    }
    for (std::size_t i :
         microbatch_indices(cfg_.seed, mb, cfg_.microbatch_size, model_.data.size())) {
      out.inputs.push_back(model_.data.inputs[i]);
      out.targets.push_back(model_.data.targets[i].values());
    }
    return out;
  }

  // Runs the loss head on the last stage's outputs; returns mean loss and stores
  // dL/dy per sample (already scaled by 1/B).
  double apply_head(const std::vector<DenseVector>& outputs,
                    const std::vector<std::vector<double>>& targets,
                    std::vector<DenseVector>& e_out) const {
    const double inv_b = 1.0 / static_cast<double>(outputs.size());
    const DenseVector no_weights;
    double loss = 0.0;
    e_out.clear();
    for (std::size_t k = 0; k < outputs.size(); ++k) {
      auto fr = stage_forward(model_.head, no_weights, outputs[k], targets[k]);
      loss += fr.output[0];
      auto br = stage_backward(model_.head, no_weights, fr.cache, DenseVector{inv_b});
      e_out.push_back(std::move(br.e_in));
    }
    loss *= inv_b;
    if (!std::isfinite(loss)) throw DivergenceError("non-finite loss");
    return loss;
  }

  std::vector<DenseVector> forward_samples(const StageRuntime& rt, const DenseVector& w,
                                           const std::vector<DenseVector>& inputs,
                                           std::vector<ForwardCache>& caches) const {
    std::vector<DenseVector> outs;
    outs.reserve(inputs.size());
    caches.clear();
    for (const auto& x : inputs) {
      auto fr = stage_forward(*rt.fn, w, x);
      outs.push_back(std::move(fr.output));
      caches.push_back(std::move(fr.cache));
    }
    return outs;
  }

  // Sum over samples of the weight gradient; e_in per sample into `e_in`.
  DenseVector backward_samples(const StageRuntime& rt, const DenseVector& w,
                               std::vector<ForwardCache>& caches,
                               const std::vector<DenseVector>& e_out,
                               std::vector<DenseVector>* e_in) const {
    std::optional<DenseVector> grad;
    if (e_in) e_in->clear();
    for (std::size_t k = 0; k < caches.size(); ++k) {
      auto br = stage_backward(*rt.fn, w, caches[k], e_out[k]);
      if (!grad) {
        grad = std::move(br.grad_w);
      } else {
        for (std::size_t j = 0; j < grad->size(); ++j) (*grad)[j] += br.grad_w[j];
      }
      if (e_in) e_in->push_back(std::move(br.e_in));
    }
    grad->ensure_finite("gradient");
    return std::move(*grad);
  }

  void accumulate(StageRuntime& rt, DenseVector grad, double loss) {
    if (!rt.group_grad) {
      rt.group_grad = std::move(grad);
    } else {
      for (std::size_t j = 0; j < grad.size(); ++j) (*rt.group_grad)[j] += grad[j];
    }
    rt.group_loss += loss;
    ++rt.group_count;
    ++rt.consumed;
  }

  void apply_update(StageRuntime& rt) {
    DenseVector g = std::move(*rt.group_grad);
    const auto n = static_cast<double>(rt.group_count);
    if (rt.group_count > 1) {
      for (std::size_t j = 0; j < g.size(); ++j) g[j] /= n;
    }
    const double loss = rt.group_loss / n;
    rt.group_grad.reset();
    rt.group_count = 0;
    rt.group_loss = 0.0;

    const long t = rt.opt.t();
    const double gamma = gamma_now(rt);
    if (cfg_.mode != PipelineMode::sync) {
      if (cfg_.forecaster == ForecasterKind::second_order && rt.last_backward_weights) {
        const DenseVector now = rt.opt.forward_weights(gamma);
        g = second_order_forecast(g, now - *rt.last_backward_weights, cfg_.fisher_lambda);
      } else if (rt.history) {
        rt.history->push(t, g);
        if (rt.tau > 0) g = poly_fft_forecast(*rt.history, rt.tau).gradient;
      }
    }
    const double eta = lr_at(cfg_.lr, static_cast<std::size_t>(t - 1), rt.tau);
    DenseVector w_t = rt.opt.weights();
    const DenseVector& d = rt.opt.step(g, gamma, eta);
    const double gamma_col =
        (cfg_.optimizer == OptimizerKind::adamw || cfg_.optimizer == OptimizerKind::nadamw)
            ? cfg_.adaptive.beta1
            : (cfg_.optimizer == OptimizerKind::sgd ? 0.0 : gamma);
    trace_.rows.push_back({t, rt.index, loss, eta, gamma_col, rt.consumed,
                           hash_values(rt.opt.weights().view())});
    record_probe(rt, t, std::move(w_t), d, std::move(g));
  }

  void record_probe(StageRuntime& rt, long t, DenseVector w, const DenseVector& d, DenseVector g) {
    rt.window.push_back({t, std::move(w), d, std::move(g)});
    while (rt.window.size() > rt.tau + 1) rt.window.pop_front();
    if (t % static_cast<long>(cfg_.probe_interval) != 0) return;
    for (const auto& e : rt.window) {
      if (e.step <= rt.last_dumped) continue;
      trace_.probes.push_back({e.step, rt.index, 'w', e.w.values()});
      trace_.probes.push_back({e.step, rt.index, 'd', e.d.values()});
      trace_.probes.push_back({e.step, rt.index, 'g', e.g.values()});
      rt.last_dumped = e.step;
    }
  }

  void run_async() {
    const std::size_t P = stages_.size();
    const long limit = static_cast<long>(cfg_.total_steps * cfg_.update_interval);
    OneFOneBScheduler sched(P, cfg_.update_interval, limit);
    const bool stash = cfg_.mode == PipelineMode::async_stash;

    while (!sched.finished()) {
      for (const auto& ev : sched.next_tick()) {
        const std::size_t s = ev.stage - 1;
        StageRuntime& rt = stages_[s];
        const long mb = ev.microbatch;
        if (ev.action == Action::forward) {
          MicrobatchData in;
          if (s == 0) {
            in = load_microbatch(mb);
            targets_[mb] = in.targets;
          } else {
            in.inputs = std::move(outputs_[s - 1][mb]);
            outputs_[s - 1].erase(mb);
          }
          const long version = rt.opt.t() - 1;
          const DenseVector w = rt.opt.forward_weights(gamma_now(rt));
          if (observer_ && observer_->on_forward) observer_->on_forward(rt.index, mb, version, w, in.inputs);
          InFlight fl{version, {}};
          auto outs = forward_samples(rt, w, in.inputs, fl.caches);
          if (stash) rt.stash.put(version, w);
          in_flight_[s].emplace(mb, std::move(fl));
          if (s + 1 == P) {
            std::vector<DenseVector> e_out;
            losses_[mb] = apply_head(outs, targets_.at(mb), e_out);
            targets_.erase(mb);
            errors_[s][mb] = std::move(e_out);
          } else {
            outputs_[s][mb] = std::move(outs);
          }
        } else if (ev.action == Action::backward) {
          auto node = in_flight_[s].extract(mb);
          InFlight& fl = node.mapped();
          const std::vector<DenseVector> e_out = std::move(errors_[s].at(mb));
          errors_[s].erase(mb);
          const DenseVector w = stash ? rt.stash.get(fl.version) : rt.opt.forward_weights(gamma_now(rt));
          std::vector<DenseVector> e_in;
          DenseVector grad = backward_samples(rt, w, fl.caches, e_out, s > 0 ? &e_in : nullptr);
          if (observer_ && observer_->on_backward) observer_->on_backward(rt.index, mb, e_out, grad);
          if (s > 0) errors_[s - 1][mb] = std::move(e_in);
          rt.last_backward_weights = w;
          if (stash) rt.stash.release(fl.version);
          const long updates = rt.opt.t() - 1;
          const bool closes = (rt.consumed + 1) % static_cast<long>(cfg_.update_interval) == 0;
          trace_.delay_observations.push_back({rt.index, mb, fl.version, updates, closes});
          const double loss = losses_.at(mb);
          if (s == 0) losses_.erase(mb);
          accumulate(rt, std::move(grad), loss);
        } else if (ev.action == Action::update) {
          apply_update(rt);
        }
      }
    }
    trace_.ticks = sched.tick();
  }

  void run_sync() {
    const std::size_t P = stages_.size();
    const auto M = static_cast<long>(cfg_.microbatches);
    for (std::size_t step = 0; step < cfg_.total_steps; ++step) {
      std::vector<DenseVector> w;
      for (auto& rt : stages_) w.push_back(rt.opt.forward_weights(gamma_now(rt)));
      for (long k = 0; k < M; ++k) {
        const long mb = static_cast<long>(step) * M + k;
        MicrobatchData in = load_microbatch(mb);
        std::vector<std::vector<ForwardCache>> caches(P);
        std::vector<DenseVector> acts = in.inputs;
        for (std::size_t s = 0; s < P; ++s) {
          if (observer_ && observer_->on_forward) {
            observer_->on_forward(s + 1, mb, stages_[s].opt.t() - 1, w[s], acts);
          }
          acts = forward_samples(stages_[s], w[s], acts, caches[s]);
        }
        std::vector<DenseVector> e;
        const double loss = apply_head(acts, in.targets, e);
        for (std::size_t s = P; s-- > 0;) {
          std::vector<DenseVector> e_in;
          DenseVector grad = backward_samples(stages_[s], w[s], caches[s], e, s > 0 ? &e_in : nullptr);
          if (observer_ && observer_->on_backward) observer_->on_backward(s + 1, mb, e, grad);
          accumulate(stages_[s], std::move(grad), loss);
          e = std::move(e_in);
        }
      }
      for (auto& rt : stages_) apply_update(rt);
    }
    trace_.ticks = static_cast<long>(cfg_.total_steps) * 2 * (M + static_cast<long>(P) - 1);
  }

  void finish() {
    for (auto& rt : stages_) {
      trace_.peak_stash.push_back(rt.stash.peak());
      trace_.final_weights.push_back(rt.opt.weights());
    }
    std::stable_sort(trace_.rows.begin(), trace_.rows.end(), [](const auto& a, const auto& b) {
      return a.step != b.step ? a.step < b.step : a.stage < b.stage;
    });
    std::stable_sort(trace_.probes.begin(), trace_.probes.end(), [](const auto& a, const auto& b) {
      if (a.stage != b.stage) return a.stage < b.stage;
      return a.step < b.step;
    });
  }

  const PipelineConfig& cfg_;
  const PipelineModel& model_;
  const RunObserver* observer_;
  std::vector<StageRuntime> stages_;
  std::vector<std::map<long, InFlight>> in_flight_;
  std::vector<std::map<long, std::vector<DenseVector>>> outputs_;
  std::vector<std::map<long, std::vector<DenseVector>>> errors_;
  std::map<long, std::vector<std::vector<double>>> targets_;
  std::map<long, double> losses_;
  TrainingTrace trace_;
};

}  // namespace

TrainingTrace run_training(const PipelineConfig& cfg, const PipelineModel& model,
                           const RunObserver* observer) {
  cfg.validate();
  model.validate();
  if (model.stages.size() != cfg.num_stages) {
    throw ValidationError("model has " + std::to_string(model.stages.size()) +
                          " stages but the config asks for " + std::to_string(cfg.num_stages));
  }
  Runner runner(cfg, model, observer);
  return runner.run();
}

TrainingTrace run_fixed_delay(const FixedDelayConfig& cfg) {
  if (cfg.steps < 1) throw ValidationError("run_fixed_delay: steps must be >= 1");
  if (cfg.probe_interval < 1) throw ValidationError("run_fixed_delay: probe_interval must be >= 1");
  if (!(cfg.gradient_noise >= 0.0)) throw ValidationError("run_fixed_delay: gradient_noise must be >= 0");
  require_same_size(cfg.w1.size(), cfg.spec.dim(), "run_fixed_delay initial point");

  TrainingTrace trace;
  trace.delays = {cfg.tau};
  trace.discounted = is_discounted(cfg.optimizer);
  StageOptimizer opt(cfg.optimizer, cfg.w1, AdaptiveParams{});
  std::deque<DenseVector> lookaheads;
  std::deque<ProbeWindowEntry> window;
  long last_dumped = 0;
  const bool adaptive =
      cfg.optimizer == OptimizerKind::adamw || cfg.optimizer == OptimizerKind::nadamw;

  try {
    for (std::size_t step = 1; step <= cfg.steps; ++step) {
      const auto t = static_cast<long>(step);
      const double gamma = cfg.momentum.at(t);
      lookaheads.push_back(opt.forward_weights(gamma));
      while (lookaheads.size() > cfg.tau + 1) lookaheads.pop_front();
      DenseVector g = quadratic_value_grad(cfg.spec, lookaheads.front()).grad;
      if (cfg.gradient_noise > 0.0) {
        SeededRng rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(t)));
        for (std::size_t j = 0; j < g.size(); ++j) g[j] += cfg.gradient_noise * rng.normal();
      }
      DenseVector w_t = opt.weights();
      const double loss = quadratic_value_grad(cfg.spec, w_t).loss;
      const DenseVector& d = opt.step(g, gamma, cfg.eta);
      const double gamma_col = adaptive ? AdaptiveParams{}.beta1
                                        : (cfg.optimizer == OptimizerKind::sgd ? 0.0 : gamma);
      trace.rows.push_back({t, 1, loss, cfg.eta, gamma_col, t, hash_values(opt.weights().view())});

      window.push_back({t, std::move(w_t), d, g});
      while (window.size() > cfg.tau + 1) window.pop_front();
      if (t % static_cast<long>(cfg.probe_interval) == 0) {
        for (const auto& e : window) {
          if (e.step <= last_dumped) continue;
          trace.probes.push_back({e.step, 1, 'w', e.w.values()});
          trace.probes.push_back({e.step, 1, 'd', e.d.values()});
          trace.probes.push_back({e.step, 1, 'g', e.g.values()});
          last_dumped = e.step;
        }
      }
      const double next_loss = quadratic_value_grad(cfg.spec, opt.weights()).loss;
      if (!std::isfinite(next_loss)) throw DivergenceError("non-finite loss");
    }
  } catch (const DivergenceError& e) {
    trace.diverged = true;
    trace.divergence_message = e.what();
  }
  trace.final_weights = {opt.weights()};
  trace.peak_stash = {0};
  return trace;
}

}  // namespace nagpipe
