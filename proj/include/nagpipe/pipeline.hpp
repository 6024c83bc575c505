#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "nagpipe/forecasters.hpp"
#include "nagpipe/optimizers.hpp"
#include "nagpipe/schedule.hpp"
#include "nagpipe/stage_models.hpp"

namespace nagpipe {

enum class ForecasterKind { none, second_order, poly_fft };

std::optional<ForecasterKind> parse_forecaster_kind(const std::string& s);
std::string to_string(ForecasterKind kind);

struct PipelineConfig {
  PipelineMode mode = PipelineMode::async_stash;
  std::size_t num_stages = 1;       // P
  std::size_t update_interval = 1;  // K (async)
  std::size_t microbatches = 4;     // M (sync)
  std::size_t microbatch_size = 8;

  OptimizerKind optimizer = OptimizerKind::nag_discounted;
  MomentumSchedule::Kind gamma_mode = MomentumSchedule::Kind::constant;
  double gamma = 0.99;
  AdaptiveParams adaptive;
  LrSchedule lr;

  ForecasterKind forecaster = ForecasterKind::none;
  double fisher_lambda = 1.0;
  std::size_t history_size = 8;

  std::size_t total_steps = 100;  // optimizer updates per stage
  std::uint64_t seed = 0;
  std::size_t probe_interval = 50;

  MomentumSchedule momentum_for_stage(std::size_t stage) const;
  void validate() const;
};

/// Stages 1..P, the parameterless loss head after stage P, initial weights and
/// the dataset microbatches are drawn from (empty for data-free models).
struct PipelineModel {
  std::vector<StageFunction> stages;
  StageFunction head;
  std::vector<DenseVector> initial_weights;
  Batch data;

  void validate() const;
};

/// Ref-counted snapshots keyed by weight version, bounded to `capacity`
/// distinct versions. Microbatches whose forwards saw the same version share
/// one snapshot.
class WeightStash {
 public:
  explicit WeightStash(std::size_t capacity) : capacity_(capacity) {}

  void put(long version, const DenseVector& weights);
  const DenseVector& get(long version) const;
  void release(long version);

  std::size_t live() const { return slots_.size(); }
  std::size_t peak() const { return peak_; }
  std::size_t capacity() const { return capacity_; }

 private:
  struct Slot {
    DenseVector weights;
    int refs;
  };
  std::size_t capacity_;
  std::size_t peak_ = 0;
  std::map<long, Slot> slots_;
};

/// Stash bound at stage i: distinct weight versions a stage can have in
/// flight, ceil((P - i) / K) + 1. Equals compute_delay + 1 when K divides P - i.
std::size_t stash_capacity(std::size_t stage, std::size_t num_stages, std::size_t update_interval);

struct TraceRow {
  long step;           // optimizer iteration t at this stage (1-based)
  std::size_t stage;   // 1-based
  double loss;         // mean loss of the microbatches behind this update
  double lr;           // eta_t
  double gamma;        // gamma_t (beta1 for the adaptive optimizers)
  long update_count;   // microbatches consumed by this stage so far
  std::uint64_t weight_hash;  // hash of w_{t+1}
};

/// w_t, d_t and g_t of one iteration at one stage. kind is 'w', 'd' or 'g'.
struct ProbeRecord {
  long step;
  std::size_t stage;
  char kind;
  std::vector<double> values;
};

/// For one backward: the weight version its forward used and the number of
/// updates the stage had applied when the backward ran.
struct DelayObservation {
  std::size_t stage;
  long microbatch;
  long forward_version;
  long updates_before_backward;
  bool closes_group;  // this backward triggered an update
};

struct TrainingTrace {
  std::vector<std::size_t> delays;  // tau_i per stage
  std::vector<TraceRow> rows;       // sorted by (step, stage)
  std::vector<ProbeRecord> probes;  // sorted by (stage, step, kind)
  std::vector<DelayObservation> delay_observations;
  std::vector<std::size_t> peak_stash;
  std::vector<DenseVector> final_weights;
  long ticks = 0;
  bool diverged = false;
  std::string divergence_message;
  bool discounted = false;  // optimizer used the (1 - gamma) gradient discount

  std::uint64_t hash() const;
};

/// Debug hooks; tests use them to replay stage computations independently.
struct RunObserver {
  std::function<void(std::size_t stage, long mb, long version, const DenseVector& weights,
                     const std::vector<DenseVector>& inputs)>
      on_forward;
  std::function<void(std::size_t stage, long mb, const std::vector<DenseVector>& e_out,
                     const DenseVector& grad)>
      on_backward;
};

/// Deterministic samples of microbatch m (a function of seed and m only).
std::vector<std::size_t> microbatch_indices(std::uint64_t seed, long microbatch,
                                            std::size_t microbatch_size, std::size_t data_size);

TrainingTrace run_training(const PipelineConfig& cfg, const PipelineModel& model,
                           const RunObserver* observer = nullptr);

/// Single-function harness with an explicit constant delay: update t uses
/// g_t = grad f(w_{t-tau} + d_{t-tau}) (clamped to iteration 1 early on). Rows
/// record f(w_t); probes follow cfg.probe_interval like the pipeline.
/// gradient_noise > 0 adds N(0, noise^2) per coordinate, drawn from a stream
/// keyed by (seed, t), to mimic minibatch gradients.
struct FixedDelayConfig {
  FixedDelayConfig(QuadraticSpec f, DenseVector start) : spec(std::move(f)), w1(std::move(start)) {}

  QuadraticSpec spec;
  DenseVector w1;
  std::size_t tau = 0;
  OptimizerKind optimizer = OptimizerKind::nag_discounted;
  MomentumSchedule momentum;
  double eta = 1.0;
  std::size_t steps = 1000;
  std::size_t probe_interval = 1;
  double gradient_noise = 0.0;
  std::uint64_t seed = 0;
};

TrainingTrace run_fixed_delay(const FixedDelayConfig& cfg);

}  // namespace nagpipe
