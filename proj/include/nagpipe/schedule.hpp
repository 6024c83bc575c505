#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace nagpipe {

enum class PipelineMode { sync, async_stash, async_no_stash };

std::optional<PipelineMode> parse_pipeline_mode(const std::string& s);
std::string to_string(PipelineMode mode);

/// Number of updates a stage's weights receive between the forward and the
/// backward of one microbatch: floor((2 (P - i) + 1) / (2 K)), stages 1-based.
std::size_t compute_delay(std::size_t stage, std::size_t num_stages, std::size_t update_interval);

enum class Action { forward, backward, update, idle };

std::string to_string(Action a);

/// One tick of work at one stage. forward/backward/idle occupy the tick;
/// an update is instantaneous and shares the tick of the backward that
/// triggered it. `microbatch` is -1 for idle and update events.
struct ScheduleEvent {
  long tick;
  std::size_t stage;  // 1-based
  Action action;
  long microbatch;

  bool operator==(const ScheduleEvent&) const = default;
};

struct ScheduleShape {
  PipelineMode mode = PipelineMode::async_stash;
  std::size_t num_stages = 1;
  std::size_t update_interval = 1;  // K, async only
  std::size_t microbatches = 1;     // M, sync only
};

/// Tick-by-tick 1F1B generator for the asynchronous modes.
///
/// Stage i first issues P - i + 1 forwards, then alternates backward/forward.
/// An action whose input is not ready (produced in an earlier tick by the
/// neighbouring stage) leaves the stage idle for the tick. When `limit` is set,
/// no forward beyond microbatch limit-1 is issued and the pipeline drains.
class OneFOneBScheduler {
 public:
  OneFOneBScheduler(std::size_t num_stages, std::size_t update_interval,
                    std::optional<long> limit = std::nullopt);

  // Events of the next tick, one per stage in stage order (update events
  // directly follow the backward that triggered them).
  std::vector<ScheduleEvent> next_tick();
  bool finished() const;
  long tick() const { return tick_; }

 private:
  std::size_t P_;
  std::size_t K_;
  std::optional<long> limit_;
  long tick_ = 0;
  std::vector<long> fwd_issued_;
  std::vector<long> bwd_issued_;
};

std::vector<ScheduleEvent> build_schedule(const ScheduleShape& shape, long horizon);

struct UtilizationReport {
  std::vector<double> bubble_fraction;  // per stage
  double aggregate = 0.0;
};

/// Idle ticks over total ticks, counting only ticks >= warmup_ticks.
UtilizationReport utilization_report(const std::vector<ScheduleEvent>& events,
                                     long warmup_ticks);

}  // namespace nagpipe
