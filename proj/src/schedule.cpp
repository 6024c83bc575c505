#include "nagpipe/schedule.hpp"

#include <algorithm>

#include "nagpipe/errors.hpp"

namespace nagpipe {

std::optional<PipelineMode> parse_pipeline_mode(const std::string& s) {
  if (s == "sync") return PipelineMode::sync;
  if (s == "async_stash") return PipelineMode::async_stash;
  if (s == "async_no_stash") return PipelineMode::async_no_stash;
  return std::nullopt;
}

std::string to_string(PipelineMode mode) {
  switch (mode) {
    case PipelineMode::sync: return "sync";
    case PipelineMode::async_stash: return "async_stash";
    case PipelineMode::async_no_stash: return "async_no_stash";
  }
  return "?";
}

std::string to_string(Action a) {
  switch (a) {
    case Action::forward: return "forward";
    case Action::backward: return "backward";
    case Action::update: return "update";
    case Action::idle: return "idle";
  }
  return "?";
}

std::size_t compute_delay(std::size_t stage, std::size_t num_stages,
                          std::size_t update_interval) {
  if (num_stages == 0 || stage < 1 || stage > num_stages) {
    throw InvalidRangeError("compute_delay: stage out of range");
  }
  if (update_interval == 0) throw InvalidRangeError("compute_delay: update interval must be >= 1");
  return (2 * (num_stages - stage) + 1) / (2 * update_interval);
}

OneFOneBScheduler::OneFOneBScheduler(std::size_t num_stages, std::size_t update_interval,
                                     std::optional<long> limit)
    : P_(num_stages),
      K_(update_interval),
      limit_(limit),
      fwd_issued_(num_stages, 0),
      bwd_issued_(num_stages, 0) {
  if (P_ == 0 || K_ == 0) throw InvalidRangeError("scheduler needs P >= 1 and K >= 1");
}

bool OneFOneBScheduler::finished() const {
  if (!limit_) return false;
  return std::all_of(bwd_issued_.begin(), bwd_issued_.end(),
                     [&](long b) { return b >= *limit_; });
}

std::vector<ScheduleEvent> OneFOneBScheduler::next_tick() {
  // Decisions read counts as of the start of the tick, so work done by a
  // neighbour during this tick is not visible until the next one.
  const std::vector<long> fwd = fwd_issued_;
  const std::vector<long> bwd = bwd_issued_;
  std::vector<ScheduleEvent> events;
  events.reserve(P_ + P_ / K_ + 1);

  for (std::size_t s = 0; s < P_; ++s) {
    const auto warmup = static_cast<long>(P_ - s);  // P - i + 1 with i = s + 1
    const long in_flight = fwd[s] - bwd[s];
    const bool can_issue_fwd = !limit_ || fwd[s] < *limit_;
    const bool want_bwd = in_flight > 0 && (in_flight >= warmup || !can_issue_fwd);

    Action act = Action::idle;
    long mb = -1;
    if (want_bwd) {
      const long m = bwd[s];
      const bool ready = (s + 1 == P_) ? fwd[s] > m : bwd[s + 1] > m;
      if (ready) {
        act = Action::backward;
        mb = m;
      }
    } else if (can_issue_fwd) {
      const long m = fwd[s];
      const bool ready = s == 0 || fwd[s - 1] > m;
      if (ready) {
        act = Action::forward;
        mb = m;
      }
    }
    events.push_back({tick_, s + 1, act, mb});
    if (act == Action::forward) ++fwd_issued_[s];
    if (act == Action::backward) {
      ++bwd_issued_[s];
      if (bwd_issued_[s] % static_cast<long>(K_) == 0) {
        events.push_back({tick_, s + 1, Action::update, -1});
      }
    }
  }
  ++tick_;
  return events;
}

namespace {

// GPipe flush cycle: M forwards ripple down, M backwards ripple up, one
// synchronous update once stage 1 finishes its last backward.
std::vector<ScheduleEvent> build_sync(const ScheduleShape& shape, long horizon) {
  const auto P = static_cast<long>(shape.num_stages);
  const auto M = static_cast<long>(shape.microbatches);
  const long cycle = 2 * (M + P - 1);
  std::vector<ScheduleEvent> events;
  for (long t = 0; t < horizon; ++t) {
    const long base = t - t % cycle;
    const long local = t % cycle;
    const long cycle_index = t / cycle;
    for (long i = 1; i <= P; ++i) {
      const long fwd_mb = local - (i - 1);
      const long bwd_mb = local - (M + P - 1) - (P - i);
      ScheduleEvent e{t, static_cast<std::size_t>(i), Action::idle, -1};
      if (fwd_mb >= 0 && fwd_mb < M) {
        e.action = Action::forward;
        e.microbatch = cycle_index * M + fwd_mb;
      } else if (bwd_mb >= 0 && bwd_mb < M) {
        e.action = Action::backward;
        e.microbatch = cycle_index * M + bwd_mb;
      }
      events.push_back(e);
    }
    if (local == cycle - 1) {
      for (long i = 1; i <= P; ++i) {
        events.push_back({base + local, static_cast<std::size_t>(i), Action::update, -1});
      }
    }
  }
  return events;
}

}  // namespace

std::vector<ScheduleEvent> build_schedule(const ScheduleShape& shape, long horizon) {
  if (shape.num_stages == 0) throw InvalidRangeError("build_schedule: need at least one stage");
  if (horizon < static_cast<long>(shape.num_stages)) {
    throw InvalidRangeError("build_schedule: horizon must be >= number of stages");
  }
  if (shape.mode == PipelineMode::sync) {
    if (shape.microbatches == 0) throw InvalidRangeError("build_schedule: M must be >= 1");
    return build_sync(shape, horizon);
  }
  OneFOneBScheduler sched(shape.num_stages, shape.update_interval);
  std::vector<ScheduleEvent> events;
  for (long t = 0; t < horizon; ++t) {
    auto tick_events = sched.next_tick();
    events.insert(events.end(), tick_events.begin(), tick_events.end());
  }
  return events;
}

UtilizationReport utilization_report(const std::vector<ScheduleEvent>& events,
                                     long warmup_ticks) {
  std::size_t num_stages = 0;
  for (const auto& e : events) num_stages = std::max(num_stages, e.stage);
  std::vector<long> idle(num_stages, 0), total(num_stages, 0);
  for (const auto& e : events) {
    if (e.tick < warmup_ticks || e.action == Action::update) continue;
    ++total[e.stage - 1];
    if (e.action == Action::idle) ++idle[e.stage - 1];
  }
  UtilizationReport r;
  long idle_sum = 0, total_sum = 0;
  for (std::size_t s = 0; s < num_stages; ++s) {
    r.bubble_fraction.push_back(total[s] ? static_cast<double>(idle[s]) / static_cast<double>(total[s])
                                         : 0.0);
    idle_sum += idle[s];
    total_sum += total[s];
  }
  r.aggregate = total_sum ? static_cast<double>(idle_sum) / static_cast<double>(total_sum) : 0.0;
  return r;
}

}  // namespace nagpipe
