#include <doctest.h>

#include "nagpipe/errors.hpp"
#include "nagpipe/schedule.hpp"

using namespace nagpipe;

TEST_CASE("delay formula") {
  CHECK(compute_delay(1, 8, 1) == 7);
  CHECK(compute_delay(8, 8, 1) == 0);
  CHECK(compute_delay(1, 8, 2) == 3);
  CHECK(compute_delay(1, 1, 1) == 0);
  CHECK(compute_delay(3, 4, 1) == 1);
  CHECK(compute_delay(1, 4, 4) == 0);
  for (std::size_t P = 1; P <= 12; ++P)
    for (std::size_t K = 1; K <= 4; ++K)
      for (std::size_t i = 1; i < P; ++i) CHECK(compute_delay(i, P, K) >= compute_delay(i + 1, P, K));
  CHECK_THROWS_AS(compute_delay(0, 4, 1), InvalidRangeError);
  CHECK_THROWS_AS(compute_delay(5, 4, 1), InvalidRangeError);
  CHECK_THROWS_AS(compute_delay(1, 4, 0), InvalidRangeError);
}

TEST_CASE("two-stage 1F1B, first ten ticks") {
  using A = Action;
  const std::vector<ScheduleEvent> want = {
      {0, 1, A::forward, 0},  {0, 2, A::idle, -1},     {1, 1, A::forward, 1},
      {1, 2, A::forward, 0},  {2, 1, A::idle, -1},     {2, 2, A::backward, 0},
      {2, 2, A::update, -1},  {3, 1, A::backward, 0},  {3, 1, A::update, -1},
      {3, 2, A::forward, 1},  {4, 1, A::forward, 2},   {4, 2, A::backward, 1},
      {4, 2, A::update, -1},  {5, 1, A::backward, 1},  {5, 1, A::update, -1},
      {5, 2, A::forward, 2},  {6, 1, A::forward, 3},   {6, 2, A::backward, 2},
      {6, 2, A::update, -1},  {7, 1, A::backward, 2},  {7, 1, A::update, -1},
      {7, 2, A::forward, 3},  {8, 1, A::forward, 4},   {8, 2, A::backward, 3},
      {8, 2, A::update, -1},  {9, 1, A::backward, 3},  {9, 1, A::update, -1},
      {9, 2, A::forward, 4}};
  ScheduleShape s;
  s.num_stages = 2;
  CHECK(build_schedule(s, 10) == want);
}

// Count updates at `stage` strictly after the forward of mb and before its backward.
std::size_t realized_delay(const std::vector<ScheduleEvent>& ev, std::size_t stage, long mb) {
  bool open = false;
  std::size_t n = 0;
  for (const auto& e : ev) {
    if (e.stage != stage) continue;
    if (e.action == Action::forward && e.microbatch == mb) open = true;
    if (e.action == Action::backward && e.microbatch == mb) return n;
    if (open && e.action == Action::update) ++n;
  }
  FAIL("microbatch never completed");
  return 0;
}

TEST_CASE("the schedule realizes the delay formula") {
  for (std::size_t P : {1u, 2u, 3u, 4u, 8u}) {
    for (std::size_t K : {1u, 2u, 3u}) {
      ScheduleShape s;
      s.num_stages = P;
      s.update_interval = K;
      const auto ev = build_schedule(s, static_cast<long>(12 * P * K + 40));
      for (std::size_t i = 1; i <= P; ++i) {
        // microbatches that close an accumulation group, after warmup
        for (long mb = static_cast<long>(2 * P * K + K - 1); mb < static_cast<long>(4 * P * K);
             mb += static_cast<long>(K)) {
          CHECK(realized_delay(ev, i, mb) == compute_delay(i, P, K));
        }
      }
    }
  }
}

TEST_CASE("drain with a microbatch limit") {
  OneFOneBScheduler s(3, 1, 5);
  long fwd = 0, bwd = 0;
  while (!s.finished()) {
    for (const auto& e : s.next_tick()) {
      if (e.action == Action::forward) {
        ++fwd;
        CHECK(e.microbatch < 5);
      }
      if (e.action == Action::backward) ++bwd;
    }
    REQUIRE(s.tick() < 100);
  }
  CHECK(fwd == 15);
  CHECK(bwd == 15);
}

TEST_CASE("bubble fractions") {
  ScheduleShape sync;
  sync.mode = PipelineMode::sync;
  sync.num_stages = 4;
  sync.microbatches = 4;
  const auto ev = build_schedule(sync, 14);
  for (std::size_t i = 1; i <= 4; ++i) {
    long idle = 0;
    for (const auto& e : ev)
      if (e.stage == i && e.action == Action::idle) ++idle;
    CHECK(idle == 6);
  }
  const auto r = utilization_report(build_schedule(sync, 14 * 5), 0);
  CHECK(r.aggregate == doctest::Approx(3.0 / 7.0).epsilon(1e-15));

  ScheduleShape async;
  async.num_stages = 4;
  const auto ra = utilization_report(build_schedule(async, 400), 40);
  CHECK(ra.aggregate == 0.0);

  // sync bubble shrinks as microbatches grow
  double prev = 1.0;
  for (std::size_t M : {1u, 2u, 4u, 8u, 16u}) {
    sync.microbatches = M;
    const long cycle = static_cast<long>(2 * (M + 3));
    const double b = utilization_report(build_schedule(sync, 3 * cycle), 0).aggregate;
    CHECK(b == doctest::Approx(3.0 / static_cast<double>(M + 3)).epsilon(1e-15));
    CHECK(b < prev);
    prev = b;
  }
}

TEST_CASE("mode names") {
  for (auto m : {PipelineMode::sync, PipelineMode::async_stash, PipelineMode::async_no_stash}) {
    CHECK(parse_pipeline_mode(to_string(m)) == m);
  }
  CHECK_FALSE(parse_pipeline_mode("zero_bubble").has_value());
}
