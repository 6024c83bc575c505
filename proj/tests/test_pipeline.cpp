#include <doctest.h>

#include <cmath>
#include <limits>
#include <map>

#include "nagpipe/errors.hpp"
#include "nagpipe/pipeline.hpp"

using namespace nagpipe;

namespace {

PipelineModel quadratic_model(std::size_t P, std::size_t d, std::uint64_t seed) {
  const auto full = make_spread_quadratic(P * d, 1e3, seed);
  PipelineModel m{{}, StageFunction(LossHeadSpec{LossKind::passthrough, 1}), {}, {}};
  SeededRng rng(seed + 1);
  for (std::size_t s = 0; s < P; ++s) {
    m.stages.emplace_back(quadratic_block(full, s * d, d));
    m.initial_weights.push_back(init_weights(m.stages.back(), rng));
  }
  return m;
}

PipelineModel mlp_model(std::size_t P, std::uint64_t seed) {
  PipelineModel m{make_mlp_stages(P, 4, 6, 3), StageFunction(LossHeadSpec{LossKind::softmax_xent, 3}),
                  {}, make_synthetic_dataset(DatasetKind::classification, 64, 4, seed)};
  SeededRng rng(seed + 1);
  for (const auto& s : m.stages) m.initial_weights.push_back(init_weights(s, rng));
  return m;
}

PipelineConfig base_config(std::size_t P, PipelineMode mode) {
  PipelineConfig c;
  c.mode = mode;
  c.num_stages = P;
  c.microbatch_size = 4;
  c.optimizer = OptimizerKind::nag_discounted;
  c.gamma = 0.9;
  c.lr.base = 0.05;
  c.total_steps = 40;
  c.probe_interval = 1;
  return c;
}

struct Recorded {
  DenseVector w;
  std::vector<DenseVector> inputs;
};

}  // namespace

TEST_CASE("weight stash") {
  WeightStash s(2);
  s.put(0, {1.0});
  s.put(0, {1.0});
  s.put(1, {2.0});
  CHECK(s.live() == 2);
  CHECK_THROWS_AS(s.put(2, {3.0}), Error);
  s.release(0);
  CHECK(s.get(0) == DenseVector{1.0});
  s.release(0);
  CHECK_THROWS_AS(s.get(0), Error);
  CHECK_THROWS_AS(s.release(7), Error);
  CHECK(s.peak() == 2);

  CHECK(stash_capacity(1, 8, 1) == 8);
  CHECK(stash_capacity(8, 8, 1) == 1);
  CHECK(stash_capacity(1, 8, 2) == 5);
  for (std::size_t P = 1; P <= 9; ++P)
    for (std::size_t K = 1; K <= 3; ++K)
      for (std::size_t i = 1; i <= P; ++i) {
        CHECK(stash_capacity(i, P, K) >= compute_delay(i, P, K) + 1);
        if ((P - i) % K == 0) CHECK(stash_capacity(i, P, K) == compute_delay(i, P, K) + 1);
      }
}

TEST_CASE("backward runs on the stashed forward weights") {
  // The quadratic stage gradient depends on the weights directly, so replaying
  // each backward on the recorded forward weights detects any mismatch.
  for (std::size_t P : {2u, 4u}) {
    for (PipelineMode mode : {PipelineMode::async_stash, PipelineMode::async_no_stash}) {
      const auto model = quadratic_model(P, 3, 5);
      auto cfg = base_config(P, mode);
      cfg.microbatch_size = 1;
      std::map<std::pair<std::size_t, long>, DenseVector> fwd;
      std::size_t mismatches = 0, checked = 0;
      RunObserver obs;
      obs.on_forward = [&](std::size_t st, long mb, long, const DenseVector& w,
                           const std::vector<DenseVector>&) { fwd[{st, mb}] = w; };
      obs.on_backward = [&](std::size_t st, long mb, const std::vector<DenseVector>& e,
                            const DenseVector& grad) {
        const auto& w = fwd.at({st, mb});
        const auto& spec = *model.stages[st - 1].quadratic();
        DenseVector want = quadratic_value_grad(spec, w).grad;
        for (std::size_t j = 0; j < want.size(); ++j) want[j] *= e[0][0];
        ++checked;
        if (!(want == grad)) ++mismatches;
      };
      const auto tr = run_training(cfg, model, &obs);
      CHECK_FALSE(tr.diverged);
      CHECK(checked == P * cfg.total_steps);
      if (mode == PipelineMode::async_stash) {
        CHECK(mismatches == 0);
      } else {
        CHECK(mismatches > 0);
      }
    }
  }
}

TEST_CASE("realized delays match the formula") {
  for (std::size_t P : {1u, 2u, 3u, 5u, 8u}) {
    for (std::size_t K : {1u, 2u, 3u}) {
      for (PipelineMode mode : {PipelineMode::async_stash, PipelineMode::async_no_stash}) {
        auto cfg = base_config(P, mode);
        cfg.update_interval = K;
        cfg.total_steps = 6 * P + 6;
        const auto tr = run_training(cfg, mlp_model(P, 2));
        REQUIRE_FALSE(tr.diverged);
        for (std::size_t i = 1; i <= P; ++i) CHECK(tr.delays[i - 1] == compute_delay(i, P, K));
        std::size_t seen = 0;
        for (const auto& o : tr.delay_observations) {
          // steady state only: the warmup clamps the first few observations
          if (!o.closes_group || o.microbatch < static_cast<long>(2 * P * K)) continue;
          if (o.updates_before_backward >= static_cast<long>(cfg.total_steps)) continue;
          CHECK(o.updates_before_backward - o.forward_version ==
                static_cast<long>(compute_delay(o.stage, P, K)));
          ++seen;
        }
        CHECK(seen > 0);
        for (std::size_t i = 1; i <= P; ++i) {
          CHECK(tr.peak_stash[i - 1] <= stash_capacity(i, P, K));
          if (mode == PipelineMode::async_no_stash) CHECK(tr.peak_stash[i - 1] == 0);
        }
      }
    }
  }
}

TEST_CASE("stale activations chain through the stages") {
  const std::size_t P = 3;
  const auto model = mlp_model(P, 4);
  auto cfg = base_config(P, PipelineMode::async_stash);
  std::map<std::pair<std::size_t, long>, Recorded> fwd;
  RunObserver obs;
  obs.on_forward = [&](std::size_t st, long mb, long, const DenseVector& w,
                       const std::vector<DenseVector>& in) { fwd[{st, mb}] = {w, in}; };
  run_training(cfg, model, &obs);
  std::size_t checked = 0;
  for (const auto& [key, rec] : fwd) {
    const auto next = fwd.find({key.first + 1, key.second});
    if (next == fwd.end()) continue;
    for (std::size_t k = 0; k < rec.inputs.size(); ++k) {
      const auto y = stage_forward(model.stages[key.first - 1], rec.w, rec.inputs[k]).output;
      CHECK(y == next->second.inputs[k]);
    }
    ++checked;
  }
  CHECK(checked == (P - 1) * cfg.total_steps);
}

TEST_CASE("synchronous mode matches a flat training loop") {
  const std::size_t P = 3;
  const auto model = mlp_model(P, 6);
  auto cfg = base_config(P, PipelineMode::sync);
  cfg.optimizer = OptimizerKind::sgd;
  cfg.microbatches = 2;
  cfg.total_steps = 15;
  const auto tr = run_training(cfg, model);

  std::vector<DenseVector> w = model.initial_weights;
  const DenseVector none;
  for (std::size_t step = 0; step < cfg.total_steps; ++step) {
    std::vector<DenseVector> total(P);
    for (long k = 0; k < 2; ++k) {
      const long mb = static_cast<long>(step) * 2 + k;
      std::vector<DenseVector> mb_grad(P);
      for (std::size_t idx : microbatch_indices(cfg.seed, mb, 4, model.data.size())) {
        std::vector<ForwardCache> caches;
        DenseVector a = model.data.inputs[idx];
        for (std::size_t s = 0; s < P; ++s) {
          auto fr = stage_forward(model.stages[s], w[s], a);
          caches.push_back(std::move(fr.cache));
          a = fr.output;
        }
        auto hf = stage_forward(model.head, none, a, model.data.targets[idx].values());
        DenseVector e = stage_backward(model.head, none, hf.cache, {0.25}).e_in;
        for (std::size_t s = P; s-- > 0;) {
          auto br = stage_backward(model.stages[s], w[s], caches[s], e);
          mb_grad[s] = mb_grad[s].empty() ? br.grad_w : mb_grad[s] + br.grad_w;
          e = br.e_in;
        }
      }
      for (std::size_t s = 0; s < P; ++s) total[s] = total[s].empty() ? mb_grad[s] : total[s] + mb_grad[s];
    }
    for (std::size_t s = 0; s < P; ++s) {
      for (std::size_t j = 0; j < w[s].size(); ++j) w[s][j] -= cfg.lr.base * (total[s][j] / 2.0);
    }
  }
  for (std::size_t s = 0; s < P; ++s) CHECK(tr.final_weights[s] == w[s]);
  CHECK(tr.delays == std::vector<std::size_t>(P, 0));
}

TEST_CASE("one stage: asynchronous and synchronous agree exactly") {
  const auto model = mlp_model(1, 9);
  auto a = base_config(1, PipelineMode::async_stash);
  auto s = base_config(1, PipelineMode::sync);
  s.microbatches = 1;
  const auto ta = run_training(a, model);
  const auto ts = run_training(s, model);
  CHECK(ta.final_weights == ts.final_weights);
  REQUIRE(ta.rows.size() == ts.rows.size());
  for (std::size_t k = 0; k < ta.rows.size(); ++k) {
    CHECK(ta.rows[k].weight_hash == ts.rows[k].weight_hash);
    CHECK(ta.rows[k].loss == ts.rows[k].loss);
  }
}

TEST_CASE("runs are deterministic") {
  for (PipelineMode mode : {PipelineMode::sync, PipelineMode::async_stash, PipelineMode::async_no_stash}) {
    auto cfg = base_config(4, mode);
    cfg.forecaster = mode == PipelineMode::async_stash ? ForecasterKind::poly_fft : ForecasterKind::none;
    const auto model = mlp_model(4, 3);
    CHECK(run_training(cfg, model).hash() == run_training(cfg, model).hash());
    cfg.seed = 1;
    const auto other = run_training(cfg, model).hash();
    cfg.seed = 0;
    CHECK(other != run_training(cfg, model).hash());
  }
}

TEST_CASE("quadratic pipeline stage 1 follows the fixed-delay recursion") {
  for (std::size_t P : {2u, 4u, 8u}) {
    const std::size_t d = 5;
    const auto model = quadratic_model(P, d, 11);
    auto cfg = base_config(P, PipelineMode::async_stash);
    cfg.microbatch_size = 1;
    cfg.gamma = 0.95;
    cfg.lr.base = 0.2;
    cfg.total_steps = 120;
    const auto tr = run_training(cfg, model);

    FixedDelayConfig fd{*model.stages[0].quadratic(), model.initial_weights[0]};
    fd.tau = P - 1;
    fd.momentum.gamma = 0.95;
    fd.eta = 0.2;
    fd.steps = 120;
    const auto ref = run_fixed_delay(fd);
    CHECK(tr.final_weights[0] == ref.final_weights[0]);
    for (const auto& r : tr.rows) {
      if (r.stage == 1) CHECK(r.weight_hash == ref.rows[static_cast<std::size_t>(r.step - 1)].weight_hash);
    }
  }
}

TEST_CASE("fixed-delay harness") {
  const auto spec = make_spread_quadratic(4, 10, 1);
  FixedDelayConfig c{spec, spec.optimum + DenseVector{1, 1, 1, 1}};
  c.tau = 0;
  c.momentum.gamma = 0.0;
  c.optimizer = OptimizerKind::sgd;
  c.eta = 0.5;
  c.steps = 3;
  const auto tr = run_fixed_delay(c);
  // plain gradient descent: each coordinate contracts by (1 - 0.5 c_j)
  for (std::size_t j = 0; j < 4; ++j) {
    CHECK(tr.final_weights[0][j] - spec.optimum[j] ==
          doctest::Approx(std::pow(1 - 0.5 * spec.curvature[j], 3)).epsilon(1e-12));
  }
  CHECK(tr.rows.size() == 3);
  CHECK(tr.probes.size() == 9);

  c.eta = 100.0;
  c.steps = 400;
  const auto bad = run_fixed_delay(c);
  CHECK(bad.diverged);
}

TEST_CASE("discounting helps at a large step size") {
  // eta = 1/beta with a delay of 3: the undiscounted iteration leaves the
  // floating-point range while the discounted one stays finite. A diverged run
  // counts as infinitely bad.
  const auto spec = make_spread_quadratic(20, 1e3, 11);
  SeededRng rng(12);
  const DenseVector w1 = spec.optimum + sample_uniform(rng, 20, -1, 1);
  auto final_loss = [&](OptimizerKind k) {
    FixedDelayConfig c{spec, w1};
    c.tau = 3;
    c.optimizer = k;
    c.momentum.gamma = 0.99;
    c.eta = 1.0 / spec.beta();
    c.steps = 2000;
    const auto tr = run_fixed_delay(c);
    return tr.diverged ? std::numeric_limits<double>::infinity()
                       : quadratic_value_grad(spec, tr.final_weights[0]).loss;
  };
  const double disc = final_loss(OptimizerKind::nag_discounted);
  const double plain = final_loss(OptimizerKind::nag);
  CHECK(disc <= plain);
}

TEST_CASE("config validation") {
  auto c = base_config(2, PipelineMode::async_no_stash);
  c.forecaster = ForecasterKind::second_order;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c.mode = PipelineMode::async_stash;
  CHECK_NOTHROW(c.validate());
  c.gamma = 1.0;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = base_config(3, PipelineMode::sync);
  CHECK_THROWS_AS(run_training(c, mlp_model(2, 1)), ValidationError);

  auto m = mlp_model(2, 1);
  m.data = Batch{};
  CHECK_THROWS_AS(m.validate(), ValidationError);
  for (auto k : {ForecasterKind::none, ForecasterKind::second_order, ForecasterKind::poly_fft}) {
    CHECK(parse_forecaster_kind(to_string(k)) == k);
  }
}
