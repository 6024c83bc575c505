#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "nagpipe/pipeline.hpp"

namespace nagpipe {

struct MetricSeries {
  std::string label;
  std::vector<long> steps;
  std::vector<double> values;

  // Steps must be strictly increasing.
  void push(long step, double value);
  std::size_t size() const { return steps.size(); }
};

/// One stage at probe step t, with everything between t - tau and t:
/// w_t, w_{t-tau}, d_t, the stale look-ahead d_{t-tau}, and for k = t-tau..t-1
/// the gradient g_k fed to update k together with gamma_k and eta_k.
struct DelayRecord {
  std::size_t stage = 1;
  long step = 0;
  std::size_t tau = 0;
  DenseVector w_t;
  DenseVector w_past;
  DenseVector d_t;
  DenseVector d_bar;
  std::vector<DenseVector> grads;
  std::vector<double> gammas;
  std::vector<double> etas;
  bool discounted = true;

  void validate() const;
};

/// rmse(w_t, w_{t-tau}).
double weight_gap(const DelayRecord& rec);

/// cos(w_t - w_{t-tau}, d_{t-tau}); nullopt when either vector is zero.
std::optional<double> cosine_alignment(const DelayRecord& rec);

/// Relative mismatch between w_t - w_{t-tau} and its expansion in d_{t-tau}
/// and the window gradients; 0 when tau = 0.
double delay_identity_residual(const DelayRecord& rec);

/// Records for every probed step whose full window (t-tau .. t, t-tau >= 1)
/// is present in the trace. Ordered by (stage, step).
std::vector<DelayRecord> delay_records(const TrainingTrace& trace);

/// f(w_t) - f(w*) at each probed step of `stage`.
MetricSeries suboptimality_series(const TrainingTrace& trace, const QuadraticSpec& spec,
                                  std::size_t stage = 1);

/// Points of `series` nearest to `count` geometrically spaced steps in [first, last].
MetricSeries geometric_subsample(const MetricSeries& series, long first, long last,
                                 std::size_t count);

/// Least-squares slope of log(value) against log(step) over points with
/// step >= burn_in. Needs 10 points, all positive.
double fit_convergence_rate(const MetricSeries& series, long burn_in);

}  // namespace nagpipe
