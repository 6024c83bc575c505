#include "nagpipe/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <tuple>

#include "nagpipe/errors.hpp"

namespace nagpipe {

void MetricSeries::push(long step, double value) {
  if (!steps.empty() && step <= steps.back()) {
    throw InvalidRangeError("MetricSeries: steps must be strictly increasing");
  }
  steps.push_back(step);
  values.push_back(value);
}

void DelayRecord::validate() const {
  require_same_size(w_past.size(), w_t.size(), "DelayRecord w");
  require_same_size(d_bar.size(), w_t.size(), "DelayRecord d_bar");
  if (grads.size() != tau || gammas.size() != tau || etas.size() != tau) {
    throw DegenerateInputError("DelayRecord: window must cover tau steps");
  }
  for (const auto& g : grads) require_same_size(g.size(), w_t.size(), "DelayRecord gradient");
}

double weight_gap(const DelayRecord& rec) {
  if (rec.w_t.empty()) return 0.0;
  return rmse(rec.w_t, rec.w_past);
}

std::optional<double> cosine_alignment(const DelayRecord& rec) {
  const DenseVector delta = rec.w_t - rec.w_past;
  if (l2_norm(delta.view()) == 0.0 || l2_norm(rec.d_bar.view()) == 0.0) return std::nullopt;
  return cosine_similarity(delta, rec.d_bar);
}

double delay_identity_residual(const DelayRecord& rec) {
  rec.validate();
  if (rec.tau == 0) return 0.0;
  const std::size_t tau = rec.tau;
  const std::size_t n = rec.w_t.size();
  // Window index q = k - (t - tau), so q runs over 0 .. tau-1 for k = t-tau .. t-1.
  auto prod = [&](std::size_t from, std::size_t to) {  // gamma_from * ... * gamma_to
    double p = 1.0;
    for (std::size_t q = from; q <= to && q < tau; ++q) p *= rec.gammas[q];
    return p;
  };
  std::vector<double> rhs(n, 0.0);
  for (std::size_t i = 1; i <= tau; ++i) {
    const std::size_t m = tau - i;  // index of t - i
    const double coast = m >= 1 ? prod(1, m) : 1.0;
    for (std::size_t j = 0; j < n; ++j) rhs[j] += coast * rec.d_bar[j];
    for (std::size_t q = 0; q <= m; ++q) {
      const double carry = q + 1 <= m ? prod(q + 1, m) : 1.0;
      const double c = rec.discounted ? 1.0 - rec.gammas[q] : 1.0;
      const double scale = rec.etas[q] * carry * c;
      for (std::size_t j = 0; j < n; ++j) rhs[j] -= scale * rec.grads[q][j];
    }
  }
  double num = 0.0, den = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    const double delta = rec.w_t[j] - rec.w_past[j];
    num += (delta - rhs[j]) * (delta - rhs[j]);
    den += delta * delta;
  }
  return std::sqrt(num) / std::max(std::sqrt(den), 1e-30);
}

std::vector<DelayRecord> delay_records(const TrainingTrace& trace) {
  struct Probe {
    const std::vector<double>* w = nullptr;
    const std::vector<double>* d = nullptr;
    const std::vector<double>* g = nullptr;
  };
  std::map<std::pair<std::size_t, long>, Probe> probes;
  for (const auto& p : trace.probes) {
    auto& slot = probes[{p.stage, p.step}];
    if (p.kind == 'w') slot.w = &p.values;
    if (p.kind == 'd') slot.d = &p.values;
    if (p.kind == 'g') slot.g = &p.values;
  }
  std::map<std::pair<std::size_t, long>, const TraceRow*> rows;
  for (const auto& r : trace.rows) rows[{r.stage, r.step}] = &r;

  std::vector<DelayRecord> out;
  for (const auto& [key, probe] : probes) {
    const auto [stage, t] = key;
    if (!probe.w || !probe.d) continue;
    if (stage < 1 || stage > trace.delays.size()) continue;
    const std::size_t tau = trace.delays[stage - 1];
    const long t0 = t - static_cast<long>(tau);
    if (t0 < 1) continue;
    bool complete = true;
    for (long k = t0; k < t && complete; ++k) {
      auto it = probes.find({stage, k});
      complete = it != probes.end() && it->second.w && it->second.d && it->second.g &&
                 rows.count({stage, k});
    }
    if (!complete) continue;
    DelayRecord rec;
    rec.stage = stage;
    rec.step = t;
    rec.tau = tau;
    rec.discounted = trace.discounted;
    rec.w_t = DenseVector(*probe.w);
    rec.d_t = DenseVector(*probe.d);
    const Probe& past = probes.at({stage, t0});
    rec.w_past = DenseVector(*past.w);
    rec.d_bar = DenseVector(*past.d);
    for (long k = t0; k < t; ++k) {
      rec.grads.emplace_back(*probes.at({stage, k}).g);
      const TraceRow* row = rows.at({stage, k});
      rec.gammas.push_back(row->gamma);
      rec.etas.push_back(row->lr);
    }
    out.push_back(std::move(rec));
  }
  return out;
}

MetricSeries suboptimality_series(const TrainingTrace& trace, const QuadraticSpec& spec,
                                  std::size_t stage) {
  MetricSeries s;
  s.label = "suboptimality";
  const double f_star = quadratic_value_grad(spec, spec.optimum).loss;
  for (const auto& p : trace.probes) {
    if (p.stage != stage || p.kind != 'w') continue;
    const double f = quadratic_value_grad(spec, DenseVector(p.values)).loss;
    s.push(p.step, f - f_star);
  }
  return s;
}

MetricSeries geometric_subsample(const MetricSeries& series, long first, long last,
                                 std::size_t count) {
  if (first < 1 || last < first || count < 2) {
    throw InvalidRangeError("geometric_subsample: need 1 <= first <= last and count >= 2");
  }
  MetricSeries out;
  out.label = series.label;
  const double lf = std::log(static_cast<double>(first));
  const double ll = std::log(static_cast<double>(last));
  for (std::size_t k = 0; k < count; ++k) {
    const double target =
        std::exp(lf + (ll - lf) * static_cast<double>(k) / static_cast<double>(count - 1));
    auto it = std::lower_bound(series.steps.begin(), series.steps.end(),
                               static_cast<long>(std::llround(target)));
    if (it == series.steps.end()) break;
    const auto idx = static_cast<std::size_t>(it - series.steps.begin());
    if (series.steps[idx] > last) break;
    if (!out.steps.empty() && out.steps.back() >= series.steps[idx]) continue;
    out.push(series.steps[idx], series.values[idx]);
  }
  return out;
}

double fit_convergence_rate(const MetricSeries& series, long burn_in) {
  std::vector<double> xs, ys;
  for (std::size_t k = 0; k < series.size(); ++k) {
    if (series.steps[k] < burn_in) continue;
    if (series.steps[k] < 1 || !(series.values[k] > 0.0)) {
      throw DegenerateInputError("fit_convergence_rate: values must be > 0 after burn-in");
    }
    xs.push_back(std::log(static_cast<double>(series.steps[k])));
    ys.push_back(std::log(series.values[k]));
  }
  if (xs.size() < 10) throw DegenerateInputError("fit_convergence_rate: need >= 10 points");
  const double n = static_cast<double>(xs.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    mx += xs[k];
    my += ys[k];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    sxy += (xs[k] - mx) * (ys[k] - my);
    sxx += (xs[k] - mx) * (xs[k] - mx);
  }
  if (sxx == 0.0) throw DegenerateInputError("fit_convergence_rate: steps do not vary");
  return sxy / sxx;
}

}  // namespace nagpipe
