#include "nagpipe/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "nagpipe/analysis.hpp"
#include "nagpipe/errors.hpp"

namespace nagpipe {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::size_t to_count(const std::string& key, const std::string& v, std::size_t line) {
  unsigned long long out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) {
    throw ConfigError(key + " expects a non-negative integer, got '" + v + "'", line);
  }
  return static_cast<std::size_t>(out);
}

double to_real(const std::string& key, const std::string& v, std::size_t line) {
  double out = 0.0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || !std::isfinite(out)) {
    throw ConfigError(key + " expects a number, got '" + v + "'", line);
  }
  return out;
}

std::string join_counts(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t k = 0; k < v.size(); ++k) s += (k ? "," : "") + std::to_string(v[k]);
  return s;
}

std::string gamma_mode_name(MomentumSchedule::Kind k) {
  switch (k) {
    case MomentumSchedule::Kind::constant: return "constant";
    case MomentumSchedule::Kind::nesterov_sequence: return "nesterov";
    case MomentumSchedule::Kind::stagewise: return "stagewise";
  }
  return "?";
}

void resolve(ExperimentConfig& cfg) {
  auto& p = cfg.pipeline;
  if (cfg.lr_delay_discount) {
    p.lr.discount_horizon = cfg.lr_discount_T;
  } else {
    p.lr.discount_horizon.reset();
  }
  p.lr.cosine = p.lr.total_steps > 0;
  if (cfg.model_dims.empty()) {
    cfg.model_dims = cfg.model == ModelKind::quadratic ? std::vector<std::size_t>{20}
                                                       : std::vector<std::size_t>{8, 16, 3};
  }
  // Quadratic stages see one constant input, so one sample per microbatch.
  p.microbatch_size = cfg.model == ModelKind::quadratic ? 1 : 8;
}

void set_key(ExperimentConfig& cfg, const std::string& key, const std::string& v,
             std::size_t line) {
  auto& p = cfg.pipeline;
  auto bad = [&](const std::string& allowed) {
    throw ConfigError(key + " must be one of " + allowed + ", got '" + v + "'", line);
  };
  if (key == "mode") {
    auto m = parse_pipeline_mode(v);
    if (!m) bad("{sync, async_stash, async_no_stash}");
    p.mode = *m;
  } else if (key == "stages") {
    p.num_stages = to_count(key, v, line);
  } else if (key == "update_interval") {
    p.update_interval = to_count(key, v, line);
  } else if (key == "microbatches") {
    p.microbatches = to_count(key, v, line);
  } else if (key == "steps") {
    p.total_steps = to_count(key, v, line);
  } else if (key == "seed") {
    p.seed = to_count(key, v, line);
  } else if (key == "optimizer") {
    auto o = parse_optimizer_kind(v);
    if (!o) bad("{sgd, nag, nag_discounted, nag_base, adamw, nadamw}");
    p.optimizer = *o;
  } else if (key == "gamma_mode") {
    if (v == "constant") {
      p.gamma_mode = MomentumSchedule::Kind::constant;
    } else if (v == "nesterov") {
      p.gamma_mode = MomentumSchedule::Kind::nesterov_sequence;
    } else if (v == "stagewise") {
      p.gamma_mode = MomentumSchedule::Kind::stagewise;
    } else {
      bad("{constant, nesterov, stagewise}");
    }
  } else if (key == "gamma") {
    p.gamma = to_real(key, v, line);
  } else if (key == "beta1") {
    p.adaptive.beta1 = to_real(key, v, line);
  } else if (key == "beta2") {
    p.adaptive.beta2 = to_real(key, v, line);
  } else if (key == "eps") {
    p.adaptive.eps = to_real(key, v, line);
  } else if (key == "weight_decay") {
    p.adaptive.weight_decay = to_real(key, v, line);
  } else if (key == "lr") {
    p.lr.base = to_real(key, v, line);
  } else if (key == "warmup_steps") {
    p.lr.warmup_steps = to_count(key, v, line);
  } else if (key == "warmup_start") {
    p.lr.warmup_start = to_real(key, v, line);
  } else if (key == "lr_final") {
    p.lr.final_lr = to_real(key, v, line);
  } else if (key == "lr_total_steps") {
    p.lr.total_steps = to_count(key, v, line);
  } else if (key == "lr_delay_discount") {
    if (v != "on" && v != "off") bad("{on, off}");
    cfg.lr_delay_discount = v == "on";
  } else if (key == "lr_discount_T") {
    cfg.lr_discount_T = to_count(key, v, line);
  } else if (key == "forecaster") {
    auto f = parse_forecaster_kind(v);
    if (!f) bad("{none, second_order, poly_fft}");
    p.forecaster = *f;
  } else if (key == "fisher_lambda") {
    p.fisher_lambda = to_real(key, v, line);
  } else if (key == "history_size") {
    p.history_size = to_count(key, v, line);
  } else if (key == "model") {
    if (v == "quadratic") {
      cfg.model = ModelKind::quadratic;
    } else if (v == "mlp") {
      cfg.model = ModelKind::mlp;
    } else {
      bad("{quadratic, mlp}");
    }
    if (!cfg.model_dims_explicit) cfg.model_dims.clear();
  } else if (key == "model_dims") {
    std::vector<std::size_t> dims;
    std::stringstream ss(v);
    std::string part;
    while (std::getline(ss, part, ',')) dims.push_back(to_count(key, trim(part), line));
    if (dims.empty()) throw ConfigError("model_dims is empty", line);
    cfg.model_dims = std::move(dims);
    cfg.model_dims_explicit = true;
  } else if (key == "dataset") {
    if (v != "synthetic_regression" && v != "synthetic_classification" && v.rfind("file:", 0) != 0) {
      bad("{synthetic_regression, synthetic_classification, file:<path>}");
    }
    cfg.dataset = v;
  } else if (key == "probe_interval") {
    p.probe_interval = to_count(key, v, line);
  } else if (key == "out_dir") {
    cfg.out_dir = v;
  } else {
    throw ConfigError("unknown key '" + key + "'", line);
  }
}

}  // namespace

std::string to_string(ModelKind kind) { return kind == ModelKind::quadratic ? "quadratic" : "mlp"; }

void ExperimentConfig::validate() const {
  pipeline.validate();
  if (model == ModelKind::mlp) {
    if (model_dims.size() != 3) throw ValidationError("model_dims for mlp is input,hidden,output");
  } else if (model_dims.size() != 1) {
    throw ValidationError("model_dims for quadratic is the number of coordinates per stage");
  }
  for (auto d : model_dims) {
    if (d == 0) throw ValidationError("model_dims entries must be >= 1");
  }
  if (model == ModelKind::mlp && dataset == "synthetic_classification" && model_dims[2] < 2) {
    throw ValidationError("classification needs an output width (class count) >= 2");
  }
  if (model == ModelKind::mlp && dataset.rfind("file:", 0) == 0 && dataset.size() == 5) {
    throw ValidationError("dataset=file: needs a path");
  }
}

void apply_setting(ExperimentConfig& cfg, const std::string& key, const std::string& value,
                   std::size_t line) {
  set_key(cfg, key, value, line);
  resolve(cfg);
}

ExperimentConfig parse_config(std::string_view text) {
  ExperimentConfig cfg;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view raw = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (auto hash = raw.find('#'); hash != std::string_view::npos) raw = raw.substr(0, hash);
    const std::string line = trim(raw);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("expected key=value, got '" + line + "'", line_no);
    set_key(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)), line_no);
  }
  resolve(cfg);
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config " + path.string(), 0);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string config_echo(const ExperimentConfig& cfg) {
  const auto& p = cfg.pipeline;
  std::vector<std::pair<std::string, std::string>> kv = {
      {"mode", to_string(p.mode)},
      {"stages", std::to_string(p.num_stages)},
      {"update_interval", std::to_string(p.update_interval)},
      {"microbatches", std::to_string(p.microbatches)},
      {"steps", std::to_string(p.total_steps)},
      {"seed", std::to_string(p.seed)},
      {"optimizer", to_string(p.optimizer)},
      {"gamma_mode", gamma_mode_name(p.gamma_mode)},
      {"gamma", format_double(p.gamma)},
      {"beta1", format_double(p.adaptive.beta1)},
      {"beta2", format_double(p.adaptive.beta2)},
      {"eps", format_double(p.adaptive.eps)},
      {"weight_decay", format_double(p.adaptive.weight_decay)},
      {"lr", format_double(p.lr.base)},
      {"warmup_steps", std::to_string(p.lr.warmup_steps)},
      {"warmup_start", format_double(p.lr.warmup_start)},
      {"lr_final", format_double(p.lr.final_lr)},
      {"lr_total_steps", std::to_string(p.lr.total_steps)},
      {"lr_delay_discount", cfg.lr_delay_discount ? "on" : "off"},
      {"lr_discount_T", std::to_string(cfg.lr_discount_T)},
      {"forecaster", to_string(p.forecaster)},
      {"fisher_lambda", format_double(p.fisher_lambda)},
      {"history_size", std::to_string(p.history_size)},
      {"model", to_string(cfg.model)},
      {"model_dims", join_counts(cfg.model_dims)},
      {"dataset", cfg.dataset},
      {"probe_interval", std::to_string(p.probe_interval)},
  };
  std::string out;
  for (const auto& [k, v] : kv) out += "# " + k + "=" + v + "\n";
  return out;
}

bool is_sweepable(const std::string& key) {
  return key == "optimizer" || key == "gamma" || key == "stages" || key == "mode" ||
         key == "forecaster" || key == "seed";
}

PipelineModel build_model(const ExperimentConfig& cfg, std::vector<QuadraticSpec>* blocks) {
  cfg.validate();
  const std::size_t P = cfg.pipeline.num_stages;
  const std::uint64_t seed = cfg.pipeline.seed;
  PipelineModel m{{}, StageFunction(LossHeadSpec{LossKind::passthrough, 1}), {}, {}};
  SeededRng init_rng(mix_seed(seed, 2));

  if (cfg.model == ModelKind::quadratic) {
    const std::size_t d = cfg.model_dims[0];
    const QuadraticSpec full = make_spread_quadratic(P * d, kQuadraticCondition, mix_seed(seed, 3));
    for (std::size_t s = 0; s < P; ++s) {
      QuadraticSpec block = quadratic_block(full, s * d, d);
      if (blocks) blocks->push_back(block);
      m.stages.emplace_back(std::move(block));
    }
  } else {
    const std::size_t in = cfg.model_dims[0], hidden = cfg.model_dims[1], out = cfg.model_dims[2];
    m.stages = make_mlp_stages(P, in, hidden, out);
    const std::uint64_t data_seed = mix_seed(seed, 1);
    if (cfg.dataset == "synthetic_classification") {
      SyntheticOptions o;
      o.num_classes = out;
      m.data = make_synthetic_dataset(DatasetKind::classification, kSyntheticSamples, in, data_seed, o);
      m.head = StageFunction(LossHeadSpec{LossKind::softmax_xent, out});
    } else if (cfg.dataset == "synthetic_regression") {
      SyntheticOptions o;
      o.output_dim = out;
      m.data = make_synthetic_dataset(DatasetKind::regression, kSyntheticSamples, in, data_seed, o);
      m.head = StageFunction(LossHeadSpec{LossKind::mse, out});
    } else {
      m.data = load_dataset_file(cfg.dataset.substr(5));
      const std::size_t k = m.data.targets.front().size();
      if (k == out) {
        m.head = StageFunction(LossHeadSpec{LossKind::mse, out});
      } else if (k == 1 && out >= 2) {
        for (const auto& t : m.data.targets) {
          if (t[0] < 0 || t[0] >= static_cast<double>(out) || t[0] != std::floor(t[0])) {
            throw ValidationError("dataset labels must be class indices in [0, " +
                                  std::to_string(out) + ")");
          }
        }
        m.head = StageFunction(LossHeadSpec{LossKind::softmax_xent, out});
      } else {
        throw ValidationError("dataset target width does not match model output width");
      }
    }
  }
  for (const auto& st : m.stages) m.initial_weights.push_back(init_weights(st, init_rng));
  m.validate();
  return m;
}

double evaluate_loss(const PipelineModel& model, const std::vector<DenseVector>& weights) {
  require_same_size(weights.size(), model.stages.size(), "evaluate_loss weights");
  const DenseVector none;
  auto one = [&](const DenseVector& x0, std::span<const double> target) {
    DenseVector x = x0;
    for (std::size_t s = 0; s < model.stages.size(); ++s) {
      x = stage_forward(model.stages[s], weights[s], x).output;
    }
    return stage_forward(model.head, none, x, target).output[0];
  };
  if (model.data.inputs.empty()) return one(DenseVector{0.0}, {});
  double total = 0.0;
  for (std::size_t k = 0; k < model.data.size(); ++k) {
    total += one(model.data.inputs[k], model.data.targets[k].view());
  }
  return total / static_cast<double>(model.data.size());
}

std::vector<MetricsRow> compute_metrics(const TrainingTrace& trace, OptimizerKind optimizer,
                                        const std::vector<QuadraticSpec>& blocks) {
  const bool identity_applies = is_nag_family(optimizer) || optimizer == OptimizerKind::sgd;
  std::vector<MetricsRow> rows;
  for (const auto& rec : delay_records(trace)) {
    MetricsRow r{rec.step, rec.stage, weight_gap(rec), cosine_alignment(rec), std::nullopt,
                 std::nullopt};
    if (identity_applies) r.delay_identity_residual = delay_identity_residual(rec);
    if (!blocks.empty()) {
      const QuadraticSpec& q = blocks.at(rec.stage - 1);
      r.suboptimality =
          quadratic_value_grad(q, rec.w_t).loss - quadratic_value_grad(q, q.optimum).loss;
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

double schedule_bubble_fraction(const PipelineConfig& cfg) {
  const std::size_t P = cfg.num_stages;
  ScheduleShape shape{cfg.mode, P, cfg.update_interval, cfg.microbatches};
  if (cfg.mode == PipelineMode::sync) {
    const auto cycle = static_cast<long>(2 * (cfg.microbatches + P - 1));
    return utilization_report(build_schedule(shape, 4 * cycle), 0).aggregate;
  }
  const auto warm = static_cast<long>(4 * P * cfg.update_interval + 4);
  return utilization_report(build_schedule(shape, warm + 200), warm).aggregate;
}

namespace {

std::string opt_text(const std::optional<double>& v) { return v ? format_double(*v) : "na"; }

std::optional<double> mean_of(const std::vector<double>& v) {
  if (v.empty()) return std::nullopt;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace

void write_summary(const std::filesystem::path& path, const std::string& echo, const RunSummary& s) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << echo;
  out << "status=" << s.status << '\n';
  out << "final_loss=" << format_double(s.final_loss) << '\n';
  out << "mean_gap=" << opt_text(s.mean_gap) << '\n';
  out << "mean_align=" << opt_text(s.mean_align) << '\n';
  out << "bubble_fraction=" << format_double(s.bubble_fraction) << '\n';
  out << "delays=" << join_counts(s.delays) << '\n';
  out << "peak_stash=" << join_counts(s.peak_stash) << '\n';
  out << "ticks=" << s.ticks << '\n';
  out << "trace_hash=" << hex64(s.trace_hash) << '\n';
  out << "message=" << s.message << '\n';
}

RunSummary read_summary(const std::filesystem::path& path) {
  const CommentedFile f = read_commented_file(path);
  std::map<std::string, std::string> kv;
  for (const auto& line : f.body) {
    const auto eq = line.find('=');
    if (eq != std::string::npos) kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  auto need = [&](const std::string& k) {
    auto it = kv.find(k);
    if (it == kv.end()) throw ValidationError(path.string() + ": missing " + k);
    return it->second;
  };
  auto real = [&](const std::string& k) -> std::optional<double> {
    const std::string v = need(k);
    if (v == "na") return std::nullopt;
    return std::stod(v);
  };
  auto counts = [&](const std::string& k) {
    std::vector<std::size_t> out;
    std::stringstream ss(need(k));
    std::string part;
    while (std::getline(ss, part, ',')) {
      if (!part.empty()) out.push_back(std::stoul(part));
    }
    return out;
  };
  RunSummary s;
  s.status = need("status");
  s.final_loss = real("final_loss").value_or(0.0);
  s.mean_gap = real("mean_gap");
  s.mean_align = real("mean_align");
  s.bubble_fraction = real("bubble_fraction").value_or(0.0);
  s.delays = counts("delays");
  s.peak_stash = counts("peak_stash");
  s.ticks = std::stol(need("ticks"));
  s.trace_hash = std::stoull(need("trace_hash"), nullptr, 16);
  s.message = kv.count("message") ? kv["message"] : "";
  return s;
}

RunSummary run_experiment(const ExperimentConfig& cfg, const std::filesystem::path& out_dir) {
  cfg.validate();
  std::vector<QuadraticSpec> blocks;
  const PipelineModel model = build_model(cfg, &blocks);
  const TrainingTrace trace = run_training(cfg.pipeline, model);
  const std::string echo = config_echo(cfg);

  std::filesystem::create_directories(out_dir);
  write_trace_csv(out_dir / "trace.csv", echo, trace);
  write_probes(out_dir / "probes.txt", echo, trace);
  const auto metrics = compute_metrics(trace, cfg.pipeline.optimizer, blocks);
  write_metrics_csv(out_dir / "metrics.csv", echo, metrics);

  RunSummary s;
  s.status = trace.diverged ? "diverged" : "converged";
  s.message = trace.divergence_message;
  if (trace.diverged) {
    s.final_loss = std::numeric_limits<double>::infinity();
  } else {
    try {
      s.final_loss = evaluate_loss(model, trace.final_weights);
    } catch (const DivergenceError& e) {
      s.status = "diverged";
      s.message = e.what();
      s.final_loss = std::numeric_limits<double>::infinity();
    }
  }
  std::vector<double> gaps, aligns;
  for (const auto& r : metrics) {
    if (r.stage != 1) continue;
    gaps.push_back(r.gap_rmse);
    if (r.cos_align) aligns.push_back(*r.cos_align);
  }
  s.mean_gap = mean_of(gaps);
  s.mean_align = mean_of(aligns);
  s.bubble_fraction = schedule_bubble_fraction(cfg.pipeline);
  s.delays = trace.delays;
  s.peak_stash = trace.peak_stash;
  s.ticks = trace.ticks;
  s.trace_hash = trace.hash();
  write_summary(out_dir / "summary.txt", echo, s);
  return s;
}

std::vector<SweepRow> sweep(const ExperimentConfig& base, const std::string& axis,
                            const std::vector<std::string>& values,
                            const std::filesystem::path& out_dir) {
  if (!is_sweepable(axis)) {
    throw ValidationError("'" + axis +
                          "' is not sweepable (optimizer, gamma, stages, mode, forecaster, seed)");
  }
  if (values.empty()) throw ValidationError("sweep needs at least one value");
  std::vector<SweepRow> rows(values.size());
  std::filesystem::create_directories(out_dir);
  const auto n = static_cast<std::ptrdiff_t>(values.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t k = 0; k < n; ++k) {
    auto& row = rows[static_cast<std::size_t>(k)];
    row.value = values[static_cast<std::size_t>(k)];
    row.dir = out_dir / (axis + "=" + row.value);
    try {
      ExperimentConfig cfg = base;
      apply_setting(cfg, axis, row.value);
      cfg.validate();
      row.summary = run_experiment(cfg, row.dir);
    } catch (const std::exception& e) {
      row.summary.status = "error";
      row.summary.message = e.what();
      row.summary.final_loss = std::numeric_limits<double>::quiet_NaN();
    }
  }
  std::ofstream out(out_dir / "sweep.csv", std::ios::binary | std::ios::trunc);
  out << config_echo(base);
  out << "axis,value,status,final_loss,mean_gap,mean_align,bubble_fraction\n";
  for (const auto& r : rows) {
    out << axis << ',' << r.value << ',' << r.summary.status << ','
        << format_double(r.summary.final_loss) << ',' << opt_text(r.summary.mean_gap) << ','
        << opt_text(r.summary.mean_align) << ',' << format_double(r.summary.bubble_fraction)
        << '\n';
  }
  return rows;
}

std::string format_sweep_table(const std::string& axis, const std::vector<SweepRow>& rows) {
  std::ostringstream out;
  auto cell = [](const std::string& s, std::size_t w) {
    return s.size() >= w ? s + " " : s + std::string(w - s.size(), ' ');
  };
  auto num = [](const std::optional<double>& v) {
    if (!v) return std::string("na");
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", *v);
    return std::string(buf);
  };
  out << cell(axis, 16) << cell("status", 11) << cell("final_loss", 14) << cell("mean_gap", 14)
      << cell("mean_align", 14) << "bubble_fraction\n";
  for (const auto& r : rows) {
    out << cell(r.value, 16) << cell(r.summary.status, 11) << cell(num(r.summary.final_loss), 14)
        << cell(num(r.summary.mean_gap), 14) << cell(num(r.summary.mean_align), 14)
        << num(r.summary.bubble_fraction) << '\n';
    if (r.summary.status == "error") out << "  " << r.summary.message << '\n';
  }
  return out.str();
}

std::vector<CheckResult> check_run_dir(const std::filesystem::path& dir) {
  std::vector<CheckResult> results;
  auto add = [&](std::string name, bool ok, std::string detail) {
    results.push_back({std::move(name), ok, std::move(detail)});
  };

  const char* files[] = {"trace.csv", "probes.txt", "metrics.csv", "summary.txt"};
  std::string missing;
  for (const char* f : files) {
    if (!std::filesystem::exists(dir / f)) missing += std::string(missing.empty() ? "" : ", ") + f;
  }
  add("files_present", missing.empty(), missing.empty() ? "all four files" : "missing " + missing);
  if (!missing.empty()) return results;

  const CommentedFile trace_file = read_commented_file(dir / "trace.csv");
  const CommentedFile probe_file = read_commented_file(dir / "probes.txt");
  const CommentedFile metrics_file = read_commented_file(dir / "metrics.csv");
  const CommentedFile summary_file = read_commented_file(dir / "summary.txt");
  const bool same_echo = trace_file.echo == probe_file.echo && trace_file.echo == metrics_file.echo &&
                         trace_file.echo == summary_file.echo;
  std::string echo_text;
  for (const auto& l : trace_file.echo) echo_text += l + "\n";
  ExperimentConfig cfg;
  try {
    cfg = parse_config(echo_text);
  } catch (const std::exception& e) {
    add("config_echo", false, e.what());
    return results;
  }
  add("config_echo", same_echo && config_echo(cfg) == [&] {
    std::string s;
    for (const auto& l : trace_file.echo) s += "# " + l + "\n";
    return s;
  }(), same_echo ? "identical in all files, resolves to itself" : "echo blocks differ between files");

  TrainingTrace trace;
  try {
    trace.rows = parse_trace_rows(trace_file);
    trace.probes = parse_probes(probe_file);
  } catch (const std::exception& e) {
    add("parse", false, e.what());
    return results;
  }
  const auto& pc = cfg.pipeline;
  for (std::size_t i = 1; i <= pc.num_stages; ++i) {
    trace.delays.push_back(pc.mode == PipelineMode::sync ? 0 : compute_delay(i, pc.num_stages, pc.update_interval));
  }
  trace.discounted = is_discounted(pc.optimizer);
  const RunSummary summary = read_summary(dir / "summary.txt");

  {
    std::map<std::size_t, long> last;
    bool ok = true;
    std::string detail = "steps 1..n per stage";
    for (const auto& r : trace.rows) {
      if (r.stage < 1 || r.stage > pc.num_stages) {
        ok = false;
        detail = "stage " + std::to_string(r.stage) + " out of range";
        break;
      }
      if (r.step != last[r.stage] + 1) {
        ok = false;
        detail = "stage " + std::to_string(r.stage) + " jumps to step " + std::to_string(r.step);
        break;
      }
      last[r.stage] = r.step;
    }
    if (ok && summary.status != "diverged") {
      for (std::size_t i = 1; i <= pc.num_stages; ++i) {
        if (last[i] != static_cast<long>(pc.total_steps)) {
          ok = false;
          detail = "stage " + std::to_string(i) + " stopped at " + std::to_string(last[i]);
        }
      }
    }
    add("steps_contiguous", ok, detail);
  }

  {
    bool ok = summary.status == "diverged" ||
              std::all_of(trace.rows.begin(), trace.rows.end(),
                          [](const TraceRow& r) { return std::isfinite(r.loss); });
    add("finite_losses", ok, "status=" + summary.status);
  }

  add("delays", summary.delays == trace.delays, "summary delays=" + join_counts(summary.delays));

  {
    bool ok = summary.peak_stash.size() == pc.num_stages;
    for (std::size_t i = 1; ok && i <= pc.num_stages; ++i) {
      ok = summary.peak_stash[i - 1] <= stash_capacity(i, pc.num_stages, pc.update_interval);
    }
    add("stash_bound", ok, "peak_stash=" + join_counts(summary.peak_stash));
  }

  std::vector<QuadraticSpec> blocks;
  if (cfg.model == ModelKind::quadratic) build_model(cfg, &blocks);
  const auto metrics = compute_metrics(trace, pc.optimizer, blocks);

  {
    double worst = 0.0;
    std::size_t n = 0;
    for (const auto& m : metrics) {
      if (!m.delay_identity_residual) continue;
      worst = std::max(worst, *m.delay_identity_residual);
      ++n;
    }
    const bool applies = is_nag_family(pc.optimizer) || pc.optimizer == OptimizerKind::sgd;
    add("delay_identity", !applies || worst <= 1e-9,
        applies ? std::to_string(n) + " windows, max residual " + format_double(worst)
                : "not applicable to " + to_string(pc.optimizer));
  }

  {
    bool ok = metrics_file.body.size() == metrics.size() + 1;
    for (std::size_t k = 0; ok && k < metrics.size(); ++k) {
      ok = metrics_file.body[k + 1] == format_metrics_row(metrics[k]);
    }
    add("metrics_reproducible", ok, std::to_string(metrics.size()) + " rows");
  }
  return results;
}

}  // namespace nagpipe
