#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "nagpipe/pipeline.hpp"
#include "nagpipe/trace_io.hpp"

namespace nagpipe {

enum class ModelKind { quadratic, mlp };

// Synthetic datasets always hold this many samples.
inline constexpr std::size_t kSyntheticSamples = 256;
// Condition number of the quadratic model (curvatures from 1 down to 1e-3).
inline constexpr double kQuadraticCondition = 1e3;

struct ExperimentConfig {
  PipelineConfig pipeline;
  ModelKind model = ModelKind::mlp;
  // mlp: input,hidden,output. quadratic: coordinates per stage.
  std::vector<std::size_t> model_dims = {8, 16, 3};
  std::string dataset = "synthetic_classification";
  std::string out_dir = "out";
  bool lr_delay_discount = false;
  std::size_t lr_discount_T = 6000;
  bool model_dims_explicit = false;

  void validate() const;
};

/// key=value lines, '#' comments. Unknown keys and malformed values raise
/// ConfigError with the line; cross-key problems raise ValidationError.
ExperimentConfig parse_config(std::string_view text);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Applies one setting; `line` only decorates error messages.
void apply_setting(ExperimentConfig& cfg, const std::string& key, const std::string& value,
                   std::size_t line = 0);

/// Every resolved key except out_dir, one "# key=value" line each, fixed order.
std::string config_echo(const ExperimentConfig& cfg);

bool is_sweepable(const std::string& key);

/// Stages, head, initial weights and data for `cfg`. For the quadratic model
/// `blocks` receives the per-stage quadratic pieces (all stages together form
/// one separable quadratic).
PipelineModel build_model(const ExperimentConfig& cfg, std::vector<QuadraticSpec>* blocks = nullptr);

/// Full-data loss of the model at the given stage weights.
double evaluate_loss(const PipelineModel& model, const std::vector<DenseVector>& weights);

std::vector<MetricsRow> compute_metrics(const TrainingTrace& trace, OptimizerKind optimizer,
                                        const std::vector<QuadraticSpec>& blocks);

/// Steady-state bubble fraction of the configured schedule.
double schedule_bubble_fraction(const PipelineConfig& cfg);

struct RunSummary {
  std::string status;  // converged | diverged | error
  double final_loss = 0.0;
  std::optional<double> mean_gap;    // stage 1 (largest delay)
  std::optional<double> mean_align;  // stage 1
  double bubble_fraction = 0.0;
  std::vector<std::size_t> delays;
  std::vector<std::size_t> peak_stash;
  long ticks = 0;
  std::uint64_t trace_hash = 0;
  std::string message;
};

/// Writes trace.csv, probes.txt, metrics.csv and summary.txt into out_dir.
RunSummary run_experiment(const ExperimentConfig& cfg, const std::filesystem::path& out_dir);

void write_summary(const std::filesystem::path& path, const std::string& echo, const RunSummary& s);
RunSummary read_summary(const std::filesystem::path& path);

struct SweepRow {
  std::string value;
  std::filesystem::path dir;
  RunSummary summary;
};

/// One run per value in out_dir/<axis>=<value>/, run concurrently, plus
/// out_dir/sweep.csv. Throws ValidationError for a non-sweepable axis.
std::vector<SweepRow> sweep(const ExperimentConfig& base, const std::string& axis,
                            const std::vector<std::string>& values,
                            const std::filesystem::path& out_dir);
std::string format_sweep_table(const std::string& axis, const std::vector<SweepRow>& rows);

struct CheckResult {
  std::string name;
  bool ok;
  std::string detail;
};

/// Re-derives the run's invariants from its files alone.
std::vector<CheckResult> check_run_dir(const std::filesystem::path& dir);

std::string to_string(ModelKind kind);

}  // namespace nagpipe
