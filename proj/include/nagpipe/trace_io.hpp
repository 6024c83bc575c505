#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "nagpipe/pipeline.hpp"

namespace nagpipe {

struct MetricsRow {
  long step;
  std::size_t stage;
  double gap_rmse;
  std::optional<double> cos_align;
  std::optional<double> delay_identity_residual;
  std::optional<double> suboptimality;
};

// Every writer prefixes the file with `echo` (already "# key=value" lines).
void write_trace_csv(const std::filesystem::path& path, const std::string& echo,
                     const TrainingTrace& trace);
void write_probes(const std::filesystem::path& path, const std::string& echo,
                  const TrainingTrace& trace);
void write_metrics_csv(const std::filesystem::path& path, const std::string& echo,
                       const std::vector<MetricsRow>& rows);

std::string format_metrics_row(const MetricsRow& row);

/// Leading "# ..." lines of a file with the "# " prefix removed, and the rest.
struct CommentedFile {
  std::vector<std::string> echo;
  std::vector<std::string> body;
};
CommentedFile read_commented_file(const std::filesystem::path& path);

std::vector<TraceRow> parse_trace_rows(const CommentedFile& file);
std::vector<ProbeRecord> parse_probes(const CommentedFile& file);

}  // namespace nagpipe
