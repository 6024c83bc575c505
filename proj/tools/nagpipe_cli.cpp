// nagpipe: run, sweep, check and report pipeline-training experiments.
//
// exit codes: 0 ok, 1 usage, 2 validation, 3 divergence, 4 invariant check failed

#include <cstdio>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "nagpipe/errors.hpp"
#include "nagpipe/experiment.hpp"

namespace {

enum Exit { kOk = 0, kUsage = 1, kValidation = 2, kDivergence = 3, kCheckFailed = 4 };

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string part;
  while (std::getline(ss, part, ',')) {
    if (!part.empty()) out.push_back(part);
  }
  return out;
}

void print_summary(const nagpipe::RunSummary& s, const std::string& dir) {
  std::printf("%s: %s final_loss=%s bubble_fraction=%s\n", dir.c_str(), s.status.c_str(),
              nagpipe::format_double(s.final_loss).c_str(),
              nagpipe::format_double(s.bubble_fraction).c_str());
  if (!s.message.empty()) std::printf("  %s\n", s.message.c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Asynchronous pipeline-parallel training simulator"};
  app.require_subcommand(1);

  std::string config_path, out_override, axis, values;
  auto* run = app.add_subcommand("run", "run one experiment");
  run->add_option("config", config_path, "config file")->required();
  run->add_option("--out", out_override, "output directory (overrides out_dir)");

  auto* sweep = app.add_subcommand("sweep", "run one experiment per value of a key");
  sweep->add_option("config", config_path, "base config file")->required();
  sweep->add_option("--axis", axis, "optimizer, gamma, stages, mode, forecaster or seed")->required();
  sweep->add_option("--values", values, "comma-separated values")->required();
  sweep->add_option("--out", out_override, "output directory (overrides out_dir)");

  std::string check_dir;
  auto* check = app.add_subcommand("check", "re-verify invariants of a finished run");
  check->add_option("trace-dir", check_dir, "run directory")->required();

  std::vector<std::string> report_dirs;
  auto* report = app.add_subcommand("report", "tabulate summaries of finished runs");
  report->add_option("dirs", report_dirs, "run directories")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (*run) {
      nagpipe::ExperimentConfig cfg = nagpipe::load_config(config_path);
      const std::string dir = out_override.empty() ? cfg.out_dir : out_override;
      const auto s = nagpipe::run_experiment(cfg, dir);
      print_summary(s, dir);
      return s.status == "diverged" ? kDivergence : kOk;
    }
    if (*sweep) {
      nagpipe::ExperimentConfig cfg = nagpipe::load_config(config_path);
      const std::string dir = out_override.empty() ? cfg.out_dir : out_override;
      const auto rows = nagpipe::sweep(cfg, axis, split_csv(values), dir);
      std::cout << nagpipe::format_sweep_table(axis, rows);
      for (const auto& r : rows) {
        if (r.summary.status == "error") return kValidation;
      }
      return kOk;
    }
    if (*check) {
      bool ok = true;
      for (const auto& c : nagpipe::check_run_dir(check_dir)) {
        std::printf("%-22s %s  %s\n", c.name.c_str(), c.ok ? "ok  " : "FAIL", c.detail.c_str());
        ok = ok && c.ok;
      }
      return ok ? kOk : kCheckFailed;
    }
    if (*report) {
      std::printf("%-32s %-10s %-14s %-14s %-14s %s\n", "run", "status", "final_loss", "mean_gap",
                  "mean_align", "bubble_fraction");
      auto num = [](const std::optional<double>& v) {
        if (!v) return std::string("na");
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.6g", *v);
        return std::string(buf);
      };
      for (const auto& d : report_dirs) {
        const auto s = nagpipe::read_summary(std::filesystem::path(d) / "summary.txt");
        std::printf("%-32s %-10s %-14.6g %-14s %-14s %.6g\n", d.c_str(), s.status.c_str(),
                    s.final_loss, num(s.mean_gap).c_str(),
                    num(s.mean_align).c_str(), s.bubble_fraction);
      }
      return kOk;
    }
  } catch (const nagpipe::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kValidation;
  } catch (const nagpipe::ValidationError& e) {
    std::fprintf(stderr, "validation error: %s\n", e.what());
    return kValidation;
  } catch (const nagpipe::DivergenceError& e) {
    std::fprintf(stderr, "diverged: %s\n", e.what());
    return kDivergence;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kValidation;
  }
  return kUsage;
}
