#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "patchlab/config.hpp"

namespace patchlab {

inline constexpr int kExitOk = 0;
inline constexpr int kExitCheckFailed = 1;
inline constexpr int kExitUsage = 2;

struct RunOptions {
  std::optional<std::string> out_dir;  // overrides config output.dir
  int threads = 1;
  bool dry_run = false;
  bool no_plots = false;
};

// Orchestrates one experiment end to end: dataset, initialization audit,
// every configured training run with its trace/coefficient/accuracy files,
// optional plots, and the final check of the published claims. Returns
// kExitOk, or kExitCheckFailed when a run diverged or a check clause failed.
// A dry run prints the derived quantities and writes nothing. Assumes a
// validated config; config problems throw std::invalid_argument.
int run_experiment(const ExperimentConfig& cfg, const RunOptions& opt,
                   std::ostream& log);

// File front end: parse, validate, run. Parse and validation problems are
// printed to `log` and reported as kExitUsage instead of thrown.
int run_experiment_file(const std::string& path,
                        std::optional<std::uint64_t> seed_override,
                        const RunOptions& opt, std::ostream& log);

struct CheckRow {
  std::string run;  // train label, or "experiment" for whole-run clauses
  std::string clause;
  double measured = 0.0;
  std::string expected;  // human-readable band
  bool pass = false;
};

struct CheckReport {
  std::vector<CheckRow> rows;
  bool all_pass = true;
};

// Re-reads an emitted experiment directory and re-evaluates the measurable
// claims from the files alone (the contribution-uniformity clause regenerates
// the dataset from the stored config). Throws std::runtime_error containing
// "no runs found" when the directory holds no completed run.
CheckReport theorem_check(const std::string& run_dir);

void print_check_report(const CheckReport& rep, std::ostream& out);
std::string check_report_json(const CheckReport& rep);

}  // namespace patchlab
