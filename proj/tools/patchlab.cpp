#include <charconv>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "patchlab/experiment.hpp"

namespace {

// PATCHLAB_SEED reseeds the whole experiment from one master value; see
// parse_config_file for how the per-stage seeds are derived from it.
bool read_env_seed(std::optional<std::uint64_t>& seed, std::string& error) {
  const char* raw = std::getenv("PATCHLAB_SEED");
  if (raw == nullptr || *raw == '\0') return true;
  std::uint64_t value = 0;
  const char* end = raw;
  while (*end != '\0') ++end;
  auto res = std::from_chars(raw, end, value);
  if (res.ec != std::errc() || res.ptr != end) {
    error = std::string("PATCHLAB_SEED must be an unsigned integer, got '") + raw + "'";
    return false;
  }
  seed = value;
  return true;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"patch-model training laboratory"};
  app.require_subcommand(1);

  std::string config_path, out_dir, check_dir;
  int threads = 1;
  bool dry_run = false, no_plots = false;

  CLI::App* run =
      app.add_subcommand("run", "train every configured method and emit reports");
  run->add_option("config", config_path, "experiment config file")->required();
  run->add_option("--out", out_dir, "override the configured output directory");
  run->add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
  run->add_flag("--dry-run", dry_run, "validate and print derived quantities only");
  run->add_flag("--no-plots", no_plots, "skip the SVG panels");

  CLI::App* check =
      app.add_subcommand("check", "re-evaluate the claims of an emitted run directory");
  check->add_option("dir", check_dir, "run directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? patchlab::kExitOk : patchlab::kExitUsage;
  }

  if (run->parsed()) {
    std::optional<std::uint64_t> seed;
    std::string error;
    if (!read_env_seed(seed, error)) {
      std::cerr << error << "\n";
      return patchlab::kExitUsage;
    }
    patchlab::RunOptions opt;
    if (!out_dir.empty()) opt.out_dir = out_dir;
    opt.threads = threads;
    opt.dry_run = dry_run;
    opt.no_plots = no_plots;
    return patchlab::run_experiment_file(config_path, seed, opt, std::cout);
  }

  try {
    const patchlab::CheckReport rep = patchlab::theorem_check(check_dir);
    patchlab::print_check_report(rep, std::cout);
    return rep.all_pass ? patchlab::kExitOk : patchlab::kExitCheckFailed;
  } catch (const std::exception& e) {
    std::cerr << e.what() << "\n";
    return patchlab::kExitUsage;
  }
}
