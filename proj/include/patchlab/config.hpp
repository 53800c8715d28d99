#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "patchlab/data.hpp"
#include "patchlab/model.hpp"
#include "patchlab/train.hpp"

namespace patchlab {

struct ModelConfig {
  int m = 1;
  ActivationParams act;
  InitConfig init;
};

struct EvalConfig {
  long n_test = 20000;
  std::uint64_t seed = 0;
};

struct OutputConfig {
  std::string dir = "out";
  bool plots = true;
};

// One training run; label names the output subdirectory.
struct TrainSpec {
  std::string label;
  TrainConfig train;
};

struct ExperimentConfig {
  DataConfig data;
  ModelConfig model;
  std::vector<TrainSpec> runs;
  EvalConfig eval;
  OutputConfig output;

  // Composed semantic checks of the parts; throws std::invalid_argument.
  void validate() const;
};

bool operator==(const ModelConfig& a, const ModelConfig& b);
bool operator==(const EvalConfig& a, const EvalConfig& b);
bool operator==(const OutputConfig& a, const OutputConfig& b);
bool operator==(const TrainSpec& a, const TrainSpec& b);
bool operator==(const ExperimentConfig& a, const ExperimentConfig& b);

// Flat key = value lines under [section] headers; see README.md for the full
// grammar. Structural problems are reported as std::runtime_error naming
// `origin` and the one-based line number. parse + serialize + parse is the
// identity on every accepted input.
ExperimentConfig parse_config_text(const std::string& text, const std::string& origin);

// Reads and parses a file, then applies the semantic checks. A seed override
// rewires the three seed fields from one master value: data keeps the master,
// initialization and evaluation get streams derived from it, so overridden
// runs never reuse a stream across stages.
ExperimentConfig parse_config_file(const std::string& path,
                                   std::optional<std::uint64_t> seed_override = {});

// Canonical form: fixed section and key order, shortest round-trip numbers.
std::string serialize_config(const ExperimentConfig& cfg);

}  // namespace patchlab
