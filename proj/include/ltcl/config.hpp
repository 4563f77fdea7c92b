#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "ltcl/net.hpp"
#include "ltcl/objectives.hpp"
#include "ltcl/replay.hpp"
#include "ltcl/stream.hpp"
#include "ltcl/uncertainty.hpp"

namespace ltcl {

enum class EvalMode { kClassIL, kTaskIL };

std::string to_string(EvalMode mode);
EvalMode parse_eval_mode(const std::string& name);

/// Everything a run needs. `seed` drives every generator in the run; the
/// stream, MC and data seeds are derived from it unless set explicitly.
struct ExperimentConfig {
  StreamConfig stream;
  MCConfig mc;
  LossConfig loss;
  std::size_t buffer_capacity = 200;
  BufferPolicy buffer_policy = BufferPolicy::kUncertainty;
  CandidateOrder candidate_order = CandidateOrder::kMaxMi;
  int epochs = 20;
  std::size_t batch_size = 32;
  double learning_rate = 0.03;
  std::vector<EvalMode> eval_modes = {EvalMode::kClassIL, EvalMode::kTaskIL};
  std::uint64_t seed = 0;
  std::string output_dir = "out";
  std::string run_name = "run";

  HeadKind head = HeadKind::kCosine;
  std::vector<Index> hidden = {64, 64};
  double dropout_rate = 0.2;

  // Empty data_path selects the synthetic Gaussian pool.
  std::string data_path;
  Index dim = 16;
  double separation = 3.0;
  std::size_t pool_per_class = 1000;
  std::size_t test_per_class = 200;
  int threads = 1;

  void validate() const;
  /// Re-derives the stream and MC seeds from `seed`.
  void reseed(std::uint64_t new_seed);
};

/// Keys that every config file must set.
const std::vector<std::string>& required_config_keys();

/// Sets one key. Throws ParameterError for unknown keys or bad values.
void apply_setting(ExperimentConfig& config, const std::string& key, const std::string& value);

/// Flat `key=value` text; `#` starts a comment. Throws ParseError with the
/// line number for malformed lines, unknown keys or missing required keys.
ExperimentConfig parse_config(std::istream& in);
ExperimentConfig load_config(const std::string& path);

/// Canonical key/value echo of a config, in a fixed order.
std::vector<std::pair<std::string, std::string>> config_echo(const ExperimentConfig& config);

/// `key=v1,v2,...` lines; the sweep is the Cartesian product in file order.
using SweepGrid = std::vector<std::pair<std::string, std::vector<std::string>>>;
SweepGrid parse_grid(std::istream& in);
SweepGrid load_grid(const std::string& path);
std::vector<std::vector<std::pair<std::string, std::string>>> expand_grid(const SweepGrid& grid);

}  // namespace ltcl
