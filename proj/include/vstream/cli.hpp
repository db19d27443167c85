#pragma once

// Command layer behind the `vstream` executable. Each command returns a
// process exit code; library exceptions are mapped by exit_code_for().

#include <cstddef>
#include <cstdint>
#include <exception>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "vstream/dataio.hpp"
#include "vstream/eval.hpp"
#include "vstream/model.hpp"
#include "vstream/train.hpp"

namespace vstream {

enum ExitCode : int {
  kExitOk = 0,
  kExitConfig = 2,
  kExitData = 3,
  kExitNumeric = 4,
};

/// 2 for config/contract/dimension errors, 3 for data and I/O errors,
/// 4 for numeric errors.
int exit_code_for(const std::exception& error);

/// Flat `key = value` document. Blank lines and `#` comments are ignored.
class KeyValueConfig {
 public:
  static KeyValueConfig from_file(const std::string& path);
  static KeyValueConfig parse(const std::string& text, const std::string& origin = "<string>");

  void set(const std::string& key, const std::string& value);
  /// Applies a `key=value` override.
  void set_assignment(const std::string& assignment);
  void merge(const KeyValueConfig& overrides);

  const std::map<std::string, std::string>& entries() const { return entries_; }
  std::optional<std::string> get(const std::string& key) const;

 private:
  std::map<std::string, std::string> entries_;
};

/// Everything one train/eval run needs. Built from defaults, then the config
/// file, then command-line overrides.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  Head head = Head::Inner;
  MlpConfig mlp;
  TruthRule truth = TruthRule::Earliest;
  std::optional<std::string> data_path;
  std::optional<SynthConfig> synth;
  std::string out_dir = ".";
  std::optional<std::size_t> step;
  bool all_steps = false;
  bool baseline = false;
  bool force = false;
  bool timing = false;
  std::size_t threads = 1;

  /// Throws ConfigError on unknown keys or unparsable values.
  static RunConfig from_key_values(const KeyValueConfig& kv);
  /// Requires exactly one data source.
  void validate() const;
  /// Canonical `key=value` lines of every setting that affects training.
  std::string canonical() const;
};

struct SweepSpec {
  std::vector<std::size_t> windows{1, 2, 3, 4, 5};
  std::vector<std::size_t> dims{8, 16, 32, 64};
  std::size_t repetitions = 3;

  static SweepSpec from_key_values(const KeyValueConfig& kv);
  void validate() const;
};

SynthConfig synth_from_key_values(const KeyValueConfig& kv);

/// Loads `cfg.data_path` or generates the configured synthetic event.
DynamicGraph load_run_data(const RunConfig& cfg);

/// Hex digest binding a checkpoint to its run configuration and dataset.
std::string config_fingerprint(const RunConfig& cfg, const DynamicGraph& dyn);

/// Latest step k whose future holds unobserved edges (K - 2 when non-empty).
std::size_t default_eval_step(const DynamicGraph& dyn);

/// Model seed used for step k of a run.
std::uint64_t run_step_seed(const RunConfig& cfg, std::size_t k);

std::string checkpoint_file_name(std::size_t k);

int cmd_generate(const SynthConfig& synth, const std::string& out_dir, bool force);
int cmd_stats(const std::string& data_path, const std::string& out_dir, bool force);
int cmd_train(const RunConfig& cfg);
int cmd_eval(const RunConfig& cfg, const std::string& checkpoint_path);
int cmd_sweep(const SweepSpec& spec, const RunConfig& cfg);

}  // namespace vstream
