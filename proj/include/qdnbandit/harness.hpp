#pragma once

// Experiment sweeps: config loading, presets, the (policy, seed) runner and
// the plot-data export. The config file is JSON; see README for the schema.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "qdnbandit/environment.hpp"
#include "qdnbandit/policy.hpp"
#include "qdnbandit/qdn_model.hpp"

namespace qdnbandit {

enum class PolicyKind { ExpNeuralUcb, GNeuralUcb, ExpUcb, NeuralUcbRandom, OracleReplay };

std::string_view to_string(PolicyKind kind);
PolicyKind policy_kind_from_string(std::string_view text);

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The oblivious chain of the main experiments.
ObliviousMarkov oblivious_attacker();
/// The pair used for the time-varying attack experiment, switching at 3000.
TimeVaryingMarkov time_varying_attacker();

struct ExperimentConfig {
  std::string name = "experiment";
  NetworkSpec network = table1_network();
  ScenarioKind scenario = AllBusy{};
  AdversaryKind adversary = oblivious_attacker();
  std::vector<PolicyKind> policies;
  int horizon = 4000;
  std::vector<std::uint64_t> seeds;
  PolicyConfig policy;
  // When set, beta / eta are recomputed from the horizon on load and
  // whenever resolve() is called.
  bool beta_paper_default = true;
  bool eta_paper_default = true;
  std::string output_dir;  // empty = <output root>/<name>
  int log_every = 1;       // rounds CSV keeps t with t % log_every == 0, and t = T
  int threads = 0;         // 0 = hardware concurrency

  void resolve();
  /// Throws ConfigError naming the offending field.
  void validate() const;

  bool operator==(const ExperimentConfig&) const = default;
};

ExperimentConfig parse_config(std::string_view json_text);
ExperimentConfig load_config(const std::filesystem::path& path);
std::string serialize_config(const ExperimentConfig& config);

/// FNV-1a over the canonical serialization with the name, output directory
/// and thread count removed.
std::string config_hash(const ExperimentConfig& config);

struct PresetInfo {
  std::string name;
  std::string description;
};
std::vector<PresetInfo> presets();
ExperimentConfig preset(std::string_view name);

/// Seeds 1..count.
std::vector<std::uint64_t> seed_range(int count);

/// Builds a policy for one episode. OracleReplay needs the environment of
/// that seed to find the hindsight path, so it is rejected for adaptive
/// adversaries.
std::unique_ptr<Policy> make_policy(PolicyKind kind, const ExperimentConfig& config,
                                    std::uint64_t seed);

struct EpisodeOutcome {
  PolicyKind policy;
  std::uint64_t seed = 0;
  EpisodeSummary summary;
  double wall_seconds = 0.0;
  std::optional<std::string> error;
};

struct RunReport {
  std::filesystem::path run_dir;
  std::vector<EpisodeOutcome> episodes;  // policy-major, in config order
  bool ok() const;
};

/// The directory `run` writes to: explicit override, else the config's
/// output_dir, else <root>/<name>. Relative paths resolve against root.
std::filesystem::path resolve_run_dir(const ExperimentConfig& config,
                                      const std::filesystem::path& root,
                                      const std::optional<std::filesystem::path>& override_dir);

/// Runs every (policy, seed) episode and writes
///   config.json, summary.csv, aggregate.csv, rounds/<policy>_seed<seed>.csv,
///   manifest.json
/// into run_dir. Failed episodes keep their partial rounds file.
RunReport run(const ExperimentConfig& config, const std::filesystem::path& run_dir);

/// Reads a completed run directory and writes plots/regret.csv,
/// plots/reward.csv, plots/sampling.csv and the per-policy mean curves.
void emit_plots_data(const std::filesystem::path& run_dir);

/// Peak resident set of this process in KiB (VmHWM), 0 if unavailable.
std::size_t peak_rss_kib();

}  // namespace qdnbandit
