// Command line front end: run an experiment, export plot data, list presets.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "CLI11.hpp"
#include "qdnbandit/harness.hpp"

namespace fs = std::filesystem;
using namespace qdnbandit;

namespace {

constexpr const char* kOutRootEnv = "QDNBANDIT_OUT_ROOT";

fs::path output_root() {
  if (const char* root = std::getenv(kOutRootEnv); root && *root) return root;
  return "runs";
}

// A config argument is a file path, or the name of a builtin preset.
ExperimentConfig config_from_argument(const std::string& arg) {
  if (fs::exists(arg)) return load_config(arg);
  for (const auto& p : presets()) {
    if (p.name == arg) return preset(arg);
  }
  throw ConfigError(fmt::format("'{}' is neither a readable config file nor a preset name", arg));
}

std::vector<PolicyKind> parse_policies(const std::vector<std::string>& names) {
  std::vector<PolicyKind> out;
  for (const auto& n : names) out.push_back(policy_kind_from_string(n));
  return out;
}

int cmd_run(const std::string& config_arg, std::optional<int> seed_count,
            const std::optional<std::string>& out, const std::vector<std::string>& policies,
            std::optional<int> threads) {
  ExperimentConfig config = config_from_argument(config_arg);
  if (seed_count) config.seeds = seed_range(*seed_count);
  if (!policies.empty()) config.policies = parse_policies(policies);
  if (threads) config.threads = *threads;
  config.resolve();
  config.validate();

  std::optional<fs::path> override_dir;
  if (out) override_dir = fs::path(*out);
  const fs::path dir = resolve_run_dir(config, output_root(), override_dir);
  std::cerr << fmt::format("running {} ({} policies x {} seeds, T={}) -> {}\n", config.name,
                           config.policies.size(), config.seeds.size(), config.horizon,
                           dir.string());
  const RunReport report = run(config, dir);
  for (const auto& e : report.episodes) {
    if (e.error) {
      std::cerr << fmt::format("episode {} seed {} aborted: {}\n", to_string(e.policy), e.seed,
                               *e.error);
    }
  }
  std::cout << dir.string() << "\n";
  return report.ok() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adversarial group neural bandits for entanglement path selection and qubit allocation"};
  app.require_subcommand(1);

  auto* run_cmd = app.add_subcommand("run", "run every (policy, seed) episode of a config");
  std::string config_arg;
  std::optional<int> seed_count;
  std::optional<std::string> out;
  std::vector<std::string> policy_names;
  std::optional<int> threads;
  run_cmd->add_option("config", config_arg, "config file (JSON) or preset name")->required();
  run_cmd->add_option("--seed-count", seed_count, "use seeds 1..N")->check(CLI::PositiveNumber);
  run_cmd->add_option("--out", out,
                      fmt::format("run directory (default: ${} or ./runs, plus the config name)",
                                  kOutRootEnv));
  run_cmd->add_option("--policies", policy_names, "comma separated subset of policies")
      ->delimiter(',');
  run_cmd->add_option("--threads", threads, "worker threads, 0 = all cores")
      ->check(CLI::NonNegativeNumber);

  auto* plots_cmd = app.add_subcommand("plots", "write plot-ready CSVs for a finished run");
  std::string run_dir;
  plots_cmd->add_option("run_dir", run_dir, "directory written by `run`")->required();

  auto* presets_cmd = app.add_subcommand("presets", "list builtin experiment presets");
  std::string show;
  presets_cmd->add_option("--show", show, "print the full config of one preset");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run_cmd) return cmd_run(config_arg, seed_count, out, policy_names, threads);
    if (*plots_cmd) {
      emit_plots_data(run_dir);
      std::cout << (fs::path(run_dir) / "plots").string() << "\n";
      return 0;
    }
    if (*presets_cmd) {
      if (!show.empty()) {
        std::cout << serialize_config(preset(show));
        return 0;
      }
      for (const auto& p : presets()) std::cout << fmt::format("{:<28} {}\n", p.name, p.description);
      return 0;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
