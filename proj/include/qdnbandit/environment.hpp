#pragma once

// Round-by-round simulator: network state draws, the path adversary,
// Bernoulli entanglement outcomes, and regret bookkeeping against the
// hindsight benchmark.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "qdnbandit/baselines.hpp"
#include "qdnbandit/policy.hpp"
#include "qdnbandit/qdn_model.hpp"

namespace qdnbandit {

/// safe[r] == 0 means path r is attacked this round.
struct AttackVector {
  std::vector<std::uint8_t> safe;

  bool attacked(std::size_t r) const { return safe.at(r) == 0; }
  std::size_t target() const;  // the first attacked path
};

using TransitionMatrix = std::vector<std::vector<double>>;

/// Markov chain over the attacked path, independent of the learner.
struct ObliviousMarkov {
  TransitionMatrix transition;
  std::vector<double> initial;  // empty = uniform
  bool operator==(const ObliviousMarkov&) const = default;
};

/// Attacks whatever path the learner played in the previous round.
struct AdaptiveAttacker {
  bool operator==(const AdaptiveAttacker&) const = default;
};

/// Oblivious chain whose matrix changes from `before` to `after` at
/// switch_slot (rounds t >= switch_slot use `after`).
struct TimeVaryingMarkov {
  TransitionMatrix before;
  TransitionMatrix after;
  int switch_slot = 3000;
  std::vector<double> initial;
  bool operator==(const TimeVaryingMarkov&) const = default;
};

using AdversaryKind = std::variant<ObliviousMarkov, AdaptiveAttacker, TimeVaryingMarkov>;

/// Rejects matrices that are not R x R, have negative entries, or rows that
/// do not sum to one within 1e-12.
void validate_adversary(const AdversaryKind& kind, std::size_t paths);
bool is_oblivious(const AdversaryKind& kind);

/// Draws this round's attack. previous_target is the path attacked last
/// round and learner_previous the path the learner played last round; both
/// are empty at t = 1, where the target is uniform.
AttackVector adversary_step(const AdversaryKind& kind, int t,
                            std::optional<std::size_t> previous_target,
                            std::optional<std::size_t> learner_previous, std::size_t paths,
                            std::mt19937_64& rng);

struct AllBusy {
  bool operator==(const AllBusy&) const = default;
};
struct AllIdle {
  bool operator==(const AllIdle&) const = default;
};
struct HalfHalf {
  bool operator==(const HalfHalf&) const = default;
};
/// Busy with probability p_busy_before until switch_slot, then p_busy_after.
struct TimeVaryingBusy {
  double p_busy_before = 0.8;
  double p_busy_after = 0.2;
  int switch_slot = 3000;
  bool operator==(const TimeVaryingBusy&) const = default;
};

using ScenarioKind = std::variant<AllBusy, AllIdle, HalfHalf, TimeVaryingBusy>;

void validate_scenario(const ScenarioKind& kind);
double busy_probability(const ScenarioKind& kind, int t);
NetworkState draw_state(const ScenarioKind& kind, int t, std::mt19937_64& rng);

struct Outcome {
  int outcome = 0;
  bool attacked = false;
  double latent = 0.0;
};

/// s = attacked_success(path_success), Y ~ Bernoulli(s). Exactly one uniform
/// is drawn per call so the stream does not depend on the latent rate.
Outcome realize_outcome(const NetworkSpec& network, NetworkState state, std::size_t path,
                        const Arm& arm, const AttackVector& attack, std::mt19937_64& rng);

/// Independent generators derived from one master seed by fixed labels.
struct EpisodeStreams {
  std::mt19937_64 state;
  std::mt19937_64 adversary;
  std::mt19937_64 outcome;

  explicit EpisodeStreams(std::uint64_t master_seed);
};

/// Seed for the policy's own generator, derived from the master seed.
std::uint64_t policy_seed(std::uint64_t master_seed);

struct RoundRecord {
  int t = 0;
  NetworkState state = NetworkState::Busy;
  std::vector<double> distribution;
  std::size_t group = 0;
  std::size_t arm = 0;
  Arm allocation;
  AttackVector attack;
  double latent = 0.0;
  int outcome = 0;
  bool attacked = false;
  double oracle_prefix = 0.0;  // best fixed-path total over rounds 1..t
  double regret = 0.0;         // oracle_prefix - sum of latent rates so far
  double seconds = 0.0;        // wall time of the policy's step
};

struct EpisodeSummary {
  std::string policy;
  int horizon = 0;
  double total_latent = 0.0;
  double total_outcome = 0.0;
  OracleResult oracle;
  double regret = 0.0;
  std::vector<double> selection_frequency;
  double mean_round_seconds = 0.0;
  std::size_t state_bytes = 0;  // policy model state at the end of the episode
};

struct EpisodeResult {
  std::vector<RoundRecord> records;
  EpisodeSummary summary;
};

class EpisodeAborted : public std::runtime_error {
 public:
  EpisodeAborted(const std::string& what, EpisodeResult partial)
      : std::runtime_error(what), partial_(std::move(partial)) {}
  const EpisodeResult& partial() const { return partial_; }

 private:
  EpisodeResult partial_;
};

using RoundSink = std::function<void(const RoundRecord&)>;

/// Runs T rounds of `policy` against the simulated network. The state,
/// adversary and outcome streams depend only on `seed`, so oblivious
/// environments are identical across policies.
EpisodeResult run_episode(const NetworkSpec& network, const ScenarioKind& scenario,
                          const AdversaryKind& adversary, Policy& policy, int horizon,
                          std::uint64_t seed, const RoundSink& sink = {});

struct EnvironmentLog {
  std::vector<NetworkState> states;
  std::vector<std::vector<std::uint8_t>> attacks;
};

/// The state and attack sequence an episode with this seed will see. Only
/// defined for oblivious adversaries.
EnvironmentLog environment_log(const NetworkSpec& network, const ScenarioKind& scenario,
                               const AdversaryKind& adversary, int horizon,
                               std::uint64_t seed);

}  // namespace qdnbandit
