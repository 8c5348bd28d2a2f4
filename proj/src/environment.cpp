#include "qdnbandit/environment.hpp"

#include <chrono>
#include <cmath>

#include <fmt/format.h>

namespace qdnbandit {

std::size_t AttackVector::target() const {
  for (std::size_t r = 0; r < safe.size(); ++r) {
    if (safe[r] == 0) return r;
  }
  throw std::logic_error("attack vector has no attacked path");
}

namespace {

void validate_matrix(const TransitionMatrix& m, std::size_t paths, const char* label) {
  if (m.size() != paths) {
    throw std::invalid_argument(
        fmt::format("{} transition matrix has {} rows, expected {}", label, m.size(), paths));
  }
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (m[i].size() != paths) {
      throw std::invalid_argument(fmt::format("{} transition row {} has {} entries", label,
                                              i + 1, m[i].size()));
    }
    double sum = 0.0;
    for (double v : m[i]) {
      if (!(v >= 0.0)) {
        throw std::invalid_argument(fmt::format("{} transition row {} has a negative entry",
                                                label, i + 1));
      }
      sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-12) {
      throw std::invalid_argument(
          fmt::format("{} transition row {} sums to {}", label, i + 1, sum));
    }
  }
}

void validate_initial(const std::vector<double>& initial, std::size_t paths) {
  if (initial.empty()) return;
  if (initial.size() != paths) throw std::invalid_argument("initial distribution length mismatch");
  double sum = 0.0;
  for (double v : initial) {
    if (!(v >= 0.0)) throw std::invalid_argument("initial distribution has a negative entry");
    sum += v;
  }
  if (std::abs(sum - 1.0) > 1e-12) throw std::invalid_argument("initial distribution must sum to 1");
}

std::size_t draw_from(std::span<const double> p, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  return sample_index(p, unit(rng));
}

std::size_t draw_initial(const std::vector<double>& initial, std::size_t paths,
                         std::mt19937_64& rng) {
  if (initial.empty()) {
    const std::vector<double> uniform(paths, 1.0 / static_cast<double>(paths));
    return draw_from(uniform, rng);
  }
  return draw_from(initial, rng);
}

AttackVector attack_on(std::size_t target, std::size_t paths) {
  AttackVector a;
  a.safe.assign(paths, 1);
  a.safe[target] = 0;
  return a;
}

}  // namespace

void validate_adversary(const AdversaryKind& kind, std::size_t paths) {
  if (paths == 0) throw std::invalid_argument("adversary needs at least one path");
  if (const auto* o = std::get_if<ObliviousMarkov>(&kind)) {
    validate_matrix(o->transition, paths, "oblivious");
    validate_initial(o->initial, paths);
  } else if (const auto* tv = std::get_if<TimeVaryingMarkov>(&kind)) {
    validate_matrix(tv->before, paths, "pre-switch");
    validate_matrix(tv->after, paths, "post-switch");
    validate_initial(tv->initial, paths);
    if (tv->switch_slot < 1) throw std::invalid_argument("switch slot must be >= 1");
  }
}

bool is_oblivious(const AdversaryKind& kind) {
  return !std::holds_alternative<AdaptiveAttacker>(kind);
}

AttackVector adversary_step(const AdversaryKind& kind, int t,
                            std::optional<std::size_t> previous_target,
                            std::optional<std::size_t> learner_previous, std::size_t paths,
                            std::mt19937_64& rng) {
  if (std::holds_alternative<AdaptiveAttacker>(kind)) {
    if (learner_previous) return attack_on(*learner_previous, paths);
    return attack_on(draw_initial({}, paths, rng), paths);
  }
  if (const auto* o = std::get_if<ObliviousMarkov>(&kind)) {
    if (!previous_target) return attack_on(draw_initial(o->initial, paths, rng), paths);
    return attack_on(draw_from(o->transition.at(*previous_target), rng), paths);
  }
  const auto& tv = std::get<TimeVaryingMarkov>(kind);
  if (!previous_target) return attack_on(draw_initial(tv.initial, paths, rng), paths);
  const auto& matrix = t >= tv.switch_slot ? tv.after : tv.before;
  return attack_on(draw_from(matrix.at(*previous_target), rng), paths);
}

void validate_scenario(const ScenarioKind& kind) {
  if (const auto* tv = std::get_if<TimeVaryingBusy>(&kind)) {
    for (double p : {tv->p_busy_before, tv->p_busy_after}) {
      if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("busy probability outside [0,1]");
    }
    if (tv->switch_slot < 1) throw std::invalid_argument("switch slot must be >= 1");
  }
}

double busy_probability(const ScenarioKind& kind, int t) {
  return std::visit(
      [t](const auto& s) -> double {
        using S = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<S, AllBusy>) return 1.0;
        else if constexpr (std::is_same_v<S, AllIdle>) return 0.0;
        else if constexpr (std::is_same_v<S, HalfHalf>) return 0.5;
        else return t >= s.switch_slot ? s.p_busy_after : s.p_busy_before;
      },
      kind);
}

NetworkState draw_state(const ScenarioKind& kind, int t, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  return unit(rng) < busy_probability(kind, t) ? NetworkState::Busy : NetworkState::Idle;
}

Outcome realize_outcome(const NetworkSpec& network, NetworkState state, std::size_t path,
                        const Arm& arm, const AttackVector& attack, std::mt19937_64& rng) {
  const PathSpec& spec = network.paths.at(path);
  if (!is_feasible(spec, arm, state, network.endpoint_budget(state))) {
    throw std::invalid_argument(
        fmt::format("allocation {} infeasible on path {} ({})", arm.to_string(), path + 1,
                    to_string(state)));
  }
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double u = unit(rng);
  Outcome o;
  o.attacked = attack.attacked(path);
  o.latent = attacked_success(path_success(spec, arm, network.attempts_per_slot), o.attacked);
  o.outcome = u < o.latent ? 1 : 0;
  return o;
}

namespace {

std::mt19937_64 derive_stream(std::uint64_t master, std::uint32_t label) {
  std::seed_seq seq{static_cast<std::uint32_t>(master & 0xffffffffu),
                    static_cast<std::uint32_t>(master >> 32), label};
  return std::mt19937_64(seq);
}

constexpr std::uint32_t kStateLabel = 0x51a7e;
constexpr std::uint32_t kAdversaryLabel = 0xadd5;
constexpr std::uint32_t kOutcomeLabel = 0x0c0e;
constexpr std::uint32_t kPolicyLabel = 0x9011c7;

}  // namespace

EpisodeStreams::EpisodeStreams(std::uint64_t master_seed)
    : state(derive_stream(master_seed, kStateLabel)),
      adversary(derive_stream(master_seed, kAdversaryLabel)),
      outcome(derive_stream(master_seed, kOutcomeLabel)) {}

std::uint64_t policy_seed(std::uint64_t master_seed) {
  return derive_stream(master_seed, kPolicyLabel)();
}

EpisodeResult run_episode(const NetworkSpec& network, const ScenarioKind& scenario,
                          const AdversaryKind& adversary, Policy& policy, int horizon,
                          std::uint64_t seed, const RoundSink& sink) {
  if (horizon < 1) throw std::invalid_argument("horizon must be >= 1");
  network.validate();
  validate_scenario(scenario);
  const std::size_t paths = network.num_paths();
  validate_adversary(adversary, paths);

  EpisodeStreams streams(seed);
  OracleTracker oracle(network);
  EpisodeResult result;
  auto& summary = result.summary;
  summary.policy = std::string(policy.name());
  summary.selection_frequency.assign(paths, 0.0);
  result.records.reserve(static_cast<std::size_t>(horizon));

  std::optional<std::size_t> previous_target;
  std::optional<std::size_t> learner_previous;
  // Feasible sets depend only on the state, so both are built once.
  std::vector<std::vector<Arm>> busy_sets(paths);
  std::vector<std::vector<Arm>> idle_sets(paths);
  for (std::size_t r = 0; r < paths; ++r) {
    busy_sets[r] = enumerate_arms(network, r, NetworkState::Busy);
    idle_sets[r] = enumerate_arms(network, r, NetworkState::Idle);
  }
  double total_seconds = 0.0;

  auto finish = [&](int rounds) {
    summary.horizon = rounds;
    summary.oracle = oracle.result();
    summary.regret = summary.oracle.total - summary.total_latent;
    if (rounds > 0) {
      for (auto& f : summary.selection_frequency) f /= static_cast<double>(rounds);
      summary.mean_round_seconds = total_seconds / static_cast<double>(rounds);
    }
  };

  for (int t = 1; t <= horizon; ++t) {
    RoundRecord rec;
    rec.t = t;
    rec.state = draw_state(scenario, t, streams.state);
    rec.attack = adversary_step(adversary, t, previous_target, learner_previous, paths,
                                streams.adversary);
    const auto& arm_sets = rec.state == NetworkState::Busy ? busy_sets : idle_sets;

    Outcome outcome;
    bool fed_back = false;
    const FeedbackFn feedback = [&](std::size_t group, std::size_t arm) {
      if (fed_back) throw std::logic_error("policy requested feedback twice in one round");
      fed_back = true;
      outcome = realize_outcome(network, rec.state, group, arm_sets.at(group).at(arm),
                                rec.attack, streams.outcome);
      return Feedback{outcome.outcome, outcome.attacked};
    };

    Decision decision;
    const auto start = std::chrono::steady_clock::now();
    try {
      decision = policy.step(RoundInput{t, rec.state, arm_sets}, feedback);
      if (!fed_back) throw std::logic_error("policy finished a round without playing");
    } catch (const std::exception& e) {
      finish(t - 1);
      summary.state_bytes = policy.state_bytes();
      throw EpisodeAborted(fmt::format("{} failed at round {}: {}", policy.name(), t, e.what()),
                           std::move(result));
    }
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    total_seconds += rec.seconds;

    rec.distribution = std::move(decision.distribution);
    rec.group = decision.group;
    rec.arm = decision.arm;
    rec.allocation = arm_sets[rec.group][rec.arm];
    rec.latent = outcome.latent;
    rec.outcome = outcome.outcome;
    rec.attacked = outcome.attacked;

    summary.total_latent += rec.latent;
    summary.total_outcome += rec.outcome;
    summary.selection_frequency[rec.group] += 1.0;
    rec.oracle_prefix = oracle.add(rec.state, rec.attack.safe);
    rec.regret = rec.oracle_prefix - summary.total_latent;

    previous_target = rec.attack.target();
    learner_previous = rec.group;
    if (sink) sink(rec);
    result.records.push_back(std::move(rec));
  }
  finish(horizon);
  summary.state_bytes = policy.state_bytes();
  return result;
}

EnvironmentLog environment_log(const NetworkSpec& network, const ScenarioKind& scenario,
                               const AdversaryKind& adversary, int horizon,
                               std::uint64_t seed) {
  if (!is_oblivious(adversary)) {
    throw std::invalid_argument("the attack sequence of an adaptive adversary depends on the learner");
  }
  const std::size_t paths = network.num_paths();
  validate_adversary(adversary, paths);
  EpisodeStreams streams(seed);
  EnvironmentLog log;
  std::optional<std::size_t> previous_target;
  for (int t = 1; t <= horizon; ++t) {
    log.states.push_back(draw_state(scenario, t, streams.state));
    auto attack = adversary_step(adversary, t, previous_target, std::nullopt, paths,
                                 streams.adversary);
    previous_target = attack.target();
    log.attacks.push_back(std::move(attack.safe));
  }
  return log;
}

}  // namespace qdnbandit
