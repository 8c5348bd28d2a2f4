#include "qdnbandit/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <Eigen/Core>
#include <fmt/chrono.h>
#include <fmt/format.h>

#include "json.hpp"
#include "qdnbandit/baselines.hpp"
#include "qdnbandit/csv.hpp"

#ifndef QDNBANDIT_VERSION
#define QDNBANDIT_VERSION "unknown"
#endif

namespace qdnbandit {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::array<std::pair<PolicyKind, std::string_view>, 5> kPolicyNames{{
    {PolicyKind::ExpNeuralUcb, "expneuralucb"},
    {PolicyKind::GNeuralUcb, "gneuralucb"},
    {PolicyKind::ExpUcb, "expucb"},
    {PolicyKind::NeuralUcbRandom, "neuralucb_random"},
    {PolicyKind::OracleReplay, "oracle_replay"},
}};

}  // namespace

std::string_view to_string(PolicyKind kind) {
  for (const auto& [k, name] : kPolicyNames) {
    if (k == kind) return name;
  }
  return "unknown";
}

PolicyKind policy_kind_from_string(std::string_view text) {
  for (const auto& [k, name] : kPolicyNames) {
    if (name == text) return k;
  }
  throw ConfigError(fmt::format("unknown policy '{}'", text));
}

ObliviousMarkov oblivious_attacker() {
  return ObliviousMarkov{{{0.35, 0.15, 0.35, 0.15},
                          {0.3, 0.2, 0.3, 0.2},
                          {0.35, 0.15, 0.35, 0.15},
                          {0.3, 0.2, 0.3, 0.2}},
                         {}};
}

TimeVaryingMarkov time_varying_attacker() {
  TimeVaryingMarkov tv;
  tv.before = {{0.2, 0.3, 0.2, 0.3},
               {0.15, 0.35, 0.15, 0.35},
               {0.2, 0.3, 0.2, 0.3},
               {0.15, 0.35, 0.15, 0.35}};
  tv.after = {{0.35, 0.15, 0.45, 0.05},
              {0.3, 0.2, 0.4, 0.1},
              {0.35, 0.15, 0.45, 0.05},
              {0.3, 0.2, 0.4, 0.1}};
  tv.switch_slot = 3000;
  return tv;
}

void ExperimentConfig::resolve() {
  if (horizon < 1) return;
  if (beta_paper_default) policy.beta = PolicyConfig::default_beta(horizon);
  if (eta_paper_default) policy.eta = PolicyConfig::default_eta(horizon);
}

void ExperimentConfig::validate() const {
  auto wrap = [](const char* field, auto&& fn) {
    try {
      fn();
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      throw ConfigError(fmt::format("{}: {}", field, e.what()));
    }
  };
  if (horizon < 1) throw ConfigError("horizon: must be >= 1");
  if (policies.empty()) throw ConfigError("policies: at least one policy is required");
  if (std::set<PolicyKind>(policies.begin(), policies.end()).size() != policies.size()) {
    throw ConfigError("policies: duplicate entry");
  }
  if (seeds.empty()) throw ConfigError("seeds: at least one seed is required");
  if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size()) {
    throw ConfigError("seeds: seeds must be distinct");
  }
  if (log_every < 1) throw ConfigError("output.log_every: must be >= 1");
  if (threads < 0) throw ConfigError("threads: must be >= 0");
  wrap("network", [&] { network.validate(); });
  wrap("scenario", [&] { validate_scenario(scenario); });
  wrap("adversary", [&] { validate_adversary(adversary, network.num_paths()); });
  wrap("policy", [&] { policy.validate(); });
  if (!is_oblivious(adversary) &&
      std::find(policies.begin(), policies.end(), PolicyKind::OracleReplay) != policies.end()) {
    throw ConfigError(
        "policies: oracle_replay needs a learner-independent attack sequence; "
        "it cannot be used with the adaptive adversary");
  }
}

namespace {

// ---- JSON <-> config ------------------------------------------------------

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw ConfigError(fmt::format("{}: {}", path, what));
}

void check_keys(const json& j, const std::string& path, std::initializer_list<const char*> keys) {
  if (!j.is_object()) fail(path, "expected an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const char* k : keys) known = known || it.key() == k;
    if (!known) fail(path.empty() ? it.key() : path + "." + it.key(), "unknown field");
  }
}

std::string join(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

template <class T>
T as(const json& j, const std::string& path) {
  try {
    if constexpr (std::is_same_v<T, double>) {
      if (!j.is_number()) fail(path, "expected a number");
    } else if constexpr (std::is_integral_v<T>) {
      if (!j.is_number_integer()) fail(path, "expected an integer");
      if constexpr (std::is_unsigned_v<T>) {
        if (j.is_number_integer() && !j.is_number_unsigned() && j.get<std::int64_t>() < 0) {
          fail(path, "expected a nonnegative integer");
        }
      }
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!j.is_string()) fail(path, "expected a string");
    }
    return j.get<T>();
  } catch (const json::exception& e) {
    fail(path, e.what());
  }
}

template <class T>
std::vector<T> as_vector(const json& j, const std::string& path) {
  if (!j.is_array()) fail(path, "expected an array");
  std::vector<T> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    out.push_back(as<T>(j[i], fmt::format("{}[{}]", path, i)));
  }
  return out;
}

TransitionMatrix as_matrix(const json& j, const std::string& path) {
  if (!j.is_array()) fail(path, "expected an array of rows");
  TransitionMatrix m;
  for (std::size_t i = 0; i < j.size(); ++i) {
    m.push_back(as_vector<double>(j[i], fmt::format("{}[{}]", path, i)));
  }
  return m;
}

json network_to_json(const NetworkSpec& n) {
  json paths = json::array();
  for (const auto& p : n.paths) {
    json jp;
    jp["link_probs"] = p.link_probs;
    jp["repeater_capacity_busy"] = p.repeater_capacity_busy;
    jp["repeater_capacity_idle"] = p.repeater_capacity_idle;
    jp["channel_capacity"] = p.channel_capacity ? json(*p.channel_capacity) : json(nullptr);
    paths.push_back(jp);
  }
  json j;
  j["attempts_per_slot"] = n.attempts_per_slot;
  j["endpoint_capacity"] = n.endpoint_capacity ? json(*n.endpoint_capacity) : json(nullptr);
  j["paths"] = paths;
  return j;
}

NetworkSpec network_from_json(const json& j, const std::string& path) {
  check_keys(j, path, {"attempts_per_slot", "endpoint_capacity", "paths"});
  NetworkSpec n;
  if (j.contains("attempts_per_slot")) {
    n.attempts_per_slot = as<int>(j["attempts_per_slot"], join(path, "attempts_per_slot"));
  }
  if (j.contains("endpoint_capacity") && !j["endpoint_capacity"].is_null()) {
    n.endpoint_capacity = as<int>(j["endpoint_capacity"], join(path, "endpoint_capacity"));
  }
  const std::string paths_path = join(path, "paths");
  if (!j.contains("paths")) fail(paths_path, "missing");
  const json& jp = j["paths"];
  if (!jp.is_array()) fail(paths_path, "expected an array");
  for (std::size_t i = 0; i < jp.size(); ++i) {
    const std::string p = fmt::format("{}[{}]", paths_path, i);
    check_keys(jp[i], p,
               {"link_probs", "repeater_capacity_busy", "repeater_capacity_idle",
                "channel_capacity"});
    PathSpec spec;
    for (const char* key : {"link_probs", "repeater_capacity_busy", "repeater_capacity_idle"}) {
      if (!jp[i].contains(key)) fail(join(p, key), "missing");
    }
    spec.link_probs = as_vector<double>(jp[i]["link_probs"], join(p, "link_probs"));
    spec.repeater_capacity_busy =
        as_vector<int>(jp[i]["repeater_capacity_busy"], join(p, "repeater_capacity_busy"));
    spec.repeater_capacity_idle =
        as_vector<int>(jp[i]["repeater_capacity_idle"], join(p, "repeater_capacity_idle"));
    if (jp[i].contains("channel_capacity") && !jp[i]["channel_capacity"].is_null()) {
      spec.channel_capacity =
          as_vector<int>(jp[i]["channel_capacity"], join(p, "channel_capacity"));
    }
    try {
      spec.validate();
    } catch (const std::invalid_argument& e) {
      fail(p, e.what());
    }
    n.paths.push_back(std::move(spec));
  }
  return n;
}

json scenario_to_json(const ScenarioKind& s) {
  return std::visit(
      [](const auto& v) -> json {
        using S = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<S, AllBusy>) return {{"kind", "all-busy"}};
        else if constexpr (std::is_same_v<S, AllIdle>) return {{"kind", "all-idle"}};
        else if constexpr (std::is_same_v<S, HalfHalf>) return {{"kind", "half-half"}};
        else
          return {{"kind", "time-varying-busy"},
                  {"p_busy_before", v.p_busy_before},
                  {"p_busy_after", v.p_busy_after},
                  {"switch_slot", v.switch_slot}};
      },
      s);
}

ScenarioKind scenario_from_json(const json& j, const std::string& path) {
  if (!j.is_object() || !j.contains("kind")) fail(join(path, "kind"), "missing");
  const auto kind = as<std::string>(j["kind"], join(path, "kind"));
  if (kind == "all-busy" || kind == "all-idle" || kind == "half-half") {
    check_keys(j, path, {"kind"});
    if (kind == "all-busy") return AllBusy{};
    if (kind == "all-idle") return AllIdle{};
    return HalfHalf{};
  }
  if (kind != "time-varying-busy") fail(join(path, "kind"), fmt::format("unknown scenario '{}'", kind));
  check_keys(j, path, {"kind", "p_busy_before", "p_busy_after", "switch_slot"});
  TimeVaryingBusy tv;
  if (j.contains("p_busy_before")) tv.p_busy_before = as<double>(j["p_busy_before"], join(path, "p_busy_before"));
  if (j.contains("p_busy_after")) tv.p_busy_after = as<double>(j["p_busy_after"], join(path, "p_busy_after"));
  if (j.contains("switch_slot")) tv.switch_slot = as<int>(j["switch_slot"], join(path, "switch_slot"));
  return tv;
}

json adversary_to_json(const AdversaryKind& a) {
  return std::visit(
      [](const auto& v) -> json {
        using A = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<A, AdaptiveAttacker>) return {{"kind", "adaptive"}};
        else if constexpr (std::is_same_v<A, ObliviousMarkov>)
          return {{"kind", "oblivious"}, {"transition", v.transition}, {"initial", v.initial}};
        else
          return {{"kind", "time-varying"},
                  {"before", v.before},
                  {"after", v.after},
                  {"switch_slot", v.switch_slot},
                  {"initial", v.initial}};
      },
      a);
}

AdversaryKind adversary_from_json(const json& j, const std::string& path) {
  if (!j.is_object() || !j.contains("kind")) fail(join(path, "kind"), "missing");
  const auto kind = as<std::string>(j["kind"], join(path, "kind"));
  if (kind == "adaptive") {
    check_keys(j, path, {"kind"});
    return AdaptiveAttacker{};
  }
  if (kind == "oblivious") {
    check_keys(j, path, {"kind", "transition", "initial"});
    ObliviousMarkov o;
    if (!j.contains("transition")) fail(join(path, "transition"), "missing");
    o.transition = as_matrix(j["transition"], join(path, "transition"));
    if (j.contains("initial")) o.initial = as_vector<double>(j["initial"], join(path, "initial"));
    return o;
  }
  if (kind == "time-varying") {
    check_keys(j, path, {"kind", "before", "after", "switch_slot", "initial"});
    TimeVaryingMarkov tv;
    for (const char* key : {"before", "after"}) {
      if (!j.contains(key)) fail(join(path, key), "missing");
    }
    tv.before = as_matrix(j["before"], join(path, "before"));
    tv.after = as_matrix(j["after"], join(path, "after"));
    if (j.contains("switch_slot")) tv.switch_slot = as<int>(j["switch_slot"], join(path, "switch_slot"));
    if (j.contains("initial")) tv.initial = as_vector<double>(j["initial"], join(path, "initial"));
    return tv;
  }
  fail(join(path, "kind"), fmt::format("unknown adversary '{}'", kind));
}

template <class E>
E enum_from(const json& j, const std::string& path, std::initializer_list<E> values) {
  const auto text = as<std::string>(j, path);
  std::string known;
  for (E v : values) {
    if (to_string(v) == text) return v;
    known += (known.empty() ? "" : ", ") + std::string(to_string(v));
  }
  fail(path, fmt::format("'{}' is not one of {}", text, known));
}

json policy_to_json(const ExperimentConfig& c) {
  const PolicyConfig& p = c.policy;
  json j;
  j["eta"] = c.eta_paper_default ? json("paper-default") : json(p.eta);
  j["beta"] = c.beta_paper_default ? json("paper-default") : json(p.beta);
  j["lambda"] = p.lambda;
  j["nu"] = p.nu;
  j["delta"] = p.delta;
  j["train_steps"] = p.train_steps;
  j["step_size"] = p.step_size;
  j["width"] = p.width;
  j["depth"] = p.depth;
  j["optimizer"] = to_string(p.optimizer);
  j["alpha_mode"] = to_string(p.alpha_mode);
  j["score_precision"] = to_string(p.score_precision);
  j["gneural_update"] = to_string(p.gneural_update);
  return j;
}

void policy_from_json(const json& j, const std::string& path, ExperimentConfig& c) {
  check_keys(j, path,
             {"eta", "beta", "lambda", "nu", "delta", "train_steps", "step_size", "width",
              "depth", "optimizer", "alpha_mode", "score_precision", "gneural_update"});
  PolicyConfig& p = c.policy;
  auto rate = [&](const char* key, double& value, bool& paper_default) {
    if (!j.contains(key)) return;
    const json& v = j[key];
    if (v.is_string()) {
      if (v.get<std::string>() != "paper-default") {
        fail(join(path, key), "expected a number or \"paper-default\"");
      }
      paper_default = true;
    } else {
      value = as<double>(v, join(path, key));
      paper_default = false;
    }
  };
  rate("eta", p.eta, c.eta_paper_default);
  rate("beta", p.beta, c.beta_paper_default);
  if (j.contains("lambda")) p.lambda = as<double>(j["lambda"], join(path, "lambda"));
  if (j.contains("nu")) p.nu = as<double>(j["nu"], join(path, "nu"));
  if (j.contains("delta")) p.delta = as<double>(j["delta"], join(path, "delta"));
  if (j.contains("train_steps")) p.train_steps = as<int>(j["train_steps"], join(path, "train_steps"));
  if (j.contains("step_size")) p.step_size = as<double>(j["step_size"], join(path, "step_size"));
  if (j.contains("width")) p.width = as<int>(j["width"], join(path, "width"));
  if (j.contains("depth")) p.depth = as<int>(j["depth"], join(path, "depth"));
  if (j.contains("optimizer")) {
    p.optimizer = enum_from(j["optimizer"], join(path, "optimizer"),
                            {Optimizer::Adam, Optimizer::PlainGD});
  }
  if (j.contains("alpha_mode")) {
    p.alpha_mode = enum_from(j["alpha_mode"], join(path, "alpha_mode"),
                             {AlphaMode::FixedNu, AlphaMode::DetRatio});
  }
  if (j.contains("score_precision")) {
    p.score_precision = enum_from(j["score_precision"], join(path, "score_precision"),
                                  {ScorePrecision::Single, ScorePrecision::Double});
  }
  if (j.contains("gneural_update")) {
    p.gneural_update =
        enum_from(j["gneural_update"], join(path, "gneural_update"),
                  {GNeuralUpdateRule::SkipAttacked, GNeuralUpdateRule::SkipZeroReward});
  }
}

json config_to_json(const ExperimentConfig& c) {
  json j;
  j["name"] = c.name;
  j["horizon"] = c.horizon;
  j["seeds"] = c.seeds;
  json policies = json::array();
  for (PolicyKind k : c.policies) policies.push_back(to_string(k));
  j["policies"] = policies;
  j["scenario"] = scenario_to_json(c.scenario);
  j["adversary"] = adversary_to_json(c.adversary);
  j["network"] = network_to_json(c.network);
  j["policy"] = policy_to_json(c);
  j["output"] = {{"dir", c.output_dir}, {"log_every", c.log_every}};
  j["threads"] = c.threads;
  return j;
}

ExperimentConfig config_from_json(const json& j) {
  check_keys(j, "",
             {"name", "horizon", "seeds", "policies", "scenario", "adversary", "network",
              "policy", "output", "threads"});
  ExperimentConfig c;
  if (j.contains("name")) c.name = as<std::string>(j["name"], "name");
  if (j.contains("horizon")) c.horizon = as<int>(j["horizon"], "horizon");
  c.seeds = j.contains("seeds") ? as_vector<std::uint64_t>(j["seeds"], "seeds") : seed_range(10);
  if (!j.contains("policies")) fail("policies", "missing");
  for (const auto& name : as_vector<std::string>(j["policies"], "policies")) {
    try {
      c.policies.push_back(policy_kind_from_string(name));
    } catch (const ConfigError& e) {
      fail("policies", e.what());
    }
  }
  if (j.contains("scenario")) c.scenario = scenario_from_json(j["scenario"], "scenario");
  if (j.contains("adversary")) c.adversary = adversary_from_json(j["adversary"], "adversary");
  if (j.contains("network")) c.network = network_from_json(j["network"], "network");
  if (j.contains("policy")) policy_from_json(j["policy"], "policy", c);
  if (j.contains("output")) {
    check_keys(j["output"], "output", {"dir", "log_every"});
    if (j["output"].contains("dir")) c.output_dir = as<std::string>(j["output"]["dir"], "output.dir");
    if (j["output"].contains("log_every")) {
      c.log_every = as<int>(j["output"]["log_every"], "output.log_every");
    }
  }
  if (j.contains("threads")) c.threads = as<int>(j["threads"], "threads");
  c.resolve();
  c.validate();
  return c;
}

}  // namespace

ExperimentConfig parse_config(std::string_view json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(fmt::format("not valid JSON: {}", e.what()));
  }
  return config_from_json(j);
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot read config file {}", path.string()));
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config(buffer.str());
}

std::string serialize_config(const ExperimentConfig& config) {
  return config_to_json(config).dump(2) + "\n";
}

std::string config_hash(const ExperimentConfig& config) {
  json j = config_to_json(config);
  j.erase("name");
  j.erase("threads");
  j["output"].erase("dir");
  // Hash resolved rates, so "paper-default" and the equal explicit number agree.
  j["policy"]["eta"] = config.policy.eta;
  j["policy"]["beta"] = config.policy.beta;
  const std::string text = j.dump();
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return fmt::format("{:016x}", h);
}

std::vector<std::uint64_t> seed_range(int count) {
  if (count < 1) throw ConfigError("seed count must be >= 1");
  std::vector<std::uint64_t> seeds;
  for (int i = 1; i <= count; ++i) seeds.push_back(static_cast<std::uint64_t>(i));
  return seeds;
}

// ---- presets ----------------------------------------------------------------

namespace {

struct PresetDef {
  const char* name;
  const char* description;
  ExperimentConfig (*make)();
};

ExperimentConfig base_preset(const char* name, ScenarioKind scenario, AdversaryKind adversary,
                             std::vector<PolicyKind> policies, int horizon) {
  ExperimentConfig c;
  c.name = name;
  c.scenario = scenario;
  c.adversary = std::move(adversary);
  c.policies = std::move(policies);
  c.horizon = horizon;
  c.seeds = seed_range(10);
  c.resolve();
  return c;
}

const std::vector<PolicyKind> kMainPolicies{PolicyKind::ExpNeuralUcb, PolicyKind::GNeuralUcb,
                                            PolicyKind::ExpUcb, PolicyKind::OracleReplay};

const std::array<PresetDef, 6> kPresets{{
    {"table1-allbusy-oblivious", "reference network, every slot busy, oblivious Markov attacker, T=4000",
     [] { return base_preset("table1-allbusy-oblivious", AllBusy{}, oblivious_attacker(), kMainPolicies, 4000); }},
    {"table1-allidle-oblivious", "reference network, every slot idle, oblivious Markov attacker, T=4000",
     [] { return base_preset("table1-allidle-oblivious", AllIdle{}, oblivious_attacker(), kMainPolicies, 4000); }},
    {"table1-halfhalf-oblivious", "reference network, busy or idle with probability 1/2, oblivious attacker, T=4000",
     [] { return base_preset("table1-halfhalf-oblivious", HalfHalf{}, oblivious_attacker(), kMainPolicies, 4000); }},
    {"table1-allidle-adaptive", "reference network, every slot idle, attacker targets the learner's last path, T=4000",
     [] {
       return base_preset("table1-allidle-adaptive", AllIdle{}, AdaptiveAttacker{},
                          {PolicyKind::ExpNeuralUcb, PolicyKind::NeuralUcbRandom, PolicyKind::GNeuralUcb},
                          4000);
     }},
    {"table1-timevarying-state", "busy probability 0.8 switching to 0.2 at slot 3000, oblivious attacker, T=8000",
     [] {
       return base_preset("table1-timevarying-state", TimeVaryingBusy{}, oblivious_attacker(),
                          {PolicyKind::ExpNeuralUcb, PolicyKind::GNeuralUcb, PolicyKind::ExpUcb}, 8000);
     }},
    {"table1-timevarying-attack", "every slot idle, attack transition matrix changes at slot 3000, T=8000",
     [] {
       return base_preset("table1-timevarying-attack", AllIdle{}, time_varying_attacker(),
                          {PolicyKind::ExpNeuralUcb, PolicyKind::GNeuralUcb, PolicyKind::ExpUcb}, 8000);
     }},
}};

}  // namespace

std::vector<PresetInfo> presets() {
  std::vector<PresetInfo> out;
  for (const auto& p : kPresets) out.push_back({p.name, p.description});
  return out;
}

ExperimentConfig preset(std::string_view name) {
  for (const auto& p : kPresets) {
    if (name == p.name) return p.make();
  }
  throw ConfigError(fmt::format("unknown preset '{}'", name));
}

// ---- policies ---------------------------------------------------------------

std::unique_ptr<Policy> make_policy(PolicyKind kind, const ExperimentConfig& config,
                                    std::uint64_t seed) {
  std::vector<std::size_t> links;
  for (const auto& p : config.network.paths) links.push_back(p.num_links());
  const FeatureEncoder encoder(config.network.feature_scale());
  const std::uint64_t pseed = policy_seed(seed);
  switch (kind) {
    case PolicyKind::ExpNeuralUcb:
      return std::make_unique<ExpNeuralUcb>(links, encoder, config.policy, pseed);
    case PolicyKind::GNeuralUcb:
      return std::make_unique<GNeuralUcb>(links, encoder, config.policy, pseed);
    case PolicyKind::ExpUcb:
      return std::make_unique<ExpUcb>(links, encoder, config.policy, pseed);
    case PolicyKind::NeuralUcbRandom:
      return std::make_unique<NeuralUcbRandom>(links, encoder, config.policy, pseed);
    case PolicyKind::OracleReplay: {
      const auto log =
          environment_log(config.network, config.scenario, config.adversary, config.horizon, seed);
      const auto best = oracle_total(log.attacks, log.states, config.network);
      return std::make_unique<OracleReplay>(config.network, best.group);
    }
  }
  throw std::logic_error("unhandled policy kind");
}

// ---- run --------------------------------------------------------------------

bool RunReport::ok() const {
  return std::all_of(episodes.begin(), episodes.end(),
                     [](const EpisodeOutcome& e) { return !e.error.has_value(); });
}

fs::path resolve_run_dir(const ExperimentConfig& config, const fs::path& root,
                         const std::optional<fs::path>& override_dir) {
  if (override_dir) return *override_dir;
  if (!config.output_dir.empty()) {
    const fs::path dir(config.output_dir);
    return dir.is_absolute() ? dir : root / dir;
  }
  return root / config.name;
}

std::size_t peak_rss_kib() {
  std::ifstream status("/proc/self/status");
  std::string line;
  while (std::getline(status, line)) {
    if (line.rfind("VmHWM:", 0) == 0) {
      std::istringstream fields(line.substr(6));
      std::size_t kib = 0;
      fields >> kib;
      return kib;
    }
  }
  return 0;
}

namespace {

std::string rounds_file_name(PolicyKind kind, std::uint64_t seed) {
  return fmt::format("{}_seed{}.csv", to_string(kind), seed);
}

std::vector<std::string> rounds_header(std::size_t paths) {
  std::vector<std::string> h{"policy",  "seed",       "t",          "state",         "path",
                             "allocation", "attacked_path", "latent", "outcome",  "attacked",
                             "oracle_prefix", "regret", "cum_latent", "cum_outcome"};
  for (std::size_t r = 0; r < paths; ++r) h.push_back(fmt::format("p_path{}", r + 1));
  return h;
}

EpisodeOutcome run_one(const ExperimentConfig& config, PolicyKind kind, std::uint64_t seed,
                       const fs::path& rounds_path) {
  EpisodeOutcome out;
  out.policy = kind;
  out.seed = seed;
  const auto start = std::chrono::steady_clock::now();
  std::ofstream file(rounds_path, std::ios::binary);
  if (!file) {
    out.error = fmt::format("cannot write {}", rounds_path.string());
    return out;
  }
  CsvWriter csv(file);
  csv.row(rounds_header(config.network.num_paths()));

  const std::string policy_name(to_string(kind));
  const std::string seed_text = std::to_string(seed);
  double cum_latent = 0.0;
  double cum_outcome = 0.0;
  const RoundSink sink = [&](const RoundRecord& rec) {
    cum_latent += rec.latent;
    cum_outcome += rec.outcome;
    if (rec.t % config.log_every != 0 && rec.t != config.horizon) return;
    std::vector<std::string> row{policy_name,
                                 seed_text,
                                 std::to_string(rec.t),
                                 std::string(to_string(rec.state)),
                                 std::to_string(rec.group + 1),
                                 rec.allocation.to_string(),
                                 std::to_string(rec.attack.target() + 1),
                                 csv_number(rec.latent),
                                 std::to_string(rec.outcome),
                                 rec.attacked ? "1" : "0",
                                 csv_number(rec.oracle_prefix),
                                 csv_number(rec.regret),
                                 csv_number(cum_latent),
                                 csv_number(cum_outcome)};
    for (double p : rec.distribution) row.push_back(csv_number(p));
    csv.row(row);
  };

  try {
    auto policy = make_policy(kind, config, seed);
    auto result = run_episode(config.network, config.scenario, config.adversary, *policy,
                              config.horizon, seed, sink);
    out.summary = std::move(result.summary);
  } catch (const EpisodeAborted& e) {
    out.summary = e.partial().summary;
    out.error = e.what();
  } catch (const std::exception& e) {
    out.summary.policy = policy_name;
    out.error = e.what();
  }
  file.flush();
  out.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
};

MeanSe mean_se(const std::vector<double>& v) {
  MeanSe out;
  if (v.empty()) return out;
  double sum = 0.0;
  for (double x : v) sum += x;
  out.mean = sum / static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - out.mean) * (x - out.mean);
    out.se = std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
  }
  return out;
}

void write_summary(const ExperimentConfig& config, const std::vector<EpisodeOutcome>& episodes,
                   const fs::path& dir) {
  const std::size_t paths = config.network.num_paths();
  {
    std::ofstream file(dir / "summary.csv", std::ios::binary);
    CsvWriter csv(file);
    std::vector<std::string> header{"policy",       "seed",         "status",
                                    "horizon",      "total_latent", "total_outcome",
                                    "oracle_path",  "oracle_total", "regret"};
    for (std::size_t r = 0; r < paths; ++r) header.push_back(fmt::format("freq_path{}", r + 1));
    header.push_back("state_bytes");
    csv.row(header);
    for (const auto& e : episodes) {
      const auto& s = e.summary;
      std::vector<std::string> row{std::string(to_string(e.policy)),
                                   std::to_string(e.seed),
                                   e.error ? "aborted" : "ok",
                                   std::to_string(s.horizon),
                                   csv_number(s.total_latent),
                                   csv_number(s.total_outcome),
                                   std::to_string(s.oracle.group + 1),
                                   csv_number(s.oracle.total),
                                   csv_number(s.regret)};
      for (std::size_t r = 0; r < paths; ++r) {
        row.push_back(csv_number(r < s.selection_frequency.size() ? s.selection_frequency[r] : 0.0));
      }
      row.push_back(std::to_string(s.state_bytes));
      csv.row(row);
    }
  }
  std::ofstream file(dir / "aggregate.csv", std::ios::binary);
  CsvWriter csv(file);
  std::vector<std::string> header{"policy",           "episodes",          "mean_total_latent",
                                  "se_total_latent",  "mean_total_outcome", "se_total_outcome",
                                  "mean_regret",      "se_regret"};
  for (std::size_t r = 0; r < paths; ++r) header.push_back(fmt::format("mean_freq_path{}", r + 1));
  csv.row(header);
  for (PolicyKind kind : config.policies) {
    std::vector<double> latent, outcome, regret;
    std::vector<std::vector<double>> freq(paths);
    for (const auto& e : episodes) {
      if (e.policy != kind || e.error) continue;
      latent.push_back(e.summary.total_latent);
      outcome.push_back(e.summary.total_outcome);
      regret.push_back(e.summary.regret);
      for (std::size_t r = 0; r < paths; ++r) freq[r].push_back(e.summary.selection_frequency[r]);
    }
    const auto l = mean_se(latent);
    const auto o = mean_se(outcome);
    const auto g = mean_se(regret);
    std::vector<std::string> row{std::string(to_string(kind)), std::to_string(latent.size()),
                                 csv_number(l.mean), csv_number(l.se),
                                 csv_number(o.mean), csv_number(o.se),
                                 csv_number(g.mean), csv_number(g.se)};
    for (std::size_t r = 0; r < paths; ++r) row.push_back(csv_number(mean_se(freq[r]).mean));
    csv.row(row);
  }
}

std::string utc_now() {
  return fmt::format("{:%Y-%m-%dT%H:%M:%SZ}",
                     std::chrono::floor<std::chrono::seconds>(std::chrono::system_clock::now()));
}

void write_manifest(const ExperimentConfig& config, const std::vector<EpisodeOutcome>& episodes,
                    const fs::path& dir, const std::string& started, double wall_seconds,
                    int threads) {
  json m;
  m["tool"] = "qdnbandit";
  m["version"] = QDNBANDIT_VERSION;
  m["config_name"] = config.name;
  m["config_hash"] = config_hash(config);
  m["seeds"] = config.seeds;
  json policies = json::array();
  for (PolicyKind k : config.policies) policies.push_back(to_string(k));
  m["policies"] = policies;
  m["started_at"] = started;
  m["finished_at"] = utc_now();
  m["wall_seconds"] = wall_seconds;
  m["threads"] = threads;
  m["peak_rss_kib"] = peak_rss_kib();
  m["build"] = {{"compiler", __VERSION__},
                {"cplusplus", __cplusplus},
                {"eigen", fmt::format("{}.{}.{}", EIGEN_WORLD_VERSION, EIGEN_MAJOR_VERSION,
                                      EIGEN_MINOR_VERSION)},
                {"fmt", FMT_VERSION}};

  json timing = json::object();
  for (PolicyKind kind : config.policies) {
    std::vector<double> round_s, episode_s;
    std::size_t bytes = 0;
    for (const auto& e : episodes) {
      if (e.policy != kind || e.error) continue;
      round_s.push_back(e.summary.mean_round_seconds);
      episode_s.push_back(e.wall_seconds);
      bytes = std::max(bytes, e.summary.state_bytes);
    }
    timing[std::string(to_string(kind))] = {{"episodes", round_s.size()},
                                            {"mean_round_seconds", mean_se(round_s).mean},
                                            {"se_round_seconds", mean_se(round_s).se},
                                            {"mean_episode_seconds", mean_se(episode_s).mean},
                                            {"max_state_bytes", bytes}};
  }
  m["timing"] = timing;

  json list = json::array();
  for (const auto& e : episodes) {
    json je{{"policy", to_string(e.policy)},
            {"seed", e.seed},
            {"status", e.error ? "aborted" : "ok"},
            {"rounds", e.summary.horizon},
            {"wall_seconds", e.wall_seconds},
            {"mean_round_seconds", e.summary.mean_round_seconds},
            {"rounds_file", "rounds/" + rounds_file_name(e.policy, e.seed)}};
    if (e.error) je["error"] = *e.error;
    list.push_back(je);
  }
  m["episodes"] = list;
  std::ofstream(dir / "manifest.json") << m.dump(2) << "\n";
}

}  // namespace

RunReport run(const ExperimentConfig& config, const fs::path& run_dir) {
  config.validate();
  const std::string started = utc_now();
  const auto start = std::chrono::steady_clock::now();
  fs::create_directories(run_dir / "rounds");
  std::ofstream(run_dir / "config.json") << serialize_config(config);

  struct Job {
    PolicyKind kind;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (PolicyKind kind : config.policies) {
    for (std::uint64_t seed : config.seeds) jobs.push_back({kind, seed});
  }

  int threads = config.threads > 0 ? config.threads
                                   : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  threads = std::min<int>(threads, static_cast<int>(jobs.size()));

  RunReport report;
  report.run_dir = run_dir;
  report.episodes.resize(jobs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      report.episodes[i] = run_one(config, jobs[i].kind, jobs[i].seed,
                                   run_dir / "rounds" / rounds_file_name(jobs[i].kind, jobs[i].seed));
    }
  };
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int i = 0; i < threads; ++i) pool.emplace_back(worker);
  }

  write_summary(config, report.episodes, run_dir);
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  write_manifest(config, report.episodes, run_dir, started, wall, threads);
  return report;
}

// ---- plot data --------------------------------------------------------------

namespace {

struct RoundsTable {
  std::map<std::string, std::size_t> column;
  std::map<int, std::vector<std::string>> by_t;
};

RoundsTable read_rounds(const fs::path& path) {
  RoundsTable table;
  std::ifstream in(path, std::ios::binary);
  if (!in) return table;
  auto rows = read_csv(in);
  if (rows.empty()) return table;
  for (std::size_t i = 0; i < rows[0].size(); ++i) table.column[rows[0][i]] = i;
  const std::size_t t_col = table.column.at("t");
  for (std::size_t r = 1; r < rows.size(); ++r) {
    if (rows[r].size() != rows[0].size()) continue;  // truncated trailing line
    table.by_t[std::stoi(rows[r][t_col])] = std::move(rows[r]);
  }
  return table;
}

}  // namespace

void emit_plots_data(const fs::path& run_dir) {
  const fs::path config_path = run_dir / "config.json";
  if (!fs::exists(config_path)) {
    throw std::runtime_error(fmt::format("{} is not a run directory (no config.json)",
                                         run_dir.string()));
  }
  const ExperimentConfig config = load_config(config_path);
  const std::size_t paths = config.network.num_paths();
  std::vector<int> grid;
  for (int t = 1; t <= config.horizon; ++t) {
    if (t % config.log_every == 0 || t == config.horizon) grid.push_back(t);
  }

  const fs::path out = run_dir / "plots";
  fs::create_directories(out);
  std::ofstream regret_file(out / "regret.csv", std::ios::binary);
  std::ofstream reward_file(out / "reward.csv", std::ios::binary);
  std::ofstream sampling_file(out / "sampling.csv", std::ios::binary);
  std::ofstream regret_mean_file(out / "regret_mean.csv", std::ios::binary);
  std::ofstream reward_mean_file(out / "reward_mean.csv", std::ios::binary);
  std::ofstream sampling_mean_file(out / "sampling_mean.csv", std::ios::binary);
  CsvWriter regret(regret_file), reward(reward_file), sampling(sampling_file);
  CsvWriter regret_mean(regret_mean_file), reward_mean(reward_mean_file),
      sampling_mean(sampling_mean_file);

  regret.row({"policy", "seed", "t", "regret", "gap"});
  reward.row({"policy", "seed", "t", "cum_latent", "cum_outcome", "gap"});
  std::vector<std::string> sh{"policy", "seed", "t"};
  std::vector<std::string> smh{"policy", "t", "n"};
  for (std::size_t r = 0; r < paths; ++r) {
    sh.push_back(fmt::format("p_path{}", r + 1));
    smh.push_back(fmt::format("p_path{}", r + 1));
  }
  sh.push_back("gap");
  sampling.row(sh);
  sampling_mean.row(smh);
  regret_mean.row({"policy", "t", "n", "mean_regret", "se_regret"});
  reward_mean.row({"policy", "t", "n", "mean_cum_latent", "se_cum_latent", "mean_cum_outcome",
                   "se_cum_outcome"});

  const std::string na = "NA";
  for (PolicyKind kind : config.policies) {
    const std::string name(to_string(kind));
    std::vector<RoundsTable> tables;
    for (std::uint64_t seed : config.seeds) {
      tables.push_back(read_rounds(run_dir / "rounds" / rounds_file_name(kind, seed)));
    }
    for (std::size_t s = 0; s < config.seeds.size(); ++s) {
      const auto& table = tables[s];
      const std::string seed = std::to_string(config.seeds[s]);
      for (int t : grid) {
        const std::string ts = std::to_string(t);
        auto it = table.by_t.find(t);
        if (it == table.by_t.end()) {
          regret.row({name, seed, ts, na, "1"});
          reward.row({name, seed, ts, na, na, "1"});
          std::vector<std::string> row{name, seed, ts};
          for (std::size_t r = 0; r < paths; ++r) row.push_back(na);
          row.push_back("1");
          sampling.row(row);
          continue;
        }
        const auto& v = it->second;
        regret.row({name, seed, ts, v[table.column.at("regret")], "0"});
        reward.row({name, seed, ts, v[table.column.at("cum_latent")],
                    v[table.column.at("cum_outcome")], "0"});
        std::vector<std::string> row{name, seed, ts};
        for (std::size_t r = 0; r < paths; ++r) {
          row.push_back(v[table.column.at(fmt::format("p_path{}", r + 1))]);
        }
        row.push_back("0");
        sampling.row(row);
      }
    }
    for (int t : grid) {
      std::vector<double> reg, lat, outc;
      std::vector<std::vector<double>> prob(paths);
      for (const auto& table : tables) {
        auto it = table.by_t.find(t);
        if (it == table.by_t.end()) continue;
        const auto& v = it->second;
        reg.push_back(std::stod(v[table.column.at("regret")]));
        lat.push_back(std::stod(v[table.column.at("cum_latent")]));
        outc.push_back(std::stod(v[table.column.at("cum_outcome")]));
        for (std::size_t r = 0; r < paths; ++r) {
          prob[r].push_back(std::stod(v[table.column.at(fmt::format("p_path{}", r + 1))]));
        }
      }
      const std::string ts = std::to_string(t);
      const std::string n = std::to_string(reg.size());
      if (reg.empty()) {
        regret_mean.row({name, ts, n, na, na});
        reward_mean.row({name, ts, n, na, na, na, na});
        std::vector<std::string> row{name, ts, n};
        for (std::size_t r = 0; r < paths; ++r) row.push_back(na);
        sampling_mean.row(row);
        continue;
      }
      const auto g = mean_se(reg);
      const auto l = mean_se(lat);
      const auto o = mean_se(outc);
      regret_mean.row({name, ts, n, csv_number(g.mean), csv_number(g.se)});
      reward_mean.row({name, ts, n, csv_number(l.mean), csv_number(l.se), csv_number(o.mean),
                       csv_number(o.se)});
      std::vector<std::string> row{name, ts, n};
      for (std::size_t r = 0; r < paths; ++r) row.push_back(csv_number(mean_se(prob[r]).mean));
      sampling_mean.row(row);
    }
  }
}

}  // namespace qdnbandit
