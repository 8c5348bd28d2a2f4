#include "qdnbandit/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace qdnbandit {

namespace {

std::vector<NeuralGroup> make_groups(const std::vector<std::size_t>& links,
                                     const PolicyConfig& config, std::mt19937_64& rng) {
  if (links.empty()) throw std::invalid_argument("policy needs at least one group");
  std::vector<NeuralGroup> groups;
  groups.reserve(links.size());
  for (std::size_t l : links) {
    groups.emplace_back(static_cast<int>(FeatureEncoder::neural_dim(l)), config, rng);
  }
  return groups;
}

std::vector<std::vector<double>> encode_neural(const FeatureEncoder& encoder,
                                               const std::vector<Arm>& arms) {
  std::vector<std::vector<double>> x;
  x.reserve(arms.size());
  for (const auto& arm : arms) x.push_back(encoder.neural(arm));
  return x;
}

std::vector<double> one_hot(std::size_t size, std::size_t index) {
  std::vector<double> p(size, 0.0);
  p[index] = 1.0;
  return p;
}

std::size_t total_bytes(const std::vector<NeuralGroup>& groups) {
  std::size_t bytes = 0;
  for (const auto& g : groups) bytes += g.state_bytes();
  return bytes;
}

}  // namespace

std::size_t GNeuralUcb::state_bytes() const { return total_bytes(groups_); }
std::size_t NeuralUcbRandom::state_bytes() const { return total_bytes(groups_); }

std::size_t LinGroup::state_bytes() const {
  return sizeof(double) * static_cast<std::size_t>(a_.size() + a_inv_.size() + b_.size() +
                                                   theta_.size());
}

std::size_t ExpUcb::state_bytes() const {
  std::size_t bytes = 0;
  for (const auto& g : groups_) bytes += g.state_bytes();
  return bytes;
}

GNeuralUcb::GNeuralUcb(std::vector<std::size_t> links_per_group, FeatureEncoder encoder,
                       PolicyConfig config, std::uint64_t seed)
    : encoder_(encoder), config_(config), rng_(seed) {
  config_.validate();
  groups_ = make_groups(links_per_group, config_, rng_);
}

Decision GNeuralUcb::step(const RoundInput& input, const FeedbackFn& feedback) {
  if (input.arm_sets.size() != groups_.size()) {
    throw std::invalid_argument("arm sets do not match the number of groups");
  }
  double best = -std::numeric_limits<double>::infinity();
  std::size_t best_group = groups_.size();
  std::size_t best_arm = 0;
  std::vector<std::vector<double>> chosen_x;
  for (std::size_t r = 0; r < groups_.size(); ++r) {
    if (input.arm_sets[r].empty()) continue;
    auto x = encode_neural(encoder_, input.arm_sets[r]);
    const double alpha = confidence_width(groups_[r], input.t, config_);
    const auto scores = groups_[r].score(x, alpha, config_.score_precision);
    const std::size_t a = argmax(scores);
    if (best_group == groups_.size() || scores[a] > best) {
      best = scores[a];
      best_group = r;
      best_arm = a;
      chosen_x = std::move(x);
    }
  }
  if (best_group == groups_.size()) throw std::invalid_argument("no group has a feasible arm");

  Decision d;
  d.group = best_group;
  d.arm = best_arm;
  d.distribution = one_hot(groups_.size(), best_group);
  d.feedback = feedback(d.group, d.arm);
  const bool skip = config_.gneural_update == GNeuralUpdateRule::SkipAttacked
                        ? d.feedback.attacked
                        : d.feedback.outcome == 0;
  if (!skip) {
    groups_[d.group].learn(chosen_x[d.arm], d.feedback.outcome, config_.train_options());
  }
  return d;
}

NeuralUcbRandom::NeuralUcbRandom(std::vector<std::size_t> links_per_group,
                                 FeatureEncoder encoder, PolicyConfig config,
                                 std::uint64_t seed)
    : encoder_(encoder), config_(config), rng_(seed) {
  config_.validate();
  groups_ = make_groups(links_per_group, config_, rng_);
}

Decision NeuralUcbRandom::step(const RoundInput& input, const FeedbackFn& feedback) {
  if (input.arm_sets.size() != groups_.size()) {
    throw std::invalid_argument("arm sets do not match the number of groups");
  }
  Decision d;
  d.distribution.assign(groups_.size(), 1.0 / static_cast<double>(groups_.size()));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  d.group = sample_index(d.distribution, unit(rng_));
  const auto& arms = input.arm_sets[d.group];
  if (arms.empty()) throw std::invalid_argument("sampled group has no feasible arm");
  const auto x = encode_neural(encoder_, arms);
  NeuralGroup& group = groups_[d.group];
  const auto scores =
      group.score(x, confidence_width(group, input.t, config_), config_.score_precision);
  d.arm = argmax(scores);
  d.feedback = feedback(d.group, d.arm);
  if (!d.feedback.attacked) {
    group.learn(x[d.arm], d.feedback.outcome, config_.train_options());
  }
  return d;
}

LinGroup::LinGroup(std::size_t dim, double lambda) {
  const auto d = static_cast<Eigen::Index>(dim);
  a_ = Eigen::MatrixXd::Identity(d, d) * lambda;
  a_inv_ = Eigen::MatrixXd::Identity(d, d) / lambda;
  b_ = Eigen::VectorXd::Zero(d);
  theta_ = Eigen::VectorXd::Zero(d);
}

double LinGroup::confidence_width(const PolicyConfig& config) const {
  if (config.alpha_mode == AlphaMode::FixedNu) return config.nu;
  return config.nu * std::sqrt(std::max(log_det_ratio_, 0.0) - 2.0 * std::log(config.delta)) +
         std::sqrt(config.lambda);
}

double LinGroup::score(std::span<const double> x, double alpha) const {
  const Eigen::Map<const Eigen::VectorXd> v(x.data(), static_cast<Eigen::Index>(x.size()));
  const double quad = v.dot(a_inv_ * v);
  return theta_.dot(v) + alpha * std::sqrt(std::max(quad, 0.0));
}

void LinGroup::learn(std::span<const double> x, double y) {
  const Eigen::Map<const Eigen::VectorXd> v(x.data(), static_cast<Eigen::Index>(x.size()));
  const Eigen::VectorXd w = a_inv_ * v;
  const double quad = v.dot(w);
  log_det_ratio_ += std::log1p(quad);
  a_ += v * v.transpose();
  a_inv_ -= (w * w.transpose()) / (1.0 + quad);
  b_ += y * v;
  theta_ = a_inv_ * b_;
}

ExpUcb::ExpUcb(std::vector<std::size_t> links_per_group, FeatureEncoder encoder,
               PolicyConfig config, std::uint64_t seed)
    : encoder_(encoder), config_(config), rng_(seed) {
  config_.validate();
  if (links_per_group.empty()) throw std::invalid_argument("policy needs at least one group");
  for (std::size_t l : links_per_group) {
    groups_.emplace_back(FeatureEncoder::lifted_dim(l), config_.lambda);
  }
}

std::vector<double> ExpUcb::distribution() const {
  std::vector<double> s(groups_.size());
  for (std::size_t r = 0; r < groups_.size(); ++r) s[r] = groups_[r].s_cum();
  return sampling_distribution(s, config_.eta, config_.beta);
}

Decision ExpUcb::step(const RoundInput& input, const FeedbackFn& feedback) {
  if (input.arm_sets.size() != groups_.size()) {
    throw std::invalid_argument("arm sets do not match the number of groups");
  }
  Decision d;
  d.distribution = distribution();
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  d.group = sample_index(d.distribution, unit(rng_));
  const auto& arms = input.arm_sets[d.group];
  if (arms.empty()) throw std::invalid_argument("sampled group has no feasible arm");

  LinGroup& group = groups_[d.group];
  const double alpha = group.confidence_width(config_);
  std::vector<std::vector<double>> x;
  std::vector<double> scores;
  x.reserve(arms.size());
  scores.reserve(arms.size());
  for (const auto& arm : arms) {
    x.push_back(encoder_.lifted(arm));
    scores.push_back(group.score(x.back(), alpha));
  }
  d.arm = argmax(scores);
  d.feedback = feedback(d.group, d.arm);
  if (!d.feedback.attacked) group.learn(x[d.arm], d.feedback.outcome);
  group.set_s_cum(cumulative_estimate_update(group.s_cum(), true, d.distribution[d.group],
                                             d.feedback.outcome));
  return d;
}

std::size_t best_arm_index(const PathSpec& path, std::span<const Arm> arms, int attempts) {
  if (arms.empty()) throw std::invalid_argument("no feasible allocation");
  std::size_t best = 0;
  double best_h = path_success(path, arms[0], attempts);
  for (std::size_t i = 1; i < arms.size(); ++i) {
    const double h = path_success(path, arms[i], attempts);
    if (h > best_h) {
      best_h = h;
      best = i;
    }
  }
  return best;
}

std::pair<Arm, double> oracle_best_arm(const PathSpec& path, NetworkState state,
                                       int attempts, std::optional<int> endpoint_budget) {
  const auto arms = enumerate_arms(path, state, endpoint_budget);
  const std::size_t i = best_arm_index(path, arms, attempts);
  return {arms[i], path_success(path, arms[i], attempts)};
}

std::pair<Arm, double> oracle_best_arm(const NetworkSpec& network, std::size_t path,
                                       NetworkState state) {
  return oracle_best_arm(network.paths.at(path), state, network.attempts_per_slot,
                         network.endpoint_budget(state));
}

OracleTracker::OracleTracker(const NetworkSpec& network) {
  const std::size_t r = network.num_paths();
  best_busy_.resize(r);
  best_idle_.resize(r);
  totals_.assign(r, 0.0);
  for (std::size_t p = 0; p < r; ++p) {
    best_busy_[p] = oracle_best_arm(network, p, NetworkState::Busy).second;
    best_idle_[p] = oracle_best_arm(network, p, NetworkState::Idle).second;
  }
}

double OracleTracker::best_value(std::size_t path, NetworkState state) const {
  return state == NetworkState::Busy ? best_busy_.at(path) : best_idle_.at(path);
}

double OracleTracker::add(NetworkState state, std::span<const std::uint8_t> safe) {
  if (safe.size() != totals_.size()) throw std::invalid_argument("attack vector length mismatch");
  for (std::size_t r = 0; r < totals_.size(); ++r) {
    if (safe[r]) totals_[r] += best_value(r, state);
  }
  return *std::max_element(totals_.begin(), totals_.end());
}

OracleResult OracleTracker::result() const {
  OracleResult out;
  out.per_group = totals_;
  out.group = static_cast<std::size_t>(
      std::max_element(totals_.begin(), totals_.end()) - totals_.begin());
  out.total = totals_[out.group];
  return out;
}

OracleResult oracle_total(std::span<const std::vector<std::uint8_t>> attack_log,
                          std::span<const NetworkState> state_log,
                          const NetworkSpec& network) {
  if (attack_log.size() != state_log.size()) {
    throw std::invalid_argument("attack and state logs differ in length");
  }
  OracleTracker tracker(network);
  for (std::size_t t = 0; t < attack_log.size(); ++t) tracker.add(state_log[t], attack_log[t]);
  return tracker.result();
}

OracleReplay::OracleReplay(NetworkSpec network, std::size_t group)
    : network_(std::move(network)), group_(group) {
  if (group_ >= network_.num_paths()) throw std::invalid_argument("oracle group out of range");
}

Decision OracleReplay::step(const RoundInput& input, const FeedbackFn& feedback) {
  Decision d;
  d.group = group_;
  d.arm = best_arm_index(network_.paths[group_], input.arm_sets[group_],
                         network_.attempts_per_slot);
  d.distribution = one_hot(network_.num_paths(), group_);
  d.feedback = feedback(d.group, d.arm);
  return d;
}

}  // namespace qdnbandit
