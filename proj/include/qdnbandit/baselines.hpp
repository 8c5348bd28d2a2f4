#pragma once

// Comparison policies and the hindsight benchmark.
//
//   GNeuralUCB        greedy NeuralUCB over every (path, allocation) pair
//   EXPUCB            exponential-weights path sampling + LinUCB allocation
//   NeuralUCB-Random  uniform path + NeuralUCB allocation
//   OracleReplay      plays the hindsight-best path with its best allocation

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "qdnbandit/policy.hpp"
#include "qdnbandit/qdn_model.hpp"

namespace qdnbandit {

class GNeuralUcb final : public Policy {
 public:
  GNeuralUcb(std::vector<std::size_t> links_per_group, FeatureEncoder encoder,
             PolicyConfig config, std::uint64_t seed);

  std::string_view name() const override { return "gneuralucb"; }
  Decision step(const RoundInput& input, const FeedbackFn& feedback) override;
  std::size_t state_bytes() const override;

  const NeuralGroup& group(std::size_t r) const { return groups_.at(r); }

 private:
  FeatureEncoder encoder_;
  PolicyConfig config_;
  std::mt19937_64 rng_;
  std::vector<NeuralGroup> groups_;
};

class NeuralUcbRandom final : public Policy {
 public:
  NeuralUcbRandom(std::vector<std::size_t> links_per_group, FeatureEncoder encoder,
                  PolicyConfig config, std::uint64_t seed);

  std::string_view name() const override { return "neuralucb_random"; }
  Decision step(const RoundInput& input, const FeedbackFn& feedback) override;
  std::size_t state_bytes() const override;

  const NeuralGroup& group(std::size_t r) const { return groups_.at(r); }

 private:
  FeatureEncoder encoder_;
  PolicyConfig config_;
  std::mt19937_64 rng_;
  std::vector<NeuralGroup> groups_;
};

/// Ridge-regression state for one path: A = lambda I + sum x x^T,
/// b = sum y x, theta_hat = A^-1 b.
class LinGroup {
 public:
  LinGroup(std::size_t dim, double lambda);

  const Eigen::MatrixXd& design() const { return a_; }
  const Eigen::MatrixXd& design_inverse() const { return a_inv_; }
  const Eigen::VectorXd& response() const { return b_; }
  const Eigen::VectorXd& estimate() const { return theta_; }
  double log_det_ratio() const { return log_det_ratio_; }
  double s_cum() const { return s_cum_; }
  void set_s_cum(double s) { s_cum_ = s; }
  std::size_t state_bytes() const;

  double confidence_width(const PolicyConfig& config) const;
  double score(std::span<const double> x, double alpha) const;
  void learn(std::span<const double> x, double y);

 private:
  Eigen::MatrixXd a_;
  Eigen::MatrixXd a_inv_;
  Eigen::VectorXd b_;
  Eigen::VectorXd theta_;
  double log_det_ratio_ = 0.0;
  double s_cum_ = 0.0;
};

class ExpUcb final : public Policy {
 public:
  ExpUcb(std::vector<std::size_t> links_per_group, FeatureEncoder encoder,
         PolicyConfig config, std::uint64_t seed);

  std::string_view name() const override { return "expucb"; }
  Decision step(const RoundInput& input, const FeedbackFn& feedback) override;
  std::size_t state_bytes() const override;

  const LinGroup& group(std::size_t r) const { return groups_.at(r); }
  std::vector<double> distribution() const;

 private:
  FeatureEncoder encoder_;
  PolicyConfig config_;
  std::mt19937_64 rng_;
  std::vector<LinGroup> groups_;
};

/// Index of the allocation with the highest latent success; ties go to the
/// lowest index.
std::size_t best_arm_index(const PathSpec& path, std::span<const Arm> arms, int attempts);

/// Exhaustive argmax of path_success over the feasible allocations.
std::pair<Arm, double> oracle_best_arm(const PathSpec& path, NetworkState state,
                                       int attempts, std::optional<int> endpoint_budget);
std::pair<Arm, double> oracle_best_arm(const NetworkSpec& network, std::size_t path,
                                       NetworkState state);

struct OracleResult {
  std::size_t group = 0;
  double total = 0.0;
  std::vector<double> per_group;  // sum_t a_t(r) h_r(best allocation at t)
};

/// Hindsight-best fixed path for a logged attack/state sequence. Each attack
/// log entry holds one 0/1 entry per path (0 = attacked).
OracleResult oracle_total(std::span<const std::vector<std::uint8_t>> attack_log,
                          std::span<const NetworkState> state_log,
                          const NetworkSpec& network);

/// Running version of oracle_total, used for per-round regret curves.
class OracleTracker {
 public:
  explicit OracleTracker(const NetworkSpec& network);

  // Adds one round and returns the best prefix total so far.
  double add(NetworkState state, std::span<const std::uint8_t> safe);
  double best_value(std::size_t path, NetworkState state) const;
  OracleResult result() const;

 private:
  std::vector<double> best_busy_;
  std::vector<double> best_idle_;
  std::vector<double> totals_;
};

/// Replays the hindsight benchmark: always the given path, with its best
/// allocation under the current state.
class OracleReplay final : public Policy {
 public:
  OracleReplay(NetworkSpec network, std::size_t group);

  std::string_view name() const override { return "oracle_replay"; }
  Decision step(const RoundInput& input, const FeedbackFn& feedback) override;

 private:
  NetworkSpec network_;
  std::size_t group_;
};

}  // namespace qdnbandit
