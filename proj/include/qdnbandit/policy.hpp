#pragma once

// EXPNeuralUCB: exponential-weights sampling over paths (groups) with a
// NeuralUCB arm choice inside the sampled path. Also hosts the shared policy
// interface and the per-group neural learner state reused by the baselines.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "qdnbandit/neural.hpp"
#include "qdnbandit/qdn_model.hpp"

namespace qdnbandit {

enum class AlphaMode { DetRatio, FixedNu };
enum class ScorePrecision { Double, Single };
// How GNeuralUCB decides to skip a learning update.
enum class GNeuralUpdateRule { SkipAttacked, SkipZeroReward };

struct PolicyConfig {
  double eta = 0.0;   // exponential-weights learning rate
  double beta = 0.5;  // uniform exploration mix, in (0, 1)
  double lambda = 1.0;
  double nu = 1.0;
  double delta = 0.1;
  int train_steps = 8;
  double step_size = 1e-4;
  int width = 128;
  int depth = 2;
  Optimizer optimizer = Optimizer::Adam;
  AlphaMode alpha_mode = AlphaMode::FixedNu;
  ScorePrecision score_precision = ScorePrecision::Single;
  GNeuralUpdateRule gneural_update = GNeuralUpdateRule::SkipAttacked;

  // beta = T^(-1/4) sqrt(ln T), eta = T^(-1/2)
  static double default_beta(int horizon);
  static double default_eta(int horizon);
  static PolicyConfig defaults_for_horizon(int horizon);

  void validate() const;
  TrainOptions train_options() const;

  bool operator==(const PolicyConfig&) const = default;
};

std::string_view to_string(AlphaMode mode);
std::string_view to_string(ScorePrecision precision);
std::string_view to_string(GNeuralUpdateRule rule);
std::string_view to_string(Optimizer optimizer);

/// What the environment reveals after a play: the Bernoulli outcome and
/// whether the chosen path was attacked (attacks are distinguishable from
/// ordinary entanglement failures).
struct Feedback {
  int outcome = 0;
  bool attacked = false;
};

using FeedbackFn = std::function<Feedback(std::size_t group, std::size_t arm)>;

struct RoundInput {
  int t = 1;  // 1-based round index
  NetworkState state = NetworkState::Busy;
  std::span<const std::vector<Arm>> arm_sets;  // one feasible arm list per path
};

struct Decision {
  std::size_t group = 0;
  std::size_t arm = 0;
  std::vector<double> distribution;  // group sampling distribution this round
  Feedback feedback;
};

class Policy {
 public:
  virtual ~Policy() = default;
  virtual std::string_view name() const = 0;
  virtual Decision step(const RoundInput& input, const FeedbackFn& feedback) = 0;
  // Bytes held by the learner's model state (parameters, design matrices,
  // history). Used for the memory column of the timing report.
  virtual std::size_t state_bytes() const { return 0; }
};

/// P(r) = (1 - beta) softmax(eta * S)_r + beta / R, with the softmax shifted
/// by max S for overflow safety.
std::vector<double> sampling_distribution(std::span<const double> s_cum, double eta,
                                          double beta);

/// Importance-weighted cumulative reward: S + y / p when selected.
double cumulative_estimate_update(double s_cum, bool selected, double p_selected, int y);

/// Smallest index r with u < P(0) + ... + P(r).
std::size_t sample_index(std::span<const double> distribution, double u);

/// Per-path NeuralUCB learner: network parameters, design matrix V with its
/// inverse, the importance-weighted reward estimate S and the training history.
class NeuralGroup {
 public:
  NeuralGroup(int input_dim, const PolicyConfig& config, std::mt19937_64& rng);

  const MLPParams& params() const { return params_; }
  const Eigen::MatrixXd& v_matrix() const { return v_; }
  const Eigen::MatrixXd& v_inverse() const { return v_inv_; }
  const std::vector<TrainSample>& history() const { return history_; }
  double s_cum() const { return s_cum_; }
  void set_s_cum(double s) { s_cum_ = s; }
  // log(det V / det(lambda I)), tracked through the determinant lemma.
  double log_det_ratio() const { return log_det_ratio_; }
  std::size_t num_params() const { return params_.size(); }
  std::size_t state_bytes() const;

  double confidence_width(const PolicyConfig& config) const;

  /// U(x) = f(x) + alpha * sqrt(g^T V^-1 g / m) for every candidate input.
  /// Coordinates whose gradient is zero for every candidate are dropped and
  /// coordinates whose gradients agree on every candidate are merged (their
  /// V^-1 rows and columns summed). Both are exact rewrites of the quadratic
  /// form; duplicated encoder inputs make the merge large.
  std::vector<double> score(std::span<const std::vector<double>> inputs, double alpha,
                            ScorePrecision precision) const;

  /// Rank-one design update with the gradient at the current parameters,
  /// then appends (x, y) to the history and retrains from the current
  /// parameters.
  void learn(std::span<const double> x, int y, const TrainOptions& options);

  /// V <- V + g g^T / m and the matching Sherman-Morrison update of V^-1.
  void update_design(std::span<const double> gradient);

 private:
  MLPParams params_;
  Eigen::MatrixXd v_;
  Eigen::MatrixXd v_inv_;
  double log_det_ratio_ = 0.0;
  double s_cum_ = 0.0;
  std::vector<TrainSample> history_;
  std::vector<GroupedSample> grouped_;
  std::map<std::vector<double>, std::size_t> grouped_index_;
};

/// f(x) + alpha * |g(x)/sqrt(m)|_{V^-1}, evaluated directly in double.
double arm_score(const NeuralGroup& group, std::span<const double> x, double alpha);

/// DetRatio: nu * sqrt(log(det V / det lambda I) - 2 log delta) + sqrt(lambda);
/// FixedNu: nu. Requires t >= 1.
double confidence_width(const NeuralGroup& group, int t, const PolicyConfig& config);

/// Index of the largest score; ties go to the lowest index.
std::size_t argmax(std::span<const double> scores);

class ExpNeuralUcb final : public Policy {
 public:
  ExpNeuralUcb(std::vector<std::size_t> links_per_group, FeatureEncoder encoder,
               PolicyConfig config, std::uint64_t seed);

  std::string_view name() const override { return "expneuralucb"; }
  Decision step(const RoundInput& input, const FeedbackFn& feedback) override;
  std::size_t state_bytes() const override;

  const NeuralGroup& group(std::size_t r) const { return groups_.at(r); }
  std::size_t num_groups() const { return groups_.size(); }
  std::vector<double> distribution() const;

 private:
  std::vector<std::size_t> links_;
  FeatureEncoder encoder_;
  PolicyConfig config_;
  std::mt19937_64 rng_;
  std::vector<NeuralGroup> groups_;
};

}  // namespace qdnbandit
