#include "qdnbandit/policy.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <map>
#include <unordered_map>
#include <stdexcept>

#include <fmt/format.h>

namespace qdnbandit {

double PolicyConfig::default_beta(int horizon) {
  const double t = static_cast<double>(horizon);
  return std::pow(t, -0.25) * std::sqrt(std::log(t));
}

double PolicyConfig::default_eta(int horizon) {
  return 1.0 / std::sqrt(static_cast<double>(horizon));
}

PolicyConfig PolicyConfig::defaults_for_horizon(int horizon) {
  PolicyConfig c;
  c.beta = default_beta(horizon);
  c.eta = default_eta(horizon);
  return c;
}

void PolicyConfig::validate() const {
  if (!(beta > 0.0 && beta <= 1.0)) {
    throw std::invalid_argument(fmt::format("beta must lie in (0,1], got {}", beta));
  }
  if (!(eta > 0.0)) throw std::invalid_argument("eta must be positive");
  if (!(lambda >= 1.0)) throw std::invalid_argument("lambda must be >= 1");
  if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("delta must lie in (0,1)");
  if (nu < 0.0) throw std::invalid_argument("nu must be nonnegative");
  if (train_steps < 1) throw std::invalid_argument("train_steps must be >= 1");
  if (!(step_size > 0.0)) throw std::invalid_argument("step_size must be positive");
  if (width < 2 || width % 2 != 0) throw std::invalid_argument("width must be even");
  if (depth < 2) throw std::invalid_argument("depth must be >= 2");
}

TrainOptions PolicyConfig::train_options() const {
  TrainOptions o;
  o.lambda = lambda;
  o.steps = train_steps;
  o.step_size = step_size;
  o.optimizer = optimizer;
  return o;
}

std::string_view to_string(AlphaMode mode) {
  return mode == AlphaMode::DetRatio ? "det-ratio" : "fixed-nu";
}
std::string_view to_string(ScorePrecision precision) {
  return precision == ScorePrecision::Double ? "double" : "single";
}
std::string_view to_string(GNeuralUpdateRule rule) {
  return rule == GNeuralUpdateRule::SkipAttacked ? "skip-attacked" : "skip-zero-reward";
}
std::string_view to_string(Optimizer optimizer) {
  return optimizer == Optimizer::Adam ? "adam" : "gd";
}

std::vector<double> sampling_distribution(std::span<const double> s_cum, double eta,
                                          double beta) {
  if (s_cum.empty()) throw std::invalid_argument("need at least one group");
  const double r = static_cast<double>(s_cum.size());
  const double top = *std::max_element(s_cum.begin(), s_cum.end());
  std::vector<double> p(s_cum.size());
  double z = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = std::exp(eta * (s_cum[i] - top));
    z = z + p[i];
  }
  for (auto& v : p) v = (1.0 - beta) * (v / z) + beta / r;
  return p;
}

double cumulative_estimate_update(double s_cum, bool selected, double p_selected, int y) {
  if (!selected) return s_cum;
  if (!(p_selected > 0.0)) throw std::invalid_argument("selection probability must be positive");
  return s_cum + static_cast<double>(y) / p_selected;
}

std::size_t sample_index(std::span<const double> distribution, double u) {
  double acc = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t i = 0; i < distribution.size(); ++i) {
    acc = acc + distribution[i];
    if (distribution[i] > 0.0) last_positive = i;
    if (u < acc) return i;
  }
  return last_positive;
}

std::size_t argmax(std::span<const double> scores) {
  if (scores.empty()) throw std::invalid_argument("argmax of an empty score list");
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i) {
    if (scores[i] > scores[best]) best = i;
  }
  return best;
}

NeuralGroup::NeuralGroup(int input_dim, const PolicyConfig& config, std::mt19937_64& rng)
    : params_(init_params(input_dim, config.width, config.depth, rng)) {
  const auto k = static_cast<Eigen::Index>(params_.size());
  v_ = Eigen::MatrixXd::Identity(k, k) * config.lambda;
  v_inv_ = Eigen::MatrixXd::Identity(k, k) / config.lambda;
}

std::size_t NeuralGroup::state_bytes() const {
  std::size_t bytes = sizeof(double) * (params_.theta.size() * 2 +
                                        static_cast<std::size_t>(v_.size() + v_inv_.size()));
  for (const auto& s : history_) bytes += sizeof(double) * (s.x.size() + 1);
  return bytes;
}

double NeuralGroup::confidence_width(const PolicyConfig& config) const {
  if (config.alpha_mode == AlphaMode::FixedNu) return config.nu;
  const double ratio = std::max(log_det_ratio_, 0.0);
  return config.nu * std::sqrt(ratio - 2.0 * std::log(config.delta)) +
         std::sqrt(config.lambda);
}

namespace {

// Partition of the active gradient coordinates into classes of identical
// rows. members[c] lists the coordinates of class c; rows of `gradients`
// (coordinates x arms) that are zero for every arm belong to no class.
struct RowClasses {
  std::vector<std::vector<Eigen::Index>> members;
};

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

RowClasses classify_rows(const RowMajor& gradients) {
  const Eigen::Index k = gradients.rows();
  const Eigen::Index arms = gradients.cols();
  RowClasses out;
  std::unordered_map<std::uint64_t, std::vector<std::size_t>> buckets;
  for (Eigen::Index r = 0; r < k; ++r) {
    const double* row = gradients.row(r).data();
    std::uint64_t h = 1469598103934665603ull;
    bool any = false;
    for (Eigen::Index a = 0; a < arms; ++a) {
      any = any || row[a] != 0.0;
      h = (h ^ std::bit_cast<std::uint64_t>(row[a] + 0.0)) * 1099511628211ull;
    }
    if (!any) continue;
    auto& bucket = buckets[h];
    bool placed = false;
    for (std::size_t c : bucket) {
      const double* other = gradients.row(out.members[c].front()).data();
      if (std::equal(row, row + arms, other)) {
        out.members[c].push_back(r);
        placed = true;
        break;
      }
    }
    if (!placed) {
      bucket.push_back(out.members.size());
      out.members.push_back({r});
    }
  }
  return out;
}

template <class Scalar>
std::vector<double> quadratic_forms(const Eigen::MatrixXd& inverse, const RowClasses& classes,
                                    const RowMajor& gradients) {
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  const auto n = static_cast<Eigen::Index>(classes.members.size());
  const Eigen::Index k = inverse.rows();
  const Eigen::Index arms = gradients.cols();
  // Sum the rows of each class, then the columns.
  Eigen::MatrixXd rows = Eigen::MatrixXd::Zero(k, n);
  for (Eigen::Index c = 0; c < n; ++c) {
    for (Eigen::Index member : classes.members[c]) rows.col(c) += inverse.col(member);
  }
  Mat sub(n, n);
  for (Eigen::Index c = 0; c < n; ++c) {
    for (Eigen::Index r = 0; r < n; ++r) {
      double acc = 0.0;
      for (Eigen::Index member : classes.members[r]) acc += rows(member, c);
      sub(r, c) = static_cast<Scalar>(acc);
    }
  }
  Mat g(n, arms);
  for (Eigen::Index a = 0; a < arms; ++a) {
    for (Eigen::Index r = 0; r < n; ++r) {
      g(r, a) = static_cast<Scalar>(gradients(classes.members[r].front(), a));
    }
  }
  const Mat ag = sub * g;
  std::vector<double> out(static_cast<std::size_t>(arms));
  for (Eigen::Index a = 0; a < arms; ++a) {
    out[a] = static_cast<double>(ag.col(a).dot(g.col(a)));
  }
  return out;
}

}  // namespace

std::vector<double> NeuralGroup::score(std::span<const std::vector<double>> inputs,
                                       double alpha, ScorePrecision precision) const {
  const auto k = static_cast<Eigen::Index>(params_.size());
  const auto arms = static_cast<Eigen::Index>(inputs.size());
  std::vector<double> flat;
  const std::vector<double> f = forward_and_grad_many(params_, inputs, flat);
  // flat is arm-major; store coordinate-major so each coordinate's values
  // across arms are contiguous.
  const RowMajor gradients =
      Eigen::Map<const Eigen::MatrixXd>(flat.data(), k, arms);

  const RowClasses classes = classify_rows(gradients);
  const std::vector<double> quad =
      precision == ScorePrecision::Double
          ? quadratic_forms<double>(v_inv_, classes, gradients)
          : quadratic_forms<float>(v_inv_, classes, gradients);

  const double m = static_cast<double>(params_.width);
  std::vector<double> scores(inputs.size());
  for (std::size_t a = 0; a < scores.size(); ++a) {
    scores[a] = f[a] + alpha * std::sqrt(std::max(quad[a], 0.0) / m);
    if (!std::isfinite(scores[a])) {
      throw NumericalFailure(fmt::format("arm {} produced a non-finite score", a));
    }
  }
  return scores;
}

void NeuralGroup::update_design(std::span<const double> gradient) {
  const auto k = static_cast<Eigen::Index>(params_.size());
  if (static_cast<Eigen::Index>(gradient.size()) != k) {
    throw std::invalid_argument("gradient length does not match parameter count");
  }
  const double m = static_cast<double>(params_.width);
  const Eigen::Map<const Eigen::VectorXd> g(gradient.data(), k);
  const Eigen::VectorXd w = v_inv_ * g;
  const double quad = g.dot(w);
  const double denom = m + quad;
  log_det_ratio_ += std::log1p(quad / m);
  for (Eigen::Index c = 0; c < k; ++c) {
    const double gc = gradient[c];
    const double wc = w[c];
    double* vcol = v_.col(c).data();
    double* icol = v_inv_.col(c).data();
    for (Eigen::Index r = 0; r < k; ++r) {
      vcol[r] = vcol[r] + gradient[r] * gc / m;
      icol[r] = icol[r] - w[r] * wc / denom;
    }
  }
}

void NeuralGroup::learn(std::span<const double> x, int y, const TrainOptions& options) {
  update_design(grad(params_, x));
  std::vector<double> input(x.begin(), x.end());
  const double label = static_cast<double>(y);
  auto [it, inserted] = grouped_index_.try_emplace(input, grouped_.size());
  if (inserted) grouped_.push_back(GroupedSample{input, 0.0, 0.0, 0.0});
  GroupedSample& entry = grouped_[it->second];
  entry.count += 1.0;
  entry.sum_y += label;
  entry.sum_y2 += label * label;
  history_.push_back(TrainSample{std::move(input), label});
  params_ = train(params_, std::span<const GroupedSample>(grouped_), options);
}

double arm_score(const NeuralGroup& group, std::span<const double> x, double alpha) {
  std::vector<double> g;
  const double f = forward_and_grad(group.params(), x, g);
  const auto k = static_cast<Eigen::Index>(g.size());
  const Eigen::Map<const Eigen::VectorXd> gv(g.data(), k);
  const double quad = gv.dot(group.v_inverse() * gv);
  const double m = static_cast<double>(group.params().width);
  const double score = f + alpha * std::sqrt(std::max(quad, 0.0) / m);
  if (!std::isfinite(score)) throw NumericalFailure("non-finite arm score");
  return score;
}

double confidence_width(const NeuralGroup& group, int t, const PolicyConfig& config) {
  if (t < 1) throw std::invalid_argument("round index must be >= 1");
  return group.confidence_width(config);
}

ExpNeuralUcb::ExpNeuralUcb(std::vector<std::size_t> links_per_group, FeatureEncoder encoder,
                           PolicyConfig config, std::uint64_t seed)
    : links_(std::move(links_per_group)), encoder_(encoder), config_(config), rng_(seed) {
  config_.validate();
  if (links_.empty()) throw std::invalid_argument("policy needs at least one group");
  groups_.reserve(links_.size());
  for (std::size_t links : links_) {
    groups_.emplace_back(static_cast<int>(FeatureEncoder::neural_dim(links)), config_, rng_);
  }
}

std::size_t ExpNeuralUcb::state_bytes() const {
  std::size_t bytes = 0;
  for (const auto& g : groups_) bytes += g.state_bytes();
  return bytes;
}

std::vector<double> ExpNeuralUcb::distribution() const {
  std::vector<double> s(groups_.size());
  for (std::size_t r = 0; r < groups_.size(); ++r) s[r] = groups_[r].s_cum();
  return sampling_distribution(s, config_.eta, config_.beta);
}

Decision ExpNeuralUcb::step(const RoundInput& input, const FeedbackFn& feedback) {
  if (input.arm_sets.size() != groups_.size()) {
    throw std::invalid_argument("arm sets do not match the number of groups");
  }
  Decision d;
  d.distribution = distribution();
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  d.group = sample_index(d.distribution, unit(rng_));

  const auto& arms = input.arm_sets[d.group];
  if (arms.empty()) throw std::invalid_argument("sampled group has no feasible arm");
  std::vector<std::vector<double>> x;
  x.reserve(arms.size());
  for (const auto& arm : arms) x.push_back(encoder_.neural(arm));

  NeuralGroup& group = groups_[d.group];
  const double alpha = confidence_width(group, input.t, config_);
  const auto scores = group.score(x, alpha, config_.score_precision);
  d.arm = argmax(scores);

  d.feedback = feedback(d.group, d.arm);
  if (!d.feedback.attacked) {
    group.learn(x[d.arm], d.feedback.outcome, config_.train_options());
  }
  group.set_s_cum(cumulative_estimate_update(group.s_cum(), true, d.distribution[d.group],
                                             d.feedback.outcome));
  return d;
}

}  // namespace qdnbandit
