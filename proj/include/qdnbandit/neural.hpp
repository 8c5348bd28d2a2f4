#pragma once

// Fully connected ReLU network used as the per-path reward model.
//
//   f(x; theta) = sqrt(m) * W_L relu(W_{L-1} relu(... relu(W_1 x)))
//
// Parameters are stored flat, layer-major and row-major within a layer:
// W_1 (m x d_in), W_2 .. W_{L-1} (m x m), W_L (1 x m). Gradients use the same
// coordinate order.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

namespace qdnbandit {

class NumericalFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Optimizer { PlainGD, Adam };

struct MLPParams {
  int input_dim = 0;
  int width = 0;
  int depth = 0;
  std::vector<double> theta;
  std::vector<double> theta0;  // initialization snapshot; anchors the regularizer

  static std::size_t parameter_count(int input_dim, int width, int depth);
  std::size_t size() const { return theta.size(); }

  // Offset and shape of layer l (0-based) inside theta.
  std::size_t layer_offset(int l) const;
  int layer_rows(int l) const { return l + 1 == depth ? 1 : width; }
  int layer_cols(int l) const { return l == 0 ? input_dim : width; }
};

struct TrainSample {
  std::vector<double> x;
  double y = 0.0;
};

/// Repeated inputs collapsed into one entry: count copies of x whose labels
/// sum to sum_y and whose squared labels sum to sum_y2.
struct GroupedSample {
  std::vector<double> x;
  double count = 0.0;
  double sum_y = 0.0;
  double sum_y2 = 0.0;
};

/// Groups identical inputs, keeping the order of first appearance.
std::vector<GroupedSample> group_samples(std::span<const TrainSample> samples);

struct TrainOptions {
  double lambda = 1.0;
  int steps = 8;
  double step_size = 1e-4;
  Optimizer optimizer = Optimizer::Adam;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
};

/// Block-diagonal hidden layers (Z, 0; 0, Z) with Z ~ N(0, 4/m) and output
/// layer (z, -z) with z ~ N(0, 2/m). Requires even width and input_dim, so
/// the output is exactly zero whenever both input halves coincide.
MLPParams init_params(int input_dim, int width, int depth, std::mt19937_64& rng);

double forward(const MLPParams& params, std::span<const double> x);

/// Gradient of forward() with respect to theta (length params.size()).
std::vector<double> grad(const MLPParams& params, std::span<const double> x);

/// Batched forward_and_grad: returns f(x_a) and fills grads (resized to
/// inputs.size() * params.size()) with gradient a at offset a * params.size().
std::vector<double> forward_and_grad_many(const MLPParams& params,
                                          std::span<const std::vector<double>> inputs,
                                          std::vector<double>& grads);

/// Writes the gradient into out (resized) and returns the forward value.
double forward_and_grad(const MLPParams& params, std::span<const double> x,
                        std::vector<double>& out);

/// sum_b (f(x_b) - y_b)^2 / 2 + m * lambda * |theta - theta0|^2 / 2
double training_loss(const MLPParams& params, std::span<const TrainSample> samples,
                     double lambda);

/// Runs options.steps optimizer steps on training_loss starting from params.
/// Throws NumericalFailure if the loss or gradient stops being finite.
MLPParams train(const MLPParams& params, std::span<const TrainSample> samples,
                const TrainOptions& options);

/// Same objective over grouped samples. Each group contributes
/// (count f^2 - 2 f sum_y + sum_y2) / 2, so the cost is per distinct input.
MLPParams train(const MLPParams& params, std::span<const GroupedSample> samples,
                const TrainOptions& options);

/// Checkpoint: magic "QMLP", u32 version, i32 input_dim, width, depth,
/// u64 count, then theta and theta0 as little-endian f64.
void save_checkpoint(std::ostream& out, const MLPParams& params);
MLPParams load_checkpoint(std::istream& in);

}  // namespace qdnbandit
