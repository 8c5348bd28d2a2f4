#include "qdnbandit/neural.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <istream>
#include <map>
#include <ostream>

#include <fmt/format.h>

namespace qdnbandit {

std::size_t MLPParams::parameter_count(int input_dim, int width, int depth) {
  const auto d = static_cast<std::size_t>(input_dim);
  const auto m = static_cast<std::size_t>(width);
  const auto hidden = static_cast<std::size_t>(depth - 2);
  return m * d + m * m * hidden + m;
}

std::size_t MLPParams::layer_offset(int l) const {
  std::size_t offset = 0;
  for (int i = 0; i < l; ++i) {
    offset += static_cast<std::size_t>(layer_rows(i)) * layer_cols(i);
  }
  return offset;
}

MLPParams init_params(int input_dim, int width, int depth, std::mt19937_64& rng) {
  if (width < 2 || width % 2 != 0) {
    throw std::invalid_argument(fmt::format("width must be even, got {}", width));
  }
  if (input_dim < 2 || input_dim % 2 != 0) {
    throw std::invalid_argument(
        fmt::format("input dimension must be even, got {}", input_dim));
  }
  if (depth < 2) throw std::invalid_argument("depth must be >= 2");

  MLPParams p;
  p.input_dim = input_dim;
  p.width = width;
  p.depth = depth;
  p.theta.assign(MLPParams::parameter_count(input_dim, width, depth), 0.0);

  const int half = width / 2;
  std::normal_distribution<double> hidden(0.0, std::sqrt(4.0 / width));
  std::normal_distribution<double> output(0.0, std::sqrt(2.0 / width));

  for (int l = 0; l + 1 < depth; ++l) {
    const int cols = p.layer_cols(l);
    const int half_cols = cols / 2;
    double* w = p.theta.data() + p.layer_offset(l);
    for (int i = 0; i < half; ++i) {
      for (int j = 0; j < half_cols; ++j) {
        const double z = hidden(rng);
        w[i * cols + j] = z;
        w[(i + half) * cols + (j + half_cols)] = z;
      }
    }
  }
  double* last = p.theta.data() + p.layer_offset(depth - 1);
  for (int i = 0; i < half; ++i) {
    const double z = output(rng);
    last[i] = z;
    last[i + half] = -z;
  }
  p.theta0 = p.theta;
  return p;
}

namespace {

void check_input(const MLPParams& p, std::span<const double> x) {
  if (static_cast<int>(x.size()) != p.input_dim) {
    throw std::invalid_argument(fmt::format(
        "input has dimension {}, network expects {}", x.size(), p.input_dim));
  }
}

// Evaluates one parameter vector on many inputs. Hidden weights are kept
// transposed so the inner loops run over contiguous memory; the accumulation
// order of every pre-activation is still j = 0, 1, ..., cols - 1.
class Evaluator {
 public:
  Evaluator(const MLPParams& p, std::span<const double> theta)
      : p_(p), theta_(theta), sqrt_m_(std::sqrt(static_cast<double>(p.width))) {
    const int hidden_layers = p.depth - 1;
    transposed_.resize(hidden_layers);
    pre_.resize(hidden_layers);
    post_.resize(hidden_layers);
    for (int l = 0; l < hidden_layers; ++l) {
      const int rows = p.layer_rows(l);
      const int cols = p.layer_cols(l);
      const double* w = theta.data() + p.layer_offset(l);
      auto& t = transposed_[l];
      t.resize(static_cast<std::size_t>(rows) * cols);
      for (int i = 0; i < rows; ++i) {
        for (int j = 0; j < cols; ++j) t[j * rows + i] = w[i * cols + j];
      }
      pre_[l].resize(rows);
      post_[l].resize(rows);
    }
    delta_.resize(p.width);
    delta_prev_.resize(p.width);
    last_ = theta.data() + p.layer_offset(p.depth - 1);
  }

  double forward(std::span<const double> x) {
    const int m = p_.width;
    std::span<const double> input = x;
    for (std::size_t l = 0; l < transposed_.size(); ++l) {
      const int cols = p_.layer_cols(static_cast<int>(l));
      double* a = pre_[l].data();
      double* h = post_[l].data();
      const double* t = transposed_[l].data();
      std::fill(a, a + m, 0.0);
      for (int j = 0; j < cols; ++j) {
        const double xj = input[j];
        const double* col = t + static_cast<std::size_t>(j) * m;
        for (int i = 0; i < m; ++i) a[i] = a[i] + col[i] * xj;
      }
      for (int i = 0; i < m; ++i) h[i] = a[i] > 0.0 ? a[i] : 0.0;
      input = post_[l];
    }
    double s = 0.0;
    const double* h = post_.back().data();
    for (int i = 0; i < m; ++i) s = s + last_[i] * h[i];
    return sqrt_m_ * s;
  }

  // After forward(): visits gradient rows. For the output layer and for every
  // hidden row with a nonzero back-propagated signal, calls
  // row(offset, scale, input, cols) meaning g[offset + j] = scale * input[j].
  template <class RowFn>
  void backward(std::span<const double> x, RowFn&& row) {
    const int m = p_.width;
    const int hidden_layers = static_cast<int>(transposed_.size());
    row(p_.layer_offset(p_.depth - 1), sqrt_m_, post_.back().data(), m);

    const double* a_last = pre_.back().data();
    for (int i = 0; i < m; ++i) {
      delta_[i] = a_last[i] > 0.0 ? sqrt_m_ * last_[i] : 0.0;
    }
    for (int l = hidden_layers - 1; l >= 0; --l) {
      const int cols = p_.layer_cols(l);
      const double* input = l == 0 ? x.data() : post_[l - 1].data();
      const std::size_t offset = p_.layer_offset(l);
      for (int i = 0; i < m; ++i) {
        if (delta_[i] != 0.0) row(offset + static_cast<std::size_t>(i) * cols, delta_[i], input, cols);
      }
      if (l > 0) {
        const double* w = theta_.data() + offset;
        const double* a_prev = pre_[l - 1].data();
        for (int j = 0; j < m; ++j) {
          double s = 0.0;
          for (int i = 0; i < m; ++i) s = s + w[i * cols + j] * delta_[i];
          delta_prev_[j] = a_prev[j] > 0.0 ? s : 0.0;
        }
        std::swap(delta_, delta_prev_);
      }
    }
  }

 private:
  const MLPParams& p_;
  std::span<const double> theta_;
  double sqrt_m_;
  const double* last_ = nullptr;
  std::vector<std::vector<double>> transposed_;
  std::vector<std::vector<double>> pre_;
  std::vector<std::vector<double>> post_;
  std::vector<double> delta_;
  std::vector<double> delta_prev_;
};

}  // namespace

double forward(const MLPParams& params, std::span<const double> x) {
  check_input(params, x);
  Evaluator eval(params, params.theta);
  return eval.forward(x);
}

double forward_and_grad(const MLPParams& params, std::span<const double> x,
                        std::vector<double>& out) {
  check_input(params, x);
  Evaluator eval(params, params.theta);
  const double f = eval.forward(x);
  out.assign(params.size(), 0.0);
  eval.backward(x, [&](std::size_t offset, double scale, const double* input, int cols) {
    double* g = out.data() + offset;
    for (int j = 0; j < cols; ++j) g[j] = scale * input[j];
  });
  return f;
}

std::vector<double> forward_and_grad_many(const MLPParams& params,
                                          std::span<const std::vector<double>> inputs,
                                          std::vector<double>& grads) {
  const std::size_t k = params.size();
  Evaluator eval(params, params.theta);
  std::vector<double> f(inputs.size());
  grads.assign(inputs.size() * k, 0.0);
  for (std::size_t a = 0; a < inputs.size(); ++a) {
    check_input(params, inputs[a]);
    f[a] = eval.forward(inputs[a]);
    double* base = grads.data() + a * k;
    eval.backward(inputs[a], [&](std::size_t offset, double scale, const double* input, int cols) {
      double* g = base + offset;
      for (int j = 0; j < cols; ++j) g[j] = scale * input[j];
    });
  }
  return f;
}

std::vector<double> grad(const MLPParams& params, std::span<const double> x) {
  std::vector<double> g;
  forward_and_grad(params, x, g);
  return g;
}

std::vector<GroupedSample> group_samples(std::span<const TrainSample> samples) {
  std::vector<GroupedSample> out;
  std::map<std::vector<double>, std::size_t> index;
  for (const auto& s : samples) {
    auto [it, inserted] = index.try_emplace(s.x, out.size());
    if (inserted) out.push_back(GroupedSample{s.x, 0.0, 0.0, 0.0});
    auto& g = out[it->second];
    g.count += 1.0;
    g.sum_y += s.y;
    g.sum_y2 += s.y * s.y;
  }
  return out;
}

namespace {

// Accumulates the full-batch loss gradient into g (resized and zeroed) and
// returns the loss. Group contributions are added in order followed by the
// regularizer term.
double loss_and_gradient(const MLPParams& p, std::span<const double> theta,
                         std::span<const GroupedSample> samples, double lambda,
                         std::vector<double>* g) {
  Evaluator eval(p, theta);
  if (g) g->assign(theta.size(), 0.0);
  double data = 0.0;
  for (const auto& sample : samples) {
    check_input(p, sample.x);
    const double f = eval.forward(sample.x);
    data = data + (sample.count * f * f - 2.0 * f * sample.sum_y + sample.sum_y2) / 2.0;
    if (!g) continue;
    const double r = sample.count * f - sample.sum_y;
    double* out = g->data();
    eval.backward(sample.x, [&](std::size_t offset, double scale, const double* input, int cols) {
      double* row = out + offset;
      for (int j = 0; j < cols; ++j) row[j] = row[j] + r * (scale * input[j]);
    });
  }
  const double reg = static_cast<double>(p.width) * lambda;
  double dist = 0.0;
  for (std::size_t k = 0; k < theta.size(); ++k) {
    const double diff = theta[k] - p.theta0[k];
    dist = dist + diff * diff;
    if (g) (*g)[k] = (*g)[k] + reg * diff;
  }
  return data + reg * dist / 2.0;
}

}  // namespace

double training_loss(const MLPParams& params, std::span<const TrainSample> samples,
                     double lambda) {
  const auto grouped = group_samples(samples);
  return loss_and_gradient(params, params.theta, grouped, lambda, nullptr);
}

MLPParams train(const MLPParams& params, std::span<const TrainSample> samples,
                const TrainOptions& options) {
  const auto grouped = group_samples(samples);
  return train(params, std::span<const GroupedSample>(grouped), options);
}

MLPParams train(const MLPParams& params, std::span<const GroupedSample> samples,
                const TrainOptions& options) {
  if (samples.empty()) throw std::invalid_argument("training needs at least one sample");
  if (options.steps < 1) throw std::invalid_argument("training needs at least one step");
  if (!(options.step_size > 0.0)) throw std::invalid_argument("step size must be positive");

  MLPParams out = params;
  const std::size_t k = out.size();
  std::vector<double> g;
  std::vector<double> mom;
  std::vector<double> vel;
  if (options.optimizer == Optimizer::Adam) {
    mom.assign(k, 0.0);
    vel.assign(k, 0.0);
  }
  const double b1 = options.adam_beta1;
  const double b2 = options.adam_beta2;
  const double lr = options.step_size;

  for (int step = 1; step <= options.steps; ++step) {
    const double loss = loss_and_gradient(out, out.theta, samples, options.lambda, &g);
    if (!std::isfinite(loss)) {
      throw NumericalFailure(fmt::format("training loss became {} at step {}", loss, step));
    }
    if (options.optimizer == Optimizer::PlainGD) {
      for (std::size_t i = 0; i < k; ++i) out.theta[i] = out.theta[i] - lr * g[i];
    } else {
      const double c1 = 1.0 - std::pow(b1, step);
      const double c2 = 1.0 - std::pow(b2, step);
      for (std::size_t i = 0; i < k; ++i) {
        mom[i] = b1 * mom[i] + (1.0 - b1) * g[i];
        vel[i] = b2 * vel[i] + (1.0 - b2) * g[i] * g[i];
        const double mhat = mom[i] / c1;
        const double vhat = vel[i] / c2;
        out.theta[i] = out.theta[i] - lr * mhat / (std::sqrt(vhat) + options.adam_epsilon);
      }
    }
  }
  for (double v : out.theta) {
    if (!std::isfinite(v)) throw NumericalFailure("training produced non-finite parameters");
  }
  return out;
}

namespace {

constexpr std::array<char, 4> kMagic{'Q', 'M', 'L', 'P'};
constexpr std::uint32_t kCheckpointVersion = 1;

template <class T>
void write_le(std::ostream& out, T value) {
  std::array<unsigned char, sizeof(T)> bytes;
  std::memcpy(bytes.data(), &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  out.write(reinterpret_cast<const char*>(bytes.data()), sizeof(T));
}

template <class T>
T read_le(std::istream& in) {
  std::array<unsigned char, sizeof(T)> bytes;
  if (!in.read(reinterpret_cast<char*>(bytes.data()), sizeof(T))) {
    throw std::runtime_error("truncated checkpoint");
  }
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  T value;
  std::memcpy(&value, bytes.data(), sizeof(T));
  return value;
}

}  // namespace

void save_checkpoint(std::ostream& out, const MLPParams& params) {
  out.write(kMagic.data(), kMagic.size());
  write_le<std::uint32_t>(out, kCheckpointVersion);
  write_le<std::int32_t>(out, params.input_dim);
  write_le<std::int32_t>(out, params.width);
  write_le<std::int32_t>(out, params.depth);
  write_le<std::uint64_t>(out, params.theta.size());
  for (double v : params.theta) write_le(out, v);
  for (double v : params.theta0) write_le(out, v);
}

MLPParams load_checkpoint(std::istream& in) {
  std::array<char, 4> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kMagic) {
    throw std::runtime_error("not an MLP checkpoint");
  }
  if (read_le<std::uint32_t>(in) != kCheckpointVersion) {
    throw std::runtime_error("unsupported checkpoint version");
  }
  MLPParams p;
  p.input_dim = read_le<std::int32_t>(in);
  p.width = read_le<std::int32_t>(in);
  p.depth = read_le<std::int32_t>(in);
  const auto count = read_le<std::uint64_t>(in);
  if (p.depth < 2 || p.width < 1 || p.input_dim < 1 ||
      count != MLPParams::parameter_count(p.input_dim, p.width, p.depth)) {
    throw std::runtime_error("checkpoint shape header is inconsistent");
  }
  p.theta.resize(count);
  p.theta0.resize(count);
  for (auto& v : p.theta) v = read_le<double>(in);
  for (auto& v : p.theta0) v = read_le<double>(in);
  return p;
}

}  // namespace qdnbandit
