#pragma once

#include <algorithm>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fdctrack/rng.hpp"

namespace fdc::nn {

/// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0) : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }
  /// Reshape without preserving contents; reuses capacity.
  void resize(std::size_t rows, std::size_t cols) {
    rows_ = rows;
    cols_ = cols;
    data_.assign(rows * cols, 0.0);
  }
  bool all_finite() const;

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// out = a * b
void matmul(const Matrix& a, const Matrix& b, Matrix& out);
/// out = a^T * b
void matmul_at_b(const Matrix& a, const Matrix& b, Matrix& out);
Matrix transpose(const Matrix& a);

enum class Activation : std::uint32_t { kIdentity = 0, kRelu = 1, kSigmoid = 2 };

double sigmoid(double z);
/// In-place activation.
void apply_activation(Activation act, std::span<double> v);
/// Multiplies `grad` by the activation derivative, given the activation
/// output `out`. ReLU uses subgradient 0 at zero.
void activation_backward(Activation act, std::span<const double> out, std::span<double> grad);

struct DenseLayer {
  Matrix weight;              // in x out
  std::vector<double> bias;   // out
  Activation activation = Activation::kRelu;

  bool operator==(const DenseLayer&) const = default;
};

struct MlpParams {
  std::vector<DenseLayer> layers;

  std::size_t in_dim() const { return layers.empty() ? 0 : layers.front().weight.rows(); }
  std::size_t out_dim() const { return layers.empty() ? 0 : layers.back().weight.cols(); }
  std::size_t num_parameters() const;
  /// Same shapes, all zeros.
  MlpParams zeros_like() const;
  /// Throws ValidationError when layer shapes do not compose.
  void validate() const;

  bool operator==(const MlpParams&) const = default;
};

/// `depth` dense layers: in -> width -> ... -> width -> out. Hidden layers
/// use `hidden`, the last uses `output`. Weights are He-uniform
/// (limit sqrt(6 / fan_in)), biases zero.
MlpParams make_mlp(std::size_t in_dim, std::size_t width, std::size_t out_dim, std::size_t depth,
                   Activation hidden, Activation output, CounterRng& rng);

enum class Mode { kTrain, kInfer };

/// Everything needed to backpropagate one forward call.
struct MlpCache {
  std::vector<Matrix> inputs;       // input of each layer
  std::vector<Matrix> outputs;      // activation output of each layer (before dropout)
  std::vector<Matrix> masks;        // inverted-dropout multipliers, empty when unused
  std::vector<std::pair<std::size_t, std::size_t>> shapes;  // weight shapes at forward time
};

/// Inference-mode forward pass, no cache.
Matrix mlp_infer(const MlpParams& p, const Matrix& input);

/// Forward pass. In train mode inverted dropout (keep prob 1 - dropout_prob,
/// survivors scaled by 1 / (1 - dropout_prob)) follows every hidden
/// activation; `rng` is required then.
std::pair<Matrix, MlpCache> mlp_forward(const MlpParams& p, const Matrix& input, Mode mode, double dropout_prob,
                                        CounterRng* rng);

struct MlpGradients {
  MlpParams params;  // dL/dW, dL/db with the layout of the network
  Matrix input;      // dL/dinput
};

/// ReLU uses subgradient 0 at a zero pre-activation.
MlpGradients mlp_backward(const MlpParams& p, const MlpCache& cache, const Matrix& grad_output);

struct BceResult {
  double loss = 0.0;
  std::vector<double> grad;  // d loss / d pred
};

/// Mean binary cross-entropy with predictions clamped to [1e-7, 1 - 1e-7].
BceResult bce_loss(std::span<const double> pred, std::span<const std::uint8_t> target);

/// Flat views of every weight and bias, in layer order.
std::vector<std::span<double>> parameter_spans(MlpParams& p);
std::vector<std::span<const double>> parameter_spans(const MlpParams& p);

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t step = 0;
  std::vector<std::vector<double>> m, v;

  AdamState() = default;
  /// Zero moments shaped like `params`.
  explicit AdamState(const std::vector<std::span<double>>& params);
};

/// One bias-corrected Adam update. Non-finite gradients are rejected before
/// anything is modified.
void adam_step(AdamState& state, const std::vector<std::span<double>>& params,
               const std::vector<std::span<const double>>& grads, double lr);

// Binary checkpoint: "TNNB" magic, u32 version, u32 layer count, then per
// layer u32 in, u32 out, u32 activation, weights and biases as little-endian
// IEEE-754 doubles in row-major order.
void write_mlp(std::ostream& out, const MlpParams& p);
MlpParams read_mlp(std::istream& in);

}  // namespace fdc::nn
