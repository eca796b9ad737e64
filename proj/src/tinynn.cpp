#include "fdctrack/tinynn.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <istream>
#include <ostream>

#include "fdctrack/detector.hpp"

namespace fdc::nn {

bool Matrix::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void matmul(const Matrix& a, const Matrix& b, Matrix& out) {
  if (a.cols() != b.rows()) throw ValidationError("matmul: inner dimensions differ");
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  out.resize(n, m);
  const double* bd = b.data().data();
  for (std::size_t i = 0; i < n; ++i) {
    double* __restrict orow = out.row(i).data();
    const double* arow = a.row(i).data();
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      const double* __restrict brow = bd + p * m;
      for (std::size_t j = 0; j < m; ++j) orow[j] += av * brow[j];
    }
  }
}

void matmul_at_b(const Matrix& a, const Matrix& b, Matrix& out) {
  if (a.rows() != b.rows()) throw ValidationError("matmul_at_b: row counts differ");
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  out.resize(k, m);
  double* od = out.data().data();
  for (std::size_t i = 0; i < n; ++i) {
    const double* arow = a.row(i).data();
    const double* __restrict brow = b.row(i).data();
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      double* __restrict orow = od + p * m;
      for (std::size_t j = 0; j < m; ++j) orow[j] += av * brow[j];
    }
  }
}

Matrix transpose(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  }
  return t;
}

std::size_t MlpParams::num_parameters() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.weight.size() + l.bias.size();
  return n;
}

MlpParams MlpParams::zeros_like() const {
  MlpParams z;
  for (const auto& l : layers) {
    z.layers.push_back({Matrix(l.weight.rows(), l.weight.cols()), std::vector<double>(l.bias.size(), 0.0), l.activation});
  }
  return z;
}

void MlpParams::validate() const {
  if (layers.empty()) throw ValidationError("mlp: no layers");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (layers[i].bias.size() != layers[i].weight.cols()) throw ValidationError("mlp: bias size mismatch");
    if (i > 0 && layers[i].weight.rows() != layers[i - 1].weight.cols()) {
      throw ValidationError("mlp: consecutive layer shapes do not compose");
    }
  }
}

MlpParams make_mlp(std::size_t in_dim, std::size_t width, std::size_t out_dim, std::size_t depth, Activation hidden,
                   Activation output, CounterRng& rng) {
  if (depth == 0) throw ValidationError("make_mlp: depth must be positive");
  MlpParams p;
  std::size_t fan_in = in_dim;
  for (std::size_t l = 0; l < depth; ++l) {
    const bool last = l + 1 == depth;
    const std::size_t fan_out = last ? out_dim : width;
    DenseLayer layer{Matrix(fan_in, fan_out), std::vector<double>(fan_out, 0.0), last ? output : hidden};
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (double& w : layer.weight.data()) w = rng.uniform(-limit, limit);
    p.layers.push_back(std::move(layer));
    fan_in = fan_out;
  }
  return p;
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

void apply_activation(Activation act, std::span<double> v) {
  switch (act) {
    case Activation::kIdentity:
      break;
    case Activation::kRelu:
      for (double& x : v) x = x > 0.0 ? x : 0.0;
      break;
    case Activation::kSigmoid:
      for (double& x : v) x = sigmoid(x);
      break;
  }
}

void activation_backward(Activation act, std::span<const double> out, std::span<double> grad) {
  switch (act) {
    case Activation::kIdentity:
      break;
    case Activation::kRelu:
      for (std::size_t i = 0; i < grad.size(); ++i) {
        if (!(out[i] > 0.0)) grad[i] = 0.0;
      }
      break;
    case Activation::kSigmoid:
      for (std::size_t i = 0; i < grad.size(); ++i) grad[i] *= out[i] * (1.0 - out[i]);
      break;
  }
}

namespace {

void apply_layer(const DenseLayer& layer, const Matrix& input, Matrix& out) {
  matmul(input, layer.weight, out);
  const std::size_t m = out.cols();
  for (std::size_t i = 0; i < out.rows(); ++i) {
    double* row = out.row(i).data();
    for (std::size_t j = 0; j < m; ++j) row[j] += layer.bias[j];
    apply_activation(layer.activation, {row, m});
  }
}

void check_input(const MlpParams& p, const Matrix& input) {
  if (p.layers.empty()) throw ValidationError("mlp: no layers");
  if (input.cols() != p.in_dim()) {
    throw ValidationError("mlp: input has " + std::to_string(input.cols()) + " columns, expected " +
                          std::to_string(p.in_dim()));
  }
  if (!input.all_finite()) throw ValidationError("mlp: non-finite input");
}

}  // namespace

Matrix mlp_infer(const MlpParams& p, const Matrix& input) {
  check_input(p, input);
  Matrix cur = input;
  Matrix next;
  for (const auto& layer : p.layers) {
    apply_layer(layer, cur, next);
    std::swap(cur, next);
  }
  return cur;
}

std::pair<Matrix, MlpCache> mlp_forward(const MlpParams& p, const Matrix& input, Mode mode, double dropout_prob,
                                        CounterRng* rng) {
  check_input(p, input);
  const bool dropout = mode == Mode::kTrain && dropout_prob > 0.0;
  if (dropout && rng == nullptr) throw ValidationError("mlp_forward: train-mode dropout needs an rng");
  if (dropout_prob < 0.0 || dropout_prob >= 1.0) throw ValidationError("mlp_forward: dropout_prob must be in [0, 1)");
  MlpCache cache;
  Matrix cur = input;
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    const auto& layer = p.layers[l];
    cache.shapes.emplace_back(layer.weight.rows(), layer.weight.cols());
    Matrix out;
    apply_layer(layer, cur, out);
    cache.inputs.push_back(std::move(cur));
    cache.outputs.push_back(out);
    const bool hidden = l + 1 < p.layers.size();
    if (dropout && hidden) {
      Matrix mask(out.rows(), out.cols());
      const double scale = 1.0 / (1.0 - dropout_prob);
      for (double& m : mask.data()) m = rng->bernoulli(dropout_prob) ? 0.0 : scale;
      for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] *= mask.data()[i];
      cache.masks.push_back(std::move(mask));
    } else {
      cache.masks.emplace_back();
    }
    cur = std::move(out);
  }
  return {std::move(cur), std::move(cache)};
}

MlpGradients mlp_backward(const MlpParams& p, const MlpCache& cache, const Matrix& grad_output) {
  if (cache.shapes.size() != p.layers.size()) throw ValidationError("mlp_backward: cache from a different network");
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    if (cache.shapes[l] != std::make_pair(p.layers[l].weight.rows(), p.layers[l].weight.cols())) {
      throw ValidationError("mlp_backward: cache shapes do not match parameters");
    }
  }
  const Matrix& last_out = cache.outputs.back();
  if (grad_output.rows() != last_out.rows() || grad_output.cols() != last_out.cols()) {
    throw ValidationError("mlp_backward: grad_output shape mismatch");
  }

  MlpGradients g;
  g.params = p.zeros_like();
  Matrix grad = grad_output;
  for (std::size_t li = p.layers.size(); li-- > 0;) {
    const auto& layer = p.layers[li];
    if (!cache.masks[li].data().empty()) {
      for (std::size_t i = 0; i < grad.size(); ++i) grad.data()[i] *= cache.masks[li].data()[i];
    }
    activation_backward(layer.activation, cache.outputs[li].data(), grad.data());
    auto& gl = g.params.layers[li];
    matmul_at_b(cache.inputs[li], grad, gl.weight);
    for (std::size_t i = 0; i < grad.rows(); ++i) {
      const auto row = grad.row(i);
      for (std::size_t j = 0; j < row.size(); ++j) gl.bias[j] += row[j];
    }
    Matrix next;
    matmul(grad, transpose(layer.weight), next);
    grad = std::move(next);
  }
  g.input = std::move(grad);
  return g;
}

BceResult bce_loss(std::span<const double> pred, std::span<const std::uint8_t> target) {
  if (pred.size() != target.size()) throw ValidationError("bce_loss: size mismatch");
  BceResult r;
  r.grad.resize(pred.size());
  if (pred.empty()) return r;
  constexpr double lo = 1e-7;
  constexpr double hi = 1.0 - 1e-7;
  const double inv_n = 1.0 / static_cast<double>(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (target[i] > 1) throw ValidationError("bce_loss: target must be 0 or 1");
    const double p = std::clamp(pred[i], lo, hi);
    // The clamp is flat outside [lo, hi], so the gradient vanishes there.
    const bool clamped = !(pred[i] > lo && pred[i] < hi);
    if (target[i]) {
      r.loss -= std::log(p);
      r.grad[i] = clamped ? 0.0 : -inv_n / p;
    } else {
      r.loss -= std::log(1.0 - p);
      r.grad[i] = clamped ? 0.0 : inv_n / (1.0 - p);
    }
  }
  r.loss *= inv_n;
  return r;
}

std::vector<std::span<double>> parameter_spans(MlpParams& p) {
  std::vector<std::span<double>> out;
  for (auto& l : p.layers) {
    out.push_back(l.weight.data());
    out.emplace_back(l.bias);
  }
  return out;
}

std::vector<std::span<const double>> parameter_spans(const MlpParams& p) {
  std::vector<std::span<const double>> out;
  for (const auto& l : p.layers) {
    out.push_back(l.weight.data());
    out.emplace_back(l.bias);
  }
  return out;
}

AdamState::AdamState(const std::vector<std::span<double>>& params) {
  for (const auto& s : params) {
    m.emplace_back(s.size(), 0.0);
    v.emplace_back(s.size(), 0.0);
  }
}

void adam_step(AdamState& s, const std::vector<std::span<double>>& params,
               const std::vector<std::span<const double>>& grads, double lr) {
  if (params.size() != grads.size() || params.size() != s.m.size()) {
    throw ValidationError("adam_step: parameter/gradient/state count mismatch");
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (params[k].size() != grads[k].size() || params[k].size() != s.m[k].size()) {
      throw ValidationError("adam_step: shape mismatch");
    }
    for (double g : grads[k]) {
      if (!std::isfinite(g)) throw ValidationError("adam_step: non-finite gradient");
    }
  }
  ++s.step;
  const double t = static_cast<double>(s.step);
  const double c1 = 1.0 - std::pow(s.beta1, t);
  const double c2 = 1.0 - std::pow(s.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& m = s.m[k];
    auto& v = s.v[k];
    for (std::size_t i = 0; i < params[k].size(); ++i) {
      const double g = grads[k][i];
      m[i] = s.beta1 * m[i] + (1.0 - s.beta1) * g;
      v[i] = s.beta2 * v[i] + (1.0 - s.beta2) * g * g;
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      params[k][i] -= lr * m_hat / (std::sqrt(v_hat) + s.epsilon);
    }
  }
}

namespace {

constexpr char kMagic[4] = {'T', 'N', 'N', 'B'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.put(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_f64(std::ostream& out, double d) {
  const auto v = std::bit_cast<std::uint64_t>(d);
  for (int i = 0; i < 8; ++i) out.put(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint64_t get_bytes(std::istream& in, int n) {
  std::uint64_t v = 0;
  for (int i = 0; i < n; ++i) {
    const int c = in.get();
    if (c == std::char_traits<char>::eof()) throw ValidationError("checkpoint: unexpected end of file");
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(c)) << (8 * i);
  }
  return v;
}

std::uint32_t get_u32(std::istream& in) { return static_cast<std::uint32_t>(get_bytes(in, 4)); }
double get_f64(std::istream& in) { return std::bit_cast<double>(get_bytes(in, 8)); }

}  // namespace

void write_mlp(std::ostream& out, const MlpParams& p) {
  p.validate();
  out.write(kMagic, 4);
  put_u32(out, kVersion);
  put_u32(out, static_cast<std::uint32_t>(p.layers.size()));
  for (const auto& l : p.layers) {
    put_u32(out, static_cast<std::uint32_t>(l.weight.rows()));
    put_u32(out, static_cast<std::uint32_t>(l.weight.cols()));
    put_u32(out, static_cast<std::uint32_t>(l.activation));
    for (double w : l.weight.data()) put_f64(out, w);
    for (double b : l.bias) put_f64(out, b);
  }
  if (!out) throw std::runtime_error("checkpoint: write failed");
}

MlpParams read_mlp(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4) || !std::equal(magic, magic + 4, kMagic)) throw ValidationError("checkpoint: bad magic");
  if (get_u32(in) != kVersion) throw ValidationError("checkpoint: unsupported version");
  const std::uint32_t n_layers = get_u32(in);
  if (n_layers == 0 || n_layers > 1024) throw ValidationError("checkpoint: implausible layer count");
  MlpParams p;
  for (std::uint32_t l = 0; l < n_layers; ++l) {
    const std::uint32_t rows = get_u32(in);
    const std::uint32_t cols = get_u32(in);
    const std::uint32_t act = get_u32(in);
    if (act > static_cast<std::uint32_t>(Activation::kSigmoid)) throw ValidationError("checkpoint: bad activation");
    if (static_cast<std::uint64_t>(rows) * cols > (1ULL << 28)) throw ValidationError("checkpoint: layer too large");
    DenseLayer layer{Matrix(rows, cols), std::vector<double>(cols), static_cast<Activation>(act)};
    for (double& w : layer.weight.data()) w = get_f64(in);
    for (double& b : layer.bias) b = get_f64(in);
    p.layers.push_back(std::move(layer));
  }
  p.validate();
  return p;
}

}  // namespace fdc::nn
