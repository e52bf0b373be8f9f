#include "ddpgwb/funcapprox.hpp"

#include <bit>
#include <cmath>
#include <istream>
#include <ostream>

#include "ddpgwb/errors.hpp"

namespace ddpgwb::funcapprox {

namespace {

void apply_activation(Activation act, Matrix& z) {
  switch (act) {
    case Activation::Identity: break;
    case Activation::ReLU: z = z.cwiseMax(0.0); break;
    case Activation::Tanh: z = z.array().tanh(); break;
    case Activation::Sigmoid: z = (1.0 + (-z.array()).exp()).inverse(); break;
  }
}

// Turns dL/d(output) into dL/d(pre-activation), given the activation's output y.
void activation_backward(Activation act, const Matrix& y, Matrix& grad) {
  switch (act) {
    case Activation::Identity: break;
    case Activation::ReLU: grad = (y.array() > 0.0).select(grad, 0.0); break;
    case Activation::Tanh: grad.array() *= 1.0 - y.array().square(); break;
    case Activation::Sigmoid: grad.array() *= y.array() * (1.0 - y.array()); break;
  }
}

Activation activation_from_code(std::uint32_t code) {
  if (code > 3) throw ContractViolation("read_network: unknown activation code");
  return static_cast<Activation>(code);
}

template <class T>
void write_le(std::ostream& out, T v) {
  char bytes[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(bytes, sizeof(T));
}

template <class T>
T read_le(std::istream& in) {
  unsigned char bytes[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T))) throw ContractViolation("checkpoint truncated");
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(bytes[i]) << (8 * i);
  return v;
}

}  // namespace

std::string_view to_string(Activation act) {
  switch (act) {
    case Activation::Identity: return "identity";
    case Activation::ReLU: return "relu";
    case Activation::Tanh: return "tanh";
    case Activation::Sigmoid: return "sigmoid";
  }
  return "?";
}

Vector GradientBundle::flatten() const {
  Eigen::Index n = 0;
  for (std::size_t l = 0; l < weights.size(); ++l) n += weights[l].size() + bias[l].size();
  Vector flat(n);
  Eigen::Index k = 0;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    flat.segment(k, weights[l].size()) = weights[l].reshaped();
    k += weights[l].size();
    flat.segment(k, bias[l].size()) = bias[l];
    k += bias[l].size();
  }
  return flat;
}

MlpNetwork::MlpNetwork(std::vector<int> dims, Activation hidden, Activation output)
    : dims_(std::move(dims)), hidden_(hidden), output_(output) {
  if (dims_.size() < 2) throw ContractViolation("MlpNetwork: need at least input and output dims");
  for (int d : dims_)
    if (d <= 0) throw ContractViolation("MlpNetwork: layer width must be positive");
  for (std::size_t l = 0; l + 1 < dims_.size(); ++l)
    layers_.push_back({Matrix::Zero(dims_[l + 1], dims_[l]), Vector::Zero(dims_[l + 1])});
}

MlpNetwork MlpNetwork::random(std::vector<int> dims, Activation hidden, Activation output, Rng& rng,
                              double final_scale) {
  MlpNetwork net(std::move(dims), hidden, output);
  for (std::size_t l = 0; l < net.layers_.size(); ++l) {
    Layer& layer = net.layers_[l];
    double bound = 1.0 / std::sqrt(static_cast<double>(layer.weights.cols()));
    if (l + 1 == net.layers_.size()) bound *= final_scale;
    for (Eigen::Index c = 0; c < layer.weights.cols(); ++c)
      for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) layer.weights(r, c) = rng.uniform(-bound, bound);
    for (Eigen::Index r = 0; r < layer.bias.size(); ++r) layer.bias[r] = rng.uniform(-bound, bound);
  }
  return net;
}

Vector MlpNetwork::forward(const Vector& input) const {
  return forward(Matrix(input)).col(0);
}

Matrix MlpNetwork::forward(const Matrix& inputs) const {
  if (inputs.rows() != input_dim()) throw ContractViolation("mlp forward: input dimension mismatch");
  Matrix a = inputs;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    Matrix z = layers_[l].weights * a;
    z.colwise() += layers_[l].bias;
    apply_activation(activation_of(l), z);
    a = std::move(z);
  }
  return a;
}

Matrix MlpNetwork::forward(const Matrix& inputs, ForwardCache& cache) const {
  if (inputs.rows() != input_dim()) throw ContractViolation("mlp forward: input dimension mismatch");
  cache.activations.resize(layers_.size() + 1);
  cache.activations[0] = inputs;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    Matrix& z = cache.activations[l + 1];
    z.noalias() = layers_[l].weights * cache.activations[l];
    z.colwise() += layers_[l].bias;
    apply_activation(activation_of(l), z);
  }
  return cache.activations.back();
}

GradientBundle MlpNetwork::backward(const ForwardCache& cache, const Matrix& upstream, bool want_params,
                                    bool want_input) const {
  if (cache.activations.size() != layers_.size() + 1) throw ContractViolation("mlp backward: stale cache");
  const Matrix& out = cache.activations.back();
  if (upstream.rows() != out.rows() || upstream.cols() != out.cols())
    throw ContractViolation("mlp backward: upstream shape mismatch");

  GradientBundle g;
  if (want_params) {
    g.weights.resize(layers_.size());
    g.bias.resize(layers_.size());
  }
  Matrix delta = upstream;
  for (std::size_t l = layers_.size(); l-- > 0;) {
    activation_backward(activation_of(l), cache.activations[l + 1], delta);
    if (want_params) {
      g.weights[l].noalias() = delta * cache.activations[l].transpose();
      g.bias[l] = delta.rowwise().sum();
    }
    if (l > 0 || want_input) {
      Matrix next;
      next.noalias() = layers_[l].weights.transpose() * delta;
      delta = std::move(next);
    }
  }
  if (want_input) g.input = std::move(delta);
  return g;
}

Eigen::Index MlpNetwork::parameter_count() const {
  Eigen::Index n = 0;
  for (const Layer& l : layers_) n += l.weights.size() + l.bias.size();
  return n;
}

Vector MlpNetwork::flat_parameters() const {
  Vector flat(parameter_count());
  Eigen::Index k = 0;
  for (const Layer& l : layers_) {
    flat.segment(k, l.weights.size()) = l.weights.reshaped();
    k += l.weights.size();
    flat.segment(k, l.bias.size()) = l.bias;
    k += l.bias.size();
  }
  return flat;
}

void MlpNetwork::set_flat_parameters(const Vector& flat) {
  if (flat.size() != parameter_count()) throw ContractViolation("set_flat_parameters: size mismatch");
  Eigen::Index k = 0;
  for (Layer& l : layers_) {
    l.weights.reshaped() = flat.segment(k, l.weights.size());
    k += l.weights.size();
    l.bias = flat.segment(k, l.bias.size());
    k += l.bias.size();
  }
}

bool MlpNetwork::same_topology(const MlpNetwork& other) const {
  return dims_ == other.dims_ && hidden_ == other.hidden_ && output_ == other.output_;
}

bool MlpNetwork::operator==(const MlpNetwork& other) const {
  if (!same_topology(other)) return false;
  for (std::size_t l = 0; l < layers_.size(); ++l)
    if (layers_[l].weights != other.layers_[l].weights || layers_[l].bias != other.layers_[l].bias) return false;
  return true;
}

AdamState::AdamState(const MlpNetwork& net) {
  for (const Layer& l : net.layers()) {
    m_weights.push_back(Matrix::Zero(l.weights.rows(), l.weights.cols()));
    v_weights.push_back(Matrix::Zero(l.weights.rows(), l.weights.cols()));
    m_bias.push_back(Vector::Zero(l.bias.size()));
    v_bias.push_back(Vector::Zero(l.bias.size()));
  }
}

void adam_step(MlpNetwork& net, const GradientBundle& grads, AdamState& state, double lr) {
  auto& layers = net.layers();
  if (grads.weights.size() != layers.size() || state.m_weights.size() != layers.size())
    throw ContractViolation("adam_step: layer count mismatch");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (grads.weights[l].rows() != layers[l].weights.rows() || grads.weights[l].cols() != layers[l].weights.cols() ||
        grads.bias[l].size() != layers[l].bias.size())
      throw ContractViolation("adam_step: gradient shape mismatch");
    if (!grads.weights[l].allFinite() || !grads.bias[l].allFinite())
      throw NumericalFault("adam_step: non-finite gradient");
  }

  state.step_count += 1;
  const double t = static_cast<double>(state.step_count);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  const double b1 = state.beta1, b2 = state.beta2, eps = state.eps;
  auto update = [&](auto& p, auto& m, auto& v, const auto& g) {
    m = b1 * m + (1.0 - b1) * g;
    v = b2 * v + (1.0 - b2) * g.cwiseProduct(g);
    p.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
  };
  for (std::size_t l = 0; l < layers.size(); ++l) {
    update(layers[l].weights, state.m_weights[l], state.v_weights[l], grads.weights[l]);
    update(layers[l].bias, state.m_bias[l], state.v_bias[l], grads.bias[l]);
  }
}

void soft_update(MlpNetwork& target, const MlpNetwork& online, double tau) {
  if (!target.same_topology(online)) throw ContractViolation("soft_update: topology mismatch");
  if (!(tau >= 0.0 && tau <= 1.0)) throw ContractViolation("soft_update: tau outside [0, 1]");
  for (std::size_t l = 0; l < target.layers().size(); ++l) {
    Layer& t = target.layers()[l];
    const Layer& o = online.layers()[l];
    t.weights = tau * o.weights + (1.0 - tau) * t.weights;
    t.bias = tau * o.bias + (1.0 - tau) * t.bias;
  }
}

void write_u32(std::ostream& out, std::uint32_t v) { write_le(out, v); }
void write_u64(std::ostream& out, std::uint64_t v) { write_le(out, v); }
void write_f32(std::ostream& out, float v) { write_le(out, std::bit_cast<std::uint32_t>(v)); }
void write_f64(std::ostream& out, double v) { write_le(out, std::bit_cast<std::uint64_t>(v)); }
std::uint32_t read_u32(std::istream& in) { return read_le<std::uint32_t>(in); }
std::uint64_t read_u64(std::istream& in) { return read_le<std::uint64_t>(in); }
float read_f32(std::istream& in) { return std::bit_cast<float>(read_le<std::uint32_t>(in)); }
double read_f64(std::istream& in) { return std::bit_cast<double>(read_le<std::uint64_t>(in)); }

void write_network(std::ostream& out, const MlpNetwork& net) {
  write_u32(out, static_cast<std::uint32_t>(net.layers().size()));
  for (int d : net.dims()) write_u32(out, static_cast<std::uint32_t>(d));
  write_u32(out, static_cast<std::uint32_t>(net.hidden_activation()));
  write_u32(out, static_cast<std::uint32_t>(net.output_activation()));
  for (const Layer& l : net.layers()) {
    for (Eigen::Index r = 0; r < l.weights.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weights.cols(); ++c) write_f32(out, static_cast<float>(l.weights(r, c)));
    for (Eigen::Index r = 0; r < l.bias.size(); ++r) write_f32(out, static_cast<float>(l.bias[r]));
  }
}

MlpNetwork read_network(std::istream& in) {
  const std::uint32_t layer_count = read_u32(in);
  if (layer_count == 0 || layer_count > 64) throw ContractViolation("read_network: implausible layer count");
  std::vector<int> dims;
  for (std::uint32_t i = 0; i <= layer_count; ++i) {
    const std::uint32_t d = read_u32(in);
    if (d == 0 || d > (1u << 20)) throw ContractViolation("read_network: implausible layer width");
    dims.push_back(static_cast<int>(d));
  }
  const Activation hidden = activation_from_code(read_u32(in));
  const Activation output = activation_from_code(read_u32(in));
  MlpNetwork net(dims, hidden, output);
  for (Layer& l : net.layers()) {
    for (Eigen::Index r = 0; r < l.weights.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weights.cols(); ++c) l.weights(r, c) = read_f32(in);
    for (Eigen::Index r = 0; r < l.bias.size(); ++r) l.bias[r] = read_f32(in);
  }
  return net;
}

}  // namespace ddpgwb::funcapprox
