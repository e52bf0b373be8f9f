#pragma once

#include <cstdint>
#include <iosfwd>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "ddpgwb/rng.hpp"

// Dense networks with hand-written backprop, Adam and Polyak averaging.
// Batched calls take one sample per column.
namespace ddpgwb::funcapprox {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class Activation : std::uint32_t { Identity = 0, ReLU = 1, Tanh = 2, Sigmoid = 3 };

std::string_view to_string(Activation act);

struct Layer {
  Matrix weights;  // out x in
  Vector bias;
};

/// Per-layer activations from a batched forward pass; entry 0 is the input.
struct ForwardCache {
  std::vector<Matrix> activations;
  const Matrix& output() const { return activations.back(); }
};

struct GradientBundle {
  std::vector<Matrix> weights;
  std::vector<Vector> bias;
  Matrix input;  // d/d input, one column per sample; empty if not requested

  Vector flatten() const;
};

class MlpNetwork {
 public:
  MlpNetwork() = default;
  /// Zero-initialised network. `dims` = {input, hidden..., output}.
  MlpNetwork(std::vector<int> dims, Activation hidden, Activation output);

  /// Uniform(+-1/sqrt(fan_in)) weights and biases; the last layer is scaled by `final_scale`.
  static MlpNetwork random(std::vector<int> dims, Activation hidden, Activation output, Rng& rng,
                           double final_scale = 1e-3);

  Vector forward(const Vector& input) const;
  Matrix forward(const Matrix& inputs) const;
  Matrix forward(const Matrix& inputs, ForwardCache& cache) const;

  /// Gradients of sum(upstream .* output) for the batch in `cache`. Parameter
  /// gradients are summed over columns, so callers fold any 1/N into `upstream`.
  GradientBundle backward(const ForwardCache& cache, const Matrix& upstream, bool want_params = true,
                          bool want_input = false) const;

  const std::vector<int>& dims() const { return dims_; }
  int input_dim() const { return dims_.front(); }
  int output_dim() const { return dims_.back(); }
  Activation hidden_activation() const { return hidden_; }
  Activation output_activation() const { return output_; }
  std::vector<Layer>& layers() { return layers_; }
  const std::vector<Layer>& layers() const { return layers_; }

  Eigen::Index parameter_count() const;
  /// Layer by layer: weights column-major, then bias.
  Vector flat_parameters() const;
  void set_flat_parameters(const Vector& flat);

  bool same_topology(const MlpNetwork& other) const;
  bool operator==(const MlpNetwork& other) const;

 private:
  Activation activation_of(std::size_t layer) const { return layer + 1 == layers_.size() ? output_ : hidden_; }

  std::vector<int> dims_;
  Activation hidden_ = Activation::ReLU;
  Activation output_ = Activation::Identity;
  std::vector<Layer> layers_;
};

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::int64_t step_count = 0;
  std::vector<Matrix> m_weights, v_weights;
  std::vector<Vector> m_bias, v_bias;

  AdamState() = default;
  explicit AdamState(const MlpNetwork& net);
};

/// Bias-corrected Adam. Throws NumericalFault, leaving everything untouched,
/// if any gradient entry is not finite.
void adam_step(MlpNetwork& net, const GradientBundle& grads, AdamState& state, double lr);

/// target <- tau * online + (1 - tau) * target.
void soft_update(MlpNetwork& target, const MlpNetwork& online, double tau);

/// Network block of the checkpoint format: layer count, dims, activation
/// codes, then float32 weights (row-major) and biases, all little-endian.
void write_network(std::ostream& out, const MlpNetwork& net);
MlpNetwork read_network(std::istream& in);

// Little-endian scalar I/O shared with the checkpoint writer.
void write_u32(std::ostream& out, std::uint32_t v);
void write_u64(std::ostream& out, std::uint64_t v);
void write_f32(std::ostream& out, float v);
void write_f64(std::ostream& out, double v);
std::uint32_t read_u32(std::istream& in);
std::uint64_t read_u64(std::istream& in);
float read_f32(std::istream& in);
double read_f64(std::istream& in);

}  // namespace ddpgwb::funcapprox
