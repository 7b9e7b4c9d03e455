#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include <Eigen/Dense>

namespace knnrobust::nn {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

enum class Activation : std::uint32_t { linear = 0, relu = 1, tanh = 2 };

struct DenseLayer {
  Matrix weights;  // out x in
  Vector biases;   // out
  Activation activation = Activation::linear;

  std::size_t in_dim() const { return static_cast<std::size_t>(weights.cols()); }
  std::size_t out_dim() const { return static_cast<std::size_t>(weights.rows()); }
};

/// Values kept from a forward pass for backprop.
struct ForwardTrace {
  std::vector<Vector> inputs;  // inputs[l] feeds layer l; inputs.back() is the output
  std::vector<Vector> pre;     // pre-activations per layer
  const Vector& output() const { return inputs.back(); }
};

struct LayerGradients {
  Matrix weights;
  Vector biases;
};

struct Gradients {
  std::vector<LayerGradients> layers;
  Vector input;

  Gradients& operator+=(const Gradients& other);
  bool all_finite() const;
};

/// Fully connected feed-forward network.
class Mlp {
 public:
  Mlp() = default;
  /// Throws InvalidArgument unless adjacent layer shapes chain.
  explicit Mlp(std::vector<DenseLayer> layers);

  /// Glorot-uniform weights in +-sqrt(6 / (fan_in + fan_out)) and zero biases.
  /// Hidden layers use `hidden_activation`, the last layer `output_activation`.
  static Mlp glorot(std::size_t in_dim, const std::vector<std::size_t>& hidden, std::size_t out_dim,
                    Activation hidden_activation, Activation output_activation, std::uint64_t seed);

  std::size_t in_dim() const { return layers_.front().in_dim(); }
  std::size_t out_dim() const { return layers_.back().out_dim(); }
  std::size_t parameter_count() const;

  Vector forward(const Vector& x) const;
  ForwardTrace forward_trace(const Vector& x) const;

  /// Gradients of dot(upstream, output) w.r.t. every parameter and the input.
  Gradients backward(const ForwardTrace& trace, const Vector& upstream) const;

  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::vector<DenseLayer>& mutable_layers() { return layers_; }

  friend bool operator==(const Mlp& a, const Mlp& b);

 private:
  void check_input(const Vector& x) const;
  std::vector<DenseLayer> layers_;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// First/second moment accumulators shaped like one Mlp's parameters.
struct AdamState {
  AdamConfig config;
  std::uint64_t t = 0;
  std::vector<LayerGradients> m;
  std::vector<LayerGradients> v;

  AdamState() = default;
  AdamState(const Mlp& net, AdamConfig config);
};

/// One bias-corrected Adam update (descent on the loss whose gradients are
/// given). Throws DivergenceError on a non-finite gradient, leaving the
/// network and state untouched.
void adam_step(Mlp& net, const Gradients& grads, AdamState& state);

/// Checkpoint: "MLP1", u32 layer count, then per layer u32 in, u32 out,
/// u32 activation tag, out*in f64 weights (row-major), out f64 biases.
void save_mlp(const Mlp& net, const std::filesystem::path& path);
Mlp load_mlp(const std::filesystem::path& path);

}  // namespace knnrobust::nn
