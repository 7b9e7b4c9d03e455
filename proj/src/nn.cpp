#include "knnrobust/nn.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <string>

#include "knnrobust/error.hpp"
#include "knnrobust/random.hpp"

namespace knnrobust::nn {

namespace {

Vector activate(const Vector& z, Activation a) {
  switch (a) {
    case Activation::relu:
      return z.cwiseMax(0.0);
    case Activation::tanh:
      return z.array().tanh().matrix();
    case Activation::linear:
      break;
  }
  return z;
}

// Derivative of the activation expressed through the pre-activation.
Vector activation_slope(const Vector& z, Activation a) {
  switch (a) {
    case Activation::relu:
      return (z.array() > 0.0).cast<double>().matrix();
    case Activation::tanh: {
      const Eigen::ArrayXd t = z.array().tanh();
      return (1.0 - t * t).matrix();
    }
    case Activation::linear:
      break;
  }
  return Vector::Ones(z.size());
}

}  // namespace

Gradients& Gradients::operator+=(const Gradients& other) {
  if (layers.size() != other.layers.size())
    throw InvalidArgument("gradient accumulation: layer count mismatch");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    layers[l].weights += other.layers[l].weights;
    layers[l].biases += other.layers[l].biases;
  }
  if (input.size() == other.input.size()) input += other.input;
  return *this;
}

bool Gradients::all_finite() const {
  for (const auto& l : layers)
    if (!l.weights.allFinite() || !l.biases.allFinite()) return false;
  return true;
}

Mlp::Mlp(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {
  if (layers_.empty()) throw InvalidArgument("Mlp needs at least one layer");
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& layer = layers_[l];
    if (layer.weights.rows() == 0 || layer.weights.cols() == 0 ||
        layer.biases.size() != layer.weights.rows())
      throw InvalidArgument("Mlp layer " + std::to_string(l) + " has inconsistent shapes");
    if (l > 0 && layer.in_dim() != layers_[l - 1].out_dim())
      throw InvalidArgument("Mlp layer " + std::to_string(l) + " does not chain");
    if (!layer.weights.allFinite() || !layer.biases.allFinite())
      throw InvalidArgument("Mlp layer " + std::to_string(l) + " has non-finite parameters");
  }
}

Mlp Mlp::glorot(std::size_t in_dim, const std::vector<std::size_t>& hidden, std::size_t out_dim,
                Activation hidden_activation, Activation output_activation, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::size_t> dims{in_dim};
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(out_dim);
  std::vector<DenseLayer> layers;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const auto fan_in = static_cast<Eigen::Index>(dims[l]);
    const auto fan_out = static_cast<Eigen::Index>(dims[l + 1]);
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    DenseLayer layer;
    layer.weights.resize(fan_out, fan_in);
    for (Eigen::Index r = 0; r < fan_out; ++r)
      for (Eigen::Index c = 0; c < fan_in; ++c) layer.weights(r, c) = dist(rng);
    layer.biases = Vector::Zero(fan_out);
    layer.activation = (l + 2 == dims.size()) ? output_activation : hidden_activation;
    layers.push_back(std::move(layer));
  }
  return Mlp(std::move(layers));
}

std::size_t Mlp::parameter_count() const {
  std::size_t count = 0;
  for (const auto& l : layers_) count += l.out_dim() * (l.in_dim() + 1);
  return count;
}

void Mlp::check_input(const Vector& x) const {
  if (static_cast<std::size_t>(x.size()) != in_dim())
    throw InvalidArgument("Mlp input has dimension " + std::to_string(x.size()) + ", expected " +
                          std::to_string(in_dim()));
}

Vector Mlp::forward(const Vector& x) const {
  check_input(x);
  Vector h = x;
  for (const auto& layer : layers_) h = activate(layer.weights * h + layer.biases, layer.activation);
  return h;
}

ForwardTrace Mlp::forward_trace(const Vector& x) const {
  check_input(x);
  ForwardTrace trace;
  trace.inputs.reserve(layers_.size() + 1);
  trace.pre.reserve(layers_.size());
  trace.inputs.push_back(x);
  for (const auto& layer : layers_) {
    trace.pre.push_back(layer.weights * trace.inputs.back() + layer.biases);
    trace.inputs.push_back(activate(trace.pre.back(), layer.activation));
  }
  return trace;
}

Gradients Mlp::backward(const ForwardTrace& trace, const Vector& upstream) const {
  if (trace.pre.size() != layers_.size())
    throw InvalidArgument("backward: trace does not belong to this network");
  if (static_cast<std::size_t>(upstream.size()) != out_dim())
    throw InvalidArgument("backward: upstream gradient has dimension " +
                          std::to_string(upstream.size()) + ", expected " +
                          std::to_string(out_dim()));
  Gradients grads;
  grads.layers.resize(layers_.size());
  Vector g = upstream;
  for (std::size_t l = layers_.size(); l-- > 0;) {
    const auto& layer = layers_[l];
    const Vector delta = g.cwiseProduct(activation_slope(trace.pre[l], layer.activation));
    grads.layers[l].weights = delta * trace.inputs[l].transpose();
    grads.layers[l].biases = delta;
    g = layer.weights.transpose() * delta;
  }
  grads.input = std::move(g);
  return grads;
}

bool operator==(const Mlp& a, const Mlp& b) {
  if (a.layers_.size() != b.layers_.size()) return false;
  for (std::size_t l = 0; l < a.layers_.size(); ++l) {
    const auto& x = a.layers_[l];
    const auto& y = b.layers_[l];
    if (x.activation != y.activation || x.weights.rows() != y.weights.rows() ||
        x.weights.cols() != y.weights.cols() || x.weights != y.weights || x.biases != y.biases)
      return false;
  }
  return true;
}

AdamState::AdamState(const Mlp& net, AdamConfig cfg) : config(cfg) {
  for (const auto& layer : net.layers()) {
    m.push_back({Matrix::Zero(layer.weights.rows(), layer.weights.cols()),
                 Vector::Zero(layer.biases.size())});
    v.push_back(m.back());
  }
}

void adam_step(Mlp& net, const Gradients& grads, AdamState& state) {
  auto& layers = net.mutable_layers();
  if (grads.layers.size() != layers.size() || state.m.size() != layers.size())
    throw InvalidArgument("adam_step: shapes do not match the network");
  for (std::size_t l = 0; l < layers.size(); ++l)
    if (grads.layers[l].weights.rows() != layers[l].weights.rows() ||
        grads.layers[l].weights.cols() != layers[l].weights.cols() ||
        grads.layers[l].biases.size() != layers[l].biases.size())
      throw InvalidArgument("adam_step: gradient shape mismatch at layer " + std::to_string(l));
  if (!grads.all_finite()) throw DivergenceError("adam_step: non-finite gradient");

  const auto& c = state.config;
  state.t += 1;
  const double t = static_cast<double>(state.t);
  const double correct1 = 1.0 - std::pow(c.beta1, t);
  const double correct2 = 1.0 - std::pow(c.beta2, t);

  auto update = [&](auto& param, const auto& grad, auto& m, auto& v) {
    m = c.beta1 * m + (1.0 - c.beta1) * grad;
    v = c.beta2 * v + (1.0 - c.beta2) * grad.cwiseProduct(grad);
    param.array() -= c.lr * (m.array() / correct1) / ((v.array() / correct2).sqrt() + c.epsilon);
  };
  for (std::size_t l = 0; l < layers.size(); ++l) {
    update(layers[l].weights, grads.layers[l].weights, state.m[l].weights, state.v[l].weights);
    update(layers[l].biases, grads.layers[l].biases, state.m[l].biases, state.v[l].biases);
  }
}

void save_mlp(const Mlp& net, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  auto put_u32 = [&](std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); };
  auto put_f64 = [&](double v) { out.write(reinterpret_cast<const char*>(&v), 8); };
  out.write("MLP1", 4);
  put_u32(static_cast<std::uint32_t>(net.layers().size()));
  for (const auto& layer : net.layers()) {
    put_u32(static_cast<std::uint32_t>(layer.in_dim()));
    put_u32(static_cast<std::uint32_t>(layer.out_dim()));
    put_u32(static_cast<std::uint32_t>(layer.activation));
    for (Eigen::Index r = 0; r < layer.weights.rows(); ++r)
      for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) put_f64(layer.weights(r, c));
    for (Eigen::Index r = 0; r < layer.biases.size(); ++r) put_f64(layer.biases(r));
  }
  if (!out) throw IoError("write failed for " + path.string());
}

Mlp load_mlp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string() + " for reading");
  auto get = [&](void* dst, std::size_t bytes) {
    in.read(static_cast<char*>(dst), static_cast<std::streamsize>(bytes));
    if (static_cast<std::size_t>(in.gcount()) != bytes)
      throw FormatError(path.string() + ": truncated network checkpoint");
  };
  auto get_u32 = [&] {
    std::uint32_t v;
    get(&v, 4);
    return v;
  };
  auto get_f64 = [&] {
    double v;
    get(&v, 8);
    return v;
  };
  char magic[4];
  get(magic, 4);
  if (std::memcmp(magic, "MLP1", 4) != 0) throw FormatError(path.string() + ": bad magic");
  const auto count = get_u32();
  if (count == 0 || count > 1024) throw FormatError(path.string() + ": bad layer count");
  std::vector<DenseLayer> layers;
  for (std::uint32_t l = 0; l < count; ++l) {
    const auto in_dim = get_u32();
    const auto out_dim = get_u32();
    const auto tag = get_u32();
    if (tag > 2) throw FormatError(path.string() + ": unknown activation tag");
    if (in_dim == 0 || out_dim == 0 || in_dim > (1u << 20) || out_dim > (1u << 20))
      throw FormatError(path.string() + ": bad layer dimensions");
    DenseLayer layer;
    layer.activation = static_cast<Activation>(tag);
    layer.weights.resize(out_dim, in_dim);
    layer.biases.resize(out_dim);
    for (Eigen::Index r = 0; r < layer.weights.rows(); ++r)
      for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) layer.weights(r, c) = get_f64();
    for (Eigen::Index r = 0; r < layer.biases.size(); ++r) layer.biases(r) = get_f64();
    layers.push_back(std::move(layer));
  }
  try {
    return Mlp(std::move(layers));
  } catch (const InvalidArgument& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace knnrobust::nn
