#pragma once

// Minimal CNN building blocks for the patch scorer. Every layer processes a
// single (channels, height, width) tensor; patches are scored one at a time
// and the max over a bag is taken outside the network.

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "patchmil/image.hpp"
#include "patchmil/rng.hpp"

namespace patchmil::nn {

using Tensor = Image;

struct Shape {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::size_t size() const { return static_cast<std::size_t>(channels) * height * width; }
  friend bool operator==(const Shape&, const Shape&) = default;
};

inline Shape shape_of(const Tensor& t) { return {t.channels, t.height, t.width}; }

struct Parameter {
  std::vector<float> value;
  std::vector<float> grad;

  explicit Parameter(std::size_t n = 0) : value(n, 0.0f), grad(n, 0.0f) {}
};

class Layer {
 public:
  virtual ~Layer() = default;

  virtual std::string_view kind() const = 0;
  virtual Shape output_shape(Shape in) const = 0;
  virtual void forward(const Tensor& in, Tensor& out) const = 0;
  /// Accumulates parameter gradients and writes dLoss/dInput. `in` and
  /// `out` are the tensors seen by the matching forward call.
  virtual void backward(const Tensor& in, const Tensor& out, const Tensor& grad_out, Tensor& grad_in) = 0;
  virtual std::span<Parameter> params() { return {}; }
  virtual std::span<const Parameter> params() const { return {}; }
  virtual void initialize(Rng& /*rng*/) {}

  bool weight_bearing() const { return !params().empty(); }

  bool trainable = true;
};

/// 3x3 (or k x k) convolution, stride 1, zero padding k/2. Lowered to
/// im2col + GEMM.
class Conv2d final : public Layer {
 public:
  Conv2d(int in_channels, int out_channels, int kernel = 3);

  std::string_view kind() const override { return "conv2d"; }
  Shape output_shape(Shape in) const override;
  void forward(const Tensor& in, Tensor& out) const override;
  void backward(const Tensor& in, const Tensor& out, const Tensor& grad_out, Tensor& grad_in) override;
  std::span<Parameter> params() override { return params_; }
  std::span<const Parameter> params() const override { return params_; }
  void initialize(Rng& rng) override;

  int in_channels() const { return in_; }
  int out_channels() const { return out_; }

 private:
  int in_, out_, k_;
  std::vector<Parameter> params_;  // [0] weights (out x in*k*k), [1] bias
};

class Relu final : public Layer {
 public:
  std::string_view kind() const override { return "relu"; }
  Shape output_shape(Shape in) const override { return in; }
  void forward(const Tensor& in, Tensor& out) const override;
  void backward(const Tensor& in, const Tensor& out, const Tensor& grad_out, Tensor& grad_in) override;
};

/// 2x2 max pooling, stride 2 (odd trailing rows/columns dropped).
class MaxPool2 final : public Layer {
 public:
  std::string_view kind() const override { return "maxpool2"; }
  Shape output_shape(Shape in) const override { return {in.channels, in.height / 2, in.width / 2}; }
  void forward(const Tensor& in, Tensor& out) const override;
  void backward(const Tensor& in, const Tensor& out, const Tensor& grad_out, Tensor& grad_in) override;
};

class GlobalMaxPool final : public Layer {
 public:
  std::string_view kind() const override { return "global_max_pool"; }
  Shape output_shape(Shape in) const override { return {in.channels, 1, 1}; }
  void forward(const Tensor& in, Tensor& out) const override;
  void backward(const Tensor& in, const Tensor& out, const Tensor& grad_out, Tensor& grad_in) override;
};

class GlobalAvgPool final : public Layer {
 public:
  std::string_view kind() const override { return "global_avg_pool"; }
  Shape output_shape(Shape in) const override { return {in.channels, 1, 1}; }
  void forward(const Tensor& in, Tensor& out) const override;
  void backward(const Tensor& in, const Tensor& out, const Tensor& grad_out, Tensor& grad_in) override;
};

/// Fully connected layer over the flattened input.
class Dense final : public Layer {
 public:
  Dense(int in_features, int out_features);

  std::string_view kind() const override { return "dense"; }
  Shape output_shape(Shape in) const override;
  void forward(const Tensor& in, Tensor& out) const override;
  void backward(const Tensor& in, const Tensor& out, const Tensor& grad_out, Tensor& grad_in) override;
  std::span<Parameter> params() override { return params_; }
  std::span<const Parameter> params() const override { return params_; }
  void initialize(Rng& rng) override;

 private:
  int in_, out_;
  std::vector<Parameter> params_;  // [0] weights (out x in), [1] bias
};

/// Activations recorded by Network::forward_recorded for one backward pass.
struct Trace {
  std::vector<Tensor> activations;  // activations[0] is the input
};

class Network {
 public:
  Network() = default;
  Network(Network&&) = default;
  Network& operator=(Network&&) = default;

  void add(std::unique_ptr<Layer> layer) { layers_.push_back(std::move(layer)); }

  /// Inference pass. Const and free of shared scratch state, so safe to call
  /// concurrently.
  Tensor forward(const Tensor& input) const;
  Tensor forward_recorded(const Tensor& input, Trace& trace) const;
  /// Backpropagates `grad_output` through a recorded pass, accumulating into
  /// the gradients of trainable layers. Returns dLoss/dInput.
  Tensor backward(const Trace& trace, const Tensor& grad_output);

  void zero_grad();
  void initialize(Rng& rng);

  std::size_t size() const { return layers_.size(); }
  Layer& layer(std::size_t i) { return *layers_[i]; }
  const Layer& layer(std::size_t i) const { return *layers_[i]; }

  /// Indices (into layers) of weight-bearing layers, in order.
  std::vector<std::size_t> weight_layer_indices() const;

 private:
  std::vector<std::unique_ptr<Layer>> layers_;
};

}  // namespace patchmil::nn
