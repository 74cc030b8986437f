#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "apnea/nn/tensor.hpp"

namespace apnea::nn {

enum class Mode { train, eval };

enum class LayerKind { conv2d, batch_norm, relu, max_pool2d, linear, bilstm, sigmoid, mean_pool_time };

std::string_view to_string(LayerKind kind);

/// Hyperparameters for one layer. Which fields matter depends on `kind`:
///   conv2d          in/out channels, kernel (odd), stride
///   batch_norm      in = channels
///   max_pool2d      pool_h x pool_w (stride equals the kernel, floor division)
///   linear          in/out features, applied to the last axis
///   bilstm          in = input features, hidden = units per direction
struct LayerSpec {
  LayerKind kind = LayerKind::relu;
  std::size_t in = 0;
  std::size_t out = 0;
  std::size_t kernel = 3;
  std::size_t stride = 1;
  std::size_t pool_h = 1;
  std::size_t pool_w = 1;
  std::size_t hidden = 0;

  void validate() const;

  static LayerSpec conv2d(std::size_t in, std::size_t out, std::size_t kernel = 3, std::size_t stride = 1);
  static LayerSpec batch_norm(std::size_t channels);
  static LayerSpec relu();
  static LayerSpec max_pool2d(std::size_t pool_h, std::size_t pool_w);
  static LayerSpec linear(std::size_t in, std::size_t out);
  static LayerSpec bilstm(std::size_t in, std::size_t hidden);
  static LayerSpec sigmoid();
  static LayerSpec mean_pool_time();
};

/// A named view of one model tensor. `grad` is null for non-trainable buffers
/// such as batch-norm running statistics.
struct StateRef {
  std::string name;
  Tensor* value = nullptr;
  Tensor* grad = nullptr;
};

struct Parameter {
  Tensor value;
  Tensor grad;

  explicit Parameter(Shape shape = {}) : value(shape), grad(shape) {}
};

/// Layers process a whole batch. A train-mode forward records what backward()
/// needs; backward() consumes that recording, accumulates parameter gradients,
/// and returns the gradient with respect to the input. Eval-mode forwards are
/// const and record nothing, so a frozen model can be shared.
class Layer {
 public:
  virtual ~Layer() = default;

  virtual LayerKind kind() const = 0;

  Tensor forward(Tensor input, Mode mode) {
    return mode == Mode::train ? forward_train(std::move(input)) : forward_eval(std::move(input));
  }
  virtual Tensor forward_train(Tensor input) = 0;
  virtual Tensor forward_eval(Tensor input) const = 0;
  /// Throws Error(NoRecordedGraph) without a preceding forward_train.
  virtual Tensor backward(const Tensor& grad_output) = 0;

  virtual std::vector<StateRef> state() { return {}; }

  bool recorded() const { return recorded_; }

 protected:
  void require_recording(std::string_view layer) const;
  bool recorded_ = false;
};

class Conv2d final : public Layer {
 public:
  Conv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel, std::size_t stride,
         std::mt19937_64& rng);

  LayerKind kind() const override { return LayerKind::conv2d; }
  Tensor forward_train(Tensor input) override;
  Tensor forward_eval(Tensor input) const override;
  Tensor backward(const Tensor& grad_output) override;
  std::vector<StateRef> state() override;

  Parameter& weight() { return weight_; }
  Parameter& bias() { return bias_; }

 private:
  Tensor compute(const Tensor& input) const;
  std::size_t out_extent(std::size_t extent) const { return (extent + 2 * pad_ - kernel_) / stride_ + 1; }

  std::size_t in_, out_, kernel_, stride_, pad_;
  Parameter weight_;  // [out, in, k, k]
  Parameter bias_;    // [out]
  Tensor input_;
};

/// Per-channel normalisation over every axis except axis 1.
class BatchNorm final : public Layer {
 public:
  explicit BatchNorm(std::size_t channels, double momentum = 0.1, double eps = 1e-5);

  LayerKind kind() const override { return LayerKind::batch_norm; }
  Tensor forward_train(Tensor input) override;
  Tensor forward_eval(Tensor input) const override;
  Tensor backward(const Tensor& grad_output) override;
  std::vector<StateRef> state() override;

 private:
  std::size_t channels_;
  double momentum_, eps_;
  Parameter gamma_, beta_;
  Tensor running_mean_, running_var_;
  Tensor xhat_;
  std::vector<double> inv_std_;
};

class ReLU final : public Layer {
 public:
  LayerKind kind() const override { return LayerKind::relu; }
  Tensor forward_train(Tensor input) override;
  Tensor forward_eval(Tensor input) const override;
  Tensor backward(const Tensor& grad_output) override;

 private:
  std::vector<std::uint8_t> mask_;
  Shape shape_;
};

class MaxPool2d final : public Layer {
 public:
  MaxPool2d(std::size_t pool_h, std::size_t pool_w);

  LayerKind kind() const override { return LayerKind::max_pool2d; }
  Tensor forward_train(Tensor input) override;
  Tensor forward_eval(Tensor input) const override;
  Tensor backward(const Tensor& grad_output) override;

 private:
  Tensor pool(const Tensor& input, std::vector<std::uint32_t>* argmax) const;

  std::size_t ph_, pw_;
  Shape input_shape_;
  std::vector<std::uint32_t> argmax_;
};

class Linear final : public Layer {
 public:
  Linear(std::size_t in_features, std::size_t out_features, std::mt19937_64& rng);

  LayerKind kind() const override { return LayerKind::linear; }
  Tensor forward_train(Tensor input) override;
  Tensor forward_eval(Tensor input) const override;
  Tensor backward(const Tensor& grad_output) override;
  std::vector<StateRef> state() override;

  Parameter& weight() { return weight_; }
  Parameter& bias() { return bias_; }

 private:
  Tensor compute(const Tensor& input) const;

  std::size_t in_, out_;
  Parameter weight_;  // [out, in]
  Parameter bias_;    // [out]
  Tensor input_;
};

class Sigmoid final : public Layer {
 public:
  LayerKind kind() const override { return LayerKind::sigmoid; }
  Tensor forward_train(Tensor input) override;
  Tensor forward_eval(Tensor input) const override;
  Tensor backward(const Tensor& grad_output) override;

 private:
  Tensor output_;
};

/// [N, T, F] -> [N, F] by averaging over T.
class MeanPoolTime final : public Layer {
 public:
  LayerKind kind() const override { return LayerKind::mean_pool_time; }
  Tensor forward_train(Tensor input) override;
  Tensor forward_eval(Tensor input) const override;
  Tensor backward(const Tensor& grad_output) override;

 private:
  Shape input_shape_;
};

/// Bidirectional LSTM over [N, T, F]; returns [N, T, 2H] with the forward
/// direction's hidden state in the first H features and the backward
/// direction's in the last H. Gate order is input, forget, cell, output.
class BiLSTM final : public Layer {
 public:
  BiLSTM(std::size_t input_size, std::size_t hidden_size, std::mt19937_64& rng);

  LayerKind kind() const override { return LayerKind::bilstm; }
  Tensor forward_train(Tensor input) override;
  Tensor forward_eval(Tensor input) const override;
  Tensor backward(const Tensor& grad_output) override;
  std::vector<StateRef> state() override;

  std::size_t hidden_size() const { return hidden_; }

 private:
  struct Direction {
    Parameter w_ih;  // [4H, F]
    Parameter w_hh;  // [4H, H]
    Parameter bias;  // [4H]
  };
  // Activations of one direction for one sequence, all [T, ...] row-major.
  struct Trace {
    std::vector<double> gates;  // [T, 4H] post-activation i, f, g, o
    std::vector<double> cell;   // [T, H]
    std::vector<double> hidden; // [T, H]
  };

  void run_direction(const Direction& d, bool reverse, const double* x, std::size_t steps, double* y,
                     std::size_t y_stride, Trace* trace) const;
  void backprop_direction(Direction& d, bool reverse, const double* x, std::size_t steps, const double* dy,
                          std::size_t dy_stride, const Trace& trace, double* dx) const;

  std::size_t input_, hidden_;
  Direction fwd_, bwd_;
  Tensor input_cache_;
  std::vector<Trace> traces_;  // [N * 2]
};

std::unique_ptr<Layer> make_layer(const LayerSpec& spec, std::mt19937_64& rng);

/// Ordered, named stack of layers.
class Sequential {
 public:
  void add(std::string name, std::unique_ptr<Layer> layer);

  Tensor forward_train(Tensor input);
  Tensor forward_eval(Tensor input) const;
  Tensor backward(Tensor grad_output);

  std::vector<StateRef> state(const std::string& prefix);

  std::size_t size() const { return layers_.size(); }
  Layer& at(std::size_t i) { return *layers_.at(i).second; }

 private:
  std::vector<std::pair<std::string, std::unique_ptr<Layer>>> layers_;
};

/// Appends `layer`'s tensors to `out` with names prefixed by `prefix` + ".".
void append_state(std::vector<StateRef>& out, const std::string& prefix, Layer& layer);
void zero_grad(const std::vector<StateRef>& state);

}  // namespace apnea::nn
