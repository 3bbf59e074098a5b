#pragma once

#include <memory>
#include <string>
#include <vector>

#include "attrenh/rng.hpp"
#include "attrenh/tensor.hpp"

namespace attrenh {

enum class Mode { Train, Eval };

enum class LayerKind {
  Conv,
  StridedConv,
  TransposedConv,
  BatchNorm,
  LeakyRelu,
  Relu,
  Sigmoid,
  GlobalAvgPool,
  AvgPool,
  Affine,
  AlignPad,
  Crop,
  Residual,
  Sequential,
};

std::string to_string(LayerKind kind);

/// Static description of a layer, enough to derive its output shape and
/// parameter count without running it.
struct LayerSpec {
  LayerKind kind = LayerKind::Conv;
  int kernel = 0;
  int stride = 1;
  int in_channels = 0;
  int out_channels = 0;
  bool bias = false;
};

inline constexpr double kLeakySlope = 0.2;
inline constexpr double kBatchNormMomentum = 0.9;
inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kInitStddev = 0.02;

template <typename T>
struct Param {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
  bool trainable = true;
};

/// Per-invocation state saved by forward for backward. Kept outside the layer
/// so one set of weights can be applied several times before backward (the
/// classifier runs its backbone once per body region).
template <typename T>
struct LayerCache {
  Mode mode = Mode::Train;
  Shape in_shape{};
  Tensor<T> input;
  Tensor<T> aux;
  std::vector<T> stats;
  std::vector<LayerCache<T>> children;
};

template <typename T>
class Layer {
 public:
  explicit Layer(std::string name) : name_(std::move(name)) {}
  virtual ~Layer() = default;
  Layer(const Layer&) = delete;
  Layer& operator=(const Layer&) = delete;

  const std::string& name() const { return name_; }
  virtual LayerSpec spec() const = 0;
  /// Throws ConfigError naming this layer when `in` is incompatible.
  virtual Shape output_shape(const Shape& in) const = 0;
  virtual Tensor<T> forward(const Tensor<T>& x, LayerCache<T>& cache, Mode mode) = 0;
  /// Accumulates parameter gradients and returns the input gradient.
  virtual Tensor<T> backward(const Tensor<T>& dy, const LayerCache<T>& cache) = 0;
  virtual void collect(std::vector<Param<T>*>& /*params*/, std::vector<Param<T>*>& /*buffers*/) {}

 protected:
  [[noreturn]] void fail(const std::string& what, const Shape& in) const;

 private:
  std::string name_;
};

/// Stride-1 or stride-2 convolution with "same" padding (k-1)/2. Stride 2
/// requires even spatial dims and halves them exactly.
template <typename T>
class Conv2d final : public Layer<T> {
 public:
  Conv2d(std::string name, int in_ch, int out_ch, int kernel, int stride, bool bias, Rng& rng);
  LayerSpec spec() const override;
  Shape output_shape(const Shape& in) const override;
  Tensor<T> forward(const Tensor<T>& x, LayerCache<T>& cache, Mode mode) override;
  Tensor<T> backward(const Tensor<T>& dy, const LayerCache<T>& cache) override;
  void collect(std::vector<Param<T>*>& params, std::vector<Param<T>*>& buffers) override;

  Param<T>& weight() { return weight_; }

 private:
  int in_ch_, out_ch_, kernel_, stride_;
  bool has_bias_;
  Param<T> weight_;  // (out, in*k*k)
  Param<T> bias_;
};

/// Stride-2 transposed convolution; the adjoint of a same-padded stride-2
/// convolution, so it doubles spatial dims exactly.
template <typename T>
class ConvTranspose2d final : public Layer<T> {
 public:
  ConvTranspose2d(std::string name, int in_ch, int out_ch, int kernel, bool bias, Rng& rng);
  LayerSpec spec() const override;
  Shape output_shape(const Shape& in) const override;
  Tensor<T> forward(const Tensor<T>& x, LayerCache<T>& cache, Mode mode) override;
  Tensor<T> backward(const Tensor<T>& dy, const LayerCache<T>& cache) override;
  void collect(std::vector<Param<T>*>& params, std::vector<Param<T>*>& buffers) override;

 private:
  int in_ch_, out_ch_, kernel_;
  bool has_bias_;
  Param<T> weight_;  // (in, out*k*k)
  Param<T> bias_;
};

/// Batch statistics in train mode, running statistics in eval mode.
template <typename T>
class BatchNorm2d final : public Layer<T> {
 public:
  BatchNorm2d(std::string name, int channels);
  LayerSpec spec() const override;
  Shape output_shape(const Shape& in) const override;
  Tensor<T> forward(const Tensor<T>& x, LayerCache<T>& cache, Mode mode) override;
  Tensor<T> backward(const Tensor<T>& dy, const LayerCache<T>& cache) override;
  void collect(std::vector<Param<T>*>& params, std::vector<Param<T>*>& buffers) override;

 private:
  int channels_;
  Param<T> gamma_, beta_, running_mean_, running_var_;
};

template <typename T>
class LeakyRelu final : public Layer<T> {
 public:
  explicit LeakyRelu(std::string name, T slope = T(kLeakySlope)) : Layer<T>(std::move(name)), slope_(slope) {}
  LayerSpec spec() const override { return {LayerKind::LeakyRelu}; }
  Shape output_shape(const Shape& in) const override { return in; }
  Tensor<T> forward(const Tensor<T>& x, LayerCache<T>& cache, Mode mode) override;
  Tensor<T> backward(const Tensor<T>& dy, const LayerCache<T>& cache) override;

 private:
  T slope_;
};

template <typename T>
class Relu final : public Layer<T> {
 public:
  explicit Relu(std::string name) : Layer<T>(std::move(name)) {}
  LayerSpec spec() const override { return {LayerKind::Relu}; }
  Shape output_shape(const Shape& in) const override { return in; }
  Tensor<T> forward(const Tensor<T>& x, LayerCache<T>& cache, Mode mode) override;
  Tensor<T> backward(const Tensor<T>& dy, const LayerCache<T>& cache) override;
};

template <typename T>
class Sigmoid final : public Layer<T> {
 public:
  explicit Sigmoid(std::string name) : Layer<T>(std::move(name)) {}
  LayerSpec spec() const override { return {LayerKind::Sigmoid}; }
  Shape output_shape(const Shape& in) const override { return in; }
  Tensor<T> forward(const Tensor<T>& x, LayerCache<T>& cache, Mode mode) override;
  Tensor<T> backward(const Tensor<T>& dy, const LayerCache<T>& cache) override;
};

template <typename T>
class GlobalAvgPool final : public Layer<T> {
 public:
  explicit GlobalAvgPool(std::string name) : Layer<T>(std::move(name)) {}
  LayerSpec spec() const override { return {LayerKind::GlobalAvgPool}; }
  Shape output_shape(const Shape& in) const override { return {in.n, in.c, 1, 1}; }
  Tensor<T> forward(const Tensor<T>& x, LayerCache<T>& cache, Mode mode) override;
  Tensor<T> backward(const Tensor<T>& dy, const LayerCache<T>& cache) override;
};

/// Non-overlapping window x window average pooling.
template <typename T>
class AvgPool final : public Layer<T> {
 public:
  AvgPool(std::string name, int window);
  LayerSpec spec() const override { return {LayerKind::AvgPool, window_, window_}; }
  Shape output_shape(const Shape& in) const override;
  Tensor<T> forward(const Tensor<T>& x, LayerCache<T>& cache, Mode mode) override;
  Tensor<T> backward(const Tensor<T>& dy, const LayerCache<T>& cache) override;

 private:
  int window_;
};

/// y = W x + b over the flattened (C*H*W) input; output (N, out, 1, 1).
template <typename T>
class Affine final : public Layer<T> {
 public:
  Affine(std::string name, int in_features, int out_features, Rng& rng);
  LayerSpec spec() const override;
  Shape output_shape(const Shape& in) const override;
  Tensor<T> forward(const Tensor<T>& x, LayerCache<T>& cache, Mode mode) override;
  Tensor<T> backward(const Tensor<T>& dy, const LayerCache<T>& cache) override;
  void collect(std::vector<Param<T>*>& params, std::vector<Param<T>*>& buffers) override;

  Param<T>& weight() { return weight_; }
  Param<T>& bias() { return bias_; }

 private:
  int in_, out_;
  Param<T> weight_;  // (out, in)
  Param<T> bias_;
};

/// Replicate-pads bottom rows and right columns up to a multiple of `multiple`.
template <typename T>
class AlignPad final : public Layer<T> {
 public:
  AlignPad(std::string name, int multiple);
  LayerSpec spec() const override { return {LayerKind::AlignPad, 0, multiple_}; }
  Shape output_shape(const Shape& in) const override;
  Tensor<T> forward(const Tensor<T>& x, LayerCache<T>& cache, Mode mode) override;
  Tensor<T> backward(const Tensor<T>& dy, const LayerCache<T>& cache) override;

 private:
  int multiple_;
};

/// Keeps the top-left (height, width) window.
template <typename T>
class Crop final : public Layer<T> {
 public:
  Crop(std::string name, int height, int width);
  LayerSpec spec() const override { return {LayerKind::Crop}; }
  Shape output_shape(const Shape& in) const override;
  Tensor<T> forward(const Tensor<T>& x, LayerCache<T>& cache, Mode mode) override;
  Tensor<T> backward(const Tensor<T>& dy, const LayerCache<T>& cache) override;

 private:
  int height_, width_;
};

template <typename T>
class Sequential : public Layer<T> {
 public:
  explicit Sequential(std::string name) : Layer<T>(std::move(name)) {}

  template <typename L, typename... Args>
  L& add(Args&&... args) {
    auto layer = std::make_unique<L>(std::forward<Args>(args)...);
    L& ref = *layer;
    layers_.push_back(std::move(layer));
    return ref;
  }

  LayerSpec spec() const override { return {LayerKind::Sequential}; }
  Shape output_shape(const Shape& in) const override;
  Tensor<T> forward(const Tensor<T>& x, LayerCache<T>& cache, Mode mode) override;
  Tensor<T> backward(const Tensor<T>& dy, const LayerCache<T>& cache) override;
  void collect(std::vector<Param<T>*>& params, std::vector<Param<T>*>& buffers) override;

  std::size_t size() const { return layers_.size(); }
  Layer<T>& layer(std::size_t i) { return *layers_.at(i); }
  const Layer<T>& layer(std::size_t i) const { return *layers_.at(i); }

 private:
  std::vector<std::unique_ptr<Layer<T>>> layers_;
};

/// conv3x3(stride)-BN-ReLU-conv3x3-BN plus identity or 1x1 projection
/// shortcut, then ReLU.
template <typename T>
class ResidualBlock final : public Layer<T> {
 public:
  ResidualBlock(std::string name, int in_ch, int out_ch, int stride, Rng& rng);
  LayerSpec spec() const override { return {LayerKind::Residual, 3, stride_, in_ch_, out_ch_}; }
  Shape output_shape(const Shape& in) const override;
  Tensor<T> forward(const Tensor<T>& x, LayerCache<T>& cache, Mode mode) override;
  Tensor<T> backward(const Tensor<T>& dy, const LayerCache<T>& cache) override;
  void collect(std::vector<Param<T>*>& params, std::vector<Param<T>*>& buffers) override;

  bool has_projection() const { return shortcut_ != nullptr; }

 private:
  int in_ch_, out_ch_, stride_;
  Sequential<T> main_;
  std::unique_ptr<Sequential<T>> shortcut_;
  Relu<T> out_relu_;
};

/// Named view over a network's trainable parameters and state buffers.
template <typename T>
struct ParamSet {
  std::vector<Param<T>*> params;
  std::vector<Param<T>*> buffers;

  std::size_t count() const {
    std::size_t n = 0;
    for (auto* p : params) n += p->value.size();
    return n;
  }
  void zero_grad() const {
    for (auto* p : params) p->grad.zero();
  }
  /// Parameters then buffers, in construction order.
  std::vector<Param<T>*> all() const {
    std::vector<Param<T>*> out = params;
    out.insert(out.end(), buffers.begin(), buffers.end());
    return out;
  }
  Param<T>* find(const std::string& name) const;
};

template <typename T>
ParamSet<T> collect_params(Layer<T>& root) {
  ParamSet<T> set;
  root.collect(set.params, set.buffers);
  return set;
}

/// Closed-form trainable parameter count of a single primitive layer.
std::size_t spec_param_count(const LayerSpec& spec);

}  // namespace attrenh
