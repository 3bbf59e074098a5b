#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "attrenh/layers.hpp"

namespace attrenh {

enum class EnhancerKind { Reconstruction, SuperResolution };

std::string to_string(EnhancerKind kind);
EnhancerKind enhancer_from_string(const std::string& s);

inline constexpr int kEnhancerKernel = 5;

/// Encoder: strided convs, each followed by batch norm and LeakyReLU.
/// Decoder: transposed convs, each followed by batch norm and ReLU.
/// Final: stride-1 conv with bias to 3 channels, then sigmoid.
struct GeneratorSpec {
  std::vector<LayerSpec> encoder;
  std::vector<LayerSpec> decoder;
  LayerSpec final;
  /// Output size relative to input size (1 for reconstruction, 4 for SR).
  int scale = 1;

  int encoder_stride() const { return 1 << encoder.size(); }
  int decoder_stride() const { return 1 << decoder.size(); }
};

/// Strided convs with LeakyReLU; batch norm before every activation except
/// the first. Head: global average pool, affine to one logit, sigmoid.
struct DiscriminatorSpec {
  std::vector<LayerSpec> convs;
  LayerSpec head;

  int stride() const { return 1 << convs.size(); }
};

/// Channel schedules divided by `width_divisor` (1 for the full networks).
GeneratorSpec generator_spec(EnhancerKind kind, int width_divisor);
DiscriminatorSpec discriminator_spec(EnhancerKind kind, int width_divisor);

/// Trainable parameter counts derived from the specs alone.
std::size_t closed_form_params(const GeneratorSpec& spec);
std::size_t closed_form_params(const DiscriminatorSpec& spec);

/// Shared plumbing of the two generators. Inputs whose dims are not a
/// multiple of the encoder stride are replicate-padded when `pad_input` is
/// set and rejected otherwise; the output is cropped to scale x input.
template <typename T>
class Generator {
 public:
  Generator(const GeneratorSpec& spec, int in_h, int in_w, bool pad_input, Rng& rng);

  const GeneratorSpec& spec() const { return spec_; }
  Shape input_shape(int n = 1) const { return {n, 3, in_h_, in_w_}; }
  Shape output_shape(int n = 1) const { return {n, 3, in_h_ * spec_.scale, in_w_ * spec_.scale}; }
  /// Shape after the encoder, for a single sample.
  Shape bottleneck_shape() const;

  /// Throws SizeError unless x is (N, 3, in_h, in_w).
  Tensor<T> forward(const Tensor<T>& x, LayerCache<T>& cache, Mode mode);
  Tensor<T> backward(const Tensor<T>& dy, const LayerCache<T>& cache);
  Tensor<T> infer(const Tensor<T>& x);

  ParamSet<T> params() { return collect_params<T>(*net_); }
  Sequential<T>& network() { return *net_; }

 private:
  GeneratorSpec spec_;
  int in_h_, in_w_;
  std::unique_ptr<Sequential<T>> net_;
};

template <typename T>
class Discriminator {
 public:
  Discriminator(const DiscriminatorSpec& spec, int h, int w, Rng& rng);

  const DiscriminatorSpec& spec() const { return spec_; }
  Shape input_shape(int n = 1) const { return {n, 3, h_, w_}; }

  /// Raw logits (N, 1, 1, 1); probabilities are their sigmoid.
  Tensor<T> logits(const Tensor<T>& x, LayerCache<T>& cache, Mode mode);
  /// Gradient with respect to the input image.
  Tensor<T> backward(const Tensor<T>& dlogits, const LayerCache<T>& cache);
  /// Eval-mode probabilities, one per image.
  std::vector<double> discriminate(const Tensor<T>& x);

  ParamSet<T> params() { return collect_params<T>(*net_); }

 private:
  DiscriminatorSpec spec_;
  int h_, w_;
  std::unique_ptr<Sequential<T>> net_;
};

/// Networks sized for full images of height x width.
template <typename T>
std::unique_ptr<Generator<T>> make_generator(EnhancerKind kind, int height, int width, int width_divisor, Rng& rng);
template <typename T>
std::unique_ptr<Discriminator<T>> make_discriminator(EnhancerKind kind, int height, int width, int width_divisor,
                                                     Rng& rng);

inline constexpr double kProbClamp = 1e-7;

/// Sum of squared differences of pool x pool average-pooled images, divided
/// by the batch size. Writes d loss / d generated into `grad` when non-null.
template <typename T>
T loss_sse(const Tensor<T>& generated, const Tensor<T>& target, int pool, Tensor<T>* grad = nullptr);

/// Mean over the batch of log(1 - D(G)), probabilities clamped.
double loss_gen(std::span<const double> disc_probs_on_generated);

/// loss_sse + lambda * loss_gen.
double loss_r(double sse, double gen, double lambda);

/// Non-saturating generator term: mean of -log sigmoid(z) over the batch.
template <typename T>
T nonsaturating_gen_loss(const Tensor<T>& fake_logits, Tensor<T>* grad = nullptr);

/// Binary cross-entropy with real -> 1 and generated -> 0, each averaged
/// over its batch and summed.
template <typename T>
T discriminator_bce(const Tensor<T>& real_logits, const Tensor<T>& fake_logits, Tensor<T>* real_grad = nullptr,
                    Tensor<T>* fake_grad = nullptr);

std::vector<double> sigmoid_probs(const Tensor<float>& logits);
std::vector<double> sigmoid_probs(const Tensor<double>& logits);

}  // namespace attrenh
