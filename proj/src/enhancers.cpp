#include "attrenh/enhancers.hpp"

#include <algorithm>
#include <cmath>

namespace attrenh {

std::string to_string(EnhancerKind kind) {
  return kind == EnhancerKind::Reconstruction ? "reconstruction" : "sr";
}

EnhancerKind enhancer_from_string(const std::string& s) {
  if (s == "reconstruction") return EnhancerKind::Reconstruction;
  if (s == "sr") return EnhancerKind::SuperResolution;
  throw ArgumentError("unknown network '" + s + "' (expected reconstruction or sr)");
}

namespace {

int divided(int channels, int divisor) {
  if (divisor < 1 || channels % divisor != 0) {
    throw ConfigError("width divisor " + std::to_string(divisor) + " does not divide " + std::to_string(channels));
  }
  return channels / divisor;
}

std::vector<LayerSpec> chain(LayerKind kind, int in, const std::vector<int>& outs, int divisor, bool first_bias) {
  std::vector<LayerSpec> specs;
  for (std::size_t i = 0; i < outs.size(); ++i) {
    const int out = divided(outs[i], divisor);
    specs.push_back({kind, kEnhancerKernel, 2, in, out, first_bias && i == 0});
    in = out;
  }
  return specs;
}

std::size_t norm_params(const LayerSpec& conv) { return 2 * static_cast<std::size_t>(conv.out_channels); }

}  // namespace

GeneratorSpec generator_spec(EnhancerKind kind, int width_divisor) {
  GeneratorSpec g;
  if (kind == EnhancerKind::Reconstruction) {
    g.encoder = chain(LayerKind::StridedConv, 3, {64, 128, 256, 512}, width_divisor, false);
    g.decoder = chain(LayerKind::TransposedConv, g.encoder.back().out_channels, {256, 128, 64, 32}, width_divisor,
                      false);
    g.scale = 1;
  } else {
    g.encoder = chain(LayerKind::StridedConv, 3, {256, 512, 1024}, width_divisor, false);
    g.decoder = chain(LayerKind::TransposedConv, g.encoder.back().out_channels, {512, 256, 256, 128, 128},
                      width_divisor, false);
    g.scale = 4;
  }
  g.final = {LayerKind::Conv, kEnhancerKernel, 1, g.decoder.back().out_channels, 3, true};
  return g;
}

DiscriminatorSpec discriminator_spec(EnhancerKind kind, int width_divisor) {
  DiscriminatorSpec d;
  const std::vector<int> schedule = kind == EnhancerKind::Reconstruction
                                        ? std::vector<int>{128, 256, 512, 1024}
                                        : std::vector<int>{128, 256, 512, 1024, 2048};
  d.convs = chain(LayerKind::StridedConv, 3, schedule, width_divisor, true);
  d.head = {LayerKind::Affine, 0, 1, d.convs.back().out_channels, 1, true};
  return d;
}

std::size_t closed_form_params(const GeneratorSpec& spec) {
  std::size_t n = spec_param_count(spec.final);
  for (const auto& l : spec.encoder) n += spec_param_count(l) + norm_params(l);
  for (const auto& l : spec.decoder) n += spec_param_count(l) + norm_params(l);
  return n;
}

std::size_t closed_form_params(const DiscriminatorSpec& spec) {
  std::size_t n = spec_param_count(spec.head);
  for (std::size_t i = 0; i < spec.convs.size(); ++i) {
    n += spec_param_count(spec.convs[i]);
    if (i > 0) n += norm_params(spec.convs[i]);
  }
  return n;
}

// ---------------------------------------------------------------- Generator

template <typename T>
Generator<T>::Generator(const GeneratorSpec& spec, int in_h, int in_w, bool pad_input, Rng& rng)
    : spec_(spec), in_h_(in_h), in_w_(in_w), net_(std::make_unique<Sequential<T>>("gen")) {
  const int m = spec.encoder_stride();
  const bool aligned = in_h % m == 0 && in_w % m == 0;
  if (!aligned && !pad_input) {
    throw ConfigError("generator input " + std::to_string(in_h) + "x" + std::to_string(in_w) +
                      " is not divisible by " + std::to_string(m));
  }
  auto& net = *net_;
  if (!aligned) net.template add<AlignPad<T>>("gen.pad", m);
  for (std::size_t i = 0; i < spec.encoder.size(); ++i) {
    const auto& l = spec.encoder[i];
    const std::string p = "gen.enc" + std::to_string(i);
    net.template add<Conv2d<T>>(p + ".conv", l.in_channels, l.out_channels, l.kernel, 2, l.bias, rng);
    net.template add<BatchNorm2d<T>>(p + ".bn", l.out_channels);
    net.template add<LeakyRelu<T>>(p + ".lrelu");
  }
  for (std::size_t i = 0; i < spec.decoder.size(); ++i) {
    const auto& l = spec.decoder[i];
    const std::string p = "gen.dec" + std::to_string(i);
    net.template add<ConvTranspose2d<T>>(p + ".deconv", l.in_channels, l.out_channels, l.kernel, l.bias, rng);
    net.template add<BatchNorm2d<T>>(p + ".bn", l.out_channels);
    net.template add<Relu<T>>(p + ".relu");
  }
  const auto& f = spec.final;
  net.template add<Conv2d<T>>("gen.out.conv", f.in_channels, f.out_channels, f.kernel, 1, f.bias, rng);
  net.template add<Sigmoid<T>>("gen.out.sigmoid");
  const Shape produced = net.output_shape(input_shape());
  const Shape want = output_shape();
  if (!(produced == want)) {
    if (produced.h < want.h || produced.w < want.w) {
      throw ConfigError("generator produces " + produced.str() + ", smaller than " + want.str());
    }
    net.template add<Crop<T>>("gen.crop", want.h, want.w);
  }
}

template <typename T>
Shape Generator<T>::bottleneck_shape() const {
  Shape s = input_shape();
  const int m = spec_.encoder_stride();
  s.h = (s.h + m - 1) / m;
  s.w = (s.w + m - 1) / m;
  s.c = spec_.encoder.back().out_channels;
  return s;
}

template <typename T>
Tensor<T> Generator<T>::forward(const Tensor<T>& x, LayerCache<T>& cache, Mode mode) {
  const Shape s = x.shape();
  if (s.c != 3 || s.h != in_h_ || s.w != in_w_) {
    throw SizeError("generator expects (N,3," + std::to_string(in_h_) + "," + std::to_string(in_w_) + "), got " +
                    s.str());
  }
  return net_->forward(x, cache, mode);
}

template <typename T>
Tensor<T> Generator<T>::backward(const Tensor<T>& dy, const LayerCache<T>& cache) {
  return net_->backward(dy, cache);
}

template <typename T>
Tensor<T> Generator<T>::infer(const Tensor<T>& x) {
  LayerCache<T> cache;
  return forward(x, cache, Mode::Eval);
}

// ---------------------------------------------------------------- Discriminator

template <typename T>
Discriminator<T>::Discriminator(const DiscriminatorSpec& spec, int h, int w, Rng& rng)
    : spec_(spec), h_(h), w_(w), net_(std::make_unique<Sequential<T>>("disc")) {
  auto& net = *net_;
  const int m = spec.stride();
  if (h % m != 0 || w % m != 0) net.template add<AlignPad<T>>("disc.pad", m);
  for (std::size_t i = 0; i < spec.convs.size(); ++i) {
    const auto& l = spec.convs[i];
    const std::string p = "disc.conv" + std::to_string(i);
    net.template add<Conv2d<T>>(p + ".conv", l.in_channels, l.out_channels, l.kernel, 2, l.bias, rng);
    if (i > 0) net.template add<BatchNorm2d<T>>(p + ".bn", l.out_channels);
    net.template add<LeakyRelu<T>>(p + ".lrelu");
  }
  net.template add<GlobalAvgPool<T>>("disc.gap");
  net.template add<Affine<T>>("disc.head", spec.head.in_channels, 1, rng);
}

template <typename T>
Tensor<T> Discriminator<T>::logits(const Tensor<T>& x, LayerCache<T>& cache, Mode mode) {
  const Shape s = x.shape();
  if (s.c != 3 || s.h != h_ || s.w != w_) {
    throw SizeError("discriminator expects (N,3," + std::to_string(h_) + "," + std::to_string(w_) + "), got " +
                    s.str());
  }
  return net_->forward(x, cache, mode);
}

template <typename T>
Tensor<T> Discriminator<T>::backward(const Tensor<T>& dlogits, const LayerCache<T>& cache) {
  return net_->backward(dlogits, cache);
}

template <typename T>
std::vector<double> Discriminator<T>::discriminate(const Tensor<T>& x) {
  LayerCache<T> cache;
  return sigmoid_probs(logits(x, cache, Mode::Eval));
}

template <typename T>
std::unique_ptr<Generator<T>> make_generator(EnhancerKind kind, int height, int width, int width_divisor, Rng& rng) {
  const auto spec = generator_spec(kind, width_divisor);
  if (kind == EnhancerKind::Reconstruction) return std::make_unique<Generator<T>>(spec, height, width, false, rng);
  if (height % spec.scale != 0 || width % spec.scale != 0) {
    throw ConfigError("image size not divisible by the super-resolution factor");
  }
  return std::make_unique<Generator<T>>(spec, height / spec.scale, width / spec.scale, true, rng);
}

template <typename T>
std::unique_ptr<Discriminator<T>> make_discriminator(EnhancerKind kind, int height, int width, int width_divisor,
                                                     Rng& rng) {
  return std::make_unique<Discriminator<T>>(discriminator_spec(kind, width_divisor), height, width, rng);
}

// ---------------------------------------------------------------- losses

template <typename T>
T loss_sse(const Tensor<T>& generated, const Tensor<T>& target, int pool, Tensor<T>* grad) {
  const Shape s = generated.shape();
  if (!(s == target.shape())) {
    throw ArgumentError("loss_sse shape mismatch " + s.str() + " vs " + target.shape().str());
  }
  if (pool < 1 || s.h % pool != 0 || s.w % pool != 0) {
    throw ArgumentError("loss_sse pool " + std::to_string(pool) + " does not divide " + s.str());
  }
  if (grad) *grad = Tensor<T>(s);
  const double area = static_cast<double>(pool) * pool;
  double total = 0.0;
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int by = 0; by < s.h; by += pool)
        for (int bx = 0; bx < s.w; bx += pool) {
          double d = 0.0;
          for (int y = by; y < by + pool; ++y)
            for (int x = bx; x < bx + pool; ++x)
              d += static_cast<double>(generated.at(n, c, y, x)) - static_cast<double>(target.at(n, c, y, x));
          d /= area;
          total += d * d;
          if (grad) {
            const T g = static_cast<T>(2.0 * d / area / s.n);
            for (int y = by; y < by + pool; ++y)
              for (int x = bx; x < bx + pool; ++x) grad->at(n, c, y, x) = g;
          }
        }
  return static_cast<T>(total / s.n);
}

double loss_gen(std::span<const double> probs) {
  if (probs.empty()) throw ArgumentError("loss_gen needs at least one probability");
  double total = 0.0;
  for (double p : probs) total += std::log(1.0 - std::clamp(p, kProbClamp, 1.0 - kProbClamp));
  return total / static_cast<double>(probs.size());
}

double loss_r(double sse, double gen, double lambda) {
  if (!(lambda >= 0.0)) throw ArgumentError("lambda must be >= 0");
  return sse + lambda * gen;
}

namespace {

/// log(1 + exp(v)) without overflow.
double softplus(double v) { return v > 0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v)); }
double sigmoid(double v) { return v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v)); }

}  // namespace

template <typename T>
T nonsaturating_gen_loss(const Tensor<T>& fake_logits, Tensor<T>* grad) {
  const std::size_t n = fake_logits.size();
  if (grad) *grad = Tensor<T>(fake_logits.shape());
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double z = static_cast<double>(fake_logits[i]);
    total += softplus(-z);
    if (grad) (*grad)[i] = static_cast<T>(-(1.0 - sigmoid(z)) / static_cast<double>(n));
  }
  return static_cast<T>(total / static_cast<double>(n));
}

template <typename T>
T discriminator_bce(const Tensor<T>& real_logits, const Tensor<T>& fake_logits, Tensor<T>* real_grad,
                    Tensor<T>* fake_grad) {
  double real = 0.0, fake = 0.0;
  const auto nr = static_cast<double>(real_logits.size());
  const auto nf = static_cast<double>(fake_logits.size());
  if (real_grad) *real_grad = Tensor<T>(real_logits.shape());
  if (fake_grad) *fake_grad = Tensor<T>(fake_logits.shape());
  for (std::size_t i = 0; i < real_logits.size(); ++i) {
    const double z = static_cast<double>(real_logits[i]);
    real += softplus(-z);
    if (real_grad) (*real_grad)[i] = static_cast<T>(-(1.0 - sigmoid(z)) / nr);
  }
  for (std::size_t i = 0; i < fake_logits.size(); ++i) {
    const double z = static_cast<double>(fake_logits[i]);
    fake += softplus(z);
    if (fake_grad) (*fake_grad)[i] = static_cast<T>(sigmoid(z) / nf);
  }
  return static_cast<T>(real / nr + fake / nf);
}

std::vector<double> sigmoid_probs(const Tensor<float>& logits) {
  std::vector<double> p(logits.size());
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = sigmoid(logits[i]);
  return p;
}

std::vector<double> sigmoid_probs(const Tensor<double>& logits) {
  std::vector<double> p(logits.size());
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = sigmoid(logits[i]);
  return p;
}

#define ATTRENH_INSTANTIATE(T)                                                                                 \
  template class Generator<T>;                                                                                 \
  template class Discriminator<T>;                                                                             \
  template std::unique_ptr<Generator<T>> make_generator<T>(EnhancerKind, int, int, int, Rng&);                 \
  template std::unique_ptr<Discriminator<T>> make_discriminator<T>(EnhancerKind, int, int, int, Rng&);         \
  template T loss_sse<T>(const Tensor<T>&, const Tensor<T>&, int, Tensor<T>*);                                 \
  template T nonsaturating_gen_loss<T>(const Tensor<T>&, Tensor<T>*);                                          \
  template T discriminator_bce<T>(const Tensor<T>&, const Tensor<T>&, Tensor<T>*, Tensor<T>*);

ATTRENH_INSTANTIATE(float)
ATTRENH_INSTANTIATE(double)

}  // namespace attrenh
