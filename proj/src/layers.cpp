#include "attrenh/layers.hpp"

#include <cmath>
#include <vector>

#include "gemm.hpp"

namespace attrenh {

std::string to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::Conv: return "conv";
    case LayerKind::StridedConv: return "strided-conv";
    case LayerKind::TransposedConv: return "transposed-conv";
    case LayerKind::BatchNorm: return "batch-norm";
    case LayerKind::LeakyRelu: return "leaky-relu";
    case LayerKind::Relu: return "relu";
    case LayerKind::Sigmoid: return "sigmoid";
    case LayerKind::GlobalAvgPool: return "global-avg-pool";
    case LayerKind::AvgPool: return "avg-pool";
    case LayerKind::Affine: return "affine";
    case LayerKind::AlignPad: return "align-pad";
    case LayerKind::Crop: return "crop";
    case LayerKind::Residual: return "residual";
    case LayerKind::Sequential: return "sequential";
  }
  return "unknown";
}

std::size_t spec_param_count(const LayerSpec& s) {
  const auto k2 = static_cast<std::size_t>(s.kernel) * s.kernel;
  switch (s.kind) {
    case LayerKind::Conv:
    case LayerKind::StridedConv:
    case LayerKind::TransposedConv:
      return k2 * s.in_channels * s.out_channels + (s.bias ? s.out_channels : 0);
    case LayerKind::BatchNorm:
      return 2 * static_cast<std::size_t>(s.in_channels);
    case LayerKind::Affine:
      return static_cast<std::size_t>(s.in_channels) * s.out_channels + s.out_channels;
    default:
      return 0;
  }
}

template <typename T>
void Layer<T>::fail(const std::string& what, const Shape& in) const {
  throw ConfigError("layer '" + name_ + "': " + what + " (input " + in.str() + ")");
}

template <typename T>
Param<T>* ParamSet<T>::find(const std::string& name) const {
  for (auto* p : params)
    if (p->name == name) return p;
  for (auto* p : buffers)
    if (p->name == name) return p;
  return nullptr;
}

namespace {

template <typename T>
Param<T> make_param(const std::string& name, Shape shape, bool trainable = true) {
  Param<T> p{name, Tensor<T>(shape), Tensor<T>(), trainable};
  if (trainable) p.grad = Tensor<T>(shape);
  return p;
}

template <typename T>
void init_truncated(Param<T>& p, Rng& rng) {
  for (auto& v : p.value.values()) v = static_cast<T>(rng.truncated_normal(kInitStddev));
}

}  // namespace

// ---------------------------------------------------------------- Conv2d

template <typename T>
Conv2d<T>::Conv2d(std::string name, int in_ch, int out_ch, int kernel, int stride, bool bias, Rng& rng)
    : Layer<T>(std::move(name)), in_ch_(in_ch), out_ch_(out_ch), kernel_(kernel), stride_(stride),
      has_bias_(bias) {
  if (kernel % 2 == 0 || (stride != 1 && stride != 2)) {
    throw ConfigError("layer '" + this->name() + "': kernel must be odd and stride 1 or 2");
  }
  weight_ = make_param<T>(this->name() + ".weight", {out_ch, in_ch, kernel, kernel});
  init_truncated(weight_, rng);
  if (has_bias_) bias_ = make_param<T>(this->name() + ".bias", {1, out_ch, 1, 1});
}

template <typename T>
LayerSpec Conv2d<T>::spec() const {
  return {stride_ == 2 ? LayerKind::StridedConv : LayerKind::Conv, kernel_, stride_, in_ch_, out_ch_,
          has_bias_};
}

template <typename T>
Shape Conv2d<T>::output_shape(const Shape& in) const {
  if (in.c != in_ch_) {
    this->fail("expected " + std::to_string(in_ch_) + " input channels, got " + std::to_string(in.c), in);
  }
  if (stride_ == 2 && (in.h % 2 != 0 || in.w % 2 != 0)) {
    this->fail("strided conv needs even spatial dims, got " + std::to_string(in.h) + "x" +
                   std::to_string(in.w),
               in);
  }
  return {in.n, out_ch_, in.h / stride_, in.w / stride_};
}

template <typename T>
Tensor<T> Conv2d<T>::forward(const Tensor<T>& x, LayerCache<T>& cache, Mode mode) {
  const Shape in = x.shape();
  const Shape out_s = output_shape(in);
  const int pad = (kernel_ - 1) / 2;
  const int rows = in_ch_ * kernel_ * kernel_;
  const long cols = static_cast<long>(in.n) * out_s.h * out_s.w;
  std::vector<T> col(static_cast<std::size_t>(rows) * cols);
  detail::im2col(x.data(), in.n, in.c, in.h, in.w, kernel_, stride_, pad, out_s.h, out_s.w, col.data());
  std::vector<T> out_cm(static_cast<std::size_t>(out_ch_) * cols);
  detail::gemm<T>(false, false, out_ch_, static_cast<int>(cols), rows, T(1), weight_.value.data(),
                  col.data(), T(0), out_cm.data());
  Tensor<T> y(out_s);
  detail::cm_to_nchw(out_cm.data(), in.n, out_ch_, static_cast<long>(out_s.plane()), y.data());
  if (has_bias_) {
    for (int n = 0; n < out_s.n; ++n)
      for (int c = 0; c < out_ch_; ++c) {
        T* p = &y.at(n, c, 0, 0);
        for (std::size_t i = 0; i < out_s.plane(); ++i) p[i] += bias_.value[c];
      }
  }
  cache.mode = mode;
  cache.input = x;
  return y;
}

template <typename T>
Tensor<T> Conv2d<T>::backward(const Tensor<T>& dy, const LayerCache<T>& cache) {
  const Shape in = cache.input.shape();
  const Shape out_s = dy.shape();
  const int pad = (kernel_ - 1) / 2;
  const int rows = in_ch_ * kernel_ * kernel_;
  const long cols = static_cast<long>(in.n) * out_s.h * out_s.w;
  std::vector<T> col(static_cast<std::size_t>(rows) * cols);
  detail::im2col(cache.input.data(), in.n, in.c, in.h, in.w, kernel_, stride_, pad, out_s.h, out_s.w,
                 col.data());
  std::vector<T> dy_cm(static_cast<std::size_t>(out_ch_) * cols);
  detail::nchw_to_cm(dy.data(), in.n, out_ch_, static_cast<long>(out_s.plane()), dy_cm.data());
  detail::gemm<T>(false, true, out_ch_, rows, static_cast<int>(cols), T(1), dy_cm.data(), col.data(),
                  T(1), weight_.grad.data());
  if (has_bias_) {
    for (int c = 0; c < out_ch_; ++c) {
      T s = 0;
      const T* p = dy_cm.data() + static_cast<long>(c) * cols;
      for (long i = 0; i < cols; ++i) s += p[i];
      bias_.grad[c] += s;
    }
  }
  detail::gemm<T>(true, false, rows, static_cast<int>(cols), out_ch_, T(1), weight_.value.data(),
                  dy_cm.data(), T(0), col.data());
  Tensor<T> dx(in);
  detail::col2im(col.data(), in.n, in.c, in.h, in.w, kernel_, stride_, pad, out_s.h, out_s.w, dx.data());
  return dx;
}

template <typename T>
void Conv2d<T>::collect(std::vector<Param<T>*>& params, std::vector<Param<T>*>&) {
  params.push_back(&weight_);
  if (has_bias_) params.push_back(&bias_);
}

// ---------------------------------------------------------------- ConvTranspose2d

template <typename T>
ConvTranspose2d<T>::ConvTranspose2d(std::string name, int in_ch, int out_ch, int kernel, bool bias, Rng& rng)
    : Layer<T>(std::move(name)), in_ch_(in_ch), out_ch_(out_ch), kernel_(kernel), has_bias_(bias) {
  if (kernel % 2 == 0) throw ConfigError("layer '" + this->name() + "': kernel must be odd");
  weight_ = make_param<T>(this->name() + ".weight", {in_ch, out_ch, kernel, kernel});
  init_truncated(weight_, rng);
  if (has_bias_) bias_ = make_param<T>(this->name() + ".bias", {1, out_ch, 1, 1});
}

template <typename T>
LayerSpec ConvTranspose2d<T>::spec() const {
  return {LayerKind::TransposedConv, kernel_, 2, in_ch_, out_ch_, has_bias_};
}

template <typename T>
Shape ConvTranspose2d<T>::output_shape(const Shape& in) const {
  if (in.c != in_ch_) {
    this->fail("expected " + std::to_string(in_ch_) + " input channels, got " + std::to_string(in.c), in);
  }
  return {in.n, out_ch_, in.h * 2, in.w * 2};
}

template <typename T>
Tensor<T> ConvTranspose2d<T>::forward(const Tensor<T>& x, LayerCache<T>& cache, Mode mode) {
  const Shape in = x.shape();
  const Shape out_s = output_shape(in);
  const int pad = (kernel_ - 1) / 2;
  const int rows = out_ch_ * kernel_ * kernel_;
  const long cols = static_cast<long>(in.n) * in.h * in.w;
  std::vector<T> x_cm(static_cast<std::size_t>(in_ch_) * cols);
  detail::nchw_to_cm(x.data(), in.n, in_ch_, static_cast<long>(in.plane()), x_cm.data());
  std::vector<T> col(static_cast<std::size_t>(rows) * cols);
  detail::gemm<T>(true, false, rows, static_cast<int>(cols), in_ch_, T(1), weight_.value.data(), x_cm.data(),
                  T(0), col.data());
  Tensor<T> y(out_s);
  detail::col2im(col.data(), in.n, out_ch_, out_s.h, out_s.w, kernel_, 2, pad, in.h, in.w, y.data());
  if (has_bias_) {
    for (int n = 0; n < out_s.n; ++n)
      for (int c = 0; c < out_ch_; ++c) {
        T* p = &y.at(n, c, 0, 0);
        for (std::size_t i = 0; i < out_s.plane(); ++i) p[i] += bias_.value[c];
      }
  }
  cache.mode = mode;
  cache.input = x;
  return y;
}

template <typename T>
Tensor<T> ConvTranspose2d<T>::backward(const Tensor<T>& dy, const LayerCache<T>& cache) {
  const Shape in = cache.input.shape();
  const Shape out_s = dy.shape();
  const int pad = (kernel_ - 1) / 2;
  const int rows = out_ch_ * kernel_ * kernel_;
  const long cols = static_cast<long>(in.n) * in.h * in.w;
  std::vector<T> dcol(static_cast<std::size_t>(rows) * cols);
  detail::im2col(dy.data(), in.n, out_ch_, out_s.h, out_s.w, kernel_, 2, pad, in.h, in.w, dcol.data());
  std::vector<T> x_cm(static_cast<std::size_t>(in_ch_) * cols);
  detail::nchw_to_cm(cache.input.data(), in.n, in_ch_, static_cast<long>(in.plane()), x_cm.data());
  detail::gemm<T>(false, true, in_ch_, rows, static_cast<int>(cols), T(1), x_cm.data(), dcol.data(), T(1),
                  weight_.grad.data());
  if (has_bias_) {
    for (int n = 0; n < out_s.n; ++n)
      for (int c = 0; c < out_ch_; ++c) {
        const T* p = &dy.at(n, c, 0, 0);
        T s = 0;
        for (std::size_t i = 0; i < out_s.plane(); ++i) s += p[i];
        bias_.grad[c] += s;
      }
  }
  detail::gemm<T>(false, false, in_ch_, static_cast<int>(cols), rows, T(1), weight_.value.data(), dcol.data(),
                  T(0), x_cm.data());
  Tensor<T> dx(in);
  detail::cm_to_nchw(x_cm.data(), in.n, in_ch_, static_cast<long>(in.plane()), dx.data());
  return dx;
}

template <typename T>
void ConvTranspose2d<T>::collect(std::vector<Param<T>*>& params, std::vector<Param<T>*>&) {
  params.push_back(&weight_);
  if (has_bias_) params.push_back(&bias_);
}

// ---------------------------------------------------------------- BatchNorm2d

template <typename T>
BatchNorm2d<T>::BatchNorm2d(std::string name, int channels) : Layer<T>(std::move(name)), channels_(channels) {
  gamma_ = make_param<T>(this->name() + ".gamma", {1, channels, 1, 1});
  gamma_.value.fill(T(1));
  beta_ = make_param<T>(this->name() + ".beta", {1, channels, 1, 1});
  running_mean_ = make_param<T>(this->name() + ".running_mean", {1, channels, 1, 1}, false);
  running_var_ = make_param<T>(this->name() + ".running_var", {1, channels, 1, 1}, false);
  running_var_.value.fill(T(1));
}

template <typename T>
LayerSpec BatchNorm2d<T>::spec() const {
  return {LayerKind::BatchNorm, 0, 1, channels_, channels_};
}

template <typename T>
Shape BatchNorm2d<T>::output_shape(const Shape& in) const {
  if (in.c != channels_) {
    this->fail("expected " + std::to_string(channels_) + " channels, got " + std::to_string(in.c), in);
  }
  return in;
}

template <typename T>
Tensor<T> BatchNorm2d<T>::forward(const Tensor<T>& x, LayerCache<T>& cache, Mode mode) {
  const Shape s = output_shape(x.shape());
  const std::size_t plane = s.plane();
  const double count = static_cast<double>(s.n) * plane;
  Tensor<T> y(s);
  cache.mode = mode;
  cache.stats.assign(channels_, T(0));
  if (mode == Mode::Train) cache.aux = Tensor<T>(s);
  else cache.input = x;
  for (int c = 0; c < channels_; ++c) {
    T mean, inv_std;
    if (mode == Mode::Train) {
      double sum = 0;
      for (int n = 0; n < s.n; ++n) {
        const T* p = &x.at(n, c, 0, 0);
        for (std::size_t i = 0; i < plane; ++i) sum += p[i];
      }
      const double m = sum / count;
      double sq = 0;
      for (int n = 0; n < s.n; ++n) {
        const T* p = &x.at(n, c, 0, 0);
        for (std::size_t i = 0; i < plane; ++i) sq += (p[i] - m) * (p[i] - m);
      }
      const double var = sq / count;
      mean = static_cast<T>(m);
      inv_std = static_cast<T>(1.0 / std::sqrt(var + kBatchNormEps));
      const double unbiased = count > 1 ? sq / (count - 1) : var;
      running_mean_.value[c] = static_cast<T>(kBatchNormMomentum * running_mean_.value[c] +
                                              (1 - kBatchNormMomentum) * m);
      running_var_.value[c] = static_cast<T>(kBatchNormMomentum * running_var_.value[c] +
                                             (1 - kBatchNormMomentum) * unbiased);
    } else {
      mean = running_mean_.value[c];
      inv_std = static_cast<T>(1.0 / std::sqrt(static_cast<double>(running_var_.value[c]) + kBatchNormEps));
    }
    cache.stats[c] = inv_std;
    const T g = gamma_.value[c], b = beta_.value[c];
    for (int n = 0; n < s.n; ++n) {
      const T* p = &x.at(n, c, 0, 0);
      T* q = &y.at(n, c, 0, 0);
      T* h = mode == Mode::Train ? &cache.aux.at(n, c, 0, 0) : nullptr;
      for (std::size_t i = 0; i < plane; ++i) {
        const T xhat = (p[i] - mean) * inv_std;
        if (h) h[i] = xhat;
        q[i] = g * xhat + b;
      }
    }
  }
  return y;
}

template <typename T>
Tensor<T> BatchNorm2d<T>::backward(const Tensor<T>& dy, const LayerCache<T>& cache) {
  const Shape s = dy.shape();
  const std::size_t plane = s.plane();
  const T count = static_cast<T>(static_cast<double>(s.n) * plane);
  Tensor<T> dx(s);
  for (int c = 0; c < channels_; ++c) {
    const T inv_std = cache.stats[c];
    const T g = gamma_.value[c];
    if (cache.mode == Mode::Train) {
      T sum_dy = 0, sum_dy_xhat = 0;
      for (int n = 0; n < s.n; ++n) {
        const T* d = &dy.at(n, c, 0, 0);
        const T* h = &cache.aux.at(n, c, 0, 0);
        for (std::size_t i = 0; i < plane; ++i) {
          sum_dy += d[i];
          sum_dy_xhat += d[i] * h[i];
        }
      }
      gamma_.grad[c] += sum_dy_xhat;
      beta_.grad[c] += sum_dy;
      const T k = g * inv_std / count;
      for (int n = 0; n < s.n; ++n) {
        const T* d = &dy.at(n, c, 0, 0);
        const T* h = &cache.aux.at(n, c, 0, 0);
        T* o = &dx.at(n, c, 0, 0);
        for (std::size_t i = 0; i < plane; ++i) o[i] = k * (count * d[i] - sum_dy - h[i] * sum_dy_xhat);
      }
    } else {
      const T mean = running_mean_.value[c];
      T sum_dy = 0, sum_dy_xhat = 0;
      for (int n = 0; n < s.n; ++n) {
        const T* d = &dy.at(n, c, 0, 0);
        const T* p = &cache.input.at(n, c, 0, 0);
        T* o = &dx.at(n, c, 0, 0);
        for (std::size_t i = 0; i < plane; ++i) {
          sum_dy += d[i];
          sum_dy_xhat += d[i] * (p[i] - mean) * inv_std;
          o[i] = d[i] * g * inv_std;
        }
      }
      gamma_.grad[c] += sum_dy_xhat;
      beta_.grad[c] += sum_dy;
    }
  }
  return dx;
}

template <typename T>
void BatchNorm2d<T>::collect(std::vector<Param<T>*>& params, std::vector<Param<T>*>& buffers) {
  params.push_back(&gamma_);
  params.push_back(&beta_);
  buffers.push_back(&running_mean_);
  buffers.push_back(&running_var_);
}

// ---------------------------------------------------------------- activations

template <typename T>
Tensor<T> LeakyRelu<T>::forward(const Tensor<T>& x, LayerCache<T>& cache, Mode mode) {
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] >= T(0) ? x[i] : slope_ * x[i];
  cache.mode = mode;
  cache.input = x;
  return y;
}

template <typename T>
Tensor<T> LeakyRelu<T>::backward(const Tensor<T>& dy, const LayerCache<T>& cache) {
  Tensor<T> dx(dy.shape());
  for (std::size_t i = 0; i < dy.size(); ++i) dx[i] = cache.input[i] >= T(0) ? dy[i] : slope_ * dy[i];
  return dx;
}

template <typename T>
Tensor<T> Relu<T>::forward(const Tensor<T>& x, LayerCache<T>& cache, Mode mode) {
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] < T(0) ? T(0) : x[i];  // NaN passes through
  cache.mode = mode;
  cache.input = x;
  return y;
}

template <typename T>
Tensor<T> Relu<T>::backward(const Tensor<T>& dy, const LayerCache<T>& cache) {
  Tensor<T> dx(dy.shape());
  for (std::size_t i = 0; i < dy.size(); ++i) dx[i] = cache.input[i] > T(0) ? dy[i] : T(0);
  return dx;
}

template <typename T>
Tensor<T> Sigmoid<T>::forward(const Tensor<T>& x, LayerCache<T>& cache, Mode mode) {
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = T(1) / (T(1) + std::exp(-x[i]));
  cache.mode = mode;
  cache.aux = y;
  return y;
}

template <typename T>
Tensor<T> Sigmoid<T>::backward(const Tensor<T>& dy, const LayerCache<T>& cache) {
  Tensor<T> dx(dy.shape());
  for (std::size_t i = 0; i < dy.size(); ++i) {
    const T s = cache.aux[i];
    dx[i] = dy[i] * s * (T(1) - s);
  }
  return dx;
}

// ---------------------------------------------------------------- pooling

template <typename T>
Tensor<T> GlobalAvgPool<T>::forward(const Tensor<T>& x, LayerCache<T>& cache, Mode mode) {
  const Shape s = x.shape();
  Tensor<T> y(output_shape(s));
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) {
      const T* p = &x.at(n, c, 0, 0);
      T sum = 0;
      for (std::size_t i = 0; i < s.plane(); ++i) sum += p[i];
      y.at(n, c, 0, 0) = sum / static_cast<T>(s.plane());
    }
  cache.mode = mode;
  cache.in_shape = s;
  return y;
}

template <typename T>
Tensor<T> GlobalAvgPool<T>::backward(const Tensor<T>& dy, const LayerCache<T>& cache) {
  const Shape s = cache.in_shape;
  Tensor<T> dx(s);
  const T inv = T(1) / static_cast<T>(s.plane());
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) {
      const T g = dy.at(n, c, 0, 0) * inv;
      T* p = &dx.at(n, c, 0, 0);
      for (std::size_t i = 0; i < s.plane(); ++i) p[i] = g;
    }
  return dx;
}

template <typename T>
AvgPool<T>::AvgPool(std::string name, int window) : Layer<T>(std::move(name)), window_(window) {
  if (window < 1) throw ConfigError("layer '" + this->name() + "': pool window must be >= 1");
}

template <typename T>
Shape AvgPool<T>::output_shape(const Shape& in) const {
  if (in.h % window_ != 0 || in.w % window_ != 0) {
    this->fail("pool window " + std::to_string(window_) + " does not divide spatial dims", in);
  }
  return {in.n, in.c, in.h / window_, in.w / window_};
}

template <typename T>
Tensor<T> AvgPool<T>::forward(const Tensor<T>& x, LayerCache<T>& cache, Mode mode) {
  const Shape s = x.shape();
  Tensor<T> y(output_shape(s));
  const T inv = T(1) / static_cast<T>(window_ * window_);
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int y0 = 0; y0 < s.h; ++y0)
        for (int x0 = 0; x0 < s.w; ++x0) y.at(n, c, y0 / window_, x0 / window_) += x.at(n, c, y0, x0) * inv;
  cache.mode = mode;
  cache.in_shape = s;
  return y;
}

template <typename T>
Tensor<T> AvgPool<T>::backward(const Tensor<T>& dy, const LayerCache<T>& cache) {
  const Shape s = cache.in_shape;
  Tensor<T> dx(s);
  const T inv = T(1) / static_cast<T>(window_ * window_);
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int y0 = 0; y0 < s.h; ++y0)
        for (int x0 = 0; x0 < s.w; ++x0) dx.at(n, c, y0, x0) = dy.at(n, c, y0 / window_, x0 / window_) * inv;
  return dx;
}

// ---------------------------------------------------------------- Affine

template <typename T>
Affine<T>::Affine(std::string name, int in_features, int out_features, Rng& rng)
    : Layer<T>(std::move(name)), in_(in_features), out_(out_features) {
  weight_ = make_param<T>(this->name() + ".weight", {1, 1, out_features, in_features});
  init_truncated(weight_, rng);
  bias_ = make_param<T>(this->name() + ".bias", {1, out_features, 1, 1});
}

template <typename T>
LayerSpec Affine<T>::spec() const {
  return {LayerKind::Affine, 0, 1, in_, out_, true};
}

template <typename T>
Shape Affine<T>::output_shape(const Shape& in) const {
  if (static_cast<std::size_t>(in.c) * in.plane() != static_cast<std::size_t>(in_)) {
    this->fail("expected " + std::to_string(in_) + " input features", in);
  }
  return {in.n, out_, 1, 1};
}

template <typename T>
Tensor<T> Affine<T>::forward(const Tensor<T>& x, LayerCache<T>& cache, Mode mode) {
  const Shape out_s = output_shape(x.shape());
  Tensor<T> y(out_s);
  for (int n = 0; n < out_s.n; ++n) std::copy_n(bias_.value.data(), out_, y.sample(n));
  detail::gemm<T>(false, true, out_s.n, out_, in_, T(1), x.data(), weight_.value.data(), T(1), y.data());
  cache.mode = mode;
  cache.input = x;
  return y;
}

template <typename T>
Tensor<T> Affine<T>::backward(const Tensor<T>& dy, const LayerCache<T>& cache) {
  const int n_batch = dy.shape().n;
  detail::gemm<T>(true, false, out_, in_, n_batch, T(1), dy.data(), cache.input.data(), T(1),
                  weight_.grad.data());
  for (int n = 0; n < n_batch; ++n)
    for (int o = 0; o < out_; ++o) bias_.grad[o] += dy[static_cast<std::size_t>(n) * out_ + o];
  Tensor<T> dx(cache.input.shape());
  detail::gemm<T>(false, false, n_batch, in_, out_, T(1), dy.data(), weight_.value.data(), T(0), dx.data());
  return dx;
}

template <typename T>
void Affine<T>::collect(std::vector<Param<T>*>& params, std::vector<Param<T>*>&) {
  params.push_back(&weight_);
  params.push_back(&bias_);
}

// ---------------------------------------------------------------- AlignPad / Crop

template <typename T>
AlignPad<T>::AlignPad(std::string name, int multiple) : Layer<T>(std::move(name)), multiple_(multiple) {
  if (multiple < 1) throw ConfigError("layer '" + this->name() + "': alignment must be >= 1");
}

template <typename T>
Shape AlignPad<T>::output_shape(const Shape& in) const {
  auto up = [&](int v) { return (v + multiple_ - 1) / multiple_ * multiple_; };
  return {in.n, in.c, up(in.h), up(in.w)};
}

template <typename T>
Tensor<T> AlignPad<T>::forward(const Tensor<T>& x, LayerCache<T>& cache, Mode mode) {
  const Shape s = x.shape();
  const Shape o = output_shape(s);
  Tensor<T> y(o);
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int r = 0; r < o.h; ++r)
        for (int q = 0; q < o.w; ++q) y.at(n, c, r, q) = x.at(n, c, std::min(r, s.h - 1), std::min(q, s.w - 1));
  cache.mode = mode;
  cache.in_shape = s;
  return y;
}

template <typename T>
Tensor<T> AlignPad<T>::backward(const Tensor<T>& dy, const LayerCache<T>& cache) {
  const Shape s = cache.in_shape;
  const Shape o = dy.shape();
  Tensor<T> dx(s);
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int r = 0; r < o.h; ++r)
        for (int q = 0; q < o.w; ++q) dx.at(n, c, std::min(r, s.h - 1), std::min(q, s.w - 1)) += dy.at(n, c, r, q);
  return dx;
}

template <typename T>
Crop<T>::Crop(std::string name, int height, int width) : Layer<T>(std::move(name)), height_(height), width_(width) {}

template <typename T>
Shape Crop<T>::output_shape(const Shape& in) const {
  if (in.h < height_ || in.w < width_) {
    this->fail("cannot crop to " + std::to_string(height_) + "x" + std::to_string(width_), in);
  }
  return {in.n, in.c, height_, width_};
}

template <typename T>
Tensor<T> Crop<T>::forward(const Tensor<T>& x, LayerCache<T>& cache, Mode mode) {
  const Shape s = x.shape();
  const Shape o = output_shape(s);
  Tensor<T> y(o);
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int r = 0; r < o.h; ++r) std::copy_n(&x.at(n, c, r, 0), o.w, &y.at(n, c, r, 0));
  cache.mode = mode;
  cache.in_shape = s;
  return y;
}

template <typename T>
Tensor<T> Crop<T>::backward(const Tensor<T>& dy, const LayerCache<T>& cache) {
  const Shape s = cache.in_shape;
  const Shape o = dy.shape();
  Tensor<T> dx(s);
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int r = 0; r < o.h; ++r) std::copy_n(&dy.at(n, c, r, 0), o.w, &dx.at(n, c, r, 0));
  return dx;
}

// ---------------------------------------------------------------- Sequential

template <typename T>
Shape Sequential<T>::output_shape(const Shape& in) const {
  Shape s = in;
  for (const auto& l : layers_) s = l->output_shape(s);
  return s;
}

template <typename T>
Tensor<T> Sequential<T>::forward(const Tensor<T>& x, LayerCache<T>& cache, Mode mode) {
  cache.mode = mode;
  cache.children.resize(layers_.size());
  if (layers_.empty()) return x;
  Tensor<T> h = layers_[0]->forward(x, cache.children[0], mode);
  for (std::size_t i = 1; i < layers_.size(); ++i) h = layers_[i]->forward(h, cache.children[i], mode);
  return h;
}

template <typename T>
Tensor<T> Sequential<T>::backward(const Tensor<T>& dy, const LayerCache<T>& cache) {
  if (layers_.empty()) return dy;
  Tensor<T> g = layers_.back()->backward(dy, cache.children.back());
  for (std::size_t i = layers_.size() - 1; i-- > 0;) g = layers_[i]->backward(g, cache.children[i]);
  return g;
}

template <typename T>
void Sequential<T>::collect(std::vector<Param<T>*>& params, std::vector<Param<T>*>& buffers) {
  for (auto& l : layers_) l->collect(params, buffers);
}

// ---------------------------------------------------------------- ResidualBlock

template <typename T>
ResidualBlock<T>::ResidualBlock(std::string name, int in_ch, int out_ch, int stride, Rng& rng)
    : Layer<T>(name), in_ch_(in_ch), out_ch_(out_ch), stride_(stride), main_(name + ".main"),
      out_relu_(name + ".relu_out") {
  main_.template add<Conv2d<T>>(name + ".conv1", in_ch, out_ch, 3, stride, false, rng);
  main_.template add<BatchNorm2d<T>>(name + ".bn1", out_ch);
  main_.template add<Relu<T>>(name + ".relu1");
  main_.template add<Conv2d<T>>(name + ".conv2", out_ch, out_ch, 3, 1, false, rng);
  main_.template add<BatchNorm2d<T>>(name + ".bn2", out_ch);
  if (stride != 1 || in_ch != out_ch) {
    shortcut_ = std::make_unique<Sequential<T>>(name + ".shortcut");
    shortcut_->template add<Conv2d<T>>(name + ".proj", in_ch, out_ch, 1, stride, false, rng);
    shortcut_->template add<BatchNorm2d<T>>(name + ".proj_bn", out_ch);
  }
}

template <typename T>
Shape ResidualBlock<T>::output_shape(const Shape& in) const {
  return main_.output_shape(in);
}

template <typename T>
Tensor<T> ResidualBlock<T>::forward(const Tensor<T>& x, LayerCache<T>& cache, Mode mode) {
  cache.mode = mode;
  cache.children.resize(3);
  Tensor<T> h = main_.forward(x, cache.children[0], mode);
  if (shortcut_) {
    h += shortcut_->forward(x, cache.children[1], mode);
  } else {
    h += x;
  }
  return out_relu_.forward(h, cache.children[2], mode);
}

template <typename T>
Tensor<T> ResidualBlock<T>::backward(const Tensor<T>& dy, const LayerCache<T>& cache) {
  const Tensor<T> g = out_relu_.backward(dy, cache.children[2]);
  Tensor<T> dx = main_.backward(g, cache.children[0]);
  if (shortcut_) {
    dx += shortcut_->backward(g, cache.children[1]);
  } else {
    dx += g;
  }
  return dx;
}

template <typename T>
void ResidualBlock<T>::collect(std::vector<Param<T>*>& params, std::vector<Param<T>*>& buffers) {
  main_.collect(params, buffers);
  if (shortcut_) shortcut_->collect(params, buffers);
}

#define ATTRENH_INSTANTIATE(T)          \
  template class Layer<T>;              \
  template struct ParamSet<T>;          \
  template class Conv2d<T>;             \
  template class ConvTranspose2d<T>;    \
  template class BatchNorm2d<T>;        \
  template class LeakyRelu<T>;          \
  template class Relu<T>;               \
  template class Sigmoid<T>;            \
  template class GlobalAvgPool<T>;      \
  template class AvgPool<T>;            \
  template class Affine<T>;             \
  template class AlignPad<T>;           \
  template class Crop<T>;               \
  template class Sequential<T>;         \
  template class ResidualBlock<T>;

ATTRENH_INSTANTIATE(float)
ATTRENH_INSTANTIATE(double)

}  // namespace attrenh
