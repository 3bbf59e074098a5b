#include "attrenh/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace attrenh {

std::string to_string(CorruptionKind kind) {
  switch (kind) {
    case CorruptionKind::None: return "none";
    case CorruptionKind::Occluded: return "occluded";
    case CorruptionKind::LowRes: return "lowres";
  }
  return "none";
}

CorruptionKind corruption_from_string(const std::string& s) {
  if (s == "none") return CorruptionKind::None;
  if (s == "occluded") return CorruptionKind::Occluded;
  if (s == "lowres") return CorruptionKind::LowRes;
  throw FormatError("unknown corruption kind '" + s + "'");
}

namespace {

enum Attr : int { kFemale, kHat, kBackpack, kUpperDark, kUpperRed, kSkirt, kLowerDark, kHandbag, kOcclusion, kNumAttrs };

using Rgb = std::array<float, 3>;

Rgb hsv(double h, double s, double v) {
  h = h - std::floor(h);
  const double c = v * s;
  const double hp = h * 6.0;
  const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
  double r = 0, g = 0, b = 0;
  if (hp < 1) r = c, g = x;
  else if (hp < 2) r = x, g = c;
  else if (hp < 3) g = c, b = x;
  else if (hp < 4) g = x, b = c;
  else if (hp < 5) r = x, b = c;
  else r = c, b = x;
  const double m = v - c;
  return {static_cast<float>(r + m), static_cast<float>(g + m), static_cast<float>(b + m)};
}

/// Supersampled canvas in normalized coordinates: x in [0,1] across the
/// width, y in [0,1] down the height.
class Canvas {
 public:
  Canvas(int height, int width, int ss) : h_(height * ss), w_(width * ss), ss_(ss), px_(3 * h_ * w_, 0.f) {}

  void fill_if(double x0, double y0, double x1, double y1, const Rgb& c, auto&& inside) {
    const int ix0 = std::max(0, static_cast<int>(std::floor(x0 * w_)));
    const int ix1 = std::min(w_ - 1, static_cast<int>(std::ceil(x1 * w_)));
    const int iy0 = std::max(0, static_cast<int>(std::floor(y0 * h_)));
    const int iy1 = std::min(h_ - 1, static_cast<int>(std::ceil(y1 * h_)));
    for (int y = iy0; y <= iy1; ++y) {
      const double py = (y + 0.5) / h_;
      for (int x = ix0; x <= ix1; ++x) {
        const double pxn = (x + 0.5) / w_;
        if (inside(pxn, py)) set(y, x, c);
      }
    }
  }

  void rect(double x0, double y0, double x1, double y1, const Rgb& c) {
    fill_if(x0, y0, x1, y1, c, [&](double x, double y) { return x >= x0 && x < x1 && y >= y0 && y < y1; });
  }

  void ellipse(double cx, double cy, double rx, double ry, const Rgb& c, double y_max = 2.0) {
    fill_if(cx - rx, cy - ry, cx + rx, cy + ry, c, [&](double x, double y) {
      const double dx = (x - cx) / rx, dy = (y - cy) / ry;
      return dx * dx + dy * dy <= 1.0 && y < y_max;
    });
  }

  /// Horizontal-band trapezoid, half-widths interpolated from top to bottom.
  void trapezoid(double cx, double y0, double y1, double half_top, double half_bottom, const Rgb& c) {
    const double hw = std::max(half_top, half_bottom);
    fill_if(cx - hw, y0, cx + hw, y1, c, [&](double x, double y) {
      if (y < y0 || y >= y1) return false;
      const double t = (y - y0) / (y1 - y0);
      const double half = half_top + t * (half_bottom - half_top);
      return std::abs(x - cx) <= half;
    });
  }

  void vertical_gradient(const Rgb& top, const Rgb& bottom) {
    for (int y = 0; y < h_; ++y) {
      const float t = static_cast<float>(y) / static_cast<float>(h_ - 1);
      Rgb c{};
      for (int k = 0; k < 3; ++k) c[k] = top[k] + t * (bottom[k] - top[k]);
      for (int x = 0; x < w_; ++x) set(y, x, c);
    }
  }

  /// Box-filters down to the output resolution.
  Tensor<float> resolve(int height, int width) const {
    Tensor<float> img({1, 3, height, width});
    const float inv = 1.f / static_cast<float>(ss_ * ss_);
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) {
          float s = 0;
          for (int dy = 0; dy < ss_; ++dy)
            for (int dx = 0; dx < ss_; ++dx) s += px_[(c * h_ + y * ss_ + dy) * w_ + x * ss_ + dx];
          img.at(0, c, y, x) = s * inv;
        }
    return img;
  }

 private:
  void set(int y, int x, const Rgb& c) {
    for (int k = 0; k < 3; ++k) px_[(k * h_ + y) * w_ + x] = c[k];
  }

  int h_, w_, ss_;
  std::vector<float> px_;
};

// Draws hue, saturation, value in that order (argument evaluation order is
// unspecified, so never draw inside a call's argument list).
Rgb random_hsv(Rng& rng, double h0, double h1, double s0, double s1, double v0, double v1) {
  const double h = rng.uniform(h0, h1);
  const double s = rng.uniform(s0, s1);
  const double v = rng.uniform(v0, v1);
  return hsv(h, s, v);
}

Rgb garment_color(Rng& rng, bool dark, bool red) {
  const double v = dark ? rng.uniform(0.12, 0.30) : rng.uniform(0.65, 0.95);
  if (red) {
    const double h = rng.uniform(-0.025, 0.025);
    return hsv(h, rng.uniform(0.65, 0.95), v);
  }
  if (rng.bernoulli(0.25)) return hsv(0.0, rng.uniform(0.0, 0.12), v);
  const double h = rng.uniform(0.12, 0.85);
  return hsv(h, rng.uniform(0.35, 0.8), v);
}

}  // namespace

const std::vector<std::string>& rendered_attribute_names() {
  static const std::vector<std::string> names{"female",     "hat",   "backpack",   "upper_dark", "upper_red",
                                              "skirt",      "lower_dark", "handbag", kOcclusionDown};
  return names;
}

std::vector<double> attribute_marginals(const AttributePriors& p) {
  std::vector<double> m(kNumAttrs, 0.0);
  m[kFemale] = p.female;
  m[kHat] = p.hat;
  m[kBackpack] = p.backpack;
  m[kUpperDark] = p.upper_dark;
  m[kUpperRed] = p.upper_red;
  m[kSkirt] = p.female * p.skirt_given_female + (1 - p.female) * p.skirt_given_male;
  m[kLowerDark] = p.upper_dark * p.lower_dark_given_upper_dark + (1 - p.upper_dark) * p.lower_dark_given_upper_light;
  m[kHandbag] = p.female * p.handbag_given_female + (1 - p.female) * p.handbag_given_male;
  m[kOcclusion] = 0.0;
  return m;
}

std::vector<std::uint8_t> sample_attributes(Rng& rng, const AttributePriors& p) {
  std::vector<std::uint8_t> a(kNumAttrs, 0);
  a[kFemale] = rng.bernoulli(p.female);
  a[kHat] = rng.bernoulli(p.hat);
  a[kBackpack] = rng.bernoulli(p.backpack);
  a[kUpperDark] = rng.bernoulli(p.upper_dark);
  a[kUpperRed] = rng.bernoulli(p.upper_red);
  a[kSkirt] = rng.bernoulli(a[kFemale] ? p.skirt_given_female : p.skirt_given_male);
  a[kLowerDark] = rng.bernoulli(a[kUpperDark] ? p.lower_dark_given_upper_dark : p.lower_dark_given_upper_light);
  a[kHandbag] = rng.bernoulli(a[kFemale] ? p.handbag_given_female : p.handbag_given_male);
  return a;
}

ImageSample render_person(std::uint64_t seed, const RunConfig& config) {
  const int H = config.data.height, W = config.data.width;
  if (H % 10 != 0) throw ConfigError("image height " + std::to_string(H) + " is not divisible by 10");
  if (H < 10 || W < 4) throw ConfigError("image too small to render");
  Rng rng(seed);
  ImageSample s;
  s.labels = sample_attributes(rng, config.priors);
  const auto& a = s.labels;

  Canvas cv(H, W, 2);
  const Rgb bg_top = random_hsv(rng, 0, 1, 0.05, 0.3, 0.35, 0.8);
  const Rgb bg_bottom = random_hsv(rng, 0, 1, 0.05, 0.3, 0.35, 0.8);
  cv.vertical_gradient(bg_top, bg_bottom);
  const int clutter = static_cast<int>(rng.uniform_int(2, 4));
  for (int i = 0; i < clutter; ++i) {
    const double x0 = rng.uniform(-0.2, 0.9);
    const double y0 = rng.uniform(-0.1, 0.9);
    const double w = rng.uniform(0.1, 0.5);
    const double h = rng.uniform(0.05, 0.3);
    cv.rect(x0, y0, x0 + w, y0 + h, random_hsv(rng, 0, 1, 0.05, 0.35, 0.3, 0.85));
  }

  const double cx = 0.5 + rng.uniform(-0.04, 0.04);
  const double top = 0.05 + rng.uniform(0.0, 0.02);
  const double u = 0.9 * rng.uniform(0.95, 1.0);
  auto Y = [&](double t) { return top + t * u; };
  static const std::array<Rgb, 5> skins{Rgb{0.96f, 0.80f, 0.69f}, Rgb{0.89f, 0.67f, 0.52f}, Rgb{0.78f, 0.56f, 0.40f},
                                        Rgb{0.55f, 0.38f, 0.26f}, Rgb{0.36f, 0.24f, 0.16f}};
  const Rgb skin = skins[static_cast<std::size_t>(rng.uniform_int(0, 4))];
  static const std::array<Rgb, 4> hairs{Rgb{0.08f, 0.06f, 0.05f}, Rgb{0.30f, 0.18f, 0.08f}, Rgb{0.75f, 0.62f, 0.35f},
                                        Rgb{0.45f, 0.25f, 0.12f}};
  const Rgb hair = hairs[static_cast<std::size_t>(rng.uniform_int(0, 3))];
  const Rgb shirt = garment_color(rng, a[kUpperDark], a[kUpperRed]);
  const Rgb lower = garment_color(rng, a[kLowerDark], false);
  const Rgb shoe = random_hsv(rng, 0, 1, 0.0, 0.3, 0.05, 0.2);
  const double pack_side = rng.bernoulli(0.5) ? 1.0 : -1.0;
  const double bag_side = rng.bernoulli(0.5) ? 1.0 : -1.0;
  const Rgb pack = random_hsv(rng, 0.0, 0.15, 0.2, 0.6, 0.08, 0.22);
  const Rgb bag = random_hsv(rng, 0, 1, 0.6, 0.95, 0.55, 0.9);
  const Rgb hat = random_hsv(rng, 0, 1, 0.4, 0.9, 0.3, 0.9);

  // Back layer: long hair and the backpack body.
  if (a[kFemale]) cv.rect(cx - 0.19, Y(0.03), cx + 0.19, Y(0.24), hair);
  if (a[kBackpack]) {
    const double x0 = pack_side > 0 ? cx + 0.30 : cx - 0.44;
    cv.rect(x0, Y(0.18), x0 + 0.14, Y(0.43), pack);
  }

  // Legs and lower garment.
  if (a[kSkirt]) {
    cv.rect(cx - 0.15, Y(0.70), cx - 0.05, Y(0.95), skin);
    cv.rect(cx + 0.05, Y(0.70), cx + 0.15, Y(0.95), skin);
    cv.trapezoid(cx, Y(0.50), Y(0.74), 0.21, 0.31, lower);
  } else {
    cv.rect(cx - 0.21, Y(0.50), cx + 0.21, Y(0.58), lower);
    cv.rect(cx - 0.21, Y(0.50), cx - 0.02, Y(0.95), lower);
    cv.rect(cx + 0.02, Y(0.50), cx + 0.21, Y(0.95), lower);
  }
  cv.rect(cx - 0.20, Y(0.93), cx - 0.02, Y(0.985), shoe);
  cv.rect(cx + 0.02, Y(0.93), cx + 0.20, Y(0.985), shoe);

  // Torso, arms, hands.
  cv.rect(cx - 0.05, Y(0.12), cx + 0.05, Y(0.17), skin);
  cv.rect(cx - 0.23, Y(0.155), cx + 0.23, Y(0.51), shirt);
  cv.rect(cx - 0.31, Y(0.165), cx - 0.23, Y(0.46), shirt);
  cv.rect(cx + 0.23, Y(0.165), cx + 0.31, Y(0.46), shirt);
  cv.ellipse(cx - 0.27, Y(0.48), 0.05, 0.022 * u, skin);
  cv.ellipse(cx + 0.27, Y(0.48), 0.05, 0.022 * u, skin);
  if (a[kBackpack]) {
    cv.rect(cx - 0.15, Y(0.16), cx - 0.10, Y(0.37), pack);
    cv.rect(cx + 0.10, Y(0.16), cx + 0.15, Y(0.37), pack);
  }
  if (a[kHandbag]) {
    cv.rect(cx + bag_side * 0.29 - 0.01, Y(0.44), cx + bag_side * 0.29 + 0.01, Y(0.49), shoe);
    const double x0 = bag_side > 0 ? cx + 0.26 : cx - 0.46;
    cv.rect(x0, Y(0.49), x0 + 0.20, Y(0.63), bag);
  }

  // Head, short hair, hat.
  cv.ellipse(cx, Y(0.075), 0.15, 0.062 * u, skin);
  cv.ellipse(cx, Y(0.065), 0.16, 0.05 * u, hair, Y(0.045));
  if (a[kHat]) {
    cv.rect(cx - 0.13, Y(-0.035), cx + 0.13, Y(0.025), hat);
    cv.rect(cx - 0.22, Y(0.01), cx + 0.22, Y(0.035), hat);
  }

  s.image = cv.resolve(H, W);
  for (auto& v : s.image.values()) {
    v = std::clamp(v + static_cast<float>(rng.normal(0.0, 0.015)), 0.f, 1.f);
  }
  return s;
}

ImageSample occlude(const ImageSample& sample, const ImageSample& donor, double rate, int occlusion_index) {
  if (!(rate >= 0.5 && rate <= 0.8)) {
    throw ArgumentError("occlusion rate must lie in [0.5, 0.8], got " + std::to_string(rate));
  }
  if (sample.corruption.kind != CorruptionKind::None) {
    throw ArgumentError("sample '" + sample.id + "' is already corrupted (" + to_string(sample.corruption.kind) + ")");
  }
  if (donor.corruption.kind != CorruptionKind::None) {
    throw ArgumentError("donor '" + donor.id + "' is corrupted");
  }
  if (!donor.id.empty() && donor.id == sample.id) throw ArgumentError("donor must differ from the occluded sample");
  if (!(donor.image.shape() == sample.image.shape())) {
    throw ArgumentError("donor shape " + donor.image.shape().str() + " differs from " + sample.image.shape().str());
  }
  if (occlusion_index < 0 || static_cast<std::size_t>(occlusion_index) >= sample.labels.size()) {
    throw ArgumentError("occlusion index out of range");
  }
  const Shape s = sample.image.shape();
  const int rows = static_cast<int>(std::floor(rate * s.h));
  ImageSample out = sample;
  for (int c = 0; c < s.c; ++c)
    for (int r = 0; r < rows; ++r)
      std::copy_n(&donor.image.at(0, c, r, 0), s.w, &out.image.at(0, c, s.h - rows + r, 0));
  out.labels[static_cast<std::size_t>(occlusion_index)] = 1;
  out.corruption = {CorruptionKind::Occluded, rate, 0};
  return out;
}

template <typename T>
Tensor<T> downsample_area(const Tensor<T>& x, int factor) {
  const Shape s = x.shape();
  if (factor < 1 || s.h % factor != 0 || s.w % factor != 0) {
    throw ArgumentError("downsample factor " + std::to_string(factor) + " does not divide " + s.str());
  }
  Tensor<T> y({s.n, s.c, s.h / factor, s.w / factor});
  const double inv = 1.0 / (factor * factor);
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int r = 0; r < s.h / factor; ++r)
        for (int q = 0; q < s.w / factor; ++q) {
          double sum = 0;
          for (int dy = 0; dy < factor; ++dy)
            for (int dx = 0; dx < factor; ++dx) sum += x.at(n, c, r * factor + dy, q * factor + dx);
          y.at(n, c, r, q) = static_cast<T>(sum * inv);
        }
  return y;
}

template <typename T>
Tensor<T> upsample_bilinear(const Tensor<T>& x, int factor) {
  if (factor < 1) throw ArgumentError("upsample factor must be >= 1");
  const Shape s = x.shape();
  if (factor == 1) return x;
  Tensor<T> y({s.n, s.c, s.h * factor, s.w * factor});
  auto coord = [factor](int dst, int limit, int& i0, int& i1, double& t) {
    double src = (dst + 0.5) / factor - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(limit - 1));
    i0 = static_cast<int>(std::floor(src));
    i1 = std::min(i0 + 1, limit - 1);
    t = src - i0;
  };
  for (int r = 0; r < s.h * factor; ++r) {
    int r0, r1;
    double ty;
    coord(r, s.h, r0, r1, ty);
    for (int q = 0; q < s.w * factor; ++q) {
      int q0, q1;
      double tx;
      coord(q, s.w, q0, q1, tx);
      for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c) {
          const double top = x.at(n, c, r0, q0) * (1 - tx) + x.at(n, c, r0, q1) * tx;
          const double bot = x.at(n, c, r1, q0) * (1 - tx) + x.at(n, c, r1, q1) * tx;
          y.at(n, c, r, q) = static_cast<T>(top * (1 - ty) + bot * ty);
        }
    }
  }
  return y;
}

template Tensor<float> downsample_area(const Tensor<float>&, int);
template Tensor<double> downsample_area(const Tensor<double>&, int);
template Tensor<float> upsample_bilinear(const Tensor<float>&, int);
template Tensor<double> upsample_bilinear(const Tensor<double>&, int);

ImageSample downsample(const ImageSample& sample, int factor) {
  if (sample.corruption.kind != CorruptionKind::None) {
    throw ArgumentError("sample '" + sample.id + "' is already corrupted");
  }
  ImageSample out;
  out.id = sample.id;
  out.image = downsample_area(sample.image, factor);
  out.labels = sample.labels;
  out.corruption = {CorruptionKind::LowRes, 0.0, factor};
  return out;
}

ImageSample bilinear_upsample(const ImageSample& sample, int factor) {
  ImageSample out = sample;
  out.image = upsample_bilinear(sample.image, factor);
  return out;
}

double mean_psnr(const Tensor<float>& a, const Tensor<float>& b) {
  if (!(a.shape() == b.shape())) throw ArgumentError("psnr shape mismatch " + a.shape().str() + " vs " + b.shape().str());
  const Shape s = a.shape();
  const std::size_t per = static_cast<std::size_t>(s.c) * s.plane();
  double total = 0;
  for (int n = 0; n < s.n; ++n) {
    double se = 0;
    for (std::size_t i = 0; i < per; ++i) {
      const double d = static_cast<double>(a.sample(n)[i]) - b.sample(n)[i];
      se += d * d;
    }
    const double mse = se / static_cast<double>(per);
    total += mse < 1e-10 ? 100.0 : 10.0 * std::log10(1.0 / mse);
  }
  return total / s.n;
}

}  // namespace attrenh
