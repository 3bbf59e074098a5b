#include "attrenh/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace attrenh {

PartPartition PartPartition::for_height(int height) {
  if (height <= 0 || height % 10 != 0) {
    throw ConfigError("part partition needs a height divisible by 10, got " + std::to_string(height));
  }
  const int b = height / 10;
  PartPartition p;
  p.height = height;
  p.begin = {0, 0, 2 * b, 5 * b};
  p.end = {height, 4 * b, 7 * b, height};
  return p;
}

template <typename T>
std::array<Tensor<T>, kRegionCount> decompose(const Tensor<T>& image) {
  const auto part = PartPartition::for_height(image.shape().h);
  std::array<Tensor<T>, kRegionCount> out;
  out[kBody] = image;
  for (int r = kHead; r < kRegionCount; ++r) out[r] = crop_rows(image, part.begin[r], part.rows(r));
  return out;
}

template <typename T>
FusedScores<T> fuse_scores(const Tensor<T>& body, const std::array<Tensor<T>, kPartCount>& parts) {
  const Shape s = body.shape();
  for (const auto& p : parts) {
    if (!(p.shape() == s)) throw ArgumentError("part score shape " + p.shape().str() + " != " + s.str());
  }
  FusedScores<T> out{Tensor<T>(s), std::vector<int>(body.size(), 0)};
  for (std::size_t i = 0; i < body.size(); ++i) {
    int best = 0;
    for (int p = 1; p < kPartCount; ++p)
      if (parts[p][i] > parts[best][i]) best = p;
    out.argmax[i] = best;
    out.scores[i] = body[i] + parts[best][i];
  }
  return out;
}

template <typename T>
T weighted_bce(const Tensor<T>& scores, const std::vector<std::uint8_t>& labels, const std::vector<double>& ratios,
               Tensor<T>* grad) {
  const int n = scores.shape().n;
  const std::size_t a = ratios.size();
  if (scores.size() != static_cast<std::size_t>(n) * a || labels.size() != scores.size()) {
    throw ArgumentError("weighted_bce: scores " + scores.shape().str() + ", " + std::to_string(labels.size()) +
                        " labels, " + std::to_string(a) + " ratios");
  }
  for (std::size_t i = 0; i < a; ++i) {
    if (!(ratios[i] > 0.0 && ratios[i] < 1.0)) {
      throw ConfigError("weighted_bce: ratio " + std::to_string(i) + " = " + std::to_string(ratios[i]) +
                        " outside (0, 1)");
    }
  }
  constexpr double kClamp = 1e-7;
  if (grad) *grad = Tensor<T>(scores.shape());
  double total = 0.0;
  for (int s = 0; s < n; ++s) {
    for (std::size_t i = 0; i < a; ++i) {
      const std::size_t k = static_cast<std::size_t>(s) * a + i;
      const double z = static_cast<double>(scores[k]);
      const double raw = 1.0 / (1.0 + std::exp(-z));
      const double y = std::clamp(raw, kClamp, 1.0 - kClamp);
      const bool clamped = y != raw;
      const double wp = 1.0 / (2.0 * ratios[i]);
      const double wn = 1.0 / (2.0 * (1.0 - ratios[i]));
      if (labels[k]) {
        total += wp * -std::log(y);
        if (grad && !clamped) (*grad)[k] = static_cast<T>(-wp * (1.0 - y) / n);
      } else {
        total += wn * -std::log(1.0 - y);
        if (grad && !clamped) (*grad)[k] = static_cast<T>(wn * y / n);
      }
    }
  }
  return static_cast<T>(total / n);
}

template <typename T>
AttributeClassifier<T>::AttributeClassifier(const ClassifierSpec& spec, Rng& rng) : spec_(spec) {
  if (spec.channels.empty() || spec.attributes < 1) throw ConfigError("classifier needs channels and attributes");
  PartPartition::for_height(spec.height);
  backbone_ = std::make_unique<Sequential<T>>("backbone");
  auto& bb = *backbone_;
  bb.template add<Conv2d<T>>("backbone.stem.conv", 3, spec.channels[0], 3, 2, false, rng);
  bb.template add<BatchNorm2d<T>>("backbone.stem.bn", spec.channels[0]);
  bb.template add<Relu<T>>("backbone.stem.relu");
  int in = spec.channels[0];
  for (std::size_t i = 0; i < spec.channels.size(); ++i) {
    bb.template add<ResidualBlock<T>>("backbone.stage" + std::to_string(i), in, spec.channels[i], i == 0 ? 1 : 2,
                                      rng);
    in = spec.channels[i];
  }
  bb.template add<GlobalAvgPool<T>>("backbone.gap");
  static const char* names[kRegionCount] = {"score.body", "score.head", "score.upper", "score.lower"};
  for (int r = 0; r < kRegionCount; ++r) heads_[r] = std::make_unique<Affine<T>>(names[r], in, spec.attributes, rng);
  const auto part = PartPartition::for_height(spec.height);
  for (int r = 0; r < kRegionCount; ++r) check_region({1, 3, part.rows(r), spec.width});
}

template <typename T>
void AttributeClassifier<T>::check_region(const Shape& s) const {
  int h = s.h, w = s.w;
  for (int i = 0; i < downsamples(); ++i) {
    if (h % 2 != 0 || w % 2 != 0) {
      throw ConfigError("region " + s.str() + " too small or not halvable " + std::to_string(downsamples()) +
                        " times by the backbone");
    }
    h /= 2;
    w /= 2;
  }
}

template <typename T>
Tensor<T> AttributeClassifier<T>::region_features(const Tensor<T>& region, LayerCache<T>& cache, Mode mode) {
  check_region(region.shape());
  return backbone_->forward(region, cache, mode);
}

template <typename T>
Tensor<T> AttributeClassifier<T>::scores(const Tensor<T>& x, Cache& cache, Mode mode) {
  const Shape s = x.shape();
  if (s.c != 3 || s.h != spec_.height || s.w != spec_.width) {
    throw SizeError("classifier expects (N,3," + std::to_string(spec_.height) + "," + std::to_string(spec_.width) +
                    "), got " + s.str());
  }
  auto regions = decompose(x);
  std::array<Tensor<T>, kRegionCount> sc;
  for (int r = 0; r < kRegionCount; ++r) {
    Tensor<T> f = region_features(regions[r], cache.backbone[r], mode);
    sc[r] = heads_[r]->forward(f, cache.heads[r], mode);
  }
  auto fused = fuse_scores(sc[kBody], {sc[kHead], sc[kUpper], sc[kLower]});
  cache.argmax = std::move(fused.argmax);
  cache.batch = s.n;
  return std::move(fused.scores);
}

template <typename T>
void AttributeClassifier<T>::backward(const Tensor<T>& dscores, const Cache& cache) {
  std::array<Tensor<T>, kRegionCount> ds;
  ds[kBody] = dscores;
  for (int r = kHead; r < kRegionCount; ++r) ds[r] = Tensor<T>(dscores.shape());
  for (std::size_t i = 0; i < dscores.size(); ++i) ds[kHead + cache.argmax[i]][i] = dscores[i];
  for (int r = 0; r < kRegionCount; ++r) {
    Tensor<T> df = heads_[r]->backward(ds[r], cache.heads[r]);
    backbone_->backward(df, cache.backbone[r]);
  }
}

template <typename T>
Tensor<T> AttributeClassifier<T>::predict(const Tensor<T>& x) {
  Cache cache;
  Tensor<T> z = scores(x, cache, Mode::Eval);
  for (std::size_t i = 0; i < z.size(); ++i) z[i] = T(1) / (T(1) + std::exp(-z[i]));
  return z;
}

template <typename T>
ParamSet<T> AttributeClassifier<T>::params() {
  ParamSet<T> set = collect_params<T>(*backbone_);
  for (auto& h : heads_) h->collect(set.params, set.buffers);
  return set;
}

#define ATTRENH_INSTANTIATE(T)                                                                                  \
  template std::array<Tensor<T>, kRegionCount> decompose<T>(const Tensor<T>&);                                  \
  template FusedScores<T> fuse_scores<T>(const Tensor<T>&, const std::array<Tensor<T>, kPartCount>&);           \
  template T weighted_bce<T>(const Tensor<T>&, const std::vector<std::uint8_t>&, const std::vector<double>&,    \
                             Tensor<T>*);                                                                       \
  template class AttributeClassifier<T>;

ATTRENH_INSTANTIATE(float)
ATTRENH_INSTANTIATE(double)

}  // namespace attrenh
