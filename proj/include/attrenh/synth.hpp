#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "attrenh/config.hpp"
#include "attrenh/rng.hpp"
#include "attrenh/tensor.hpp"

namespace attrenh {

enum class CorruptionKind { None, Occluded, LowRes };

struct Corruption {
  CorruptionKind kind = CorruptionKind::None;
  double rate = 0.0;  // occluded
  int factor = 0;     // lowres

  bool operator==(const Corruption&) const = default;
};

std::string to_string(CorruptionKind kind);
CorruptionKind corruption_from_string(const std::string& s);

/// One image with its attribute bits. `image` is (1, 3, H, W) in [0, 1].
struct ImageSample {
  std::string id;
  Tensor<float> image;
  std::vector<std::uint8_t> labels;
  Corruption corruption;
};

/// Names of every attribute the renderer draws, in label order. The last one
/// is always "occlusion_down".
const std::vector<std::string>& rendered_attribute_names();
inline constexpr const char* kOcclusionDown = "occlusion_down";

/// Marginal positive rate of each rendered attribute under `priors`
/// (occlusion_down is 0 for freshly rendered people).
std::vector<double> attribute_marginals(const AttributePriors& priors);

/// Draws the attribute bits for one person.
std::vector<std::uint8_t> sample_attributes(Rng& rng, const AttributePriors& priors);

/// Deterministic layered figure (hair, head, hat, torso, arms, backpack,
/// trousers or skirt, handbag) over a cluttered background. Labels are the
/// sampled bits; occlusion_down is 0.
ImageSample render_person(std::uint64_t seed, const RunConfig& config);

/// Bottom floor(rate*H) rows become the donor's top floor(rate*H) rows; labels
/// are copied from `sample` with the occlusion bit set.
ImageSample occlude(const ImageSample& sample, const ImageSample& donor, double rate, int occlusion_index);

/// Area-average over factor x factor blocks.
ImageSample downsample(const ImageSample& sample, int factor);
/// Half-pixel-centred bilinear interpolation with edge clamping.
ImageSample bilinear_upsample(const ImageSample& sample, int factor);

template <typename T>
Tensor<T> downsample_area(const Tensor<T>& x, int factor);
template <typename T>
Tensor<T> upsample_bilinear(const Tensor<T>& x, int factor);

/// Peak signal-to-noise ratio in dB for images in [0, 1]; per-sample mean.
double mean_psnr(const Tensor<float>& a, const Tensor<float>& b);

}  // namespace attrenh
