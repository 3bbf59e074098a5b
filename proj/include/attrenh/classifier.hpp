#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <vector>

#include "attrenh/layers.hpp"

namespace attrenh {

enum Region { kBody = 0, kHead = 1, kUpper = 2, kLower = 3 };
inline constexpr int kRegionCount = 4;
inline constexpr int kPartCount = 3;

/// Row ranges [begin, end) of the four regions for an image of height H split
/// into ten equal blocks: head is blocks 1-4, upper 3-7, lower 6-10.
struct PartPartition {
  int height = 0;
  std::array<int, kRegionCount> begin{};
  std::array<int, kRegionCount> end{};

  /// Throws ConfigError unless height is a positive multiple of 10.
  static PartPartition for_height(int height);
  int rows(int region) const { return end[region] - begin[region]; }
};

/// (body, head, upper, lower) row crops of a (N, C, H, W) batch.
template <typename T>
std::array<Tensor<T>, kRegionCount> decompose(const Tensor<T>& image);

/// Fused scores (N, A) and, per (sample, attribute), the winning part index
/// into {head, upper, lower}.
template <typename T>
struct FusedScores {
  Tensor<T> scores;
  std::vector<int> argmax;
};

/// Score = body + max over parts, per sample and attribute. Ties go to the
/// lowest part index. All inputs are (N, A, 1, 1).
template <typename T>
FusedScores<T> fuse_scores(const Tensor<T>& body, const std::array<Tensor<T>, kPartCount>& parts);

/// Weighted binary cross-entropy on raw scores, averaged over the batch.
/// Sigmoid outputs are clamped to [1e-7, 1 - 1e-7]. Writes d loss / d scores
/// into `grad` when non-null (zero where the clamp is active).
template <typename T>
T weighted_bce(const Tensor<T>& scores, const std::vector<std::uint8_t>& labels, const std::vector<double>& ratios,
               Tensor<T>* grad = nullptr);

struct ClassifierSpec {
  int height = 80;
  int width = 32;
  int attributes = 9;
  std::vector<int> channels{16, 32, 64};
};

/// Shared residual backbone with global average pooling, applied to each of
/// the four regions, and one affine scoring head per region.
template <typename T>
class AttributeClassifier {
 public:
  struct Cache {
    std::array<LayerCache<T>, kRegionCount> backbone;
    std::array<LayerCache<T>, kRegionCount> heads;
    std::vector<int> argmax;
    int batch = 0;
  };

  AttributeClassifier(const ClassifierSpec& spec, Rng& rng);

  const ClassifierSpec& spec() const { return spec_; }
  /// Number of stride-2 stages in the backbone.
  int downsamples() const { return static_cast<int>(spec_.channels.size()); }
  int feature_dim() const { return spec_.channels.back(); }

  /// Pooled backbone features (N, C, 1, 1) of one region.
  Tensor<T> region_features(const Tensor<T>& region, LayerCache<T>& cache, Mode mode);
  /// Raw fused scores (N, A, 1, 1). Throws SizeError if x is not (., 3, H, W).
  Tensor<T> scores(const Tensor<T>& x, Cache& cache, Mode mode);
  /// Accumulates parameter gradients from d loss / d scores.
  void backward(const Tensor<T>& dscores, const Cache& cache);
  /// Eval-mode sigmoid probabilities, (N, A, 1, 1).
  Tensor<T> predict(const Tensor<T>& x);

  ParamSet<T> params();
  Sequential<T>& backbone() { return *backbone_; }

 private:
  void check_region(const Shape& s) const;

  ClassifierSpec spec_;
  std::unique_ptr<Sequential<T>> backbone_;
  std::array<std::unique_ptr<Affine<T>>, kRegionCount> heads_;
};

}  // namespace attrenh
