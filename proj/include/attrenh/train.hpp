#pragma once

#include <filesystem>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "attrenh/checkpoint.hpp"
#include "attrenh/classifier.hpp"
#include "attrenh/config.hpp"
#include "attrenh/dataset.hpp"
#include "attrenh/enhancers.hpp"

namespace attrenh {

namespace kinds {
inline constexpr const char* kClassifier = "classifier";
}  // namespace kinds

std::string generator_kind(EnhancerKind which);      // "<which>_generator"
std::string discriminator_kind(EnhancerKind which);  // "<which>_discriminator"

/// Checkpoint and history file names inside a models directory.
std::string checkpoint_file(const std::string& kind);  // "<kind>.ckpt"
std::string history_file(const std::string& run);      // "<run>_history.jsonl"

struct ClassifierModel {
  AttributeSchema schema;
  std::unique_ptr<AttributeClassifier<float>> net;
  std::string config_hash;
};

ClassifierModel make_classifier(const RunConfig& cfg, const AttributeSchema& schema, Rng& rng);
ClassifierModel load_classifier(const std::filesystem::path& path, const std::string& expected_hash = "");

struct GeneratorModel {
  EnhancerKind which = EnhancerKind::Reconstruction;
  std::unique_ptr<Generator<float>> net;
  std::string config_hash;
};

GeneratorModel load_generator(const std::filesystem::path& path, EnhancerKind which,
                              const std::string& expected_hash = "");

/// Eval-mode probabilities, row-major N x A, over images of one shape.
std::vector<double> predict_probs(AttributeClassifier<float>& net, const std::vector<Tensor<float>>& images,
                                  int batch = 64);
/// Eval-mode generator outputs, one (1, 3, H, W) tensor per input image.
std::vector<Tensor<float>> generate(Generator<float>& net, const std::vector<Tensor<float>>& images, int batch = 32);

/// For each record of `corrupted`, the index of its clean source in `clean`.
std::vector<std::size_t> pair_by_source(const LoadedSet& corrupted, const LoadedSet& clean);

struct TrainOptions {
  std::filesystem::path out;
  /// Continue from the checkpoints in `out` (config hash must match).
  bool resume = false;
  /// Human-readable progress with timings; never part of the reproducible outputs.
  std::ostream* log = nullptr;
};

struct TrainResult {
  std::vector<std::string> history;  // JSON lines
  std::vector<std::filesystem::path> checkpoints;
};

/// SGD on the weighted BCE over mini-batches in a seeded order. Writes
/// classifier.ckpt and classifier_history.jsonl; per-epoch test mA is logged
/// when `test` is given. Throws NumericError on a non-finite loss.
TrainResult train_classifier(const RunConfig& cfg, const LoadedSet& train, const LoadedSet* test,
                             const TrainOptions& opts);

/// Adversarial training with one discriminator step (K of them) then one
/// generator step per mini-batch. `corrupted` pairs with `clean` through
/// record sources. Writes generator and discriminator checkpoints plus
/// <which>_history.jsonl; per-epoch test PSNR when test pairs are given.
TrainResult train_gan(const RunConfig& cfg, EnhancerKind which, const LoadedSet& corrupted, const LoadedSet& clean,
                      const LoadedSet* test_corrupted, const LoadedSet* test_clean, const TrainOptions& opts);

/// Consecutive batches with mean D(fake) below this count as saturated.
inline constexpr double kSaturationProb = 1e-6;
inline constexpr int kSaturationBatches = 100;

}  // namespace attrenh
