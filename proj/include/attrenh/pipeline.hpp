#pragma once

#include <filesystem>
#include <vector>

#include "attrenh/metrics.hpp"
#include "attrenh/train.hpp"

namespace attrenh {

/// The three trained networks behind the complete model.
struct PipelineModels {
  ClassifierModel classifier;
  GeneratorModel reconstruction;
  GeneratorModel sr;
  double trigger = 0.5;

  int height() const { return classifier.net->spec().height; }
  int width() const { return classifier.net->spec().width; }
};

/// Loads classifier, reconstruction and sr generator checkpoints from `dir`;
/// all must carry the same config hash.
PipelineModels load_models(const std::filesystem::path& dir, double trigger);

struct PipelineDecision {
  bool used_sr = false;
  bool used_reconstruction = false;
  std::vector<double> first_pass_probs;
  /// From the last classification, except occlusion_down which keeps its
  /// first-pass value.
  std::vector<double> final_probs;
  bool images_retained = false;
  Tensor<float> sr_image;
  Tensor<float> restored_image;
};

/// Super-resolves a quarter-size input, classifies, and when occlusion_down
/// exceeds the trigger reconstructs and classifies again. Throws SizeError
/// for any other input size.
PipelineDecision run_pipeline(const Tensor<float>& image, PipelineModels& models, bool keep_images = false);

/// Same routing as run_pipeline over a whole set, batched.
std::vector<PipelineDecision> run_pipeline_batch(const std::vector<Tensor<float>>& images, PipelineModels& models);

/// Probabilities of the classifier on plain inputs; quarter-size images are
/// bilinearly upsampled to the classifier size first.
std::vector<double> classify_direct(const std::vector<Tensor<float>>& images, PipelineModels& models);

struct BatchOutcome {
  MetricsReport corrupted;
  MetricsReport restored;
  std::vector<DeltaRow> delta;
  int samples = 0;
  int sr_runs = 0;
  int reconstruction_runs = 0;
  /// Reconstruction runs on images whose manifest says they are not occluded.
  int false_triggers = 0;
  /// Occluded images that did not trigger reconstruction.
  int missed_triggers = 0;
};

/// Evaluates the direct and the pipeline path on a manifest.
BatchOutcome run_batch(const LoadedSet& set, PipelineModels& models, double threshold = 0.5);

std::string outcome_to_json(const BatchOutcome& outcome);

}  // namespace attrenh
