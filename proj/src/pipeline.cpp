#include "attrenh/pipeline.hpp"

#include "attrenh/synth.hpp"
#include "json.hpp"

namespace attrenh {

namespace fs = std::filesystem;
using nlohmann::json;

PipelineModels load_models(const fs::path& dir, double trigger) {
  if (!(trigger > 0.0 && trigger < 1.0)) throw ConfigError("pipeline trigger must lie in (0, 1)");
  for (const auto& kind : {std::string(kinds::kClassifier), generator_kind(EnhancerKind::Reconstruction),
                           generator_kind(EnhancerKind::SuperResolution)}) {
    if (!fs::exists(dir / checkpoint_file(kind))) {
      throw ConfigError("missing model: " + (dir / checkpoint_file(kind)).string());
    }
  }
  PipelineModels m;
  m.classifier = load_classifier(dir / checkpoint_file(kinds::kClassifier));
  const std::string& hash = m.classifier.config_hash;
  m.reconstruction = load_generator(dir / checkpoint_file(generator_kind(EnhancerKind::Reconstruction)),
                                    EnhancerKind::Reconstruction, hash);
  m.sr = load_generator(dir / checkpoint_file(generator_kind(EnhancerKind::SuperResolution)),
                        EnhancerKind::SuperResolution, hash);
  m.trigger = trigger;
  const Shape want{1, 3, m.height(), m.width()};
  if (!(m.reconstruction.net->input_shape() == want) || !(m.sr.net->output_shape() == want)) {
    throw ConfigError("enhancer checkpoints were trained for a different image size than the classifier");
  }
  return m;
}

namespace {

enum class InputSize { Full, Quarter };

InputSize classify_size(const Shape& s, const PipelineModels& m) {
  if (s.n == 1 && s.c == 3 && s.h == m.height() && s.w == m.width()) return InputSize::Full;
  if (s.n == 1 && s.c == 3 && s.h * 4 == m.height() && s.w * 4 == m.width()) return InputSize::Quarter;
  throw SizeError("pipeline accepts (1,3," + std::to_string(m.height()) + "," + std::to_string(m.width()) +
                  ") or (1,3," + std::to_string(m.height() / 4) + "," + std::to_string(m.width() / 4) + "), got " +
                  s.str());
}

std::vector<double> row(const std::vector<double>& probs, std::size_t i, std::size_t a) {
  return {probs.begin() + static_cast<std::ptrdiff_t>(i * a), probs.begin() + static_cast<std::ptrdiff_t>((i + 1) * a)};
}

}  // namespace

std::vector<PipelineDecision> run_pipeline_batch(const std::vector<Tensor<float>>& images, PipelineModels& models) {
  const std::size_t a = static_cast<std::size_t>(models.classifier.schema.size());
  const auto occ = static_cast<std::size_t>(models.classifier.schema.occlusion_down_index);
  std::vector<PipelineDecision> out(images.size());

  std::vector<Tensor<float>> full(images.size());
  std::vector<std::size_t> quarter;
  std::vector<Tensor<float>> quarter_images;
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (classify_size(images[i].shape(), models) == InputSize::Quarter) {
      quarter.push_back(i);
      quarter_images.push_back(images[i]);
    } else {
      full[i] = images[i];
    }
  }
  const auto upscaled = generate(*models.sr.net, quarter_images);
  for (std::size_t k = 0; k < quarter.size(); ++k) {
    full[quarter[k]] = upscaled[k];
    out[quarter[k]].used_sr = true;
  }

  const auto first = predict_probs(*models.classifier.net, full);
  std::vector<std::size_t> triggered;
  std::vector<Tensor<float>> to_restore;
  for (std::size_t i = 0; i < images.size(); ++i) {
    out[i].first_pass_probs = row(first, i, a);
    out[i].final_probs = out[i].first_pass_probs;
    if (out[i].first_pass_probs[occ] > models.trigger) {
      triggered.push_back(i);
      to_restore.push_back(full[i]);
    }
  }
  const auto restored = generate(*models.reconstruction.net, to_restore);
  const auto second = predict_probs(*models.classifier.net, restored);
  for (std::size_t k = 0; k < triggered.size(); ++k) {
    auto& d = out[triggered[k]];
    d.used_reconstruction = true;
    d.final_probs = row(second, k, a);
    d.final_probs[occ] = d.first_pass_probs[occ];
  }
  return out;
}

PipelineDecision run_pipeline(const Tensor<float>& image, PipelineModels& models, bool keep_images) {
  auto decisions = run_pipeline_batch({image}, models);
  PipelineDecision d = std::move(decisions.front());
  if (keep_images) {
    d.images_retained = true;
    Tensor<float> x = image;
    if (d.used_sr) {
      d.sr_image = models.sr.net->infer(image);
      x = d.sr_image;
    }
    if (d.used_reconstruction) d.restored_image = models.reconstruction.net->infer(x);
  }
  return d;
}

std::vector<double> classify_direct(const std::vector<Tensor<float>>& images, PipelineModels& models) {
  std::vector<Tensor<float>> full;
  for (const auto& img : images) {
    full.push_back(classify_size(img.shape(), models) == InputSize::Quarter ? upsample_bilinear(img, 4) : img);
  }
  return predict_probs(*models.classifier.net, full);
}

BatchOutcome run_batch(const LoadedSet& set, PipelineModels& models, double threshold) {
  if (set.schema.names != models.classifier.schema.names) {
    throw ConfigError("manifest schema differs from the classifier's schema");
  }
  const auto labels = set.label_matrix();
  const auto& names = set.schema.names;
  BatchOutcome o;
  o.samples = static_cast<int>(set.size());
  const auto direct = classify_direct(set.images, models);
  const auto decisions = run_pipeline_batch(set.images, models);
  std::vector<double> final_probs;
  for (std::size_t i = 0; i < decisions.size(); ++i) {
    const auto& d = decisions[i];
    final_probs.insert(final_probs.end(), d.final_probs.begin(), d.final_probs.end());
    o.sr_runs += d.used_sr;
    o.reconstruction_runs += d.used_reconstruction;
    const bool occluded = set.records[i].corruption.kind == CorruptionKind::Occluded;
    o.false_triggers += d.used_reconstruction && !occluded;
    o.missed_triggers += !d.used_reconstruction && occluded;
  }
  o.corrupted = evaluate(direct, labels, names, threshold);
  o.restored = evaluate(final_probs, labels, names, threshold);
  o.delta = compare(o.corrupted, o.restored);
  return o;
}

std::string outcome_to_json(const BatchOutcome& o) {
  json delta = json::array();
  for (const auto& r : o.delta) {
    auto v = [](const std::optional<double>& x) { return x ? json(*x) : json(nullptr); };
    delta.push_back({{"metric", r.metric}, {"corrupted", v(r.a)}, {"restored", v(r.b)}, {"delta", v(r.delta)}});
  }
  json j = {{"samples", o.samples},
            {"sr_runs", o.sr_runs},
            {"reconstruction_runs", o.reconstruction_runs},
            {"false_triggers", o.false_triggers},
            {"missed_triggers", o.missed_triggers},
            {"corrupted", json::parse(report_to_json(o.corrupted))},
            {"restored", json::parse(report_to_json(o.restored))},
            {"delta", delta}};
  return j.dump(2) + "\n";
}

}  // namespace attrenh
