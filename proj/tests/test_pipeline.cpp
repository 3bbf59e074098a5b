#include <cmath>

#include "attrenh/pipeline.hpp"
#include "attrenh/synth.hpp"
#include "doctest.h"
#include "helpers.hpp"

using namespace attrenh;
namespace fs = std::filesystem;

namespace {

struct Fixture {
  testutil::TempDir dir;
  fs::path data, models;
  RunConfig cfg = testutil::tiny_config();

  Fixture() {
    data = dir.path() / "data";
    models = dir.path() / "models";
    build_dataset(cfg, data, false);
    const TrainOptions opts{models, false, nullptr};
    train_classifier(cfg, load_set(data / manifests::kTrainClassifier), nullptr, opts);
    const LoadedSet clean = load_set(data / manifests::kTrainClean);
    train_gan(cfg, EnhancerKind::Reconstruction, load_set(data / manifests::kTrainOccluded), clean, nullptr, nullptr,
              opts);
    train_gan(cfg, EnhancerKind::SuperResolution, load_set(data / manifests::kTrainLowres), clean, nullptr, nullptr,
              opts);
  }
};

Fixture& fixture() {
  static Fixture f;
  return f;
}

int occ_index(const PipelineModels& m) { return m.classifier.schema.occlusion_down_index; }

}  // namespace

TEST_CASE("a trigger nobody reaches leaves full-size inputs to one classification") {
  auto& f = fixture();
  PipelineModels m = load_models(f.models, 1.0 - 1e-12);
  const LoadedSet clean = load_set(f.data / manifests::kTestClean);
  const auto direct = classify_direct(clean.images, m);
  const std::size_t a = static_cast<std::size_t>(m.classifier.schema.size());
  for (std::size_t i = 0; i < clean.size(); ++i) {
    const auto d = run_pipeline(clean.images[i], m);
    CHECK_FALSE(d.used_sr);
    CHECK_FALSE(d.used_reconstruction);
    CHECK(d.final_probs == d.first_pass_probs);
    for (std::size_t k = 0; k < a; ++k) CHECK(d.final_probs[k] == doctest::Approx(direct[i * a + k]).epsilon(1e-6));
  }
  const auto o = run_batch(clean, m);
  CHECK(o.reconstruction_runs == 0);
  CHECK(o.false_triggers == 0);
  CHECK(o.restored == o.corrupted);
}

TEST_CASE("a trigger everybody reaches reconstructs and keeps the first-pass occlusion score") {
  auto& f = fixture();
  PipelineModels m = load_models(f.models, 1e-12);
  const LoadedSet occ = load_set(f.data / manifests::kTestOccluded);
  const auto o = static_cast<std::size_t>(occ_index(m));
  for (std::size_t i = 0; i < 3; ++i) {
    const auto d = run_pipeline(occ.images[i], m, true);
    CHECK(d.used_reconstruction);
    CHECK_FALSE(d.used_sr);
    CHECK(d.images_retained);
    CHECK(d.final_probs[o] == d.first_pass_probs[o]);
    const auto again = m.classifier.net->predict(d.restored_image);
    for (std::size_t k = 0; k < d.final_probs.size(); ++k) {
      if (k == o) continue;
      CHECK(d.final_probs[k] == doctest::Approx(again[k]).epsilon(1e-6));
    }
  }
  const auto batch = run_batch(load_set(f.data / manifests::kTestClean), m);
  CHECK(batch.reconstruction_runs == batch.samples);
  CHECK(batch.false_triggers == batch.samples);
}

TEST_CASE("quarter-size inputs are super-resolved first") {
  auto& f = fixture();
  PipelineModels m = load_models(f.models, 1.0 - 1e-12);
  const LoadedSet low = load_set(f.data / manifests::kTestLowres);
  const auto d = run_pipeline(low.images[0], m, true);
  CHECK(d.used_sr);
  CHECK(d.sr_image.shape() == Shape{1, 3, 80, 16});
  const auto p = m.classifier.net->predict(d.sr_image);
  for (std::size_t k = 0; k < d.final_probs.size(); ++k) CHECK(d.final_probs[k] == doctest::Approx(p[k]).epsilon(1e-6));
  const auto o = run_batch(low, m);
  CHECK(o.sr_runs == o.samples);
}

TEST_CASE("routing is a pure function of the input") {
  auto& f = fixture();
  PipelineModels m = load_models(f.models, 0.5);
  const LoadedSet merged = load_set(f.data / manifests::kTestMerged);
  const auto a = run_pipeline_batch(merged.images, m);
  const auto b = run_pipeline_batch(merged.images, m);
  REQUIRE(a.size() == merged.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].used_sr == b[i].used_sr);
    CHECK(a[i].used_reconstruction == b[i].used_reconstruction);
    CHECK(a[i].final_probs == b[i].final_probs);
    CHECK(a[i].used_sr == (merged.records[i].corruption.kind == CorruptionKind::LowRes));
    const int o = occ_index(m);
    CHECK(a[i].used_reconstruction == (a[i].first_pass_probs[static_cast<std::size_t>(o)] > 0.5));
  }
  const auto out = run_batch(merged, m);
  CHECK(outcome_to_json(out) == outcome_to_json(run_batch(merged, m)));
  CHECK(out.delta.size() == 5 + static_cast<std::size_t>(m.classifier.schema.size()));
}

TEST_CASE("other input sizes are refused") {
  auto& f = fixture();
  PipelineModels m = load_models(f.models, 0.5);
  CHECK_THROWS_AS(run_pipeline(Tensor<float>({1, 3, 40, 16}), m), SizeError);
  CHECK_THROWS_AS(run_pipeline(Tensor<float>({1, 1, 80, 16}), m), SizeError);
  CHECK_THROWS_AS(run_pipeline(Tensor<float>({2, 3, 80, 16}), m), SizeError);
}

TEST_CASE("loading refuses missing or mismatched models") {
  auto& f = fixture();
  testutil::TempDir dir;
  fs::copy_file(f.models / checkpoint_file(kinds::kClassifier), dir.path() / checkpoint_file(kinds::kClassifier));
  fs::copy_file(f.models / checkpoint_file(generator_kind(EnhancerKind::Reconstruction)),
                dir.path() / checkpoint_file(generator_kind(EnhancerKind::Reconstruction)));
  try {
    load_models(dir.path(), 0.5);
    FAIL("missing sr model accepted");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("sr_generator") != std::string::npos);
  }
  RunConfig other = f.cfg;
  other.seed = 99;
  train_gan(other, EnhancerKind::SuperResolution, load_set(f.data / manifests::kTrainLowres),
            load_set(f.data / manifests::kTrainClean), nullptr, nullptr, {dir.path(), false, nullptr});
  CHECK_THROWS_AS(load_models(dir.path(), 0.5), FormatError);
  CHECK_THROWS_AS(load_models(f.models, 1.0), ConfigError);
}
