#include <cmath>
#include <filesystem>
#include <fstream>

#include "attrenh/dataset.hpp"
#include "attrenh/png_io.hpp"
#include "attrenh/synth.hpp"
#include "doctest.h"
#include "helpers.hpp"

using namespace attrenh;
namespace fs = std::filesystem;

namespace {

int occ_index() { return static_cast<int>(rendered_attribute_names().size()) - 1; }

ImageSample constant_sample(const std::string& id, int h, int w, float v) {
  ImageSample s;
  s.id = id;
  s.image = Tensor<float>({1, 3, h, w}, v);
  s.labels.assign(rendered_attribute_names().size(), 0);
  return s;
}

double mean_of(const Tensor<float>& t) {
  double s = 0;
  for (float v : t.values()) s += v;
  return s / static_cast<double>(t.size());
}

}  // namespace

TEST_CASE("render_person is deterministic and sized by the config") {
  const RunConfig cfg = RunConfig::desk();
  const auto a = render_person(7, cfg);
  const auto b = render_person(7, cfg);
  CHECK(a.image == b.image);
  CHECK(a.labels == b.labels);
  CHECK(a.image.shape() == Shape{1, 3, 80, 32});
  CHECK(a.labels.back() == 0);
  for (float v : a.image.values()) CHECK((v >= 0.0f && v <= 1.0f));
  const auto c = render_person(8, cfg);
  CHECK_FALSE(a.image == c.image);
}

TEST_CASE("render_person rejects heights the part partition cannot split") {
  RunConfig cfg = RunConfig::desk();
  cfg.data.height = 84;
  CHECK_THROWS_AS(render_person(1, cfg), ConfigError);
}

TEST_CASE("attribute frequencies follow the configured priors") {
  const RunConfig cfg = RunConfig::desk();
  const auto expected = attribute_marginals(cfg.priors);
  std::vector<double> count(expected.size(), 0.0);
  constexpr int kN = 10000;
  for (int i = 0; i < kN; ++i) {
    const auto s = render_person(static_cast<std::uint64_t>(i) * 7919 + 1, cfg);
    for (std::size_t k = 0; k < count.size(); ++k) count[k] += s.labels[k];
  }
  for (std::size_t k = 0; k < count.size(); ++k) {
    INFO(rendered_attribute_names()[k]);
    CHECK(std::abs(count[k] / kN - expected[k]) <= 0.03);
  }
  // Marginals from the priors by hand: female 0.45, skirt 0.45*0.6 + 0.55*0.02.
  CHECK(expected[0] == doctest::Approx(0.45));
  CHECK(expected[5] == doctest::Approx(0.45 * 0.60 + 0.55 * 0.02));
  CHECK(expected[6] == doctest::Approx(0.40 * 0.75 + 0.60 * 0.30));
}

TEST_CASE("occlude replaces the bottom rows with the donor's top rows") {
  const ImageSample s = constant_sample("a", 320, 128, 0.25f);
  ImageSample donor = constant_sample("b", 320, 128, 0.0f);
  for (int r = 0; r < 320; ++r)
    for (int c = 0; c < 3; ++c)
      for (int x = 0; x < 128; ++x) donor.image.at(0, c, r, x) = static_cast<float>(r) / 320.0f;
  const auto o = occlude(s, donor, 0.6, occ_index());
  for (int r = 0; r < 128; ++r) CHECK(o.image.at(0, 1, r, 5) == 0.25f);
  for (int r = 128; r < 320; ++r) CHECK(o.image.at(0, 1, r, 5) == donor.image.at(0, 1, r - 128, 5));
  CHECK(o.corruption.kind == CorruptionKind::Occluded);
  CHECK(o.corruption.rate == 0.6);
  auto want = s.labels;
  want.back() = 1;
  CHECK(o.labels == want);

  const auto half = occlude(s, donor, 0.5, occ_index());
  for (int r = 0; r < 160; ++r) CHECK(half.image.at(0, 0, r, 0) == 0.25f);
  for (int r = 160; r < 320; ++r) CHECK(half.image.at(0, 0, r, 0) == donor.image.at(0, 0, r - 160, 0));
}

TEST_CASE("occlude validates its arguments") {
  const ImageSample s = constant_sample("a", 80, 32, 0.5f);
  const ImageSample d = constant_sample("b", 80, 32, 0.1f);
  CHECK_THROWS_AS(occlude(s, d, 0.49, occ_index()), ArgumentError);
  CHECK_THROWS_AS(occlude(s, d, 0.81, occ_index()), ArgumentError);
  CHECK_THROWS_AS(occlude(s, s, 0.6, occ_index()), ArgumentError);
  CHECK_THROWS_AS(occlude(s, constant_sample("c", 40, 32, 0.1f), 0.6, occ_index()), ArgumentError);
  const auto o = occlude(s, d, 0.7, occ_index());
  CHECK_THROWS_AS(occlude(o, d, 0.6, occ_index()), ArgumentError);
  CHECK_THROWS_AS(occlude(s, o, 0.6, occ_index()), ArgumentError);
}

TEST_CASE("area downsampling") {
  const auto c = constant_sample("a", 320, 128, 0.3f);
  const auto d = downsample(c, 4);
  CHECK(d.image.shape() == Shape{1, 3, 80, 32});
  for (float v : d.image.values()) CHECK(v == doctest::Approx(0.3f));
  CHECK(d.corruption.factor == 4);
  CHECK(d.labels == c.labels);
  const auto back = bilinear_upsample(d, 4);
  for (float v : back.image.values()) CHECK(std::abs(v - 0.3f) < 1e-6);

  ImageSample r = constant_sample("r", 80, 32, 0.0f);
  r.image = testutil::random_tensor<float>({1, 3, 80, 32}, 9, 0.0, 1.0);
  CHECK(std::abs(mean_of(downsample(r, 4).image) - mean_of(r.image)) < 1e-5);
  CHECK_THROWS_AS(downsample(constant_sample("x", 82, 32, 0.f), 4), ArgumentError);
}

TEST_CASE("bilinear upsampling") {
  auto r = constant_sample("r", 20, 8, 0.0f);
  r.image = testutil::random_tensor<float>({1, 3, 20, 8}, 4, 0.0, 1.0);
  CHECK(bilinear_upsample(r, 1).image == r.image);
  CHECK(bilinear_upsample(r, 4).image.shape() == Shape{1, 3, 80, 32});
  const auto c = bilinear_upsample(constant_sample("c", 20, 8, 0.7f), 4);
  for (float v : c.image.values()) CHECK(v == doctest::Approx(0.7f));
  // Half-pixel centres: output pixel 1 of a 2x upsample sits 3/4 of the way to input pixel 0.
  Tensor<double> x({1, 1, 1, 2});
  x[0] = 0;
  x[1] = 1;
  const auto y = upsample_bilinear(x, 2);
  CHECK(y[0] == 0.0);
  CHECK(y[1] == doctest::Approx(0.25));
  CHECK(y[2] == doctest::Approx(0.75));
  CHECK(y[3] == 1.0);
}

TEST_CASE("png round trip is exact for 8-bit values") {
  testutil::TempDir dir;
  auto img = testutil::random_tensor<float>({1, 3, 10, 6}, 3, 0.0, 1.0);
  quantize_8bit(img);
  write_png(dir.path() / "x.png", img);
  CHECK(read_png(dir.path() / "x.png") == img);
}

TEST_CASE("build_dataset writes consistent manifests and schema") {
  testutil::TempDir dir;
  RunConfig cfg = testutil::tiny_config();
  cfg.data.train_count = 40;
  cfg.data.test_count = 10;
  const fs::path out = dir.path() / "data";
  const auto summary = build_dataset(cfg, out, false);
  CHECK(summary.counts.at(manifests::kTrainClean) == 40);
  CHECK(summary.counts.at(manifests::kTestClean) == 10);
  CHECK(summary.counts.at(manifests::kTestOccluded) == 10);
  CHECK(summary.counts.at(manifests::kTestLowres) == 10);
  CHECK(summary.counts.at(manifests::kTestMerged) == 20);
  CHECK(summary.counts.at(manifests::kTrainClassifier) == 50);

  const auto schema = read_schema(out / manifests::kSchema);
  CHECK(schema == summary.schema);
  CHECK(schema.names[static_cast<std::size_t>(schema.occlusion_down_index)] == kOcclusionDown);
  CHECK(positive_ratios(read_manifest(out / manifests::kTrainClassifier)) == schema.ratios);
  for (double r : schema.ratios) CHECK(r > cfg.data.min_positive_ratio);

  const auto occ = static_cast<std::size_t>(schema.occlusion_down_index);
  for (const auto& r : read_manifest(out / manifests::kTestOccluded)) {
    CHECK(r.labels[occ] == 1);
    CHECK(r.corruption.kind == CorruptionKind::Occluded);
    CHECK((r.corruption.rate >= 0.5 && r.corruption.rate <= 0.8));
  }
  for (const auto& r : read_manifest(out / manifests::kTestClean)) CHECK(r.labels[occ] == 0);
  const auto low = load_set(out / manifests::kTestLowres);
  for (const auto& img : low.images) CHECK(img.shape() == Shape{1, 3, 20, 4});
  const auto clean = load_set(out / manifests::kTestClean);
  for (const auto& img : clean.images) CHECK(img.shape() == Shape{1, 3, 80, 16});
  for (const auto& r : clean.records)
    for (auto l : r.labels) CHECK(l <= 1);
}

TEST_CASE("build_dataset refuses a non-empty directory and overwrites only its own files") {
  testutil::TempDir dir;
  RunConfig cfg = testutil::tiny_config();
  const fs::path out = dir.path() / "data";
  build_dataset(cfg, out, false);
  const auto first = read_manifest(out / manifests::kAll);
  CHECK_THROWS_AS(build_dataset(cfg, out, false), ConfigError);
  std::ofstream(out / "notes.txt") << "keep me";
  build_dataset(cfg, out, true);
  CHECK(fs::exists(out / "notes.txt"));
  CHECK(read_manifest(out / manifests::kAll) == first);
}

TEST_CASE("the schema filter drops rare attributes") {
  testutil::TempDir dir;
  RunConfig cfg = testutil::tiny_config();
  cfg.priors.hat = 0.0;
  const auto summary = build_dataset(cfg, dir.path() / "d", false);
  CHECK(std::find(summary.schema.names.begin(), summary.schema.names.end(), "hat") == summary.schema.names.end());
  CHECK(summary.schema.size() == static_cast<int>(rendered_attribute_names().size()) - 1);
}

TEST_CASE("manifest records round trip through JSON") {
  ManifestRecord r{"test_00001_occ", "images/test_00001_occ.png", {1, 0, 1}, {CorruptionKind::Occluded, 0.625, 0},
                   "test", "test_00001"};
  CHECK(record_from_json(record_to_json(r)) == r);
  ManifestRecord l{"x_low", "images/x_low.png", {0}, {CorruptionKind::LowRes, 0.0, 4}, "train", "x"};
  CHECK(record_from_json(record_to_json(l)) == l);
}
