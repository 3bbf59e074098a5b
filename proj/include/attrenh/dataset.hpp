#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "attrenh/config.hpp"
#include "attrenh/synth.hpp"

namespace attrenh {

/// Ordered attribute names with their training-split positive ratios r_i.
struct AttributeSchema {
  std::vector<std::string> names;
  std::vector<double> ratios;
  int occlusion_down_index = -1;

  int size() const { return static_cast<int>(names.size()); }
  /// Throws ConfigError unless ratios lie in (0, 1) and occlusion_down
  /// appears exactly once at occlusion_down_index.
  void validate() const;
  bool operator==(const AttributeSchema&) const = default;
};

std::string schema_to_json(const AttributeSchema& schema);
AttributeSchema schema_from_json(const std::string& text);
void write_schema(const std::filesystem::path& path, const AttributeSchema& schema);
AttributeSchema read_schema(const std::filesystem::path& path);

struct ManifestRecord {
  std::string id;
  std::string path;  // relative to the dataset directory
  std::vector<std::uint8_t> labels;
  Corruption corruption;
  std::string split;
  std::string source;  // id of the clean sample a corrupted one derives from

  bool operator==(const ManifestRecord&) const = default;
};

std::string record_to_json(const ManifestRecord& r);
ManifestRecord record_from_json(const std::string& line);
void write_manifest(const std::filesystem::path& path, const std::vector<ManifestRecord>& records);
std::vector<ManifestRecord> read_manifest(const std::filesystem::path& path);

/// positives_i / N over `records`, per label column.
std::vector<double> positive_ratios(const std::vector<ManifestRecord>& records);

/// Manifest files written by build_dataset, relative to the dataset directory.
namespace manifests {
inline constexpr const char* kAll = "manifest.jsonl";
inline constexpr const char* kSchema = "schema.json";
inline constexpr const char* kTrainClean = "train_clean.jsonl";
inline constexpr const char* kTrainOccluded = "train_occluded.jsonl";
inline constexpr const char* kTrainLowres = "train_lowres.jsonl";
inline constexpr const char* kTrainClassifier = "train_classifier.jsonl";
inline constexpr const char* kTestClean = "test_clean.jsonl";
inline constexpr const char* kTestOccluded = "test_occluded.jsonl";
inline constexpr const char* kTestLowres = "test_lowres.jsonl";
inline constexpr const char* kTestMerged = "test_merged.jsonl";
}  // namespace manifests

struct BuildSummary {
  AttributeSchema schema;
  std::map<std::string, std::size_t> counts;  // manifest file -> records
};

/// Renders the train/test people, their occluded and 4x-downsampled
/// variants, computes the schema from the classifier training split and
/// writes images, manifests and schema under `out`. Refuses a non-empty
/// `out` unless `overwrite`.
BuildSummary build_dataset(const RunConfig& config, const std::filesystem::path& out, bool overwrite);

/// A manifest with its images loaded. Images may differ in shape across
/// records (the merged corrupted set mixes full and quarter size).
struct LoadedSet {
  std::filesystem::path root;
  AttributeSchema schema;
  std::vector<ManifestRecord> records;
  std::vector<Tensor<float>> images;  // each (1, 3, H, W)

  std::size_t size() const { return records.size(); }
  /// Stacks the given samples; they must share one shape.
  Tensor<float> batch(const std::vector<std::size_t>& idx) const;
  Tensor<float> all() const;
  /// Row-major N x A label matrix.
  std::vector<std::uint8_t> label_matrix() const;
};

/// Loads a manifest plus the schema.json next to it.
LoadedSet load_set(const std::filesystem::path& manifest);

}  // namespace attrenh
