#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace attrenh {

/// Generative priors of the synthetic people. Conditional entries encode the
/// correlations that let an occluded figure's visible half hint at the rest.
struct AttributePriors {
  double female = 0.45;
  double hat = 0.25;
  double backpack = 0.30;
  double upper_dark = 0.40;
  double upper_red = 0.25;
  double skirt_given_female = 0.60;
  double skirt_given_male = 0.02;
  double handbag_given_female = 0.40;
  double handbag_given_male = 0.08;
  double lower_dark_given_upper_dark = 0.75;
  double lower_dark_given_upper_light = 0.30;
};

struct DataConfig {
  int height = 80;
  int width = 32;
  int train_count = 2000;
  int test_count = 500;
  /// Share of the clean training people whose occluded copy also joins the
  /// classifier's training split (so "occlusion down" has positives).
  double occluded_train_fraction = 0.25;
  double occlusion_min = 0.5;
  double occlusion_max = 0.8;
  int lowres_factor = 4;
  double min_positive_ratio = 0.01;
};

struct ClassifierConfig {
  std::vector<int> channels{16, 32, 64};
  double lr = 1e-5;
  double decay = 1e-6;
  double momentum = 0.9;
  int batch = 8;
  int epochs = 12;
  double threshold = 0.5;
};

struct GanConfig {
  double lr = 0.002;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
  int batch = 8;
  int k = 1;
};

struct EnhancerConfig {
  double lambda = 0.1;
  int pool = 4;
  int epochs = 10;
  /// Channel schedules are divided by this; 1 gives the full-width networks.
  int width_divisor = 1;
};

struct PipelineConfig {
  double trigger = 0.5;
};

struct RunConfig {
  std::string preset = "desk";
  std::uint64_t seed = 1234;
  DataConfig data;
  AttributePriors priors;
  ClassifierConfig classifier;
  GanConfig gan;
  EnhancerConfig reconstruction;
  EnhancerConfig sr;
  PipelineConfig pipeline;

  /// 80x32 images, reduced channel widths; trainable on one CPU core.
  static RunConfig desk();
  /// 320x128 images and full channel schedules.
  static RunConfig full();
  static RunConfig from_preset(const std::string& name);

  /// Throws ConfigError on any invariant violation.
  void validate() const;
  /// Canonical TOML text; identical configs serialize identically.
  std::string to_toml() const;
  /// FNV-1a 64 of to_toml() with the epoch counts zeroed, as 16 hex digits.
  std::string hash() const;

  /// Applies one dotted "section.key=value" assignment.
  void set(const std::string& key, const std::string& value);
  std::vector<std::string> keys() const;
};

/// Parses a TOML-subset file: `[section]` headers, `key = value` lines with
/// numbers, quoted strings, booleans or flat arrays. A top-level `preset`
/// picks the base before the rest applies. Unknown keys are all listed in the
/// thrown ConfigError.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);

/// Applies overrides ("a.b=c") then ATTRENHANCE_SEED when set, then validates.
RunConfig resolve_config(RunConfig base, const std::vector<std::string>& overrides);

std::string fnv1a_hex(const std::string& bytes);

}  // namespace attrenh
