#include "attrenh/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "attrenh/png_io.hpp"
#include "json.hpp"

namespace attrenh {

namespace fs = std::filesystem;
using nlohmann::json;

void AttributeSchema::validate() const {
  if (names.size() != ratios.size()) throw ConfigError("schema: names and ratios differ in length");
  if (names.empty()) throw ConfigError("schema: no attributes");
  const auto occ = std::count(names.begin(), names.end(), std::string(kOcclusionDown));
  if (occ != 1) throw ConfigError("schema: 'occlusion_down' must appear exactly once");
  if (occlusion_down_index < 0 || occlusion_down_index >= size() ||
      names[static_cast<std::size_t>(occlusion_down_index)] != kOcclusionDown) {
    throw ConfigError("schema: occlusion_down_index does not point at 'occlusion_down'");
  }
  for (std::size_t i = 0; i < ratios.size(); ++i) {
    if (!(ratios[i] > 0.0 && ratios[i] < 1.0)) {
      throw ConfigError("schema: ratio of '" + names[i] + "' is " + std::to_string(ratios[i]) + ", outside (0, 1)");
    }
  }
}

std::string schema_to_json(const AttributeSchema& s) {
  json j;
  j["names"] = s.names;
  j["ratios"] = s.ratios;
  j["occlusion_down_index"] = s.occlusion_down_index;
  return j.dump(2) + "\n";
}

AttributeSchema schema_from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    AttributeSchema s;
    s.names = j.at("names").get<std::vector<std::string>>();
    s.ratios = j.at("ratios").get<std::vector<double>>();
    s.occlusion_down_index = j.at("occlusion_down_index").get<int>();
    return s;
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed schema: ") + e.what());
  }
}

namespace {

std::string read_text(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw FormatError("cannot read " + p.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw FormatError("cannot write " + p.string());
  f << text;
}

}  // namespace

void write_schema(const fs::path& path, const AttributeSchema& schema) { write_text(path, schema_to_json(schema)); }

AttributeSchema read_schema(const fs::path& path) { return schema_from_json(read_text(path)); }

std::string record_to_json(const ManifestRecord& r) {
  json j;
  j["id"] = r.id;
  j["path"] = r.path;
  j["labels"] = r.labels;
  json c;
  c["kind"] = to_string(r.corruption.kind);
  if (r.corruption.kind == CorruptionKind::Occluded) c["rate"] = r.corruption.rate;
  if (r.corruption.kind == CorruptionKind::LowRes) c["factor"] = r.corruption.factor;
  j["corruption"] = c;
  j["split"] = r.split;
  j["source"] = r.source;
  return j.dump();
}

ManifestRecord record_from_json(const std::string& line) {
  try {
    const json j = json::parse(line);
    ManifestRecord r;
    r.id = j.at("id").get<std::string>();
    r.path = j.at("path").get<std::string>();
    r.labels = j.at("labels").get<std::vector<std::uint8_t>>();
    for (auto v : r.labels)
      if (v > 1) throw FormatError("record '" + r.id + "': labels must be 0/1");
    const json& c = j.at("corruption");
    r.corruption.kind = corruption_from_string(c.at("kind").get<std::string>());
    if (r.corruption.kind == CorruptionKind::Occluded) r.corruption.rate = c.at("rate").get<double>();
    if (r.corruption.kind == CorruptionKind::LowRes) r.corruption.factor = c.at("factor").get<int>();
    r.split = j.at("split").get<std::string>();
    r.source = j.value("source", r.id);
    return r;
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed manifest record: ") + e.what());
  }
}

void write_manifest(const fs::path& path, const std::vector<ManifestRecord>& records) {
  std::string text;
  for (const auto& r : records) text += record_to_json(r) + "\n";
  write_text(path, text);
}

std::vector<ManifestRecord> read_manifest(const fs::path& path) {
  std::istringstream in(read_text(path));
  std::vector<ManifestRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) out.push_back(record_from_json(line));
  }
  return out;
}

std::vector<double> positive_ratios(const std::vector<ManifestRecord>& records) {
  if (records.empty()) return {};
  std::vector<double> pos(records.front().labels.size(), 0.0);
  for (const auto& r : records) {
    if (r.labels.size() != pos.size()) throw FormatError("record '" + r.id + "' has a different label count");
    for (std::size_t i = 0; i < pos.size(); ++i) pos[i] += r.labels[i];
  }
  for (auto& p : pos) p /= static_cast<double>(records.size());
  return pos;
}

namespace {

std::string make_id(const std::string& split, int i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s_%06d", split.c_str(), i);
  return buf;
}

struct SplitSamples {
  std::vector<ImageSample> clean, occluded, lowres;
};

SplitSamples render_split(const RunConfig& cfg, const std::string& split, int count, int occ_index, Rng& rng) {
  SplitSamples s;
  std::vector<std::uint64_t> seeds(static_cast<std::size_t>(count));
  for (auto& seed : seeds) seed = rng.next_u64();
  for (int i = 0; i < count; ++i) {
    ImageSample p = render_person(seeds[static_cast<std::size_t>(i)], cfg);
    p.id = make_id(split, i);
    quantize_8bit(p.image);
    s.clean.push_back(std::move(p));
  }
  for (int i = 0; i < count; ++i) {
    auto j = static_cast<int>(rng.uniform_int(0, count - 2));
    if (j >= i) ++j;
    const double rate = rng.uniform(cfg.data.occlusion_min, cfg.data.occlusion_max);
    ImageSample o = occlude(s.clean[static_cast<std::size_t>(i)], s.clean[static_cast<std::size_t>(j)], rate, occ_index);
    o.id += "_occ";
    s.occluded.push_back(std::move(o));
    ImageSample l = downsample(s.clean[static_cast<std::size_t>(i)], cfg.data.lowres_factor);
    l.id += "_low";
    quantize_8bit(l.image);
    s.lowres.push_back(std::move(l));
  }
  return s;
}

ManifestRecord to_record(const ImageSample& s, const std::string& split, const std::string& source) {
  return {s.id, "images/" + s.id + ".png", s.labels, s.corruption, split, source};
}

}  // namespace

BuildSummary build_dataset(const RunConfig& cfg, const fs::path& out, bool overwrite) {
  cfg.validate();
  if (fs::exists(out) && !fs::is_empty(out)) {
    if (!overwrite) throw ConfigError("output directory " + out.string() + " is not empty (pass --overwrite)");
    fs::remove_all(out / "images");
    for (const auto& entry : fs::directory_iterator(out)) {
      const auto ext = entry.path().extension();
      if (ext == ".jsonl" || entry.path().filename() == manifests::kSchema) fs::remove(entry.path());
    }
  }
  fs::create_directories(out / "images");

  const auto& names = rendered_attribute_names();
  const int occ_index = static_cast<int>(names.size()) - 1;
  Rng rng(cfg.seed);
  SplitSamples train = render_split(cfg, "train", cfg.data.train_count, occ_index, rng);
  SplitSamples test = render_split(cfg, "test", cfg.data.test_count, occ_index, rng);

  std::vector<std::size_t> order(train.clean.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);
  const auto take = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::lround(cfg.data.occluded_train_fraction * static_cast<double>(order.size()))));
  order.resize(std::min(take, order.size()));
  std::sort(order.begin(), order.end());

  auto records_of = [](const std::vector<ImageSample>& v, const std::string& split, const std::string& suffix) {
    std::vector<ManifestRecord> out;
    for (const auto& s : v) {
      const std::string source = s.id.substr(0, s.id.size() - suffix.size());
      out.push_back(to_record(s, split, source));
    }
    return out;
  };
  auto train_clean = records_of(train.clean, "train", "");
  auto train_occ = records_of(train.occluded, "train", "_occ");
  auto train_low = records_of(train.lowres, "train", "_low");
  auto test_clean = records_of(test.clean, "test", "");
  auto test_occ = records_of(test.occluded, "test", "_occ");
  auto test_low = records_of(test.lowres, "test", "_low");

  std::vector<ManifestRecord> classifier_train = train_clean;
  for (auto i : order) classifier_train.push_back(train_occ[i]);
  std::sort(classifier_train.begin(), classifier_train.end(),
            [](const auto& a, const auto& b) { return a.id < b.id; });

  // Schema: keep attributes whose classifier-train positive ratio exceeds
  // the minimum; labels everywhere are projected onto the kept columns.
  const auto ratios = positive_ratios(classifier_train);
  std::vector<std::size_t> keep;
  AttributeSchema schema;
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (ratios[i] > cfg.data.min_positive_ratio) {
      if (ratios[i] >= 1.0) throw ConfigError("attribute '" + names[i] + "' is positive on every training sample");
      keep.push_back(i);
      schema.names.push_back(names[i]);
      schema.ratios.push_back(ratios[i]);
      if (static_cast<int>(i) == occ_index) schema.occlusion_down_index = static_cast<int>(schema.names.size()) - 1;
    }
  }
  if (schema.occlusion_down_index < 0) {
    throw ConfigError("'occlusion_down' fell below the positive-ratio filter; raise data.occluded_train_fraction");
  }
  schema.validate();
  auto project = [&keep](std::vector<ManifestRecord>& rs) {
    for (auto& r : rs) {
      std::vector<std::uint8_t> l;
      for (auto k : keep) l.push_back(r.labels[k]);
      r.labels = std::move(l);
    }
  };
  for (auto* rs : {&train_clean, &train_occ, &train_low, &test_clean, &test_occ, &test_low, &classifier_train}) project(*rs);

  for (const auto* split : {&train, &test})
    for (const auto* v : {&split->clean, &split->occluded, &split->lowres})
      for (const auto& s : *v) write_png(out / "images" / (s.id + ".png"), s.image);

  std::vector<ManifestRecord> merged = test_occ;
  merged.insert(merged.end(), test_low.begin(), test_low.end());
  std::vector<ManifestRecord> all = train_clean;
  for (const auto* rs : {&train_occ, &train_low, &test_clean, &test_occ, &test_low}) all.insert(all.end(), rs->begin(), rs->end());
  auto by_id = [](const auto& a, const auto& b) { return a.id < b.id; };
  std::sort(merged.begin(), merged.end(), by_id);
  std::sort(all.begin(), all.end(), by_id);

  BuildSummary summary;
  summary.schema = schema;
  const std::vector<std::pair<const char*, const std::vector<ManifestRecord>*>> files{
      {manifests::kAll, &all},
      {manifests::kTrainClean, &train_clean},
      {manifests::kTrainOccluded, &train_occ},
      {manifests::kTrainLowres, &train_low},
      {manifests::kTrainClassifier, &classifier_train},
      {manifests::kTestClean, &test_clean},
      {manifests::kTestOccluded, &test_occ},
      {manifests::kTestLowres, &test_low},
      {manifests::kTestMerged, &merged},
  };
  for (const auto& [file, rs] : files) {
    write_manifest(out / file, *rs);
    summary.counts[file] = rs->size();
  }
  write_schema(out / manifests::kSchema, schema);
  return summary;
}

Tensor<float> LoadedSet::batch(const std::vector<std::size_t>& idx) const {
  if (idx.empty()) throw ArgumentError("empty batch");
  Shape s = images.at(idx.front()).shape();
  const std::size_t per = s.numel();
  s.n = static_cast<int>(idx.size());
  Tensor<float> out(s);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const auto& img = images.at(idx[i]);
    if (img.size() != per || !(img.shape().h == s.h && img.shape().w == s.w)) {
      throw SizeError("cannot batch '" + records[idx[i]].id + "' of shape " + img.shape().str() + " with " +
                      images.at(idx.front()).shape().str());
    }
    std::copy_n(img.data(), per, out.sample(static_cast<int>(i)));
  }
  return out;
}

Tensor<float> LoadedSet::all() const {
  std::vector<std::size_t> idx(size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  return batch(idx);
}

std::vector<std::uint8_t> LoadedSet::label_matrix() const {
  std::vector<std::uint8_t> out;
  out.reserve(records.size() * static_cast<std::size_t>(schema.size()));
  for (const auto& r : records) out.insert(out.end(), r.labels.begin(), r.labels.end());
  return out;
}

LoadedSet load_set(const fs::path& manifest) {
  LoadedSet set;
  set.root = manifest.parent_path();
  set.schema = read_schema(set.root / manifests::kSchema);
  set.schema.validate();
  set.records = read_manifest(manifest);
  for (const auto& r : set.records) {
    if (static_cast<int>(r.labels.size()) != set.schema.size()) {
      throw FormatError("record '" + r.id + "' has " + std::to_string(r.labels.size()) + " labels, schema has " +
                        std::to_string(set.schema.size()));
    }
    set.images.push_back(read_png(set.root / r.path));
  }
  return set;
}

}  // namespace attrenh
