#include "attrenh/report.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <sstream>

#include "attrenh/synth.hpp"
#include "json.hpp"

namespace attrenh {

namespace fs = std::filesystem;
using nlohmann::json;

const MetricsReport& Table2::row(const std::string& name) const {
  for (const auto& r : rows)
    if (r.name == name) return r.report;
  throw ArgumentError("table has no row '" + name + "'");
}

namespace {

double psnr_over(const std::vector<Tensor<float>>& a, const std::vector<Tensor<float>>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += mean_psnr(a[i], b[i]);
  return a.empty() ? 0.0 : s / static_cast<double>(a.size());
}

std::vector<Tensor<float>> targets_of(const LoadedSet& corrupted, const LoadedSet& clean) {
  std::vector<Tensor<float>> out;
  for (auto i : pair_by_source(corrupted, clean)) out.push_back(clean.images[i]);
  return out;
}

}  // namespace

Table2 reproduce_table2(PipelineModels& models, const fs::path& data, double threshold) {
  const LoadedSet clean = load_set(data / manifests::kTestClean);
  const LoadedSet occluded = load_set(data / manifests::kTestOccluded);
  const LoadedSet lowres = load_set(data / manifests::kTestLowres);
  const LoadedSet merged = load_set(data / manifests::kTestMerged);
  const auto& names = clean.schema.names;
  if (names != models.classifier.schema.names) throw ConfigError("dataset schema differs from the classifier's");
  auto& clf = *models.classifier.net;

  Table2 t;
  const auto reconstructed = generate(*models.reconstruction.net, occluded.images);
  const auto first = predict_probs(clf, occluded.images);
  auto second = predict_probs(clf, reconstructed);
  // Same reporting rule as the pipeline: the occlusion bit comes from the pass before reconstruction.
  const std::size_t a = names.size();
  const auto occ = static_cast<std::size_t>(clean.schema.occlusion_down_index);
  for (std::size_t i = 0; i < occluded.images.size(); ++i) second[i * a + occ] = first[i * a + occ];
  t.rows.push_back({"occluded", evaluate(first, occluded.label_matrix(), names, threshold)});
  t.rows.push_back({"occluded+net", evaluate(second, occluded.label_matrix(), names, threshold)});

  std::vector<Tensor<float>> bilinear;
  for (const auto& img : lowres.images) bilinear.push_back(upsample_bilinear(img, 4));
  const auto upscaled = generate(*models.sr.net, lowres.images);
  t.rows.push_back({"lowres", evaluate(predict_probs(clf, bilinear), lowres.label_matrix(), names, threshold)});
  t.rows.push_back({"lowres+net", evaluate(predict_probs(clf, upscaled), lowres.label_matrix(), names, threshold)});

  t.complete = run_batch(merged, models, threshold);
  t.rows.push_back({"corrupted", t.complete.corrupted});
  t.rows.push_back({"restored", t.complete.restored});

  const auto occ_targets = targets_of(occluded, clean);
  const auto low_targets = targets_of(lowres, clean);
  t.psnr_occluded = psnr_over(occluded.images, occ_targets);
  t.psnr_reconstructed = psnr_over(reconstructed, occ_targets);
  t.psnr_bilinear = psnr_over(bilinear, low_targets);
  t.psnr_sr = psnr_over(upscaled, low_targets);
  return t;
}

std::string table2_csv(const Table2& t) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4) << "row,mA,accuracy,precision,recall,f1\n";
  for (const auto& r : t.rows) {
    const auto& m = r.report;
    os << r.name << ',' << m.mA << ',' << m.accuracy << ',' << m.precision << ',' << m.recall << ',' << m.f1 << '\n';
  }
  return os.str();
}

std::string table2_json(const Table2& t) {
  json rows = json::array();
  for (const auto& r : t.rows) rows.push_back({{"row", r.name}, {"report", json::parse(report_to_json(r.report))}});
  auto delta = [&](const char* a, const char* b) {
    const auto& x = t.row(a);
    const auto& y = t.row(b);
    return json{{"mA", y.mA - x.mA},
                {"accuracy", y.accuracy - x.accuracy},
                {"precision", y.precision - x.precision},
                {"recall", y.recall - x.recall},
                {"f1", y.f1 - x.f1}};
  };
  json j = {{"rows", rows},
            {"deltas",
             {{"occluded", delta("occluded", "occluded+net")},
              {"lowres", delta("lowres", "lowres+net")},
              {"complete", delta("corrupted", "restored")}}},
            {"psnr",
             {{"occluded", t.psnr_occluded},
              {"reconstructed", t.psnr_reconstructed},
              {"bilinear", t.psnr_bilinear},
              {"sr", t.psnr_sr}}},
            {"pipeline",
             {{"samples", t.complete.samples},
              {"sr_runs", t.complete.sr_runs},
              {"reconstruction_runs", t.complete.reconstruction_runs},
              {"false_triggers", t.complete.false_triggers},
              {"missed_triggers", t.complete.missed_triggers}}}};
  return j.dump(2) + "\n";
}

std::string table2_markdown(const Table2& t) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2);
  os << "| input | mA | Accuracy | Precision | Recall | F1 |\n|---|---|---|---|---|---|\n";
  for (const auto& r : t.rows) {
    const auto& m = r.report;
    os << "| " << r.name << " | " << 100 * m.mA << " | " << 100 * m.accuracy << " | " << 100 * m.precision << " | "
       << 100 * m.recall << " | " << 100 * m.f1 << " |\n";
  }
  os << "\nMean PSNR (dB): occluded " << t.psnr_occluded << ", reconstructed " << t.psnr_reconstructed
     << ", bilinear " << t.psnr_bilinear << ", super-resolved " << t.psnr_sr << "\n";
  return os.str();
}

std::string plot_history_svg(const std::vector<std::string>& lines, std::string* csv) {
  std::vector<double> epochs;
  std::vector<std::string> keys;
  std::map<std::string, std::vector<double>> series;
  for (const auto& line : lines) {
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw FormatError(std::string("history line: ") + e.what());
    }
    const double epoch = j.contains("epoch") ? j["epoch"].get<double>() : static_cast<double>(epochs.size() + 1);
    epochs.push_back(epoch);
    for (const auto& [k, v] : j.items()) {
      if (k == "epoch" || k == "steps" || k == "d_steps" || k == "g_steps" || !v.is_number()) continue;
      if (!series.contains(k)) {
        keys.push_back(k);
        series[k] = std::vector<double>(epochs.size() - 1, std::nan(""));
      }
    }
    for (const auto& k : keys) series[k].push_back(j.contains(k) && j[k].is_number() ? j[k].get<double>() : std::nan(""));
  }
  if (epochs.empty()) throw ArgumentError("history is empty");

  if (csv) {
    std::ostringstream os;
    os << std::setprecision(8) << "epoch";
    for (const auto& k : keys) os << ',' << k;
    os << '\n';
    for (std::size_t i = 0; i < epochs.size(); ++i) {
      os << epochs[i];
      for (const auto& k : keys) {
        os << ',';
        if (!std::isnan(series[k][i])) os << series[k][i];
      }
      os << '\n';
    }
    *csv = os.str();
  }

  constexpr int kPanelW = 360, kPanelH = 220, kCols = 2, kPad = 40;
  const int rows = static_cast<int>((keys.size() + kCols - 1) / kCols);
  std::ostringstream os;
  os << std::setprecision(5);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kCols * kPanelW << "\" height=\""
     << std::max(1, rows) * kPanelH << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  const double e0 = epochs.front(), e1 = std::max(epochs.back(), e0 + 1);
  for (std::size_t p = 0; p < keys.size(); ++p) {
    const auto& ys = series[keys[p]];
    double lo = INFINITY, hi = -INFINITY;
    for (double y : ys)
      if (!std::isnan(y)) lo = std::min(lo, y), hi = std::max(hi, y);
    if (!std::isfinite(lo)) lo = 0, hi = 1;
    if (hi - lo < 1e-12) hi = lo + 1;
    const int ox = static_cast<int>(p % kCols) * kPanelW, oy = static_cast<int>(p / kCols) * kPanelH;
    const double x0 = ox + kPad, x1 = ox + kPanelW - 10, y0 = oy + kPanelH - 25, y1 = oy + 20;
    os << "<g>\n<text x=\"" << x0 << "\" y=\"" << oy + 14 << "\" font-weight=\"bold\">" << keys[p] << "</text>\n";
    os << "<rect x=\"" << x0 << "\" y=\"" << y1 << "\" width=\"" << x1 - x0 << "\" height=\"" << y0 - y1
       << "\" fill=\"none\" stroke=\"#999\"/>\n";
    os << "<text x=\"" << ox + 2 << "\" y=\"" << y1 + 10 << "\">" << hi << "</text>\n";
    os << "<text x=\"" << ox + 2 << "\" y=\"" << y0 << "\">" << lo << "</text>\n";
    os << "<text x=\"" << x0 << "\" y=\"" << y0 + 14 << "\">epoch " << e0 << "</text>\n";
    os << "<text x=\"" << x1 - 50 << "\" y=\"" << y0 + 14 << "\">" << epochs.back() << "</text>\n";
    os << "<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < ys.size(); ++i) {
      if (std::isnan(ys[i])) continue;
      const double x = x0 + (epochs[i] - e0) / (e1 - e0) * (x1 - x0);
      const double y = y0 - (ys[i] - lo) / (hi - lo) * (y0 - y1);
      os << x << ',' << y << ' ';
    }
    os << "\"/>\n</g>\n";
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace attrenh
