#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "attrenh/pipeline.hpp"

namespace attrenh {

struct Table2Row {
  std::string name;
  MetricsReport report;
};

/// Corrupted-versus-enhanced comparison on the synthetic test sets: occluded
/// with and without reconstruction, low resolution with bilinear or learned
/// upsampling, and the merged set classified directly or via the pipeline.
struct Table2 {
  std::vector<Table2Row> rows;  // occluded, occluded+net, lowres, lowres+net, corrupted, restored
  double psnr_bilinear = 0.0;
  double psnr_sr = 0.0;
  double psnr_occluded = 0.0;
  double psnr_reconstructed = 0.0;
  BatchOutcome complete;

  const MetricsReport& row(const std::string& name) const;
};

/// `data` is a dataset directory written by build_dataset.
Table2 reproduce_table2(PipelineModels& models, const std::filesystem::path& data, double threshold = 0.5);

std::string table2_csv(const Table2& t);
std::string table2_json(const Table2& t);
std::string table2_markdown(const Table2& t);

/// Line charts of every numeric per-epoch field of a JSONL history, one
/// panel per field; `csv` receives the same series as columns.
std::string plot_history_svg(const std::vector<std::string>& history_lines, std::string* csv = nullptr);

}  // namespace attrenh
