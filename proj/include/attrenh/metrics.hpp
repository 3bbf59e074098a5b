#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace attrenh {

struct AttributeMetrics {
  std::string name;
  /// Absent when the attribute has no positives (tpr) or no negatives (tnr).
  std::optional<double> tpr;
  std::optional<double> tnr;
  double f1 = 0.0;
  int positives = 0;
  int negatives = 0;

  /// (tpr + tnr) / 2, when both are defined.
  std::optional<double> mean_accuracy() const;
  bool operator==(const AttributeMetrics&) const = default;
};

struct MetricsReport {
  double mA = 0.0;
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::vector<AttributeMetrics> per_attribute;
  double threshold = 0.5;
  int samples = 0;
  /// Attributes left out of mA because one class is absent.
  std::vector<std::string> notes;

  bool operator==(const MetricsReport&) const = default;
};

/// Label-based mA and example-based accuracy, precision, recall and F1 of
/// row-major N x A probabilities against labels; a prediction is positive when
/// its probability exceeds `threshold`.
MetricsReport evaluate(std::span<const double> probs, std::span<const std::uint8_t> labels,
                       const std::vector<std::string>& names, double threshold = 0.5);

std::string report_to_json(const MetricsReport& r);
MetricsReport report_from_json(const std::string& text);

struct DeltaRow {
  std::string metric;
  std::optional<double> a;
  std::optional<double> b;
  std::optional<double> delta;  // b - a

  bool operator==(const DeltaRow&) const = default;
};

/// Five aggregate rows, then one per-attribute mean-accuracy row per
/// attribute. Throws ArgumentError on differing schema or threshold.
std::vector<DeltaRow> compare(const MetricsReport& a, const MetricsReport& b);
std::string delta_csv(const std::vector<DeltaRow>& rows);

}  // namespace attrenh
