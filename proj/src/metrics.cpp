#include "attrenh/metrics.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>

#include "attrenh/errors.hpp"
#include "json.hpp"

namespace attrenh {

using nlohmann::json;

std::optional<double> AttributeMetrics::mean_accuracy() const {
  if (!tpr || !tnr) return std::nullopt;
  return (*tpr + *tnr) / 2.0;
}

MetricsReport evaluate(std::span<const double> probs, std::span<const std::uint8_t> labels,
                       const std::vector<std::string>& names, double threshold) {
  const std::size_t a = names.size();
  if (a == 0 || probs.size() != labels.size() || probs.size() % a != 0) {
    throw ArgumentError("evaluate: " + std::to_string(probs.size()) + " predictions, " +
                        std::to_string(labels.size()) + " labels, " + std::to_string(a) + " attributes");
  }
  if (!(threshold > 0.0 && threshold < 1.0)) throw ArgumentError("evaluate: threshold must lie in (0, 1)");
  const std::size_t n = probs.size() / a;
  if (n == 0) throw ArgumentError("evaluate: no samples");

  MetricsReport r;
  r.threshold = threshold;
  r.samples = static_cast<int>(n);
  std::vector<long> tp(a), fp(a), tn(a), fn(a);
  double acc = 0, prec = 0, rec = 0;
  for (std::size_t s = 0; s < n; ++s) {
    long inter = 0, uni = 0, pred = 0, truth = 0;
    for (std::size_t i = 0; i < a; ++i) {
      const std::size_t k = s * a + i;
      if (labels[k] > 1) throw ArgumentError("evaluate: labels must be 0 or 1");
      const bool y = labels[k] == 1;
      const bool yhat = probs[k] > threshold;
      tp[i] += y && yhat;
      fn[i] += y && !yhat;
      fp[i] += !y && yhat;
      tn[i] += !y && !yhat;
      inter += y && yhat;
      uni += y || yhat;
      pred += yhat;
      truth += y;
    }
    acc += uni == 0 ? 1.0 : static_cast<double>(inter) / uni;
    prec += pred == 0 ? (truth == 0 ? 1.0 : 0.0) : static_cast<double>(inter) / pred;
    rec += truth == 0 ? (pred == 0 ? 1.0 : 0.0) : static_cast<double>(inter) / truth;
  }
  r.accuracy = acc / n;
  r.precision = prec / n;
  r.recall = rec / n;
  r.f1 = r.precision + r.recall > 0 ? 2 * r.precision * r.recall / (r.precision + r.recall) : 0.0;

  double sum = 0;
  int counted = 0;
  for (std::size_t i = 0; i < a; ++i) {
    AttributeMetrics m;
    m.name = names[i];
    m.positives = static_cast<int>(tp[i] + fn[i]);
    m.negatives = static_cast<int>(tn[i] + fp[i]);
    if (m.positives > 0) m.tpr = static_cast<double>(tp[i]) / m.positives;
    if (m.negatives > 0) m.tnr = static_cast<double>(tn[i]) / m.negatives;
    const double p = tp[i] + fp[i] > 0 ? static_cast<double>(tp[i]) / (tp[i] + fp[i]) : 0.0;
    const double q = m.positives > 0 ? static_cast<double>(tp[i]) / m.positives : 0.0;
    m.f1 = p + q > 0 ? 2 * p * q / (p + q) : 0.0;
    if (auto ma = m.mean_accuracy()) {
      sum += *ma;
      ++counted;
    } else {
      r.notes.push_back(m.name + " excluded from mA: " + (m.positives == 0 ? "no positives" : "no negatives"));
    }
    r.per_attribute.push_back(std::move(m));
  }
  r.mA = counted > 0 ? sum / counted : 0.0;
  if (counted == 0) r.notes.push_back("mA undefined: every attribute lacks a class");
  return r;
}

namespace {

json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }
std::optional<double> opt_from(const json& j) {
  return j.is_null() ? std::nullopt : std::optional<double>(j.get<double>());
}

}  // namespace

std::string report_to_json(const MetricsReport& r) {
  json attrs = json::array();
  for (const auto& m : r.per_attribute) {
    attrs.push_back({{"name", m.name},
                     {"tpr", opt(m.tpr)},
                     {"tnr", opt(m.tnr)},
                     {"mean_accuracy", opt(m.mean_accuracy())},
                     {"f1", m.f1},
                     {"positives", m.positives},
                     {"negatives", m.negatives}});
  }
  json j = {{"mA", r.mA},
            {"accuracy", r.accuracy},
            {"precision", r.precision},
            {"recall", r.recall},
            {"f1", r.f1},
            {"threshold", r.threshold},
            {"samples", r.samples},
            {"notes", r.notes},
            {"per_attribute", attrs}};
  return j.dump(2);
}

MetricsReport report_from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    MetricsReport r;
    r.mA = j.at("mA");
    r.accuracy = j.at("accuracy");
    r.precision = j.at("precision");
    r.recall = j.at("recall");
    r.f1 = j.at("f1");
    r.threshold = j.at("threshold");
    r.samples = j.at("samples");
    r.notes = j.at("notes").get<std::vector<std::string>>();
    for (const auto& e : j.at("per_attribute")) {
      AttributeMetrics m;
      m.name = e.at("name");
      m.tpr = opt_from(e.at("tpr"));
      m.tnr = opt_from(e.at("tnr"));
      m.f1 = e.at("f1");
      m.positives = e.at("positives");
      m.negatives = e.at("negatives");
      r.per_attribute.push_back(std::move(m));
    }
    return r;
  } catch (const json::exception& e) {
    throw FormatError(std::string("metrics report: ") + e.what());
  }
}

std::vector<DeltaRow> compare(const MetricsReport& a, const MetricsReport& b) {
  if (a.per_attribute.size() != b.per_attribute.size()) throw ArgumentError("compare: attribute counts differ");
  for (std::size_t i = 0; i < a.per_attribute.size(); ++i) {
    if (a.per_attribute[i].name != b.per_attribute[i].name) {
      throw ArgumentError("compare: schemas differ at '" + a.per_attribute[i].name + "' vs '" +
                          b.per_attribute[i].name + "'");
    }
  }
  if (a.threshold != b.threshold) throw ArgumentError("compare: thresholds differ");
  auto row = [](std::string name, std::optional<double> x, std::optional<double> y) {
    std::optional<double> d;
    if (x && y) d = *y - *x;
    return DeltaRow{std::move(name), x, y, d};
  };
  std::vector<DeltaRow> rows{row("mA", a.mA, b.mA), row("accuracy", a.accuracy, b.accuracy),
                             row("precision", a.precision, b.precision), row("recall", a.recall, b.recall),
                             row("f1", a.f1, b.f1)};
  for (std::size_t i = 0; i < a.per_attribute.size(); ++i) {
    rows.push_back(row("mA:" + a.per_attribute[i].name, a.per_attribute[i].mean_accuracy(),
                       b.per_attribute[i].mean_accuracy()));
  }
  return rows;
}

std::string delta_csv(const std::vector<DeltaRow>& rows) {
  std::ostringstream os;
  os << std::setprecision(6) << std::fixed;
  os << "metric,a,b,delta\n";
  auto cell = [&](const std::optional<double>& v) {
    if (v) os << *v;
  };
  for (const auto& r : rows) {
    os << r.metric << ',';
    cell(r.a);
    os << ',';
    cell(r.b);
    os << ',';
    cell(r.delta);
    os << '\n';
  }
  return os.str();
}

}  // namespace attrenh
