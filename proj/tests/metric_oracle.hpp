#pragma once

#include <algorithm>
#include <cstdint>
#include <iterator>
#include <random>
#include <set>
#include <string>
#include <vector>

namespace testutil {

struct MetricInstance {
  int n = 0, a = 0;
  std::vector<double> probs;
  std::vector<std::uint8_t> labels;
  std::vector<std::string> names;
};

/// Noisy but informative scores; some seeds get an all-negative column, an
/// all-positive column or an empty first sample.
inline MetricInstance random_metric_instance(std::uint64_t seed, int n = 200, int a = 16) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  MetricInstance in{n, a, {}, {}, {}};
  std::vector<double> density(static_cast<std::size_t>(a));
  for (auto& d : density) d = 0.05 + 0.9 * u(gen);
  for (int s = 0; s < n; ++s) {
    for (int k = 0; k < a; ++k) {
      const bool y = u(gen) < density[static_cast<std::size_t>(k)];
      in.labels.push_back(y);
      in.probs.push_back(std::clamp(0.5 * u(gen) + (y ? 0.35 : 0.15), 0.0, 1.0));
    }
  }
  for (int k = 0; k < a; ++k) in.names.push_back("attr" + std::to_string(k));
  if (seed % 5 == 0)
    for (int s = 0; s < n; ++s) in.labels[static_cast<std::size_t>(s * a)] = 0;
  if (seed % 7 == 0)
    for (int s = 0; s < n; ++s) in.labels[static_cast<std::size_t>(s * a + 1)] = 1;
  if (seed % 3 == 0)
    for (int k = 0; k < a; ++k) {
      in.labels[static_cast<std::size_t>(k)] = 0;
      in.probs[static_cast<std::size_t>(k)] = 0.1;
    }
  return in;
}

struct BruteMetrics {
  double mA, acc, prec, rec, f1;
};

/// Straight from the definitions with index sets; shares no code with the library.
inline BruteMetrics brute_force_metrics(const MetricInstance& in, double thr) {
  double ma_sum = 0;
  int ma_terms = 0;
  for (int k = 0; k < in.a; ++k) {
    int tp = 0, tn = 0, p = 0, q = 0;
    for (int s = 0; s < in.n; ++s) {
      const auto i = static_cast<std::size_t>(s * in.a + k);
      const bool y = in.labels[i], yh = in.probs[i] > thr;
      if (y) {
        ++p;
        tp += yh;
      } else {
        ++q;
        tn += !yh;
      }
    }
    if (p == 0 || q == 0) continue;
    ma_sum += (static_cast<double>(tp) / p + static_cast<double>(tn) / q) / 2;
    ++ma_terms;
  }
  double acc = 0, prec = 0, rec = 0;
  for (int s = 0; s < in.n; ++s) {
    std::set<int> y, yh, both, either;
    for (int k = 0; k < in.a; ++k) {
      const auto i = static_cast<std::size_t>(s * in.a + k);
      if (in.labels[i]) y.insert(k);
      if (in.probs[i] > thr) yh.insert(k);
    }
    std::set_intersection(y.begin(), y.end(), yh.begin(), yh.end(), std::inserter(both, both.end()));
    std::set_union(y.begin(), y.end(), yh.begin(), yh.end(), std::inserter(either, either.end()));
    const double inter = static_cast<double>(both.size());
    acc += either.empty() ? 1.0 : inter / static_cast<double>(either.size());
    prec += yh.empty() ? (y.empty() ? 1.0 : 0.0) : inter / static_cast<double>(yh.size());
    rec += y.empty() ? (yh.empty() ? 1.0 : 0.0) : inter / static_cast<double>(y.size());
  }
  acc /= in.n;
  prec /= in.n;
  rec /= in.n;
  const double f1 = prec + rec > 0 ? 2 * prec * rec / (prec + rec) : 0.0;
  return {ma_terms ? ma_sum / ma_terms : 0.0, acc, prec, rec, f1};
}

}  // namespace testutil
