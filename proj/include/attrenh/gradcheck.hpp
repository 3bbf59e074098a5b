#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "attrenh/layers.hpp"

namespace attrenh {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t checked = 0;
};

/// Compares analytic gradients against central differences on sampled
/// coordinates. `loss(true)` must run forward and backward (accumulating into
/// each Param::grad, which are zeroed beforehand); `loss(false)` only forward.
/// Relative error is |a - n| / max(|a|, |n|, 1e-8).
template <typename T>
GradCheckReport gradient_check(const std::function<T(bool)>& loss, std::span<Param<T>* const> params,
                               int samples, double eps, std::uint64_t seed = 0) {
  if (!(eps >= 1e-5 && eps <= 1e-2)) {
    throw ArgumentError("gradient_check eps must lie in [1e-5, 1e-2], got " + std::to_string(eps));
  }
  struct Coord {
    Param<T>* p;
    std::size_t i;
  };
  std::vector<Coord> all;
  for (auto* p : params)
    if (p->trainable)
      for (std::size_t i = 0; i < p->value.size(); ++i) all.push_back({p, i});
  if (all.empty()) throw ArgumentError("gradient_check: no trainable coordinates");

  for (auto* p : params)
    if (p->trainable) p->grad.zero();
  const T base = loss(true);
  if (!std::isfinite(static_cast<double>(base))) {
    throw NumericError("gradient_check: non-finite loss at unperturbed parameters");
  }

  std::vector<Coord> picked;
  if (samples <= 0 || static_cast<std::size_t>(samples) >= all.size()) {
    picked = all;
  } else {
    Rng rng(seed);
    std::vector<std::size_t> order(all.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);
    for (int s = 0; s < samples; ++s) picked.push_back(all[order[static_cast<std::size_t>(s)]]);
  }

  GradCheckReport report;
  for (const auto& c : picked) {
    T& v = c.p->value[c.i];
    const T saved = v;
    v = static_cast<T>(saved + eps);
    const T up = loss(false);
    v = static_cast<T>(saved - eps);
    const T down = loss(false);
    v = saved;
    if (!std::isfinite(static_cast<double>(up)) || !std::isfinite(static_cast<double>(down))) {
      throw NumericError("gradient_check: non-finite loss perturbing " + c.p->name + "[" +
                         std::to_string(c.i) + "]");
    }
    const double numeric = (static_cast<double>(up) - static_cast<double>(down)) / (2.0 * eps);
    const double analytic = static_cast<double>(c.p->grad[c.i]);
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
    const double rel = std::abs(analytic - numeric) / denom;
    ++report.checked;
    if (rel >= report.max_rel_error) {
      report.max_rel_error = rel;
      report.worst_param = c.p->name;
      report.worst_index = c.i;
      report.analytic = analytic;
      report.numeric = numeric;
    }
  }
  return report;
}

}  // namespace attrenh
