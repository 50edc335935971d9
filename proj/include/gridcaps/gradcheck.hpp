#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "gridcaps/rng.hpp"
#include "gridcaps/tensor.hpp"

namespace gridcaps {

struct GradCheckBlock {
  std::string name;
  std::size_t checked = 0;
  double rel_err = 0.0;      // ||g_analytic - g_fd|| / max(||g_analytic||, ||g_fd||)
  double max_abs_err = 0.0;  // worst single entry
};

struct GradCheckReport {
  std::vector<GradCheckBlock> blocks;

  double max_rel_err() const {
    double m = 0.0;
    for (const auto& b : blocks) m = std::max(m, b.rel_err);
    return m;
  }
  bool passed(double tol) const { return max_rel_err() <= tol; }
};

/// Central finite differences against analytic gradients. `loss(true)` must
/// zero the parameter gradients, run forward + backward and return the loss;
/// `loss(false)` only evaluates. When `max_entries` is non-zero, at most that
/// many entries per block are probed (chosen with `seed`).
template <class LossFn>
GradCheckReport grad_check(const std::vector<Param<double>*>& params, LossFn&& loss, double h = 1e-5,
                           std::size_t max_entries = 0, std::uint64_t seed = 0) {
  loss(true);
  std::vector<std::vector<double>> analytic;
  for (auto* p : params) analytic.push_back(p->grad.data);

  GradCheckReport rep;
  Rng rng(seed);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto* p = params[k];
    std::vector<std::size_t> idx(p->value.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    if (max_entries && idx.size() > max_entries) {
      std::shuffle(idx.begin(), idx.end(), rng);
      idx.resize(max_entries);
    }
    double diff2 = 0.0, a2 = 0.0, f2 = 0.0, worst = 0.0;
    for (auto i : idx) {
      const double orig = p->value.data[i];
      p->value.data[i] = orig + h;
      const double lp = loss(false);
      p->value.data[i] = orig - h;
      const double lm = loss(false);
      p->value.data[i] = orig;
      const double fd = (lp - lm) / (2.0 * h);
      const double a = analytic[k][i];
      diff2 += (a - fd) * (a - fd);
      a2 += a * a;
      f2 += fd * fd;
      worst = std::max(worst, std::abs(a - fd));
    }
    const double denom = std::sqrt(std::max(a2, f2));
    GradCheckBlock b;
    b.name = p->name;
    b.checked = idx.size();
    b.rel_err = denom > 0 ? std::sqrt(diff2) / denom : 0.0;
    b.max_abs_err = worst;
    rep.blocks.push_back(b);
  }
  return rep;
}

}  // namespace gridcaps
