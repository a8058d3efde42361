#pragma once

#include <algorithm>
#include <functional>
#include <string>
#include <vector>

#include "hetgpt/tape.hpp"

namespace hetgpt {

/// Per-parameter outcome of a central-difference comparison.
struct GradCheckReport {
  struct Entry {
    std::string name;
    double max_rel_err = 0.0;
    double max_abs_err = 0.0;
    double max_abs_analytic = 0.0;
  };
  std::vector<Entry> entries;

  double max_rel_err() const {
    double m = 0.0;
    for (const auto& e : entries) m = std::max(m, e.max_rel_err);
    return m;
  }
  bool all_within(double tol) const { return max_rel_err() < tol; }
};

/// Compares analytic gradients against central finite differences.
///
/// loss_fn(true) must run a full forward/backward pass and accumulate
/// gradients into the given params (grads are zeroed here first);
/// loss_fn(false) must evaluate the loss only. The loss must be a
/// deterministic function of the param values.
///
/// Relative error per element: |a - f| / max(|a|, |f|, 1e-8).
inline GradCheckReport finite_diff_check(const std::function<double(bool)>& loss_fn,
                                         const std::vector<Param*>& params,
                                         double h = 1e-5) {
  zero_grads(params);
  loss_fn(true);
  std::vector<Tensor> analytic;
  analytic.reserve(params.size());
  for (const Param* p : params) analytic.push_back(p->grad);

  GradCheckReport report;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Param& p = *params[pi];
    GradCheckReport::Entry entry;
    entry.name = p.name;
    for (int r = 0; r < p.value.rows(); ++r) {
      for (int c = 0; c < p.value.cols(); ++c) {
        const double orig = p.value(r, c);
        p.value(r, c) = orig + h;
        const double up = loss_fn(false);
        p.value(r, c) = orig - h;
        const double down = loss_fn(false);
        p.value(r, c) = orig;
        const double fd = (up - down) / (2.0 * h);
        const double an = analytic[pi](r, c);
        const double abs_err = std::abs(an - fd);
        const double rel = abs_err / std::max({std::abs(an), std::abs(fd), 1e-8});
        entry.max_rel_err = std::max(entry.max_rel_err, rel);
        entry.max_abs_err = std::max(entry.max_abs_err, abs_err);
        entry.max_abs_analytic = std::max(entry.max_abs_analytic, std::abs(an));
      }
    }
    report.entries.push_back(std::move(entry));
  }
  return report;
}

}  // namespace hetgpt
