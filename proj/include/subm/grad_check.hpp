#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "subm/graph.hpp"
#include "subm/tensor.hpp"

namespace subm {

struct GradCheckReport {
  double max_rel_err = 0.0;
  bool pass = false;
  std::string worst_coord;  // "param<k>[i]" of the largest error
};

/// Central-difference gradient oracle. The loss is re-evaluated through a
/// 64-bit path on upcast copies of the 32-bit parameters and compared against
/// analytic gradients from the tape. Relative error per coordinate is
/// |a - n| / max(1e-8, |a|, |n|).
inline GradCheckReport grad_check(
    const std::function<double(const std::vector<std::vector<double>>&)>& loss64,
    const std::vector<const Tensor*>& params, const GradMap& analytic, double eps, double tol) {
  require(eps > 0.0, ErrCode::precondition, "grad_check eps must be > 0");

  std::vector<std::vector<double>> up;
  up.reserve(params.size());
  for (const Tensor* p : params) {
    std::vector<double> v(p->data.begin(), p->data.end());
    up.push_back(std::move(v));
  }

  GradCheckReport report;
  for (size_t k = 0; k < params.size(); ++k) {
    auto git = analytic.find(params[k]);
    require(git != analytic.end(), ErrCode::precondition,
            "grad_check: no analytic gradient for param" + std::to_string(k));
    const Tensor& ag = git->second;
    for (size_t i = 0; i < up[k].size(); ++i) {
      const double orig = up[k][i];
      up[k][i] = orig + eps;
      const double lp = loss64(up);
      up[k][i] = orig - eps;
      const double lm = loss64(up);
      up[k][i] = orig;
      const std::string coord = "param" + std::to_string(k) + "[" + std::to_string(i) + "]";
      require(std::isfinite(lp) && std::isfinite(lm), ErrCode::precondition,
              "grad_check: non-finite loss when perturbing " + coord);
      const double numeric = (lp - lm) / (2.0 * eps);
      const double a = static_cast<double>(ag.data[i]);
      const double rel =
          std::abs(a - numeric) / std::max({1e-8, std::abs(a), std::abs(numeric)});
      if (rel > report.max_rel_err) {
        report.max_rel_err = rel;
        report.worst_coord = coord;
      }
    }
  }
  report.pass = report.max_rel_err < tol;
  return report;
}

}  // namespace subm
