#include "genex/gradcheck.hpp"

#include <cmath>

#include "genex/errors.hpp"

namespace genex {

std::vector<std::vector<double>> analytic_gradients(const LossFn& loss_fn,
                                                    std::vector<Tensor>& params) {
  for (auto& p : params) p.zero_grad();
  Tensor loss = loss_fn();
  loss.backward();
  std::vector<std::vector<double>> grads;
  grads.reserve(params.size());
  for (auto& p : params) {
    if (p.has_grad()) {
      grads.emplace_back(p.grad().begin(), p.grad().end());
    } else {
      grads.emplace_back(p.numel(), 0.0);
    }
    p.zero_grad();
  }
  return grads;
}

GradCheckReport compare_gradients(const LossFn& loss_fn, std::vector<Tensor>& params,
                                  const std::vector<std::vector<double>>& analytic,
                                  const GradCheckOptions& options,
                                  const std::vector<std::string>& names) {
  if (analytic.size() != params.size()) {
    throw UsageError("compare_gradients: gradient count does not match parameter count");
  }
  NoGradGuard no_grad;
  GradCheckReport report;
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto values = params[k].data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + options.step;
      const double up = loss_fn().item();
      values[i] = saved - options.step;
      const double down = loss_fn().item();
      values[i] = saved;

      const double numeric = (up - down) / (2.0 * options.step);
      const double a = analytic[k][i];
      ++report.checked;
      const double abs_err = std::abs(a - numeric);
      const double scale = std::max(std::abs(a), std::abs(numeric));
      const double rel_err = scale > options.atol ? abs_err / scale : 0.0;
      const bool finite = std::isfinite(numeric) && std::isfinite(a);
      const bool ok = finite && abs_err <= options.atol + options.rtol * std::abs(numeric);
      if (!ok) {
        ++report.failures;
        report.passed = false;
      }
      report.max_abs_error = std::max(report.max_abs_error, finite ? abs_err : INFINITY);
      if (!finite || rel_err > report.max_rel_error) {
        report.max_rel_error = finite ? rel_err : INFINITY;
        report.worst = (k < names.size() ? names[k] : "param" + std::to_string(k)) + "[" +
                       std::to_string(i) + "]";
      }
    }
  }
  return report;
}

GradCheckReport finite_diff_check(const LossFn& loss_fn, std::vector<Tensor>& params,
                                  const GradCheckOptions& options,
                                  const std::vector<std::string>& names) {
  const auto analytic = analytic_gradients(loss_fn, params);
  return compare_gradients(loss_fn, params, analytic, options, names);
}

}  // namespace genex
