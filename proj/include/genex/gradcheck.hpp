#pragma once

#include <functional>
#include <string>
#include <vector>

#include "genex/tensor.hpp"

namespace genex {

struct GradCheckOptions {
  double step = 1e-5;
  double rtol = 1e-3;
  double atol = 1e-6;
};

struct GradCheckReport {
  bool passed = true;
  std::size_t checked = 0;
  std::size_t failures = 0;
  double max_abs_error = 0.0;
  double max_rel_error = 0.0;
  std::string worst;  // "<param>[<index>]" of the largest relative error
};

using LossFn = std::function<Tensor()>;

// backward() gradients of loss_fn w.r.t. each parameter, one buffer per
// parameter (zeros where a parameter is unreachable).
std::vector<std::vector<double>> analytic_gradients(const LossFn& loss_fn,
                                                    std::vector<Tensor>& params);

// Compares supplied gradients against central differences
// (f(x+h) - f(x-h)) / 2h. An element passes when
// |analytic - numeric| <= atol + rtol * |numeric|; non-finite probes fail.
GradCheckReport compare_gradients(const LossFn& loss_fn, std::vector<Tensor>& params,
                                  const std::vector<std::vector<double>>& analytic,
                                  const GradCheckOptions& options = {},
                                  const std::vector<std::string>& names = {});

GradCheckReport finite_diff_check(const LossFn& loss_fn, std::vector<Tensor>& params,
                                  const GradCheckOptions& options = {},
                                  const std::vector<std::string>& names = {});

}  // namespace genex
