// Copyright 2026 The StylePrompt Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "styleprompt/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "styleprompt/errors.hpp"

namespace styleprompt {
namespace {

double eval_checked(const std::function<Var()>& f) {
  const double v = f().item();
  require(std::isfinite(v), ErrorKind::kNumericDomain, "gradient_check: non-finite function value");
  return v;
}

}  // namespace

GradCheckReport gradient_check(const std::function<Var()>& f, const std::vector<Var>& params, double step,
                               FiniteDifference scheme) {
  require(step > 0.0, ErrorKind::kContract, "gradient_check: step must be positive");
  for (auto p : params) p.zero_grad();
  Var loss = f();
  require(std::isfinite(loss.item()), ErrorKind::kNumericDomain, "gradient_check: non-finite function value");
  backward(loss);

  std::vector<Tensor> analytic;
  for (const auto& p : params) analytic.push_back(p.grad().empty() ? Tensor(p.shape(), 0.0) : p.grad());

  GradCheckReport report;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Var p = params[pi];
    const Tensor original = p.value();
    auto at = [&](std::size_t i, double offset) {
      Tensor moved = original;
      moved[i] += offset;
      p.assign(std::move(moved));
      return eval_checked(f);
    };
    for (std::size_t i = 0; i < original.numel(); ++i) {
      const double central = (at(i, step) - at(i, -step)) / (2.0 * step);
      double numeric = central;
      if (scheme == FiniteDifference::kRichardson) {
        const double half = (at(i, step / 2) - at(i, -step / 2)) / step;
        numeric = (4.0 * half - central) / 3.0;
      }
      p.assign(original);

      const double a = analytic[pi][i];
      const double abs_err = std::abs(a - numeric);
      const double rel = abs_err / std::max({std::abs(a), std::abs(numeric), kGradCheckFloor});
      if (rel > report.max_relative_error) {
        report.max_relative_error = rel;
        report.worst_param = pi;
        report.worst_index = i;
      }
      report.max_abs_error = std::max(report.max_abs_error, abs_err);
      ++report.checked;
    }
  }
  for (auto p : params) p.zero_grad();
  return report;
}

double finite_difference_check(const std::function<Var(const Var&)>& f, const Tensor& x, double step) {
  Var leaf = parameter(x);
  return gradient_check([&] { return f(leaf); }, {leaf}, step).max_relative_error;
}

}  // namespace styleprompt
