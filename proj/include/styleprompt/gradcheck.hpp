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

#pragma once

#include <functional>
#include <vector>

#include "styleprompt/autograd.hpp"

namespace styleprompt {

struct GradCheckReport {
  double max_relative_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t worst_param = 0;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
};

/// Denominator floor for relative errors. Central differences at step 1e-5
/// on O(1) losses carry roundoff near 1e-10, so partials whose true value
/// is zero would otherwise report noise as relative error.
inline constexpr double kGradCheckFloor = 1e-6;

enum class FiniteDifference {
  kCentral,     // (f(x+h) − f(x−h)) / 2h, error O(h²)
  kRichardson,  // combines steps h and h/2, error O(h⁴)
};

/// Compares backward() against central differences for every entry of every
/// leaf in params. f rebuilds the graph from the current leaf values each
/// call. Relative error uses max(|analytic|, |numeric|, kGradCheckFloor) as
/// the denominator. Leaf values are restored before returning.
GradCheckReport gradient_check(const std::function<Var()>& f, const std::vector<Var>& params, double step = 1e-5,
                               FiniteDifference scheme = FiniteDifference::kCentral);

/// Single-input form: f is a scalar function of one tensor.
double finite_difference_check(const std::function<Var(const Var&)>& f, const Tensor& x, double step = 1e-5);

}  // namespace styleprompt
