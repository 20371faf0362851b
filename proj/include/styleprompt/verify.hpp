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

// Self-checks shared by the `verify` subcommand and the acceptance test:
// equation oracles, gradient checks, invariants and the directional
// desk-scale experiment.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "json.hpp"

namespace styleprompt {

struct CheckResult {
  int id = 0;
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;

  nlohmann::json to_json() const;
};

struct VerifyOptions {
  /// Adds the multi-seed experiment checks (minutes of CPU).
  bool include_experiment = false;
  std::vector<std::uint64_t> experiment_seeds{0, 1, 2, 3, 4};
  /// Called as each check completes.
  std::function<void(const CheckResult&)> on_result;
  /// Experiment rows as they complete.
  std::function<void(const nlohmann::json&)> on_experiment_row;
};

CheckResult check_equation_oracles();
CheckResult check_gradients();
CheckResult check_adain_round_trip();
CheckResult check_similarity_weights();
CheckResult check_harmonic_table();
CheckResult check_ivlp_equivalence();
/// Runs the experiment once and scores both the accuracy and the alignment
/// criteria from the same rows.
std::vector<CheckResult> check_directional_experiment(const std::vector<std::uint64_t>& seeds,
                                                      const std::function<void(const nlohmann::json&)>& on_row = {});
CheckResult check_frozen_integrity();
CheckResult check_determinism();

std::vector<CheckResult> run_verification(const VerifyOptions& options);

/// "[PASS] 3 name (1.2 s): detail"
std::string format_result(const CheckResult& result);

}  // namespace styleprompt
