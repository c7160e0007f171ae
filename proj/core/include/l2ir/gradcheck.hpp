// Copyright 2026 The l2ir Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Central finite-difference checks of reverse-mode gradients in double.

#ifndef L2IR_GRADCHECK_HPP_
#define L2IR_GRADCHECK_HPP_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "l2ir/model.hpp"
#include "l2ir/tensor.hpp"

namespace l2ir {

struct GradCheckResult {
  std::string name;
  std::size_t checked = 0;  // scalar entries compared
  // relative_error over the compared entries taken as one vector per input;
  // the largest over inputs. This decides `passed`.
  double rel_error = 0.0;
  // Largest per-entry relative_error, for diagnostics.
  double max_entry_error = 0.0;
  bool passed = false;
};

struct GradCheckReport {
  std::vector<GradCheckResult> results;

  bool passed() const;
  double worst() const;
};

// |a - n| / max(|a| + |n|, 1e-8).
double relative_error(double analytic, double numeric);
// ||a - n|| / max(||a|| + ||n||, 1e-8) in the Euclidean norm.
double relative_error(std::span<const double> analytic, std::span<const double> numeric);

using GradCheckFn = std::function<Tensor<double>(const std::vector<Tensor<double>>&)>;

// Gradients of <f(inputs), W> for a fixed random W, against central
// differences with step `h`. With max_entries > 0 only that many evenly
// spaced entries of each input are perturbed.
GradCheckResult check_gradients(std::string name, std::vector<Tensor<double>> inputs,
                                const GradCheckFn& f, double tol, double h = 1e-5,
                                std::size_t max_entries = 0);

// Every differentiable primitive on small random inputs.
GradCheckReport check_primitives(double tol, std::uint64_t seed);

// Model -> embed_eos -> InfoNCE on a two-pair batch with two negatives each,
// differentiated with respect to every trainable parameter.
GradCheckReport check_pipeline(const Model<double>& model, double tol, std::uint64_t seed,
                               std::size_t max_entries = 0);

// Tiny random model for the checks above.
Model<double> grad_check_model(std::uint64_t seed);

}  // namespace l2ir

#endif  // L2IR_GRADCHECK_HPP_
