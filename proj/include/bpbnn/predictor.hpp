// Copyright 2026 The bpbnn Authors.
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


#ifndef BPBNN_PREDICTOR_HPP_
#define BPBNN_PREDICTOR_HPP_

#include <optional>
#include <vector>

#include "bpbnn/kernels.hpp"
#include "bpbnn/saddle.hpp"
#include "bpbnn/types.hpp"

namespace bpbnn {

// Everything needed to evaluate posterior predictor statistics at fixed order
// parameters. Kernels are the full n x n branch kernels.
struct PredictorInputs {
  const BranchKernels* kernels = nullptr;
  IndexList train_idx;
  IndexList test_idx;
  Vector train_labels;  // length P
  double temperature = 0.0;
};

struct PredictorStats {
  Vector mean;      // <f^nu>, one per test node
  Vector variance;  // <delta f_nu^2>
  std::vector<Vector> branch_mean;
  std::vector<Vector> branch_variance;
};

// <f^nu> = k_nu^T (K + T I)^{-1} Y with k_nu = sum_l (u_l / L) k_l^nu.
Vector mean_predictor(const Vector& u, const PredictorInputs& in);

// <delta f_nu^2> = K_{nu,nu} - k_nu^T (K + T I)^{-1} k_nu.
Vector predictor_variance(const Vector& u, const PredictorInputs& in);

// Per-branch means and variances; `mean` of the result is the sum of the
// branch means and `variance` is the overall posterior variance.
PredictorStats branch_predictor_stats(const Vector& u,
                                      const PredictorInputs& in);

struct BranchBiasVariance {
  double bias = 0.0;
  double variance = 0.0;
};

struct GeneralizationReport {
  double bias = 0.0;
  double variance = 0.0;
  double generalization = 0.0;  // bias + variance
  double normalization = 0.0;   // mean squared target
  // Only available when branch-level targets are known (student-teacher).
  std::optional<std::vector<BranchBiasVariance>> branches;

  double normalized_bias() const { return bias / normalization; }
  double normalized_variance() const { return variance / normalization; }
  double normalized_generalization() const {
    return generalization / normalization;
  }
};

GeneralizationReport bias_variance(
    const PredictorStats& stats, const Vector& targets,
    const std::vector<Vector>* branch_targets = nullptr);

struct BranchNorm {
  double u = 0.0;
  double mean_squared = 0.0;  // sigma^2 r_l / N
  double fluctuation = 0.0;   // sigma^2 (N - Tr_l) / N
  double plotted = 0.0;       // u_l sigma^2 = <|a_l|^2> sigma^2 / N
};

struct NormReport {
  std::vector<BranchNorm> branches;
};

NormReport norm_report(const OrderParams& params, const SaddleProblem& problem);

}  // namespace bpbnn

#endif  // BPBNN_PREDICTOR_HPP_
