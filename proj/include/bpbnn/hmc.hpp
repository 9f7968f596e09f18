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


#ifndef BPBNN_HMC_HPP_
#define BPBNN_HMC_HPP_

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "bpbnn/network.hpp"
#include "bpbnn/types.hpp"

namespace bpbnn {

// Posterior over network parameters:
//   U(theta) = (1 / 2T) sum_mu (f^mu - y^mu)^2 + (1 / 2 sigma^2) theta^T theta.
struct HmcTarget {
  Architecture architecture = Architecture::kGraphConvolution;
  std::vector<BranchKind> kinds;
  std::vector<Matrix> train_inputs;  // per branch, P x N0 (P may be 0)
  Vector train_labels;               // length P
  Index width = 4;                   // N
  double temperature = 1e-3;
  double prior_variance = 1.0;
  // Optional per-branch test inputs; predictions on them are recorded for
  // every kept sample.
  std::vector<Matrix> test_inputs;

  int num_branches() const { return static_cast<int>(kinds.size()); }
  Index input_dim() const;
  Index num_parameters() const;
  void validate() const;
};

// Flattened parameter layout: for each branch, W_l column-major then a_l.
Vector flatten(const NetworkParams& params);
NetworkParams unflatten(const Vector& theta, const HmcTarget& target);

struct PotentialResult {
  double value = 0.0;
  Vector gradient;
};

// Potential energy and exact gradient. Linear-only targets use a Gram-matrix
// form of the likelihood whose cost does not depend on P.
class Potential {
 public:
  explicit Potential(const HmcTarget& target);

  PotentialResult operator()(const Vector& theta) const;
  double value(const Vector& theta) const;
  // (1 / 2T) sum_mu (f^mu - y^mu)^2 alone.
  double likelihood_energy(const Vector& theta) const {
    return likelihood(theta, nullptr);
  }
  // Training-set mean squared error of the network at theta.
  double training_mse(const Vector& theta) const;

  const HmcTarget& target() const { return target_; }

 private:
  double likelihood(const Vector& theta, Vector* gradient) const;

  const HmcTarget& target_;
  bool gram_path_ = false;
  double scale_ = 1.0;  // 1 / sqrt(L N N0)
  Matrix gram_;         // Z^T Z over stacked branch inputs
  Vector projected_;    // Z^T y
  double label_energy_ = 0.0;  // y^T y
};

PotentialResult potential(const NetworkParams& params, const HmcTarget& target);

struct HmcConfig {
  double step_size = 0.0;  // 0 selects 0.01 sqrt(T)
  int leapfrog_steps = 32;
  int num_chains = 4;
  int warmup_samples = 1000;
  int kept_samples = 2000;  // stored samples per chain, after thinning
  int thinning = 4;
  std::uint64_t seed = 0;
  int threads = 1;
  bool keep_parameters = false;
  // Halve the step size once if warmup acceptance falls below 0.4.
  bool adapt_step = true;
  double divergence_threshold = 1000.0;
  // Backtracking gradient descent from the prior draw until the likelihood
  // energy drops to P, before warmup starts. 0 disables it.
  int init_descent_steps = 5000;

  void validate() const;
};

struct HmcChain {
  std::vector<Vector> parameters;  // only with keep_parameters
  Matrix branch_norms;             // kept x L, |a_l|^2 / N
  Vector training_loss;            // kept, mean squared training error
  Vector potential;                // kept
  std::vector<Matrix> test_predictions;  // per branch, kept x t
  double acceptance_rate = 0.0;
  int divergences = 0;
  double step_size = 0.0;
  double median_energy_error = 0.0;
  Vector norm_ess;  // per branch, batch-means effective sample size

  Index num_samples() const { return branch_norms.rows(); }
};

HmcChain sample_chain(const HmcConfig& cfg, const HmcTarget& target,
                      int chain_index,
                      std::optional<Vector> initial = std::nullopt);

// Runs cfg.num_chains independent chains, up to cfg.threads at a time.
std::vector<HmcChain> sample(const HmcConfig& cfg, const HmcTarget& target);

struct MeanEstimate {
  double mean = 0.0;
  double std_error = 0.0;
};

// Batch-means estimate of E[x] over one or more chains of a scalar series.
MeanEstimate batch_means(std::span<const Vector> series, int batches_per_chain = 20);

// Posterior mean of |a_l|^2 / N per branch with batch-means standard errors.
std::vector<MeanEstimate> estimate_norms(std::span<const HmcChain> chains);

struct PredictorEstimate {
  Vector mean;      // per test node
  Vector variance;  // per test node
  MeanEstimate bias;
  MeanEstimate variance_avg;
  MeanEstimate generalization;
  // Per-branch bias/variance, filled when branch targets are given.
  std::vector<MeanEstimate> branch_bias;
  std::vector<MeanEstimate> branch_variance;
};

// Uses the predictions recorded during sampling (HmcTarget::test_inputs), or,
// when `test_inputs` is given, pushes stored parameter samples through
// forward(). Bias removes the Monte-Carlo noise of the sample mean using a
// cross-batch estimator; standard errors come from a jackknife over batches.
PredictorEstimate estimate_predictor(
    std::span<const HmcChain> chains, const Vector& targets,
    const std::vector<Vector>* branch_targets = nullptr,
    const HmcTarget* target = nullptr,
    const std::vector<Matrix>* test_inputs = nullptr);

}  // namespace bpbnn

#endif  // BPBNN_HMC_HPP_
