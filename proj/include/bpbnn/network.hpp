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


#ifndef BPBNN_NETWORK_HPP_
#define BPBNN_NETWORK_HPP_

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "bpbnn/kernels.hpp"
#include "bpbnn/types.hpp"

namespace bpbnn {

enum class Architecture { kGraphConvolution, kResidualMlp };

// One hidden layer per branch. Weight variances are stored unscaled; the
// 1/sqrt(L), 1/sqrt(N) and 1/sqrt(N0) factors are applied in forward().
struct NetworkParams {
  Architecture architecture = Architecture::kGraphConvolution;
  std::vector<BranchKind> kinds;  // one per branch
  std::vector<Matrix> hidden;     // W_l, N0 x N
  std::vector<Vector> readout;    // a_l, length N

  int num_branches() const { return static_cast<int>(hidden.size()); }
  Index width() const { return hidden.empty() ? 0 : hidden.front().cols(); }
  Index input_dim() const { return hidden.empty() ? 0 : hidden.front().rows(); }
  void validate() const;
};

struct ForwardResult {
  Vector output;                // f = sum_l f_l
  std::vector<Vector> branches;  // f_l
};

// f_l = phi_l(X_l W_l / sqrt(N0)) a_l / sqrt(L N), with phi_l the identity for
// convolution and linear branches and max(0, .) for ReLU branches.
// `inputs` holds one matrix per branch (rows are nodes or samples).
ForwardResult forward(const NetworkParams& params,
                      std::span<const Matrix> inputs);

struct TeacherConfig {
  Index width = 1024;             // N_t
  double hidden_variance = 1.0;   // sigma_t^2
  Vector readout_variances;       // beta_l^2, one per branch
  std::uint64_t seed = 0;

  void validate() const;
};

// W*_l ~ N(0, sigma_t^2), a*_l ~ N(0, beta_l^2), i.i.d.
NetworkParams sample_teacher(const TeacherConfig& cfg, Architecture arch,
                             std::span<const BranchKind> kinds, Index input_dim);

// Student parameters drawn from the prior N(0, sigma_w^2).
NetworkParams sample_prior(Architecture arch, std::span<const BranchKind> kinds,
                           Index input_dim, Index width, double prior_variance,
                           std::uint64_t seed, std::uint64_t stream = 0);

// Teacher outputs at every node; `branches` holds the branch-level targets.
ForwardResult teacher_labels(const NetworkParams& teacher,
                             std::span<const Matrix> inputs);

// sum_l (beta_l^2 / L) K_l(sigma_t^2): the infinite-width teacher label
// second moment. `teacher_kernels` must be built with prior variance
// sigma_t^2 (restricted or full, any square size).
Matrix analytic_label_covariance(std::span<const Matrix> teacher_kernels,
                                 const Vector& readout_variances);

// Plain-text dump: one header line per branch followed by W_l rows and the
// a_l row, in the datagen numeric format.
void write_network(const NetworkParams& params,
                   const std::filesystem::path& path);
NetworkParams read_network(const std::filesystem::path& path);

}  // namespace bpbnn

#endif  // BPBNN_NETWORK_HPP_
