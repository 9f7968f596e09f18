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


#ifndef BPBNN_KERNELS_HPP_
#define BPBNN_KERNELS_HPP_

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "bpbnn/types.hpp"

namespace bpbnn {

// What feature map a branch applies to its input.
enum class BranchKind {
  kGraphConvolution,  // A^l X with l = branch order
  kLinear,            // X
  kRelu,              // max(0, X W / sqrt(N0))
};

std::string to_string(BranchKind kind);
BranchKind branch_kind_from_string(const std::string& name);

// Full n x n input kernels, one per branch, all built with the same prior
// variance. Restrict to node subsets with restrict().
struct BranchKernels {
  std::vector<Matrix> kernels;
  double prior_variance = 1.0;
  std::vector<BranchKind> kinds;

  int num_branches() const { return static_cast<int>(kernels.size()); }
  // The same kernels with prior variance `variance`. Every supported kernel
  // is linear in the prior variance.
  BranchKernels rescaled(double variance) const;
};

// (sigma^2 / N0) X X^T.
Matrix branch_kernel(const Matrix& features, double prior_variance);

// Arc-cosine kernel of degree one built on top of a linear kernel K0:
//   (1 / 2 pi) sqrt(K0(x,x) K0(x',x')) J(theta),
//   J(theta) = sin(theta) + (pi - theta) cos(theta).
// Rows/columns of nodes with K0(x,x) == 0 are zero.
Matrix relu_kernel(const Matrix& linear_kernel);

Matrix restrict(const Matrix& kernel, const IndexList& rows,
                const IndexList& cols);

// Graph-convolution kernels from per-branch features (one matrix per branch).
BranchKernels graph_branch_kernels(std::span<const Matrix> features,
                                   double prior_variance);

// Residual-MLP kernels: every branch sees the same input matrix.
BranchKernels mlp_branch_kernels(const Matrix& inputs,
                                 std::span<const BranchKind> kinds,
                                 double prior_variance);

// sum_l (u_l / L) K_l|_P + T I with a cached Cholesky factor.
//
// Factorization is attempted without jitter first. On failure a diagonal
// jitter of 1e-12 * trace / P is added and multiplied by ten per retry, for
// at most four retries. The stored matrix() includes any jitter applied.
class AssembledKernel {
 public:
  AssembledKernel(Matrix matrix, double temperature);

  const Matrix& matrix() const { return matrix_; }
  double temperature() const { return temperature_; }
  double jitter() const { return jitter_; }
  Index size() const { return matrix_.rows(); }

  Vector solve(const Vector& rhs) const;
  Matrix solve(const Matrix& rhs) const;
  // L^{-1} rhs where matrix() = L L^T.
  Matrix half_solve(const Matrix& rhs) const;
  Matrix inverse() const;
  double log_det() const;

 private:
  Matrix matrix_;
  double temperature_;
  double jitter_ = 0.0;
  Eigen::LLT<Matrix> llt_;
};

// Uses kernels already restricted to the training set.
AssembledKernel assemble_restricted(std::span<const Matrix> train_kernels,
                                    std::span<const double> u,
                                    double temperature);

AssembledKernel assemble(const BranchKernels& kernels,
                         std::span<const double> u, const IndexList& train_idx,
                         double temperature);

// Dense CSV dump, used for kernel heatmaps.
void write_kernel_csv(const Matrix& kernel, const std::filesystem::path& path);

}  // namespace bpbnn

#endif  // BPBNN_KERNELS_HPP_
