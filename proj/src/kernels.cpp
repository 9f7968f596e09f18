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


#include "bpbnn/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "bpbnn/datagen.hpp"

namespace bpbnn {

std::string to_string(BranchKind kind) {
  switch (kind) {
    case BranchKind::kGraphConvolution:
      return "gcn";
    case BranchKind::kLinear:
      return "linear";
    case BranchKind::kRelu:
      return "relu";
  }
  return "unknown";
}

BranchKind branch_kind_from_string(const std::string& name) {
  if (name == "gcn") return BranchKind::kGraphConvolution;
  if (name == "linear") return BranchKind::kLinear;
  if (name == "relu") return BranchKind::kRelu;
  throw std::invalid_argument("unknown branch kind '" + name +
                              "' (expected gcn, linear or relu)");
}

BranchKernels BranchKernels::rescaled(double variance) const {
  BranchKernels out = *this;
  const double factor = variance / prior_variance;
  for (auto& k : out.kernels) k *= factor;
  out.prior_variance = variance;
  return out;
}

Matrix branch_kernel(const Matrix& features, double prior_variance) {
  if (features.cols() < 1)
    throw std::invalid_argument("branch_kernel: feature dimension is zero");
  Matrix k(features.rows(), features.rows());
  k.setZero();
  k.selfadjointView<Eigen::Lower>().rankUpdate(
      features, prior_variance / static_cast<double>(features.cols()));
  return k.selfadjointView<Eigen::Lower>();
}

Matrix relu_kernel(const Matrix& linear_kernel) {
  const Index n = linear_kernel.rows();
  if (linear_kernel.cols() != n)
    throw std::invalid_argument("relu_kernel: kernel is not square");
  const Vector norms = linear_kernel.diagonal().cwiseMax(0.0).cwiseSqrt();
  Matrix out(n, n);
  for (Index j = 0; j < n; ++j) {
    for (Index i = j; i < n; ++i) {
      const double scale = norms(i) * norms(j);
      double value = 0.0;
      if (scale > 0.0) {
        if (i == j) {
          value = linear_kernel(i, i) / 2.0;
        } else {
          const double cosine =
              std::clamp(linear_kernel(i, j) / scale, -1.0, 1.0);
          const double theta = std::acos(cosine);
          const double j_theta =
              std::sin(theta) + (std::numbers::pi - theta) * cosine;
          value = scale * j_theta / (2.0 * std::numbers::pi);
        }
      }
      out(i, j) = value;
      out(j, i) = value;
    }
  }
  return out;
}

Matrix restrict(const Matrix& kernel, const IndexList& rows,
                const IndexList& cols) {
  auto check = [](const IndexList& idx, Index limit, const char* what) {
    for (Index i : idx)
      if (i < 0 || i >= limit) {
        std::ostringstream os;
        os << "restrict: " << what << " index " << i << " outside [0, "
           << limit << ")";
        throw std::out_of_range(os.str());
      }
  };
  check(rows, kernel.rows(), "row");
  check(cols, kernel.cols(), "column");
  return kernel(rows, cols);
}

BranchKernels graph_branch_kernels(std::span<const Matrix> features,
                                   double prior_variance) {
  BranchKernels out;
  out.prior_variance = prior_variance;
  for (const auto& x : features) {
    out.kernels.push_back(branch_kernel(x, prior_variance));
    out.kinds.push_back(BranchKind::kGraphConvolution);
  }
  return out;
}

BranchKernels mlp_branch_kernels(const Matrix& inputs,
                                 std::span<const BranchKind> kinds,
                                 double prior_variance) {
  BranchKernels out;
  out.prior_variance = prior_variance;
  const Matrix linear = branch_kernel(inputs, prior_variance);
  Matrix relu;
  for (BranchKind kind : kinds) {
    switch (kind) {
      case BranchKind::kLinear:
      case BranchKind::kGraphConvolution:
        out.kernels.push_back(linear);
        break;
      case BranchKind::kRelu:
        if (relu.size() == 0) relu = relu_kernel(linear);
        out.kernels.push_back(relu);
        break;
    }
    out.kinds.push_back(kind);
  }
  return out;
}

AssembledKernel::AssembledKernel(Matrix matrix, double temperature)
    : matrix_(std::move(matrix)), temperature_(temperature) {
  const Index p = matrix_.rows();
  if (p == 0) return;
  llt_.compute(matrix_);
  if (llt_.info() == Eigen::Success) return;

  const double base = 1e-12 * std::max(matrix_.trace(), 0.0) /
                      static_cast<double>(p);
  double jitter = base > 0.0 ? base : 1e-300;
  for (int attempt = 0; attempt < 4; ++attempt, jitter *= 10.0) {
    Matrix trial = matrix_;
    trial.diagonal().array() += jitter;
    llt_.compute(trial);
    if (llt_.info() == Eigen::Success) {
      matrix_ = std::move(trial);
      jitter_ = jitter;
      return;
    }
  }
  Eigen::SelfAdjointEigenSolver<Matrix> eig(matrix_, Eigen::EigenvaluesOnly);
  std::ostringstream os;
  os << "assemble: kernel is not positive definite after jitter "
     << jitter / 10.0 << "; smallest eigenvalue " << eig.eigenvalues()(0);
  throw std::runtime_error(os.str());
}

Vector AssembledKernel::solve(const Vector& rhs) const {
  return llt_.solve(rhs);
}

Matrix AssembledKernel::solve(const Matrix& rhs) const {
  return llt_.solve(rhs);
}

Matrix AssembledKernel::half_solve(const Matrix& rhs) const {
  return llt_.matrixL().solve(rhs);
}

Matrix AssembledKernel::inverse() const {
  const Index p = size();
  Matrix linv = llt_.matrixL().solve(Matrix::Identity(p, p));
  Matrix inv(p, p);
  inv.setZero();
  inv.selfadjointView<Eigen::Lower>().rankUpdate(linv.transpose());
  return inv.selfadjointView<Eigen::Lower>();
}

double AssembledKernel::log_det() const {
  if (size() == 0) return 0.0;
  return 2.0 * llt_.matrixLLT().diagonal().array().log().sum();
}

AssembledKernel assemble_restricted(std::span<const Matrix> train_kernels,
                                    std::span<const double> u,
                                    double temperature) {
  if (train_kernels.size() != u.size())
    throw std::invalid_argument("assemble: one order parameter per branch");
  if (train_kernels.empty())
    throw std::invalid_argument("assemble: no branches");
  if (temperature < 0.0)
    throw std::invalid_argument("assemble: negative temperature");
  const double num_branches = static_cast<double>(u.size());
  const Index p = train_kernels.front().rows();
  Matrix m = Matrix::Zero(p, p);
  for (std::size_t l = 0; l < u.size(); ++l) {
    if (!(u[l] >= 0.0))
      throw std::invalid_argument("assemble: order parameters must be >= 0");
    m.noalias() += (u[l] / num_branches) * train_kernels[l];
  }
  m.diagonal().array() += temperature;
  return AssembledKernel(std::move(m), temperature);
}

AssembledKernel assemble(const BranchKernels& kernels,
                         std::span<const double> u, const IndexList& train_idx,
                         double temperature) {
  std::vector<Matrix> restricted;
  restricted.reserve(kernels.kernels.size());
  for (const auto& k : kernels.kernels)
    restricted.push_back(restrict(k, train_idx, train_idx));
  return assemble_restricted(restricted, u, temperature);
}

void write_kernel_csv(const Matrix& kernel, const std::filesystem::path& path) {
  write_matrix(kernel, path, ',');
}

}  // namespace bpbnn
