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


#include "bpbnn/predictor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace bpbnn {
namespace {

void check_inputs(const Vector& u, const PredictorInputs& in) {
  if (in.kernels == nullptr)
    throw std::invalid_argument("predictor: kernels not set");
  if (u.size() != in.kernels->num_branches())
    throw std::invalid_argument("predictor: one order parameter per branch");
  if (static_cast<Index>(in.train_idx.size()) != in.train_labels.size())
    throw std::invalid_argument("predictor: train labels and train indices differ in size");
  for (Index l = 0; l < u.size(); ++l)
    if (!(u(l) >= 0.0))
      throw std::invalid_argument("predictor: order parameters must be >= 0");
}

// Variances in [-tol, 0) are rounding; anything below is a logic error.
double clamp_variance(double v, double scale) {
  const double tol = 1e-10 * std::max(1.0, scale);
  if (v >= 0.0) return v;
  if (v >= -tol) return 0.0;
  std::ostringstream os;
  os << "predictor: negative posterior variance " << v;
  throw std::runtime_error(os.str());
}

struct Workspace {
  std::optional<AssembledKernel> m;
  Vector alpha;  // M^{-1} Y
};

Workspace prepare(const Vector& u, const PredictorInputs& in, bool need_alpha) {
  Workspace ws;
  if (in.train_idx.empty()) return ws;
  ws.m.emplace(assemble(*in.kernels, std::span<const double>(u.data(), u.size()),
                        in.train_idx, in.temperature));
  if (need_alpha) ws.alpha = ws.m->solve(in.train_labels);
  return ws;
}

Matrix cross_kernel(const Vector& u, const PredictorInputs& in) {
  const double inv_l = 1.0 / static_cast<double>(u.size());
  Matrix k = Matrix::Zero(static_cast<Index>(in.train_idx.size()),
                          static_cast<Index>(in.test_idx.size()));
  for (Index l = 0; l < u.size(); ++l)
    k += (u(l) * inv_l) *
         restrict(in.kernels->kernels[static_cast<std::size_t>(l)],
                  in.train_idx, in.test_idx);
  return k;
}

Vector test_diagonal(const Matrix& kernel, const IndexList& test_idx) {
  Vector d(static_cast<Index>(test_idx.size()));
  for (std::size_t i = 0; i < test_idx.size(); ++i) {
    const Index node = test_idx[i];
    if (node < 0 || node >= kernel.rows())
      throw std::out_of_range("predictor: test index out of range");
    d(static_cast<Index>(i)) = kernel(node, node);
  }
  return d;
}

Vector schur_variance(const Workspace& ws, const Vector& prior_diag,
                      const Matrix& cross) {
  Vector var = prior_diag;
  if (ws.m) var -= ws.m->half_solve(cross).colwise().squaredNorm().transpose();
  for (Index i = 0; i < var.size(); ++i)
    var(i) = clamp_variance(var(i), prior_diag(i));
  return var;
}

}  // namespace

Vector mean_predictor(const Vector& u, const PredictorInputs& in) {
  check_inputs(u, in);
  const Workspace ws = prepare(u, in, true);
  if (!ws.m) return Vector::Zero(static_cast<Index>(in.test_idx.size()));
  return cross_kernel(u, in).transpose() * ws.alpha;
}

Vector predictor_variance(const Vector& u, const PredictorInputs& in) {
  check_inputs(u, in);
  const Workspace ws = prepare(u, in, false);
  const double inv_l = 1.0 / static_cast<double>(u.size());
  Vector prior = Vector::Zero(static_cast<Index>(in.test_idx.size()));
  for (Index l = 0; l < u.size(); ++l)
    prior += (u(l) * inv_l) *
             test_diagonal(in.kernels->kernels[static_cast<std::size_t>(l)],
                           in.test_idx);
  const Matrix cross = ws.m ? cross_kernel(u, in) : Matrix();
  return schur_variance(ws, prior, cross);
}

PredictorStats branch_predictor_stats(const Vector& u,
                                      const PredictorInputs& in) {
  check_inputs(u, in);
  const Workspace ws = prepare(u, in, true);
  const double inv_l = 1.0 / static_cast<double>(u.size());
  const Index t = static_cast<Index>(in.test_idx.size());

  PredictorStats out;
  out.mean = Vector::Zero(t);
  Vector prior_total = Vector::Zero(t);
  Matrix cross_total;
  if (ws.m) cross_total = Matrix::Zero(ws.m->size(), t);
  for (Index l = 0; l < u.size(); ++l) {
    const Matrix& kernel = in.kernels->kernels[static_cast<std::size_t>(l)];
    const double scale = u(l) * inv_l;
    const Vector prior = scale * test_diagonal(kernel, in.test_idx);
    prior_total += prior;
    if (ws.m) {
      const Matrix cross = scale * restrict(kernel, in.train_idx, in.test_idx);
      cross_total += cross;
      out.branch_mean.push_back(cross.transpose() * ws.alpha);
      out.branch_variance.push_back(schur_variance(ws, prior, cross));
    } else {
      out.branch_mean.push_back(Vector::Zero(t));
      out.branch_variance.push_back(prior);
    }
    out.mean += out.branch_mean.back();
  }
  out.variance = schur_variance(ws, prior_total, cross_total);
  return out;
}

GeneralizationReport bias_variance(const PredictorStats& stats,
                                   const Vector& targets,
                                   const std::vector<Vector>* branch_targets) {
  const Index t = targets.size();
  if (t == 0) throw std::invalid_argument("bias_variance: empty test set");
  if (stats.mean.size() != t || stats.variance.size() != t)
    throw std::invalid_argument("bias_variance: stats and targets differ in size");
  const double inv_t = 1.0 / static_cast<double>(t);
  GeneralizationReport report;
  report.bias = (stats.mean - targets).squaredNorm() * inv_t;
  report.variance = stats.variance.sum() * inv_t;
  report.generalization = report.bias + report.variance;
  report.normalization = targets.squaredNorm() * inv_t;
  if (branch_targets != nullptr) {
    if (branch_targets->size() != stats.branch_mean.size())
      throw std::invalid_argument("bias_variance: one target vector per branch");
    std::vector<BranchBiasVariance> branches;
    for (std::size_t l = 0; l < branch_targets->size(); ++l) {
      const Vector& target = (*branch_targets)[l];
      if (target.size() != t)
        throw std::invalid_argument("bias_variance: branch target size mismatch");
      branches.push_back(
          {(stats.branch_mean[l] - target).squaredNorm() * inv_t,
           stats.branch_variance[l].sum() * inv_t});
    }
    report.branches = std::move(branches);
  }
  return report;
}

NormReport norm_report(const OrderParams& params,
                       const SaddleProblem& problem) {
  const double sigma2 = problem.prior_variance;
  const double n = problem.width;
  NormReport report;
  for (Index l = 0; l < params.u.size(); ++l) {
    BranchNorm b;
    b.u = params.u(l);
    b.mean_squared = sigma2 * params.r(l) / n;
    b.fluctuation = sigma2 * (n - params.tr(l)) / n;
    b.plotted = params.u(l) * sigma2;
    report.branches.push_back(b);
  }
  return report;
}

}  // namespace bpbnn
