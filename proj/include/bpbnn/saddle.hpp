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


#ifndef BPBNN_SADDLE_HPP_
#define BPBNN_SADDLE_HPP_

#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "bpbnn/kernels.hpp"
#include "bpbnn/types.hpp"

namespace bpbnn {

// Effective Hamiltonian over the order parameters u (one per branch):
//   H(u) = S(u) + E(u)
//   S(u) = sum_l [ -(N/2) log u_l + (N / 2 sigma^2) u_l ]
//   E(u) = 1/2 Y^T (K + T I)^{-1} Y + 1/2 log det (K + T I),
//   K    = sum_l u_l K_l / L.
struct SaddleProblem {
  std::vector<Matrix> kernels;  // P x P, restricted to the training nodes
  Vector labels;                // length P
  // When set, replaces Y Y^T everywhere it appears (ideal-teacher mode). The
  // labels vector is then ignored.
  std::optional<Matrix> label_second_moment;
  double width = 1.0;           // N
  double temperature = 1e-3;    // T
  double prior_variance = 1.0;  // sigma_w^2
  Index input_dim = 0;          // N0, only used for the capacity warning

  int num_branches() const { return static_cast<int>(kernels.size()); }
  Index num_samples() const;
  double alpha() const { return static_cast<double>(num_samples()) / width; }
  // P / (L N0); zero when input_dim is unknown.
  double capacity() const;
  void validate() const;
};

// Saddle-point residual and the two statistics it is built from:
//   r_l   = Y^T M^{-1} (u_l K_l / L) M^{-1} Y
//   Tr_l  = Tr[M^{-1} u_l K_l / L],           M = K + T I
//   rho_l = N (1 - u_l / sigma^2) + r_l - Tr_l = -2 u_l dH/du_l.
struct SaddleResidual {
  Vector rho;
  Vector r;
  Vector tr;
  double energy = 0.0;
};

double entropy(const Vector& u, const SaddleProblem& problem);
Vector entropy_gradient(const Vector& u, const SaddleProblem& problem);
double energy(const Vector& u, const SaddleProblem& problem);
// dE/du_l = (Tr_l - r_l) / (2 u_l).
Vector energy_gradient(const Vector& u, const SaddleProblem& problem);
double hamiltonian(const Vector& u, const SaddleProblem& problem);
Vector hamiltonian_gradient(const Vector& u, const SaddleProblem& problem);
SaddleResidual residual(const Vector& u, const SaddleProblem& problem);

struct OrderParams {
  Vector u;
  bool converged = false;
  int iterations = 0;
  double final_residual = 0.0;  // max_l |rho_l| / N
  Vector r;
  Vector tr;
  double hamiltonian_initial = 0.0;
  double hamiltonian_final = 0.0;
  double final_damping = 0.0;
  std::vector<std::string> warnings;
};

enum class FixedPointMap {
  // u <- sigma^2 (1 + (r - Tr) / N)
  kAdditive,
  // u <- u (N + r) / (N u / sigma^2 + Tr). Same fixed points; exact in one
  // step for a single branch in the narrow limit.
  kMultiplicative,
};

struct SolveOptions {
  std::optional<Vector> init;  // default: sigma^2 for every branch
  double damping = 0.5;
  double tol = 1e-8;  // on max_l |rho_l| / N
  int max_iter = 10000;
  // Damping never drops below damping * min_damping_fraction.
  double min_damping_fraction = 1.0 / 64.0;
  // Halve the damping when the residual has not decreased for this many
  // consecutive iterations.
  int stall_window = 50;
  double u_min_fraction = 1e-10;  // clamp u_l >= fraction * sigma^2
  FixedPointMap map = FixedPointMap::kMultiplicative;
  // Optional CSV trace: iteration,u_0..u_{L-1},residual,H
  std::ostream* trace = nullptr;
  std::function<void(const std::string&)> on_warning;
};

// Damped fixed-point iteration on the saddle-point equations, started from
// the GP point unless opts.init says otherwise. Non-convergence is reported
// through OrderParams::converged; factorization failures throw.
OrderParams solve(const SaddleProblem& problem, const SolveOptions& opts = {});

// u_l = sigma^2 for every branch, with the residual statistics evaluated at
// that point.
OrderParams gp_limit(const SaddleProblem& problem);

// Narrow-width student-teacher prediction u_l = sigma_t^2 beta_l^2 / sigma_w^2.
Vector equipartition_prediction(double teacher_variance,
                                const Vector& readout_variances,
                                double prior_variance);

}  // namespace bpbnn

#endif  // BPBNN_SADDLE_HPP_
