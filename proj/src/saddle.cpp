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


#include "bpbnn/saddle.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace bpbnn {

Index SaddleProblem::num_samples() const {
  if (!kernels.empty()) return kernels.front().rows();
  return label_second_moment ? label_second_moment->rows() : labels.size();
}

double SaddleProblem::capacity() const {
  if (input_dim <= 0 || kernels.empty()) return 0.0;
  return static_cast<double>(num_samples()) /
         (static_cast<double>(num_branches()) * static_cast<double>(input_dim));
}

void SaddleProblem::validate() const {
  if (kernels.empty())
    throw std::invalid_argument("saddle problem: no branch kernels");
  const Index p = num_samples();
  if (p < 1) throw std::invalid_argument("saddle problem: P must be >= 1");
  for (const auto& k : kernels)
    if (k.rows() != p || k.cols() != p)
      throw std::invalid_argument("saddle problem: kernels must all be P x P");
  if (label_second_moment) {
    if (label_second_moment->rows() != p || label_second_moment->cols() != p)
      throw std::invalid_argument(
          "saddle problem: label second moment must be P x P");
  } else if (labels.size() != p) {
    throw std::invalid_argument("saddle problem: expected " +
                                std::to_string(p) + " labels, got " +
                                std::to_string(labels.size()));
  }
  if (!(width >= 1.0))
    throw std::invalid_argument("saddle problem: width N must be >= 1");
  if (!(temperature >= 0.0))
    throw std::invalid_argument("saddle problem: temperature must be >= 0");
  if (!(prior_variance > 0.0))
    throw std::invalid_argument("saddle problem: prior variance must be > 0");
}

namespace {

void require_positive(const Vector& u, const SaddleProblem& problem) {
  if (u.size() != problem.num_branches())
    throw std::invalid_argument("order parameters: expected " +
                                std::to_string(problem.num_branches()) +
                                " values, got " + std::to_string(u.size()));
  for (Index l = 0; l < u.size(); ++l)
    if (!(u(l) > 0.0))
      throw std::invalid_argument("order parameters must be positive");
}

AssembledKernel assemble_for(const Vector& u, const SaddleProblem& problem) {
  return assemble_restricted(problem.kernels,
                             std::span<const double>(u.data(), u.size()),
                             problem.temperature);
}

double max_abs_scaled(const Vector& rho, double width) {
  return rho.cwiseAbs().maxCoeff() / width;
}

}  // namespace

double entropy(const Vector& u, const SaddleProblem& problem) {
  require_positive(u, problem);
  const double n = problem.width;
  return (-(n / 2.0) * u.array().log() +
          (n / (2.0 * problem.prior_variance)) * u.array())
      .sum();
}

Vector entropy_gradient(const Vector& u, const SaddleProblem& problem) {
  require_positive(u, problem);
  const double n = problem.width;
  return (-n / 2.0) * u.array().inverse() + n / (2.0 * problem.prior_variance);
}

SaddleResidual residual(const Vector& u, const SaddleProblem& problem) {
  require_positive(u, problem);
  const int num_branches = problem.num_branches();
  const double inv_l = 1.0 / static_cast<double>(num_branches);
  const AssembledKernel m = assemble_for(u, problem);
  const Matrix m_inv = m.inverse();

  SaddleResidual out;
  out.r.resize(num_branches);
  out.tr.resize(num_branches);
  Matrix weighted;  // M^{-1} C M^{-1} in ideal-teacher mode
  Vector alpha;
  if (problem.label_second_moment) {
    weighted = m_inv * (*problem.label_second_moment) * m_inv;
    out.energy = 0.5 * m_inv.cwiseProduct(*problem.label_second_moment).sum();
  } else {
    alpha = m.solve(problem.labels);
    out.energy = 0.5 * problem.labels.dot(alpha);
  }
  out.energy += 0.5 * m.log_det();

  for (int l = 0; l < num_branches; ++l) {
    const Matrix& k = problem.kernels[static_cast<std::size_t>(l)];
    const double scale = u(l) * inv_l;
    out.tr(l) = scale * m_inv.cwiseProduct(k).sum();
    out.r(l) = problem.label_second_moment
                   ? scale * weighted.cwiseProduct(k).sum()
                   : scale * alpha.dot(k * alpha);
  }
  out.rho = problem.width * (1.0 - u.array() / problem.prior_variance) +
            out.r.array() - out.tr.array();
  return out;
}

double energy(const Vector& u, const SaddleProblem& problem) {
  require_positive(u, problem);
  const AssembledKernel m = assemble_for(u, problem);
  double quadratic;
  if (problem.label_second_moment) {
    quadratic = m.inverse().cwiseProduct(*problem.label_second_moment).sum();
  } else {
    quadratic = problem.labels.dot(m.solve(problem.labels));
  }
  return 0.5 * quadratic + 0.5 * m.log_det();
}

Vector energy_gradient(const Vector& u, const SaddleProblem& problem) {
  const SaddleResidual res = residual(u, problem);
  return (res.tr - res.r).array() / (2.0 * u.array());
}

double hamiltonian(const Vector& u, const SaddleProblem& problem) {
  return entropy(u, problem) + energy(u, problem);
}

Vector hamiltonian_gradient(const Vector& u, const SaddleProblem& problem) {
  return entropy_gradient(u, problem) + energy_gradient(u, problem);
}

OrderParams gp_limit(const SaddleProblem& problem) {
  problem.validate();
  OrderParams out;
  out.u = Vector::Constant(problem.num_branches(), problem.prior_variance);
  const SaddleResidual res = residual(out.u, problem);
  out.converged = true;
  out.r = res.r;
  out.tr = res.tr;
  out.final_residual = max_abs_scaled(res.rho, problem.width);
  out.hamiltonian_initial = out.hamiltonian_final =
      entropy(out.u, problem) + res.energy;
  return out;
}

OrderParams solve(const SaddleProblem& problem, const SolveOptions& opts) {
  problem.validate();
  if (!(opts.damping > 0.0 && opts.damping <= 1.0))
    throw std::invalid_argument("solve: damping must be in (0, 1]");

  OrderParams out;
  auto warn = [&](const std::string& msg) {
    out.warnings.push_back(msg);
    if (opts.on_warning) {
      opts.on_warning(msg);
    } else {
      std::clog << "warning: " << msg << '\n';
    }
  };
  if (problem.capacity() >= 1.0) {
    std::ostringstream os;
    os << "capacity P/(L N0) = " << problem.capacity()
       << " >= 1; the theory assumes the over-parameterized regime";
    warn(os.str());
  }

  const int num_branches = problem.num_branches();
  const double sigma2 = problem.prior_variance;
  const double n = problem.width;
  const double u_min = opts.u_min_fraction * sigma2;
  Vector u = opts.init ? *opts.init : Vector::Constant(num_branches, sigma2);
  require_positive(u, problem);

  auto evaluate = [&](const Vector& point) {
    SaddleResidual res = residual(point, problem);
    const double h = entropy(point, problem) + res.energy;
    return std::pair{std::move(res), h};
  };

  auto [res, h] = evaluate(u);
  out.hamiltonian_initial = h;
  double norm = max_abs_scaled(res.rho, n);
  double eta = opts.damping;
  const double eta_min = opts.damping * opts.min_damping_fraction;
  int stalled = 0;
  int improving = 0;

  Vector best_u = u;
  SaddleResidual best_res = res;
  double best_norm = norm, best_h = h;

  auto write_trace = [&](int it, const Vector& point, double resid,
                         double ham) {
    if (!opts.trace) return;
    auto& os = *opts.trace;
    os << it;
    for (Index l = 0; l < point.size(); ++l) os << ',' << point(l);
    os << ',' << resid << ',' << ham << '\n';
  };
  if (opts.trace) {
    *opts.trace << "iteration";
    for (int l = 0; l < num_branches; ++l) *opts.trace << ",u_" << l;
    *opts.trace << ",residual,H\n";
  }
  write_trace(0, u, norm, h);

  int it = 0;
  while (norm > opts.tol && it < opts.max_iter) {
    ++it;
    Vector target(num_branches);
    for (int l = 0; l < num_branches; ++l) {
      if (opts.map == FixedPointMap::kAdditive) {
        target(l) = sigma2 * (1.0 + (res.r(l) - res.tr(l)) / n);
      } else {
        target(l) = u(l) * (n + res.r(l)) / (n * u(l) / sigma2 + res.tr(l));
      }
    }
    Vector candidate = ((1.0 - eta) * u + eta * target).cwiseMax(u_min);
    auto [cand_res, cand_h] = evaluate(candidate);
    const double cand_norm = max_abs_scaled(cand_res.rho, n);

    // A step that increases the residual is retried with half the damping
    // unless the damping is already at its floor.
    if (!(cand_norm <= norm) && eta > eta_min) {
      eta = std::max(eta / 2.0, eta_min);
      improving = 0;
      continue;
    }
    if (cand_norm < norm) {
      stalled = 0;
      // Recover damping slowly after a run of successful steps.
      if (++improving >= 10 && eta < opts.damping) {
        eta = std::min(eta * 2.0, opts.damping);
        improving = 0;
      }
    } else if (++stalled >= opts.stall_window) {
      eta = std::max(eta / 2.0, eta_min);
      stalled = 0;
    }
    u = std::move(candidate);
    res = std::move(cand_res);
    h = cand_h;
    norm = cand_norm;
    write_trace(it, u, norm, h);
    if (norm < best_norm) {
      best_u = u;
      best_res = res;
      best_norm = norm;
      best_h = h;
    }
  }

  out.converged = best_norm <= opts.tol;
  out.u = best_u;
  out.r = best_res.r;
  out.tr = best_res.tr;
  out.final_residual = best_norm;
  out.hamiltonian_final = best_h;
  out.iterations = it;
  out.final_damping = eta;
  if (!out.converged) {
    std::ostringstream os;
    os << "saddle solver stopped after " << it
       << " iterations with residual " << best_norm;
    warn(os.str());
  }
  return out;
}

Vector equipartition_prediction(double teacher_variance,
                                const Vector& readout_variances,
                                double prior_variance) {
  return teacher_variance * readout_variances / prior_variance;
}

}  // namespace bpbnn
