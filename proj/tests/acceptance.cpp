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


// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
// criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "bpbnn/config.hpp"
#include "bpbnn/experiments.hpp"
#include "bpbnn/kernels.hpp"
#include "bpbnn/predictor.hpp"
#include "bpbnn/rng.hpp"
#include "bpbnn/saddle.hpp"

using namespace bpbnn;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*g", digits, v);
  return buf;
}

std::string pair(const Vector& v, int digits = 4) {
  std::string s = "(";
  for (Index i = 0; i < v.size(); ++i) s += (i ? ", " : "") + fmt(v(i), digits);
  return s + ")";
}

// Desk-scale CSBM student-teacher setup shared by several criteria:
// n = 520, N0 = 190, 65% training nodes (P = 338), L = 2 convolution branches,
// beta^2 = (0.4, 2.0), sigma_t = 1, N_t = 512, T = 5e-4 sigma_w^2.
ExperimentConfig csbm_config() {
  ExperimentConfig cfg = preset("fig1b");
  cfg.hmc.enabled = false;
  cfg.hmc.raw_samples = false;
  cfg.teacher->width = 512;
  return cfg;
}

ExperimentConfig mlp_config() {
  ExperimentConfig cfg = preset("fig9-10");
  cfg.teacher->width = 512;
  return cfg;
}

SweepPoint theory_point(const ExperimentConfig& cfg, const ExperimentData& data, Index n,
                        double sigma_w) {
  SweepPoint pt = run_point(cfg, data, n, sigma_w, 0, 1);
  if (!pt.theory_ok) throw std::runtime_error(pt.error);
  if (!pt.order.converged) throw std::runtime_error("saddle solver did not converge");
  return pt;
}

Vector plotted(const SweepPoint& pt) {
  Vector v(static_cast<Index>(pt.norms.branches.size()));
  for (Index l = 0; l < v.size(); ++l) v(l) = pt.norms.branches[l].plotted;
  return v;
}

double max_rel(const Vector& got, const Vector& want) {
  return ((got - want).array().abs() / want.array().abs()).maxCoeff();
}

// Shared HMC run at N = 4, sigma_w = 1 used by two criteria.
struct HmcRun {
  bool done = false;
  SweepPoint point;
  double seconds = 0.0;
};
HmcRun g_hmc4;

SweepPoint hmc_point(Index n, int kept, int warmup, double* seconds) {
  ExperimentConfig cfg = csbm_config();
  cfg.hmc.enabled = true;
  cfg.hmc.max_width = 1024;
  cfg.hmc.config.num_chains = 4;
  cfg.hmc.config.step_size = 2e-3;
  cfg.hmc.config.leapfrog_steps = 200;
  cfg.hmc.config.warmup_samples = warmup;
  cfg.hmc.config.kept_samples = kept;
  cfg.hmc.config.thinning = 1;
  cfg.widths = {n};
  cfg.sigma_w = {1.0};
  const auto start = std::chrono::steady_clock::now();
  const ExperimentData data = prepare_data(cfg);
  SweepPoint pt = run_point(cfg, data, n, 1.0, 0, cfg.threads);
  *seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (!pt.theory_ok) throw std::runtime_error(pt.error);
  if (!pt.hmc || !pt.hmc->ok) throw std::runtime_error(pt.hmc ? pt.hmc->error : "no HMC run");
  return pt;
}

const HmcRun& hmc4() {
  if (!g_hmc4.done) {
    g_hmc4.point = hmc_point(4, 2000, 500, &g_hmc4.seconds);
    g_hmc4.done = true;
  }
  return g_hmc4;
}

Outcome gp_limit_recovery() {
  ExperimentConfig cfg = csbm_config();
  cfg.train_ratio = 10.0 / 520.0;
  cfg.temperature_multiple = 1e-3;
  const ExperimentData data = prepare_data(cfg);
  if (data.train_idx.size() != 10) throw std::runtime_error("expected P = 10");
  const SweepPoint pt = theory_point(cfg, data, 1000, 1.0);
  const double dev = (pt.order.u.array() - 1.0).abs().maxCoeff();
  return {dev <= 1e-3, "P=10 N=1000 u=" + pair(pt.order.u, 8) + " max|u-1|=" + fmt(dev) +
                           " (tol 1e-3)"};
}

Outcome closed_form() {
  SaddleProblem pr;
  pr.kernels = {Matrix::Identity(30, 30)};
  pr.labels = Vector::Zero(30);
  pr.width = 100;
  pr.temperature = 1e-8;
  pr.prior_variance = 1.0;
  const OrderParams op = solve(pr);
  const double err = std::abs(op.u(0) - 0.7);
  return {op.converged && err <= 1e-6, "u=" + fmt(op.u(0), 12) + " |u-0.7|=" + fmt(err)};
}

Outcome narrow_equipartition() {
  std::ostringstream detail;
  bool pass = true;
  const Vector target = (Vector(2) << 0.4, 2.0).finished();
  for (double sigma_w : {0.5, 1.0}) {
    ExperimentConfig ideal = csbm_config();
    ideal.teacher->mode = TeacherMode::kIdeal;
    const SweepPoint pt = theory_point(ideal, prepare_data(ideal), 4, sigma_w);
    const double err = max_rel(plotted(pt), target);
    pass &= err <= 0.05;
    detail << "sigma_w=" << sigma_w << " ideal u*s^2=" << pair(plotted(pt)) << " err=" << fmt(err, 3)
           << (err <= 0.05 ? " ok" : " >5%") << "; ";

    Vector mean = Vector::Zero(2);
    std::string draws;
    const int teachers = 8;
    for (int t = 0; t < teachers; ++t) {
      ExperimentConfig sampled = csbm_config();
      sampled.seeds.teacher = 100 + t;
      const SweepPoint sp = theory_point(sampled, prepare_data(sampled), 4, sigma_w);
      mean += plotted(sp) / teachers;
      draws += (t ? " " : "") + pair(plotted(sp), 3);
    }
    const double serr = max_rel(mean, target);
    pass &= serr <= 0.10;
    detail << "N_t=512 mean of " << teachers << " teachers=" << pair(mean) << " err=" << fmt(serr, 3)
           << (serr <= 0.10 ? " ok" : " >10%") << " [draws " << draws << "]; ";
  }
  return {pass, detail.str()};
}

Outcome hmc_norms() {
  const HmcRun& run = hmc4();
  const SweepPoint& pt = run.point;
  bool pass = true;
  std::ostringstream detail;
  for (std::size_t l = 0; l < pt.hmc->norms.size(); ++l) {
    const double theory = pt.order.u(static_cast<Index>(l));
    const MeanEstimate& e = pt.hmc->norms[l];
    const double z = std::abs(e.mean - theory) / e.std_error;
    const double rel = std::abs(e.mean - theory) / theory;
    pass &= z <= 3.0 && rel <= 0.10;
    detail << "branch " << l << ": hmc " << fmt(e.mean) << "+-" << fmt(e.std_error, 2)
           << " theory " << fmt(theory) << " (" << fmt(z, 2) << " se, " << fmt(100 * rel, 2)
           << "%); ";
  }
  detail << "acceptance " << fmt(pt.hmc->acceptance_rate, 3) << ", divergences "
         << pt.hmc->divergences << ", 4 chains x 2000 kept, " << fmt(run.seconds, 3) << " s";
  return {pass, detail.str()};
}

Outcome symmetry_breaking() {
  ExperimentConfig cfg = csbm_config();
  cfg.teacher->mode = TeacherMode::kIdeal;
  const ExperimentData data = prepare_data(cfg);
  const Vector wide = plotted(theory_point(cfg, data, 1024, 1.0));
  const Vector narrow = plotted(theory_point(cfg, data, 4, 1.0));
  const double wide_gap = std::abs(wide(1) - wide(0)) / (0.5 * (wide(0) + wide(1)));
  const double narrow_gap = std::abs(narrow(1) - narrow(0));
  const double needed = 0.5 * (2.0 - 0.4);
  const bool pass = wide_gap < 0.03 && narrow_gap > needed;
  return {pass, "N=1024 u*s^2=" + pair(wide) + " relative gap " + fmt(100 * wide_gap, 3) +
                    "% (need < 3%" + (wide_gap < 0.03 ? ", ok" : ", FAILS") + "); N=4 u*s^2=" +
                    pair(narrow) + " gap " + fmt(narrow_gap) + " (need > " + fmt(needed) +
                    (narrow_gap > needed ? ", ok)" : ", FAILS)")};
}

Outcome bias_trend() {
  ExperimentConfig cfg = csbm_config();
  const ExperimentData data = prepare_data(cfg);
  std::vector<double> bias;
  std::ostringstream detail;
  bool pass = true;
  for (Index n : {4, 64, 1024}) {
    bias.push_back(theory_point(cfg, data, n, 1.0).generalization->bias);
    detail << "bias(N=" << n << ")=" << fmt(bias.back()) << " ";
  }
  for (std::size_t i = 1; i < bias.size(); ++i) pass &= bias[i] >= bias[i - 1] * 0.95;
  detail << (pass ? "non-decreasing; " : "NOT non-decreasing; ");

  auto cross_check = [&](const SweepPoint& pt) {
    const MeanEstimate& e = pt.hmc->predictor->bias;
    const double theory = pt.generalization->bias;
    const double z = std::abs(e.mean - theory) / e.std_error;
    pass &= z <= 3.0;
    detail << "hmc N=" << pt.width << " bias " << fmt(e.mean) << "+-" << fmt(e.std_error, 2)
           << " vs theory " << fmt(theory) << " (" << fmt(z, 2) << " se); ";
  };
  cross_check(hmc4().point);
  double seconds = 0.0;
  cross_check(hmc_point(64, 1000, 300, &seconds));
  detail << "N=64 HMC " << fmt(seconds, 3) << " s";
  return {pass, detail.str()};
}

Outcome krr_oracle() {
  double worst = 0.0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    CounterRng rng(1000 + seed);
    const Index p = 5 + static_cast<Index>(seed * 4.5);
    const Index n = p + 15;
    const int branches = 1 + static_cast<int>(seed % 3);
    const double var = 0.5 + rng.uniform();
    const double t = 1e-3 + 0.1 * rng.uniform();
    std::vector<Matrix> feats;
    for (int l = 0; l < branches; ++l) feats.push_back(rng.normal_matrix(n, 3 + 2 * l));
    const BranchKernels k = graph_branch_kernels(feats, var);
    IndexList train, test;
    for (Index i = 0; i < n; ++i) (i < p ? train : test).push_back(i);
    const Vector y = rng.normal_vector(p);
    const Vector mean =
        mean_predictor(Vector::Constant(branches, var), PredictorInputs{&k, train, test, y, t});

    // Primal ridge regression on the explicit feature map of the GP kernel.
    Index cols = 0;
    for (const auto& f : feats) cols += f.cols();
    Matrix phi(n, cols);
    Index c = 0;
    for (const auto& f : feats) {
      phi.middleCols(c, f.cols()) = f * std::sqrt(var * var / (branches * f.cols()));
      c += f.cols();
    }
    const Matrix phi_tr = phi.topRows(p), phi_te = phi.bottomRows(n - p);
    const Vector w = (phi_tr.transpose() * phi_tr + t * Matrix::Identity(cols, cols))
                         .fullPivLu()
                         .solve(phi_tr.transpose() * y);
    const Vector ridge = phi_te * w;
    worst = std::max(worst, (mean - ridge).norm() / ridge.norm());
  }
  return {worst <= 1e-10, "10 instances, P in [9, 50], worst relative error " + fmt(worst)};
}

Outcome gradient_consistency() {
  double worst = 0.0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    CounterRng rng(2000 + seed);
    const Index p = 5 + static_cast<Index>(rng.uniform() * 26);
    const int branches = 1 + static_cast<int>(rng.uniform() * 3);
    SaddleProblem pr;
    for (int l = 0; l < branches; ++l) {
      const Matrix x = rng.normal_matrix(p, 2 + l * 3);
      pr.kernels.push_back(x * x.transpose() / static_cast<double>(x.cols()));
    }
    pr.labels = rng.normal_vector(p);
    pr.width = 1.0 + 50.0 * rng.uniform();
    pr.temperature = 1e-3 + 0.1 * rng.uniform();
    pr.prior_variance = 0.3 + 1.5 * rng.uniform();
    Vector u(branches);
    for (int l = 0; l < branches; ++l) u(l) = 0.1 + 3.0 * rng.uniform();
    const SaddleResidual res = residual(u, pr);
    for (int l = 0; l < branches; ++l) {
      const double h = 1e-4 * u(l);
      Vector up = u, dn = u;
      up(l) += h;
      dn(l) -= h;
      const double fd = (hamiltonian(up, pr) - hamiltonian(dn, pr)) / (2 * h);
      const double lhs = 2.0 * u(l) * fd;
      const double scale = std::max(std::abs(lhs), std::abs(res.rho(l)));
      worst = std::max(worst, std::abs(lhs + res.rho(l)) / scale);
    }
  }
  return {worst <= 1e-5, "20 problems, worst |2u dH/du + rho| / scale = " + fmt(worst)};
}

Outcome relu_kernel_check() {
  const Index n = 32, n0 = 16;
  CounterRng rng(3000);
  const Matrix x = rng.normal_matrix(n, n0);
  const Matrix k0 = branch_kernel(x, 1.0);
  const Matrix k = relu_kernel(k0);
  const int draws = 100000;
  const Matrix w = rng.normal_matrix(n0, draws);
  const Matrix h = (x * w / std::sqrt(static_cast<double>(n0))).cwiseMax(0.0);
  const Matrix mc = h * h.transpose() / static_cast<double>(draws);
  const double frob = (mc - k).norm() / k.norm();
  double diag = 0.0;
  for (Index i = 0; i < n; ++i)
    diag = std::max(diag, std::abs(k(i, i) - k0(i, i) / 2.0) / (k0(i, i) / 2.0));
  const double eps = std::numeric_limits<double>::epsilon();
  return {frob <= 0.02 && diag <= 4 * eps, "Frobenius error vs 1e5 draws " + fmt(frob) +
                                               ", diagonal relative error " + fmt(diag)};
}

Outcome mlp_equipartition() {
  const Vector target = (Vector(2) << 2.4, 0.4).finished();
  Vector mean = Vector::Zero(2);
  std::string draws;
  const int teachers = 8;
  for (int t = 0; t < teachers; ++t) {
    ExperimentConfig cfg = mlp_config();
    cfg.seeds.teacher = 100 + t;
    const SweepPoint pt = theory_point(cfg, prepare_data(cfg), 4, 1.0);
    mean += plotted(pt) / teachers;
    draws += (t ? " " : "") + pair(plotted(pt), 3);
  }
  ExperimentConfig ideal = mlp_config();
  ideal.teacher->mode = TeacherMode::kIdeal;
  const Vector iv = plotted(theory_point(ideal, prepare_data(ideal), 4, 1.0));
  const double err = max_rel(mean, target);
  return {err <= 0.10, "N0=256 P=320 N=4: N_t=512 mean of " + std::to_string(teachers) +
                           " teachers u*s^2=" + pair(mean) + " err " + fmt(100 * err, 3) +
                           "% [draws " + draws + "]; ideal teacher " + pair(iv)};
}

Outcome train_interpolation() {
  std::ostringstream detail;
  bool pass = true;
  double worst = 0.0;
  int runs = 0;
  auto check = [&](const ExperimentConfig& cfg, Index n, double sigma_w) {
    const ExperimentData data = prepare_data(cfg);
    const SweepPoint pt = theory_point(cfg, data, n, sigma_w);
    Vector y(static_cast<Index>(data.train_idx.size()));
    for (std::size_t i = 0; i < data.train_idx.size(); ++i) y(i) = data.labels(data.train_idx[i]);
    const double ratio = *pt.train_mse / (y.squaredNorm() / y.size());
    worst = std::max(worst, ratio);
    pass &= ratio <= 1e-4;
    ++runs;
  };
  ExperimentConfig csbm = csbm_config();
  csbm.temperature_multiple = 1e-8;
  for (double s : {0.5, 1.0})
    for (Index n : {4, 64, 1024}) check(csbm, n, s);
  ExperimentConfig mlp = mlp_config();
  mlp.temperature_multiple = 1e-8;
  for (Index n : {4, 1024}) check(mlp, n, 1.0);
  detail << runs << " runs at T=1e-8 sigma_w^2, worst train MSE / mean(y^2) = " << fmt(worst);
  return {pass, detail.str()};
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    double budget_seconds;
    std::function<Outcome()> check;
  };
  const std::vector<Criterion> criteria = {
      {1, "GP-limit recovery", 5, gp_limit_recovery},
      {2, "closed-form saddle point", 1, closed_form},
      {3, "equipartition at narrow width", 120, narrow_equipartition},
      {4, "HMC vs theory branch norms", 900, hmc_norms},
      {5, "symmetry-breaking trend", 120, symmetry_breaking},
      {6, "bias monotonicity and HMC cross-check", 900, bias_trend},
      {7, "GP regression oracle", 1, krr_oracle},
      {8, "Hamiltonian gradient consistency", 30, gradient_consistency},
      {9, "ReLU kernel", 60, relu_kernel_check},
      {10, "residual-MLP equipartition", 300, mlp_equipartition},
      {11, "train interpolation", 300, train_interpolation},
  };
  int passed = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = c.check();
    } catch (const std::exception& e) {
      out = {false, std::string("error: ") + e.what()};
    }
    double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_time = seconds <= c.budget_seconds;
    const bool ok = out.pass && in_time;
    passed += ok;
    std::printf("[%s] criterion %2d: %s | %s | %.2f s (budget %.0f s%s)\n", ok ? "PASS" : "FAIL",
                c.id, c.name, out.detail.c_str(), seconds, c.budget_seconds,
                in_time ? "" : ", EXCEEDED");
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", passed, criteria.size());
  return passed == static_cast<int>(criteria.size()) ? 0 : 1;
}
