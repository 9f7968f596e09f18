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


#include <cmath>
#include <filesystem>

#include "bpbnn/network.hpp"
#include "bpbnn/rng.hpp"
#include "doctest.h"

using namespace bpbnn;

TEST_CASE("forward pass matches explicit sums") {
  const std::vector<BranchKind> kinds{BranchKind::kLinear, BranchKind::kRelu};
  const NetworkParams net = sample_prior(Architecture::kResidualMlp, kinds, 3, 5, 1.0, 1);
  CounterRng rng(2);
  const Matrix x = rng.normal_matrix(4, 3);
  const std::vector<Matrix> inputs{x, x};
  const ForwardResult f = forward(net, inputs);
  for (Index mu = 0; mu < 4; ++mu) {
    double total = 0.0;
    for (int l = 0; l < 2; ++l) {
      double branch = 0.0;
      for (Index i = 0; i < 5; ++i) {
        double h = 0.0;
        for (Index j = 0; j < 3; ++j) h += x(mu, j) * net.hidden[l](j, i);
        h /= std::sqrt(3.0);
        if (kinds[l] == BranchKind::kRelu) h = std::max(0.0, h);
        branch += h * net.readout[l](i);
      }
      branch /= std::sqrt(2.0 * 5.0);
      CHECK(f.branches[l](mu) == doctest::Approx(branch));
      total += branch;
    }
    CHECK(f.output(mu) == doctest::Approx(total));
  }
}

TEST_CASE("teacher label second moment matches the analytic kernel") {
  // Average y y^T over many small teachers; the analytic value is the
  // infinite-width limit, and each teacher already averages over N_t units.
  const std::vector<BranchKind> kinds{BranchKind::kLinear, BranchKind::kRelu};
  CounterRng rng(3);
  const Matrix x = rng.normal_matrix(5, 6);
  const std::vector<Matrix> inputs{x, x};
  Vector betas(2);
  betas << 2.4, 0.4;
  const int teachers = 4000;
  Matrix acc = Matrix::Zero(5, 5);
  for (int t = 0; t < teachers; ++t) {
    TeacherConfig cfg{64, 1.5, betas, static_cast<std::uint64_t>(t + 1)};
    const NetworkParams teacher =
        sample_teacher(cfg, Architecture::kResidualMlp, kinds, x.cols());
    const Vector y = teacher_labels(teacher, inputs).output;
    acc += y * y.transpose();
  }
  acc /= teachers;
  const BranchKernels k = mlp_branch_kernels(x, kinds, 1.5);
  const Matrix analytic = analytic_label_covariance(k.kernels, betas);
  CHECK((acc - analytic).norm() / analytic.norm() < 0.05);
}

TEST_CASE("prior samples have the requested variance") {
  const std::vector<BranchKind> kinds{BranchKind::kGraphConvolution};
  const NetworkParams a = sample_prior(Architecture::kGraphConvolution, kinds, 200, 100, 0.5, 4);
  const NetworkParams b = sample_prior(Architecture::kGraphConvolution, kinds, 200, 100, 0.5, 4);
  CHECK(a.hidden[0] == b.hidden[0]);
  CHECK(a.hidden[0].squaredNorm() / a.hidden[0].size() == doctest::Approx(0.5).epsilon(0.02));
  const NetworkParams c = sample_prior(Architecture::kGraphConvolution, kinds, 200, 100, 0.5, 4, 1);
  CHECK(c.hidden[0] != a.hidden[0]);
}

TEST_CASE("network files round trip exactly") {
  const std::vector<BranchKind> kinds{BranchKind::kLinear, BranchKind::kRelu};
  const NetworkParams net = sample_prior(Architecture::kResidualMlp, kinds, 4, 3, 1.0, 5);
  const auto path = std::filesystem::temp_directory_path() / "bpbnn_test_network.txt";
  write_network(net, path);
  const NetworkParams back = read_network(path);
  CHECK(back.architecture == net.architecture);
  CHECK(back.kinds == net.kinds);
  for (int l = 0; l < 2; ++l) {
    CHECK(back.hidden[l] == net.hidden[l]);
    CHECK(back.readout[l] == net.readout[l]);
  }
}

TEST_CASE("invalid networks are rejected") {
  const std::vector<BranchKind> kinds{BranchKind::kLinear};
  NetworkParams net = sample_prior(Architecture::kResidualMlp, kinds, 4, 3, 1.0, 5);
  const Matrix wrong = Matrix::Zero(2, 5);
  const std::vector<Matrix> inputs{wrong};
  CHECK_THROWS_AS(forward(net, inputs), std::invalid_argument);
  net.readout[0].resize(2);
  CHECK_THROWS_AS(net.validate(), std::invalid_argument);
  TeacherConfig bad{16, 1.0, Vector::Constant(1, -1.0), 1};
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}
