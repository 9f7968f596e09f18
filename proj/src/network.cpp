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


#include "bpbnn/network.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "bpbnn/rng.hpp"

namespace bpbnn {

void NetworkParams::validate() const {
  if (hidden.empty()) throw std::invalid_argument("network: no branches");
  if (hidden.size() != readout.size() || hidden.size() != kinds.size())
    throw std::invalid_argument("network: hidden, readout and kinds differ in length");
  for (std::size_t l = 0; l < hidden.size(); ++l) {
    if (hidden[l].rows() != input_dim() || hidden[l].cols() != width())
      throw std::invalid_argument("network: inconsistent hidden weight shapes");
    if (readout[l].size() != width())
      throw std::invalid_argument("network: readout length differs from width");
    if (!hidden[l].allFinite() || !readout[l].allFinite())
      throw std::invalid_argument("network: non-finite parameters");
  }
}

ForwardResult forward(const NetworkParams& params,
                      std::span<const Matrix> inputs) {
  params.validate();
  if (inputs.size() != params.hidden.size())
    throw std::invalid_argument("forward: one input matrix per branch");
  const double n0 = static_cast<double>(params.input_dim());
  const double scale =
      1.0 / std::sqrt(static_cast<double>(params.num_branches()) *
                      static_cast<double>(params.width()));
  ForwardResult out;
  for (std::size_t l = 0; l < inputs.size(); ++l) {
    const Matrix& x = inputs[l];
    if (x.cols() != params.input_dim())
      throw std::invalid_argument("forward: input has " +
                                  std::to_string(x.cols()) + " columns, expected " +
                                  std::to_string(params.input_dim()));
    if (l > 0 && x.rows() != inputs[0].rows())
      throw std::invalid_argument("forward: branch inputs differ in row count");
    Matrix pre = (x * params.hidden[l]) / std::sqrt(n0);
    if (params.kinds[l] == BranchKind::kRelu) pre = pre.cwiseMax(0.0);
    out.branches.push_back(scale * (pre * params.readout[l]));
  }
  out.output = out.branches.front();
  for (std::size_t l = 1; l < out.branches.size(); ++l)
    out.output += out.branches[l];
  return out;
}

void TeacherConfig::validate() const {
  if (width < 1) throw std::invalid_argument("teacher: width must be >= 1");
  if (!(hidden_variance > 0.0))
    throw std::invalid_argument("teacher: hidden variance must be > 0");
  if (readout_variances.size() == 0)
    throw std::invalid_argument("teacher: no readout variances");
  for (Index l = 0; l < readout_variances.size(); ++l)
    if (!(readout_variances(l) > 0.0))
      throw std::invalid_argument("teacher: readout variances must be > 0");
}

NetworkParams sample_teacher(const TeacherConfig& cfg, Architecture arch,
                             std::span<const BranchKind> kinds,
                             Index input_dim) {
  cfg.validate();
  if (static_cast<Index>(kinds.size()) != cfg.readout_variances.size())
    throw std::invalid_argument("teacher: one readout variance per branch");
  CounterRng rng(cfg.seed);
  NetworkParams p;
  p.architecture = arch;
  p.kinds.assign(kinds.begin(), kinds.end());
  for (std::size_t l = 0; l < kinds.size(); ++l) {
    p.hidden.push_back(rng.normal_matrix(input_dim, cfg.width, cfg.hidden_variance));
    p.readout.push_back(
        rng.normal_vector(cfg.width, cfg.readout_variances(static_cast<Index>(l))));
  }
  return p;
}

NetworkParams sample_prior(Architecture arch, std::span<const BranchKind> kinds,
                           Index input_dim, Index width, double prior_variance,
                           std::uint64_t seed, std::uint64_t stream) {
  CounterRng rng(seed, stream);
  NetworkParams p;
  p.architecture = arch;
  p.kinds.assign(kinds.begin(), kinds.end());
  for (std::size_t l = 0; l < kinds.size(); ++l) {
    p.hidden.push_back(rng.normal_matrix(input_dim, width, prior_variance));
    p.readout.push_back(rng.normal_vector(width, prior_variance));
  }
  return p;
}

ForwardResult teacher_labels(const NetworkParams& teacher,
                             std::span<const Matrix> inputs) {
  return forward(teacher, inputs);
}

Matrix analytic_label_covariance(std::span<const Matrix> teacher_kernels,
                                 const Vector& readout_variances) {
  if (teacher_kernels.empty())
    throw std::invalid_argument("analytic_label_covariance: no kernels");
  if (static_cast<Index>(teacher_kernels.size()) != readout_variances.size())
    throw std::invalid_argument(
        "analytic_label_covariance: one readout variance per kernel");
  const double inv_l = 1.0 / static_cast<double>(teacher_kernels.size());
  Matrix c = Matrix::Zero(teacher_kernels[0].rows(), teacher_kernels[0].cols());
  for (std::size_t l = 0; l < teacher_kernels.size(); ++l)
    c += (readout_variances(static_cast<Index>(l)) * inv_l) * teacher_kernels[l];
  return c;
}

namespace {

std::string architecture_name(Architecture a) {
  return a == Architecture::kGraphConvolution ? "gcn" : "residual-mlp";
}

}  // namespace

void write_network(const NetworkParams& params,
                   const std::filesystem::path& path) {
  params.validate();
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.precision(17);
  out << "# architecture " << architecture_name(params.architecture) << '\n';
  out << "# branches " << params.num_branches() << " input_dim "
      << params.input_dim() << " width " << params.width() << '\n';
  for (int l = 0; l < params.num_branches(); ++l) {
    const auto li = static_cast<std::size_t>(l);
    out << "# branch " << l << ' ' << to_string(params.kinds[li]) << '\n';
    const Matrix& w = params.hidden[li];
    for (Index i = 0; i < w.rows(); ++i) {
      for (Index j = 0; j < w.cols(); ++j) out << (j ? " " : "") << w(i, j);
      out << '\n';
    }
    for (Index j = 0; j < params.width(); ++j)
      out << (j ? " " : "") << params.readout[li](j);
    out << '\n';
  }
}

NetworkParams read_network(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  NetworkParams p;
  std::string line, word, arch;
  int branches = 0;
  Index input_dim = 0, width = 0;
  auto expect_header = [&](const std::string& what) {
    if (!std::getline(in, line) || line.rfind("# ", 0) != 0)
      throw std::runtime_error(path.string() + ": missing '" + what + "' header");
    return std::istringstream(line.substr(2));
  };
  {
    auto is = expect_header("architecture");
    is >> word >> arch;
    p.architecture = arch == "gcn" ? Architecture::kGraphConvolution
                                   : Architecture::kResidualMlp;
  }
  {
    auto is = expect_header("branches");
    is >> word >> branches >> word >> input_dim >> word >> width;
    if (!is || branches < 1 || input_dim < 1 || width < 1)
      throw std::runtime_error(path.string() + ": malformed shape header");
  }
  auto read_row = [&](Index count) {
    if (!std::getline(in, line))
      throw std::runtime_error(path.string() + ": unexpected end of file");
    std::istringstream is(line);
    Vector row(count);
    for (Index j = 0; j < count; ++j)
      if (!(is >> row(j)))
        throw std::runtime_error(path.string() + ": short or non-numeric row");
    return row;
  };
  for (int l = 0; l < branches; ++l) {
    auto is = expect_header("branch");
    int index = 0;
    std::string kind;
    is >> word >> index >> kind;
    p.kinds.push_back(branch_kind_from_string(kind));
    Matrix w(input_dim, width);
    for (Index i = 0; i < input_dim; ++i) w.row(i) = read_row(width).transpose();
    p.hidden.push_back(std::move(w));
    p.readout.push_back(read_row(width));
  }
  return p;
}

}  // namespace bpbnn
