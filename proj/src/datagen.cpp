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


#include "bpbnn/datagen.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>

#include "bpbnn/rng.hpp"

namespace bpbnn {

double CsbmConfig::c_in() const {
  return avg_degree + std::sqrt(avg_degree) * homophily;
}

double CsbmConfig::c_out() const {
  return avg_degree - std::sqrt(avg_degree) * homophily;
}

void CsbmConfig::validate() const {
  if (n < 2 || n % 2 != 0)
    throw std::invalid_argument("csbm: n must be even and >= 2, got " +
                                std::to_string(n));
  if (feature_dim < 1)
    throw std::invalid_argument("csbm: feature_dim must be >= 1");
  if (!(avg_degree > 0.0))
    throw std::invalid_argument("csbm: avg_degree must be positive");
  const double nd = static_cast<double>(n);
  if (c_in() < 0.0 || c_in() > nd || c_out() < 0.0 || c_out() > nd) {
    std::ostringstream os;
    os << "csbm: homophily " << homophily << " with avg_degree " << avg_degree
       << " gives c_in=" << c_in() << ", c_out=" << c_out()
       << " outside [0, n=" << n << "]";
    throw std::invalid_argument(os.str());
  }
  if (!std::isfinite(signal_strength) || signal_strength < 0.0)
    throw std::invalid_argument("csbm: signal_strength must be >= 0");
}

Matrix normalize_adjacency(const Matrix& raw_adjacency) {
  if (raw_adjacency.rows() != raw_adjacency.cols())
    throw std::invalid_argument("normalize_adjacency: matrix is not square");
  if (raw_adjacency != raw_adjacency.transpose())
    throw std::invalid_argument("normalize_adjacency: matrix is not symmetric");
  Matrix a = raw_adjacency;
  a.diagonal().array() += 1.0;
  const Vector inv_sqrt_deg = a.rowwise().sum().array().rsqrt();
  return inv_sqrt_deg.asDiagonal() * a * inv_sqrt_deg.asDiagonal();
}

Matrix adjacency_from_edges(Index n, const std::vector<Edge>& edges) {
  Matrix a = Matrix::Zero(n, n);
  for (const auto& [i, j] : edges) {
    if (i < 0 || j < 0 || i >= n || j >= n)
      throw std::out_of_range("adjacency_from_edges: node id out of range");
    if (i == j) continue;
    a(i, j) = 1.0;
    a(j, i) = 1.0;
  }
  return a;
}

Graph generate_csbm(const CsbmConfig& cfg) {
  cfg.validate();
  CounterRng rng(cfg.seed);
  const Index n = cfg.n;
  const Index half = n / 2;
  const double p_in = cfg.c_in() / static_cast<double>(n);
  const double p_out = cfg.c_out() / static_cast<double>(n);

  Graph g;
  g.labels.resize(n);
  for (Index i = 0; i < n; ++i) g.labels(i) = i < half ? 1.0 : -1.0;

  for (Index i = 0; i < n; ++i) {
    for (Index j = i + 1; j < n; ++j) {
      const bool same = (i < half) == (j < half);
      if (rng.uniform() < (same ? p_in : p_out)) g.edges.emplace_back(i, j);
    }
  }
  g.adjacency_norm = normalize_adjacency(adjacency_from_edges(n, g.edges));

  const Vector latent = rng.normal_vector(cfg.feature_dim);
  const double scale = std::sqrt(cfg.signal_strength / static_cast<double>(n));
  g.raw_features.resize(n, cfg.feature_dim);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < cfg.feature_dim; ++j)
      g.raw_features(i, j) = scale * g.labels(i) * latent(j) + rng.normal();
  }
  return g;
}

Matrix standardize_columns(const Matrix& x) {
  const double rows = static_cast<double>(x.rows());
  Matrix out(x.rows(), x.cols());
  for (Index j = 0; j < x.cols(); ++j) {
    const double mean = x.col(j).mean();
    Vector centered = x.col(j).array() - mean;
    const double sd = std::sqrt(centered.squaredNorm() / rows);
    if (sd <= 1e-12 * std::max(1.0, std::abs(mean))) {
      out.col(j).setZero();
    } else {
      out.col(j) = centered / sd;
    }
  }
  return out;
}

std::vector<Matrix> branch_features(const Graph& graph, int num_branches) {
  if (num_branches < 1)
    throw std::invalid_argument("branch_features: need at least one branch");
  if (num_branches > 1 && !graph.has_graph())
    throw std::invalid_argument(
        "branch_features: convolution branches need an adjacency matrix");
  if (graph.has_graph() && graph.adjacency_norm.rows() != graph.num_nodes())
    throw std::invalid_argument(
        "branch_features: adjacency and feature row counts differ");
  std::vector<Matrix> out;
  out.reserve(num_branches);
  Matrix propagated = graph.raw_features;
  out.push_back(standardize_columns(propagated));
  for (int l = 1; l < num_branches; ++l) {
    propagated = graph.adjacency_norm * propagated;
    out.push_back(standardize_columns(propagated));
  }
  return out;
}

NodeSplit split_nodes(Index n, double train_ratio, std::uint64_t seed) {
  if (!(train_ratio > 0.0 && train_ratio < 1.0))
    throw std::invalid_argument("split_nodes: train_ratio must be in (0, 1)");
  const auto num_train = static_cast<Index>(
      std::llround(train_ratio * static_cast<double>(n)));
  if (num_train <= 0 || num_train >= n)
    throw std::invalid_argument("split_nodes: ratio " +
                                std::to_string(train_ratio) + " with n=" +
                                std::to_string(n) + " leaves one side empty");
  IndexList perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Index{0});
  CounterRng rng(seed);
  // Fisher-Yates with our own generator keeps the split identical across
  // standard library implementations.
  for (Index i = n - 1; i > 0; --i) {
    const auto j = static_cast<Index>(rng() % static_cast<std::uint64_t>(i + 1));
    std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
  }
  NodeSplit split;
  split.train.assign(perm.begin(), perm.begin() + num_train);
  split.test.assign(perm.begin() + num_train, perm.end());
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.test.begin(), split.test.end());
  return split;
}

namespace {

std::vector<std::string_view> tokenize(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  auto is_sep = [](char c) {
    return c == ' ' || c == '\t' || c == ',' || c == '\r';
  };
  while (pos < line.size()) {
    while (pos < line.size() && is_sep(line[pos])) ++pos;
    std::size_t end = pos;
    while (end < line.size() && !is_sep(line[end])) ++end;
    if (end > pos) out.push_back(line.substr(pos, end - pos));
    pos = end;
  }
  return out;
}

std::string where(const std::filesystem::path& path, std::size_t line) {
  return path.string() + ":" + std::to_string(line);
}

std::vector<std::vector<double>> read_rows(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view(line);
    if (auto hash = view.find('#'); hash != std::string_view::npos)
      view = view.substr(0, hash);
    const auto tokens = tokenize(view);
    if (tokens.empty()) continue;
    std::vector<double> row;
    row.reserve(tokens.size());
    for (auto tok : tokens) {
      double value = 0.0;
      const auto [ptr, ec] =
          std::from_chars(tok.data(), tok.data() + tok.size(), value);
      if (ec != std::errc() || ptr != tok.data() + tok.size() ||
          !std::isfinite(value))
        throw std::runtime_error(where(path, line_no) +
                                 ": non-numeric entry '" + std::string(tok) +
                                 "'");
      row.push_back(value);
    }
    if (!rows.empty() && row.size() != rows.front().size())
      throw std::runtime_error(where(path, line_no) + ": expected " +
                               std::to_string(rows.front().size()) +
                               " columns, found " + std::to_string(row.size()));
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string format_double(double v) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace

Matrix read_matrix(const std::filesystem::path& path) {
  const auto rows = read_rows(path);
  if (rows.empty()) return Matrix();
  Matrix m(static_cast<Index>(rows.size()),
           static_cast<Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      m(static_cast<Index>(i), static_cast<Index>(j)) = rows[i][j];
  return m;
}

void write_matrix(const Matrix& m, const std::filesystem::path& path,
                  char separator) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      if (j > 0) out << separator;
      out << format_double(m(i, j));
    }
    out << '\n';
  }
}

Graph load_dataset(const DatasetPaths& paths) {
  Graph g;
  g.raw_features = read_matrix(paths.features);
  const Index n = g.raw_features.rows();
  if (n == 0)
    throw std::runtime_error(paths.features.string() + ": no feature rows");

  const Matrix labels = read_matrix(paths.labels);
  if (labels.rows() != n)
    throw std::runtime_error(paths.labels.string() + ": expected " +
                             std::to_string(n) + " labels (one per feature row), found " +
                             std::to_string(labels.rows()));
  if (labels.cols() != 1)
    throw std::runtime_error(paths.labels.string() +
                             ": expected exactly one label per line");
  g.labels = labels.col(0);

  const auto edge_rows = read_rows(paths.edges);
  for (std::size_t k = 0; k < edge_rows.size(); ++k) {
    const auto& row = edge_rows[k];
    if (row.size() != 2)
      throw std::runtime_error(paths.edges.string() +
                               ": edge rows need exactly two node ids");
    for (double id : row) {
      if (id != std::floor(id) || id < 0 || id >= static_cast<double>(n))
        throw std::runtime_error(
            paths.edges.string() + ": edge " + std::to_string(k + 1) +
            " references node " + format_double(id) + " outside [0, " +
            std::to_string(n) + ")");
    }
    auto i = static_cast<Index>(row[0]);
    auto j = static_cast<Index>(row[1]);
    if (i == j) continue;
    if (i > j) std::swap(i, j);
    g.edges.emplace_back(i, j);
  }
  std::sort(g.edges.begin(), g.edges.end());
  g.edges.erase(std::unique(g.edges.begin(), g.edges.end()), g.edges.end());
  g.adjacency_norm = normalize_adjacency(adjacency_from_edges(n, g.edges));
  return g;
}

void write_dataset(const Graph& graph, const DatasetPaths& paths) {
  {
    std::ofstream out(paths.edges);
    if (!out) throw std::runtime_error("cannot write " + paths.edges.string());
    for (const auto& [i, j] : graph.edges) out << i << ' ' << j << '\n';
  }
  write_matrix(graph.raw_features, paths.features);
  write_matrix(graph.labels, paths.labels);
}

}  // namespace bpbnn
