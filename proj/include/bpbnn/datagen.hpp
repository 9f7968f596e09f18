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


#ifndef BPBNN_DATAGEN_HPP_
#define BPBNN_DATAGEN_HPP_

#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "bpbnn/types.hpp"

namespace bpbnn {

// Two-block contextual stochastic block model. Within-block edges appear with
// probability c_in / n and cross-block edges with c_out / n, where
// c_in = d + sqrt(d) * lambda and c_out = d - sqrt(d) * lambda.
struct CsbmConfig {
  Index n = 2600;
  Index feature_dim = 950;
  double avg_degree = 20.0;
  double homophily = 4.0;
  double signal_strength = 4.0;
  std::uint64_t seed = 0;

  double c_in() const;
  double c_out() const;
  // Throws std::invalid_argument when the configuration is unusable.
  void validate() const;
};

using Edge = std::pair<Index, Index>;

struct Graph {
  Matrix adjacency_norm;  // n x n; empty for non-graph (MLP) data
  Matrix raw_features;    // n x N0
  Vector labels;          // length n
  std::vector<Edge> edges;  // undirected, i < j
  IndexList train_idx;
  IndexList test_idx;

  Index num_nodes() const { return raw_features.rows(); }
  Index feature_dim() const { return raw_features.cols(); }
  Index num_train() const { return static_cast<Index>(train_idx.size()); }
  bool has_graph() const { return adjacency_norm.size() > 0; }
};

// D^{-1/2} (A + I) D^{-1/2} with D the degree matrix of A + I.
Matrix normalize_adjacency(const Matrix& raw_adjacency);

Matrix adjacency_from_edges(Index n, const std::vector<Edge>& edges);

// Nodes [0, n/2) form block +1 and [n/2, n) block -1. Deterministic in
// cfg.seed. The returned graph has no train/test split.
Graph generate_csbm(const CsbmConfig& cfg);

// Centers each column and scales it to unit population variance. Columns
// that are constant are set to zero.
Matrix standardize_columns(const Matrix& x);

// X_0 = standardize(X), X_l = standardize(A^l X) for l = 1 .. L-1.
std::vector<Matrix> branch_features(const Graph& graph, int num_branches);

struct NodeSplit {
  IndexList train;
  IndexList test;
};

// Uniform random split with round(train_ratio * n) training nodes. Both
// index lists are returned sorted.
NodeSplit split_nodes(Index n, double train_ratio, std::uint64_t seed);

// Text dataset: one record per line, whitespace or comma separated, '#'
// starts a comment.
//   edges    : two integer node ids per line (0-based)
//   features : n rows of N0 numbers
//   labels   : n rows with one number each
struct DatasetPaths {
  std::filesystem::path edges;
  std::filesystem::path features;
  std::filesystem::path labels;
};

Graph load_dataset(const DatasetPaths& paths);

// Writes edges, features and labels so that load_dataset reproduces the
// matrices bit for bit.
void write_dataset(const Graph& graph, const DatasetPaths& paths);

// Parses a numeric table; every row must have the same column count.
Matrix read_matrix(const std::filesystem::path& path);
void write_matrix(const Matrix& m, const std::filesystem::path& path,
                  char separator = ' ');

}  // namespace bpbnn

#endif  // BPBNN_DATAGEN_HPP_
