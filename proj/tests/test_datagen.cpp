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
#include <fstream>
#include <set>

#include "bpbnn/datagen.hpp"
#include "doctest.h"

using namespace bpbnn;

namespace {

std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("bpbnn_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("csbm connection probabilities") {
  CsbmConfig cfg;
  cfg.avg_degree = 20.0;
  cfg.homophily = 4.0;
  CHECK(cfg.c_in() == doctest::Approx(20.0 + std::sqrt(20.0) * 4.0));
  CHECK(cfg.c_out() == doctest::Approx(20.0 - std::sqrt(20.0) * 4.0));
  cfg.homophily = 10.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  CsbmConfig odd;
  odd.n = 11;
  CHECK_THROWS_AS(odd.validate(), std::invalid_argument);
}

TEST_CASE("csbm edge counts follow the block probabilities") {
  CsbmConfig cfg;
  cfg.n = 400;
  cfg.feature_dim = 5;
  cfg.seed = 11;
  const Graph g = generate_csbm(cfg);
  const double half = cfg.n / 2;
  double within = 0, across = 0;
  for (const auto& [i, j] : g.edges) {
    REQUIRE(i < j);
    ((i < half) == (j < half) ? within : across) += 1;
  }
  const double pairs_in = 2.0 * half * (half - 1) / 2.0;
  const double pairs_out = half * half;
  const double p_in = cfg.c_in() / cfg.n, p_out = cfg.c_out() / cfg.n;
  // Binomial means and standard deviations.
  CHECK(std::abs(within - pairs_in * p_in) < 5.0 * std::sqrt(pairs_in * p_in * (1 - p_in)));
  CHECK(std::abs(across - pairs_out * p_out) < 5.0 * std::sqrt(pairs_out * p_out * (1 - p_out)));
  for (Index i = 0; i < cfg.n; ++i) CHECK(g.labels(i) == (i < half ? 1.0 : -1.0));
  CHECK(g.raw_features.rows() == 400);
  CHECK(g.raw_features.cols() == 5);
}

TEST_CASE("csbm features carry the label signal") {
  CsbmConfig cfg;
  cfg.n = 2000;
  cfg.feature_dim = 50;
  cfg.signal_strength = 4.0;
  cfg.seed = 2;
  const Graph g = generate_csbm(cfg);
  // Block mean difference is 2 sqrt(s/n) u with |u|^2 ~ N0, plus noise of
  // variance 4 N0 / n.
  const Index half = cfg.n / 2;
  const Vector diff = g.raw_features.topRows(half).colwise().mean() -
                      g.raw_features.bottomRows(half).colwise().mean();
  const double expected = 4.0 * cfg.signal_strength / cfg.n * cfg.feature_dim +
                          4.0 * cfg.feature_dim / cfg.n;
  CHECK(diff.squaredNorm() == doctest::Approx(expected).epsilon(0.5));
}

TEST_CASE("csbm generation is deterministic in the seed") {
  CsbmConfig cfg;
  cfg.n = 60;
  cfg.feature_dim = 4;
  cfg.seed = 5;
  const Graph a = generate_csbm(cfg), b = generate_csbm(cfg);
  CHECK(a.edges == b.edges);
  CHECK(a.raw_features == b.raw_features);
  cfg.seed = 6;
  CHECK(generate_csbm(cfg).raw_features != a.raw_features);
}

TEST_CASE("normalized adjacency on a three node path") {
  Matrix a = Matrix::Zero(3, 3);
  a(0, 1) = a(1, 0) = a(1, 2) = a(2, 1) = 1;
  const Matrix an = normalize_adjacency(a);
  CHECK(an(0, 0) == doctest::Approx(0.5));
  CHECK(an(1, 1) == doctest::Approx(1.0 / 3.0));
  CHECK(an(0, 1) == doctest::Approx(1.0 / std::sqrt(6.0)));
  CHECK(an(0, 2) == 0.0);
  a(0, 2) = 1;
  CHECK_THROWS_AS(normalize_adjacency(a), std::invalid_argument);
  CHECK_THROWS_AS(normalize_adjacency(Matrix::Zero(2, 3)), std::invalid_argument);
}

TEST_CASE("standardize_columns") {
  Matrix x(4, 3);
  x << 1, 5, 2, 2, 5, 4, 3, 5, 6, 4, 5, 9;
  const Matrix s = standardize_columns(x);
  for (Index j : {0, 2}) {
    CHECK(s.col(j).mean() == doctest::Approx(0.0).epsilon(1e-14));
    CHECK(s.col(j).squaredNorm() / 4.0 == doctest::Approx(1.0));
  }
  CHECK(s.col(1).isZero());
  // Population standard deviation of 1..4 is sqrt(1.25).
  CHECK(s(0, 0) == doctest::Approx(-1.5 / std::sqrt(1.25)));
}

TEST_CASE("branch features on a six node path") {
  Graph g;
  std::vector<Edge> edges;
  for (Index i = 0; i < 5; ++i) edges.emplace_back(i, i + 1);
  g.adjacency_norm = normalize_adjacency(adjacency_from_edges(6, edges));
  g.raw_features.resize(6, 2);
  for (Index i = 0; i < 6; ++i) {
    g.raw_features(i, 0) = i + 1;
    g.raw_features(i, 1) = (i % 2) ? 1.0 : -1.0;
  }
  const auto feats = branch_features(g, 3);
  REQUIRE(feats.size() == 3);

  // Independent propagation with scalar loops.
  double deg[6];
  for (int i = 0; i < 6; ++i) deg[i] = (i == 0 || i == 5) ? 2.0 : 3.0;
  auto propagate = [&](const std::vector<std::vector<double>>& x) {
    std::vector<std::vector<double>> out(6, std::vector<double>(2, 0.0));
    for (int i = 0; i < 6; ++i)
      for (int j = std::max(0, i - 1); j <= std::min(5, i + 1); ++j)
        for (int c = 0; c < 2; ++c) out[i][c] += x[j][c] / std::sqrt(deg[i] * deg[j]);
    return out;
  };
  auto standardize = [](std::vector<std::vector<double>> x) {
    for (int c = 0; c < 2; ++c) {
      double m = 0, v = 0;
      for (int i = 0; i < 6; ++i) m += x[i][c] / 6.0;
      for (int i = 0; i < 6; ++i) v += (x[i][c] - m) * (x[i][c] - m) / 6.0;
      for (int i = 0; i < 6; ++i) x[i][c] = (x[i][c] - m) / std::sqrt(v);
    }
    return x;
  };
  std::vector<std::vector<double>> x(6, std::vector<double>(2));
  for (int i = 0; i < 6; ++i) x[i] = {static_cast<double>(i + 1), (i % 2) ? 1.0 : -1.0};
  std::vector<std::vector<std::vector<double>>> expected;
  auto cur = x;
  for (int l = 0; l < 3; ++l) {
    expected.push_back(standardize(cur));
    cur = propagate(cur);
  }
  for (int l = 0; l < 3; ++l)
    for (int i = 0; i < 6; ++i)
      for (int c = 0; c < 2; ++c) CHECK(feats[l](i, c) == doctest::Approx(expected[l][i][c]));
}

TEST_CASE("split_nodes") {
  const NodeSplit s = split_nodes(520, 0.65, 2);
  CHECK(s.train.size() == 338);
  CHECK(s.test.size() == 182);
  CHECK(std::is_sorted(s.train.begin(), s.train.end()));
  CHECK(std::is_sorted(s.test.begin(), s.test.end()));
  std::set<Index> all(s.train.begin(), s.train.end());
  all.insert(s.test.begin(), s.test.end());
  CHECK(all.size() == 520);
  const NodeSplit t = split_nodes(520, 0.65, 2);
  CHECK(t.train == s.train);
  CHECK(split_nodes(520, 0.65, 3).train != s.train);
  CHECK_THROWS_AS(split_nodes(10, 0.01, 1), std::invalid_argument);
  CHECK_THROWS_AS(split_nodes(10, 1.0, 1), std::invalid_argument);
}

TEST_CASE("dataset round trip is exact") {
  CsbmConfig cfg;
  cfg.n = 40;
  cfg.feature_dim = 6;
  cfg.seed = 8;
  const Graph g = generate_csbm(cfg);
  const auto dir = temp_dir("roundtrip");
  const DatasetPaths paths{dir / "edges.txt", dir / "features.txt", dir / "labels.txt"};
  write_dataset(g, paths);
  const Graph h = load_dataset(paths);
  CHECK(h.raw_features == g.raw_features);
  CHECK(h.labels == g.labels);
  CHECK(h.edges == g.edges);
  CHECK(h.adjacency_norm == g.adjacency_norm);

  Matrix m(2, 3);
  m << 0.1, -1e-300, 3.0, 1.0 / 3.0, 2e10, -0.0;
  write_matrix(m, dir / "m.csv", ',');
  CHECK(read_matrix(dir / "m.csv") == m);
}

TEST_CASE("dataset loader errors name file and line") {
  const auto dir = temp_dir("errors");
  {
    std::ofstream f(dir / "features.txt");
    f << "# header\n1 2\n3 x\n";
  }
  try {
    read_matrix(dir / "features.txt");
    FAIL("expected an error");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("features.txt:3") != std::string::npos);
  }
  {
    std::ofstream f(dir / "ragged.txt");
    f << "1 2\n3\n";
  }
  CHECK_THROWS_AS(read_matrix(dir / "ragged.txt"), std::runtime_error);
  CHECK_THROWS_AS(read_matrix(dir / "missing.txt"), std::runtime_error);
}

TEST_CASE("dataset loader drops self loops and duplicate edges") {
  const auto dir = temp_dir("dedup");
  {
    std::ofstream(dir / "edges.txt") << "0 1\n1 0\n2 2\n1,2\n";
    std::ofstream(dir / "features.txt") << "1\n2\n3\n";
    std::ofstream(dir / "labels.txt") << "1\n-1\n1\n";
  }
  const Graph g = load_dataset({dir / "edges.txt", dir / "features.txt", dir / "labels.txt"});
  CHECK(g.edges == std::vector<Edge>{{0, 1}, {1, 2}});
  {
    std::ofstream(dir / "edges.txt") << "0 7\n";
  }
  CHECK_THROWS(load_dataset({dir / "edges.txt", dir / "features.txt", dir / "labels.txt"}));
}
