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


#ifndef BPBNN_RENDER_HPP_
#define BPBNN_RENDER_HPP_

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace bpbnn {

struct ResultRow {
  std::string scenario;
  long long width = 0;
  double sigma_w = 0.0;
  std::string branch;  // "all" or a branch index
  std::string quantity;
  std::string source;  // "theory" or "hmc"
  double value = 0.0;
  std::optional<double> std_error;
};

// Throws std::runtime_error naming missing columns or the bad line.
std::vector<ResultRow> read_results_csv(const std::filesystem::path& path);
std::vector<ResultRow> parse_results_csv(const std::string& text);

struct PlotSpec {
  std::string title;
  std::vector<double> teacher_norms;  // beta_l^2 sigma_t^2 reference lines
  bool normalized = true;             // plot bias/variance over mean(y^2)
  std::string prefix = "sweep";
};

PlotSpec parse_plot_spec(const std::string& json_text);

struct RenderedPlot {
  std::string name;  // file name
  std::string svg;
};

// Norm panels (one per sigma_w, u_l sigma_w^2 vs N on a log axis) and
// bias/variance panels (one line per sigma_w). Theory is drawn as lines, HMC
// as points with one-standard-error bars, the GP value sigma_w^4 dashed and
// the teacher norms dotted.
std::vector<RenderedPlot> render_plots(const std::vector<ResultRow>& rows,
                                       const PlotSpec& spec);

// Writes the plots next to `out_dir` (default: the CSV's directory) and
// returns their paths.
std::vector<std::filesystem::path> render(
    const std::filesystem::path& csv, const std::filesystem::path& spec,
    std::optional<std::filesystem::path> out_dir = std::nullopt);

}  // namespace bpbnn

#endif  // BPBNN_RENDER_HPP_
