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


#ifndef BPBNN_EXPERIMENTS_HPP_
#define BPBNN_EXPERIMENTS_HPP_

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "bpbnn/config.hpp"
#include "bpbnn/hmc.hpp"
#include "bpbnn/predictor.hpp"
#include "bpbnn/saddle.hpp"

namespace bpbnn {

inline constexpr const char* kVersion = "0.1.0";

enum ExitCode : int {
  kExitOk = 0,
  kExitConfigError = 1,
  kExitComputationFailure = 2,
  kExitHmcFailure = 3,
};

struct HmcSummary {
  bool ok = false;
  std::string error;
  std::vector<MeanEstimate> norms;  // |a_l|^2 / N
  std::optional<PredictorEstimate> predictor;
  double acceptance_rate = 0.0;  // mean over chains
  int divergences = 0;           // total over chains
  double median_energy_error = 0.0;
  double step_size = 0.0;
  double min_ess = 0.0;
  std::vector<HmcChain> chains;
};

struct SweepPoint {
  Index width = 0;
  double sigma_w = 0.0;
  double temperature = 0.0;
  bool theory_ok = false;
  std::string error;
  OrderParams order;
  NormReport norms;
  std::optional<GeneralizationReport> generalization;
  std::optional<double> train_mse;  // mean squared training error of <f>
  std::optional<HmcSummary> hmc;
  std::vector<std::string> warnings;
  double theory_seconds = 0.0;
  double hmc_seconds = 0.0;
};

// Data shared by every sweep point.
struct ExperimentData {
  Architecture architecture = Architecture::kGraphConvolution;
  std::vector<Matrix> branch_inputs;  // per branch, all nodes x N0
  BranchKernels unit_kernels;         // prior variance 1, all nodes
  IndexList train_idx;
  IndexList test_idx;
  Vector labels;                      // all nodes; empty in ideal mode
  std::vector<Vector> branch_targets; // all nodes; student-teacher only
  std::optional<Matrix> label_second_moment;  // ideal mode, P x P
  Index input_dim = 0;
};

struct SweepResult {
  ExperimentConfig config;
  std::vector<SweepPoint> points;  // sigma_w major, widths minor
  Vector teacher_norms;            // beta_l^2 sigma_t^2; empty without teacher
  Index num_train = 0;
  Index num_test = 0;
  double setup_seconds = 0.0;
  double total_seconds = 0.0;

  int exit_code() const;
};

// Builds the dataset, kernels and (if configured) teacher labels.
ExperimentData prepare_data(const ExperimentConfig& cfg);

// Theory (and HMC when enabled) for a single sweep point.
SweepPoint run_point(const ExperimentConfig& cfg, const ExperimentData& data,
                     Index width, double sigma_w, std::uint64_t point_index,
                     int hmc_threads);

// Runs every sweep point. Points run in a pool of cfg.threads workers;
// with HMC enabled the chains get the threads instead.
SweepResult run(const ExperimentConfig& cfg, std::ostream* log = nullptr);

// Columns: scenario,N,sigma_w,branch,quantity,source,value,stderr.
void write_csv(const SweepResult& result, std::ostream& out);
std::string metadata_json(const SweepResult& result);
std::string default_plot_spec(const SweepResult& result);
// results.csv, metadata.json, plot_spec.json, hmc_chains.csv and (with
// raw_samples) hmc_samples_*.csv under cfg.output_dir.
void write_outputs(const SweepResult& result);

// BPBNN_OUTPUT_DIR and BPBNN_THREADS override the config.
void apply_environment(ExperimentConfig& cfg);

// Shortest round-trip decimal form.
std::string format_double(double v);

}  // namespace bpbnn

#endif  // BPBNN_EXPERIMENTS_HPP_
