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


#ifndef BPBNN_CONFIG_HPP_
#define BPBNN_CONFIG_HPP_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "bpbnn/datagen.hpp"
#include "bpbnn/hmc.hpp"
#include "bpbnn/kernels.hpp"
#include "bpbnn/saddle.hpp"

namespace bpbnn {

// Raised for schema violations; the message starts with the field path.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& field, const std::string& message)
      : std::runtime_error(field + ": " + message), field_(field) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

enum class Scenario { kCsbmStudentTeacher, kResidualMlpStudentTeacher, kExternalDataset };

std::string to_string(Scenario s);

enum class TeacherMode { kSampled, kIdeal };

struct MlpDataConfig {
  Index input_dim = 1024;
  Index train_samples = 1280;
  Index test_samples = 320;
};

struct TeacherSettings {
  TeacherMode mode = TeacherMode::kSampled;
  Index width = 1024;
  double hidden_variance = 1.0;
  std::vector<double> readout_variances;
};

struct HmcSettings {
  bool enabled = false;
  HmcConfig config;
  Index max_width = 1024;
  Index max_train = 2000;
  bool raw_samples = false;  // dump per-sample branch norms
};

struct Seeds {
  std::uint64_t data = 1;
  std::uint64_t split = 2;
  std::uint64_t teacher = 3;
  std::uint64_t hmc = 4;
};

struct ExperimentConfig {
  std::string name = "experiment";
  Scenario scenario = Scenario::kCsbmStudentTeacher;
  CsbmConfig csbm;
  MlpDataConfig mlp;
  DatasetPaths files;
  double train_ratio = 0.65;
  std::vector<BranchKind> branch_kinds;
  std::vector<Index> widths;
  std::vector<double> sigma_w;
  std::optional<TeacherSettings> teacher;
  double temperature_multiple = 1e-3;  // T = multiple * sigma_w^2
  SolveOptions solver;
  HmcSettings hmc;
  Seeds seeds;
  std::filesystem::path output_dir = "out";
  int threads = 1;

  int num_branches() const { return static_cast<int>(branch_kinds.size()); }
};

// Parses and validates a JSON document. Relative file paths resolve against
// `base_dir`.
ExperimentConfig parse_config(const std::string& json_text,
                              const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path);
void validate(const ExperimentConfig& cfg);

// Serializes back to JSON (used by `presets show` and the run metadata).
std::string to_json(const ExperimentConfig& cfg);

struct PresetInfo {
  std::string name;
  std::string description;
};

std::vector<PresetInfo> list_presets();
// Throws ConfigError for unknown names.
ExperimentConfig preset(const std::string& name);

}  // namespace bpbnn

#endif  // BPBNN_CONFIG_HPP_
