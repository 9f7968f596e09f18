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


#include <cstdlib>
#include <string>

#include "bpbnn/config.hpp"
#include "bpbnn/experiments.hpp"
#include "doctest.h"

using namespace bpbnn;

namespace {

const char* kMinimal = R"({
  "scenario": "csbm-student-teacher",
  "data": {"csbm": {"n": 100, "feature_dim": 20}},
  "architecture": {"branch_kinds": ["gcn", "gcn"]},
  "sweep": {"widths": [4, 16], "sigma_w": [1.0]},
  "teacher": {"readout_variances": [0.4, 2.0]}
})";

std::string field_of(const std::string& text) {
  try {
    parse_config(text);
  } catch (const ConfigError& e) {
    return e.field();
  }
  return "";
}

std::string replace(std::string s, const std::string& from, const std::string& to) {
  const auto pos = s.find(from);
  REQUIRE(pos != std::string::npos);
  return s.replace(pos, from.size(), to);
}

}  // namespace

TEST_CASE("minimal config parses with defaults") {
  const ExperimentConfig cfg = parse_config(kMinimal);
  CHECK(cfg.scenario == Scenario::kCsbmStudentTeacher);
  CHECK(cfg.csbm.n == 100);
  CHECK(cfg.csbm.avg_degree == 20.0);
  CHECK(cfg.widths == std::vector<Index>{4, 16});
  CHECK(cfg.teacher->mode == TeacherMode::kSampled);
  CHECK(cfg.train_ratio == 0.65);
  CHECK_FALSE(cfg.hmc.enabled);
}

TEST_CASE("schema violations name the field") {
  CHECK(field_of(replace(kMinimal, "[4, 16]", "[]")) == "sweep.widths");
  CHECK(field_of(replace(kMinimal, "[1.0]", "[]")) == "sweep.sigma_w");
  CHECK(field_of(replace(kMinimal, "[4, 16]", "[4, \"x\"]")) == "sweep.widths[1]");
  CHECK(field_of(replace(kMinimal, "\"n\": 100", "\"n\": 100, \"colour\": 1")) ==
        "data.csbm.colour");
  CHECK(field_of(replace(kMinimal, "[0.4, 2.0]", "[0.4]")) == "teacher.readout_variances");
  CHECK(field_of(replace(kMinimal, "\"gcn\", \"gcn\"", "\"gcn\", \"relu\"")) ==
        "architecture.branch_kinds[1]");
  CHECK(field_of(replace(kMinimal, "\"gcn\", \"gcn\"", "\"gcn\", \"conv\"")) ==
        "architecture.branch_kinds[1]");
  CHECK(field_of(replace(kMinimal, "csbm-student-teacher", "mnist")) == "scenario");
  CHECK(field_of("{ not json") == "<root>");
  CHECK(field_of(replace(kMinimal, "\"sweep\"", "\"hmc\": {\"enabled\": true, \"leapfrog_steps\": 0}, \"sweep\"")) == "hmc");
}

TEST_CASE("ideal teacher cannot be combined with HMC") {
  std::string text = replace(kMinimal, "\"readout_variances\"", "\"mode\": \"ideal\", \"readout_variances\"");
  CHECK_NOTHROW(parse_config(text));
  text = replace(text, "\"sweep\"", "\"hmc\": {\"enabled\": true}, \"sweep\"");
  CHECK(field_of(text) == "hmc.enabled");
}

TEST_CASE("to_json round trips") {
  const ExperimentConfig cfg = parse_config(kMinimal);
  const std::string once = to_json(cfg);
  CHECK(to_json(parse_config(once)) == once);
}

TEST_CASE("every preset validates and round trips") {
  const auto presets = list_presets();
  CHECK(presets.size() == 8);
  for (const auto& p : presets) {
    CAPTURE(p.name);
    const ExperimentConfig cfg = preset(p.name);
    CHECK(cfg.name == p.name);
    CHECK(to_json(parse_config(to_json(cfg))) == to_json(cfg));
  }
  const ExperimentConfig fig2 = preset("fig2-csbm");
  CHECK(fig2.csbm.n == 520);
  CHECK(fig2.csbm.feature_dim == 190);
  CHECK(fig2.widths.size() * fig2.sigma_w.size() == 20);
  const ExperimentConfig mlp = preset("fig9-10-full");
  CHECK(mlp.mlp.input_dim == 1024);
  CHECK(mlp.teacher->readout_variances == std::vector<double>{2.4, 0.4});
  CHECK_THROWS_AS(preset("fig7"), ConfigError);
}

TEST_CASE("environment overrides") {
  ExperimentConfig cfg = parse_config(kMinimal);
  setenv("BPBNN_OUTPUT_DIR", "/tmp/elsewhere", 1);
  setenv("BPBNN_THREADS", "3", 1);
  apply_environment(cfg);
  CHECK(cfg.output_dir == "/tmp/elsewhere");
  CHECK(cfg.threads == 3);
  setenv("BPBNN_THREADS", "zero", 1);
  CHECK_THROWS_AS(apply_environment(cfg), ConfigError);
  unsetenv("BPBNN_OUTPUT_DIR");
  unsetenv("BPBNN_THREADS");
}
