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


#include "bpbnn/config.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"

namespace bpbnn {

using nlohmann::json;

std::string to_string(Scenario s) {
  switch (s) {
    case Scenario::kCsbmStudentTeacher:
      return "csbm-student-teacher";
    case Scenario::kResidualMlpStudentTeacher:
      return "residual-mlp-student-teacher";
    case Scenario::kExternalDataset:
      return "external-dataset";
  }
  return "unknown";
}

namespace {

Scenario scenario_from_string(const std::string& field, const std::string& s) {
  if (s == "csbm-student-teacher") return Scenario::kCsbmStudentTeacher;
  if (s == "residual-mlp-student-teacher") return Scenario::kResidualMlpStudentTeacher;
  if (s == "external-dataset") return Scenario::kExternalDataset;
  throw ConfigError(field, "unknown scenario '" + s +
                               "' (expected csbm-student-teacher, "
                               "residual-mlp-student-teacher or external-dataset)");
}

// Typed access to a JSON object that remembers the path it came from and
// rejects unknown keys.
class Reader {
 public:
  Reader(const json& node, std::string path) : node_(node), path_(std::move(path)) {
    if (!node_.is_object()) throw ConfigError(display(), "expected an object");
  }

  template <typename T>
  void get(const std::string& key, T& out) {
    seen_.push_back(key);
    auto it = node_.find(key);
    if (it == node_.end()) return;
    out = convert<T>(*it, field(key));
  }

  template <typename T>
  void require(const std::string& key, T& out) {
    if (!node_.contains(key)) throw ConfigError(field(key), "required field is missing");
    get(key, out);
  }

  bool has(const std::string& key) const { return node_.contains(key); }

  std::optional<Reader> child(const std::string& key) {
    seen_.push_back(key);
    auto it = node_.find(key);
    if (it == node_.end() || it->is_null()) return std::nullopt;
    return Reader(*it, field(key));
  }

  std::string field(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

  void finish() const {
    for (auto it = node_.begin(); it != node_.end(); ++it) {
      if (std::find(seen_.begin(), seen_.end(), it.key()) == seen_.end())
        throw ConfigError(field(it.key()), "unknown field");
    }
  }

 private:
  std::string display() const { return path_.empty() ? "<root>" : path_; }

  template <typename T>
  static T convert(const json& v, const std::string& f) {
    try {
      if constexpr (std::is_same_v<T, std::uint64_t> || std::is_same_v<T, Index> ||
                    std::is_same_v<T, int>) {
        if (!v.is_number_integer()) throw ConfigError(f, "expected an integer");
        if constexpr (std::is_same_v<T, std::uint64_t>) {
          if (v.is_number_unsigned()) return v.get<std::uint64_t>();
          if (v.get<std::int64_t>() < 0) throw ConfigError(f, "expected a non-negative integer");
        }
        return v.get<T>();
      } else if constexpr (std::is_same_v<T, double>) {
        if (!v.is_number()) throw ConfigError(f, "expected a number");
        return v.get<double>();
      } else if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) throw ConfigError(f, "expected true or false");
        return v.get<bool>();
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) throw ConfigError(f, "expected a string");
        return v.get<std::string>();
      } else {
        if (!v.is_array()) throw ConfigError(f, "expected a list");
        T out;
        for (std::size_t i = 0; i < v.size(); ++i)
          out.push_back(convert<typename T::value_type>(v[i], f + "[" + std::to_string(i) + "]"));
        return out;
      }
    } catch (const json::exception& e) {
      throw ConfigError(f, e.what());
    }
  }

  const json& node_;
  std::string path_;
  std::vector<std::string> seen_;
};

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  if (path.is_relative() && !base.empty()) return base / path;
  return path;
}

}  // namespace

ExperimentConfig parse_config(const std::string& json_text,
                              const std::filesystem::path& base_dir) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError("<root>", std::string("invalid JSON: ") + e.what());
  }
  ExperimentConfig cfg;
  Reader root(doc, "");
  root.get("name", cfg.name);
  std::string scenario;
  root.require("scenario", scenario);
  cfg.scenario = scenario_from_string("scenario", scenario);

  if (auto data = root.child("data")) {
    if (auto c = data->child("csbm")) {
      c->get("n", cfg.csbm.n);
      c->get("feature_dim", cfg.csbm.feature_dim);
      c->get("avg_degree", cfg.csbm.avg_degree);
      c->get("homophily", cfg.csbm.homophily);
      c->get("signal_strength", cfg.csbm.signal_strength);
      c->finish();
    }
    if (auto m = data->child("mlp")) {
      m->get("input_dim", cfg.mlp.input_dim);
      m->get("train_samples", cfg.mlp.train_samples);
      m->get("test_samples", cfg.mlp.test_samples);
      m->finish();
    }
    if (auto f = data->child("files")) {
      std::string edges, features, labels;
      f->require("edges", edges);
      f->require("features", features);
      f->require("labels", labels);
      cfg.files = {resolve(base_dir, edges), resolve(base_dir, features),
                   resolve(base_dir, labels)};
      f->finish();
    }
    data->get("train_ratio", cfg.train_ratio);
    data->finish();
  }

  {
    auto arch = root.child("architecture");
    if (!arch) throw ConfigError("architecture", "required field is missing");
    std::vector<std::string> kinds;
    arch->require("branch_kinds", kinds);
    for (std::size_t i = 0; i < kinds.size(); ++i) {
      try {
        cfg.branch_kinds.push_back(branch_kind_from_string(kinds[i]));
      } catch (const std::invalid_argument& e) {
        throw ConfigError("architecture.branch_kinds[" + std::to_string(i) + "]", e.what());
      }
    }
    arch->finish();
  }

  {
    auto sweep = root.child("sweep");
    if (!sweep) throw ConfigError("sweep", "required field is missing");
    sweep->require("widths", cfg.widths);
    sweep->require("sigma_w", cfg.sigma_w);
    sweep->finish();
  }

  if (auto t = root.child("teacher")) {
    TeacherSettings ts;
    std::string mode = "sampled";
    t->get("mode", mode);
    if (mode == "sampled") {
      ts.mode = TeacherMode::kSampled;
    } else if (mode == "ideal") {
      ts.mode = TeacherMode::kIdeal;
    } else {
      throw ConfigError(t->field("mode"), "expected 'sampled' or 'ideal'");
    }
    t->get("width", ts.width);
    t->get("hidden_variance", ts.hidden_variance);
    t->require("readout_variances", ts.readout_variances);
    t->finish();
    cfg.teacher = ts;
  }

  if (auto t = root.child("temperature")) {
    t->require("multiple_of_prior", cfg.temperature_multiple);
    t->finish();
  }

  if (auto s = root.child("solver")) {
    s->get("damping", cfg.solver.damping);
    s->get("tol", cfg.solver.tol);
    s->get("max_iter", cfg.solver.max_iter);
    std::string map = "multiplicative";
    s->get("map", map);
    if (map == "multiplicative") {
      cfg.solver.map = FixedPointMap::kMultiplicative;
    } else if (map == "additive") {
      cfg.solver.map = FixedPointMap::kAdditive;
    } else {
      throw ConfigError(s->field("map"), "expected 'multiplicative' or 'additive'");
    }
    s->finish();
  }

  if (auto h = root.child("hmc")) {
    h->get("enabled", cfg.hmc.enabled);
    h->get("step_size", cfg.hmc.config.step_size);
    h->get("leapfrog_steps", cfg.hmc.config.leapfrog_steps);
    h->get("num_chains", cfg.hmc.config.num_chains);
    h->get("warmup_samples", cfg.hmc.config.warmup_samples);
    h->get("kept_samples", cfg.hmc.config.kept_samples);
    h->get("thinning", cfg.hmc.config.thinning);
    h->get("max_width", cfg.hmc.max_width);
    h->get("max_train", cfg.hmc.max_train);
    h->get("raw_samples", cfg.hmc.raw_samples);
    h->finish();
  }

  if (auto s = root.child("seeds")) {
    s->get("data", cfg.seeds.data);
    s->get("split", cfg.seeds.split);
    s->get("teacher", cfg.seeds.teacher);
    s->get("hmc", cfg.seeds.hmc);
    s->finish();
  }

  std::string out_dir = cfg.output_dir.string();
  root.get("output_dir", out_dir);
  cfg.output_dir = out_dir;
  root.get("threads", cfg.threads);
  root.finish();

  validate(cfg);
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("<file>", "cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), path.parent_path());
}

void validate(const ExperimentConfig& cfg) {
  if (cfg.branch_kinds.empty())
    throw ConfigError("architecture.branch_kinds", "must list at least one branch");
  if (cfg.widths.empty()) throw ConfigError("sweep.widths", "must be a non-empty list");
  if (cfg.sigma_w.empty()) throw ConfigError("sweep.sigma_w", "must be a non-empty list");
  for (std::size_t i = 0; i < cfg.widths.size(); ++i)
    if (cfg.widths[i] < 1)
      throw ConfigError("sweep.widths[" + std::to_string(i) + "]", "widths must be >= 1");
  for (std::size_t i = 0; i < cfg.sigma_w.size(); ++i)
    if (!(cfg.sigma_w[i] > 0.0))
      throw ConfigError("sweep.sigma_w[" + std::to_string(i) + "]", "must be > 0");
  if (!(cfg.temperature_multiple > 0.0))
    throw ConfigError("temperature.multiple_of_prior", "must be > 0");
  if (!(cfg.train_ratio > 0.0 && cfg.train_ratio < 1.0))
    throw ConfigError("data.train_ratio", "must be in (0, 1)");
  if (cfg.threads < 1) throw ConfigError("threads", "must be >= 1");

  const bool graph = cfg.scenario != Scenario::kResidualMlpStudentTeacher;
  for (std::size_t i = 0; i < cfg.branch_kinds.size(); ++i) {
    const BranchKind k = cfg.branch_kinds[i];
    const std::string f = "architecture.branch_kinds[" + std::to_string(i) + "]";
    if (graph && k != BranchKind::kGraphConvolution)
      throw ConfigError(f, "graph scenarios only support 'gcn' branches");
    if (!graph && k == BranchKind::kGraphConvolution)
      throw ConfigError(f, "residual-MLP branches must be 'linear' or 'relu'");
  }

  switch (cfg.scenario) {
    case Scenario::kCsbmStudentTeacher:
      try {
        cfg.csbm.validate();
      } catch (const std::invalid_argument& e) {
        throw ConfigError("data.csbm", e.what());
      }
      break;
    case Scenario::kResidualMlpStudentTeacher:
      if (cfg.mlp.input_dim < 1) throw ConfigError("data.mlp.input_dim", "must be >= 1");
      if (cfg.mlp.train_samples < 1)
        throw ConfigError("data.mlp.train_samples", "must be >= 1");
      if (cfg.mlp.test_samples < 1)
        throw ConfigError("data.mlp.test_samples", "must be >= 1");
      break;
    case Scenario::kExternalDataset:
      if (cfg.files.features.empty()) throw ConfigError("data.files", "required for external-dataset");
      if (cfg.teacher) throw ConfigError("teacher", "external datasets have their own labels");
      break;
  }
  if (cfg.scenario != Scenario::kExternalDataset) {
    if (!cfg.teacher) throw ConfigError("teacher", "required for student-teacher scenarios");
    if (static_cast<int>(cfg.teacher->readout_variances.size()) != cfg.num_branches())
      throw ConfigError("teacher.readout_variances", "need one value per branch");
    for (std::size_t i = 0; i < cfg.teacher->readout_variances.size(); ++i)
      if (!(cfg.teacher->readout_variances[i] > 0.0))
        throw ConfigError("teacher.readout_variances[" + std::to_string(i) + "]", "must be > 0");
    if (!(cfg.teacher->hidden_variance > 0.0))
      throw ConfigError("teacher.hidden_variance", "must be > 0");
    if (cfg.teacher->width < 1) throw ConfigError("teacher.width", "must be >= 1");
    if (cfg.hmc.enabled && cfg.teacher->mode == TeacherMode::kIdeal)
      throw ConfigError("hmc.enabled", "HMC needs concrete labels; use a sampled teacher");
  }
  if (!(cfg.solver.damping > 0.0 && cfg.solver.damping <= 1.0))
    throw ConfigError("solver.damping", "must be in (0, 1]");
  if (!(cfg.solver.tol > 0.0)) throw ConfigError("solver.tol", "must be > 0");
  if (cfg.solver.max_iter < 1) throw ConfigError("solver.max_iter", "must be >= 1");
  try {
    cfg.hmc.config.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError("hmc", e.what());
  }
}

std::string to_json(const ExperimentConfig& cfg) {
  json doc;
  doc["name"] = cfg.name;
  doc["scenario"] = to_string(cfg.scenario);
  json data;
  if (cfg.scenario == Scenario::kCsbmStudentTeacher) {
    data["csbm"] = {{"n", cfg.csbm.n},
                    {"feature_dim", cfg.csbm.feature_dim},
                    {"avg_degree", cfg.csbm.avg_degree},
                    {"homophily", cfg.csbm.homophily},
                    {"signal_strength", cfg.csbm.signal_strength}};
  } else if (cfg.scenario == Scenario::kResidualMlpStudentTeacher) {
    data["mlp"] = {{"input_dim", cfg.mlp.input_dim},
                   {"train_samples", cfg.mlp.train_samples},
                   {"test_samples", cfg.mlp.test_samples}};
  } else {
    data["files"] = {{"edges", cfg.files.edges.string()},
                     {"features", cfg.files.features.string()},
                     {"labels", cfg.files.labels.string()}};
  }
  if (cfg.scenario != Scenario::kResidualMlpStudentTeacher)
    data["train_ratio"] = cfg.train_ratio;
  doc["data"] = data;
  std::vector<std::string> kinds;
  for (auto k : cfg.branch_kinds) kinds.push_back(to_string(k));
  doc["architecture"] = {{"branch_kinds", kinds}};
  doc["sweep"] = {{"widths", cfg.widths}, {"sigma_w", cfg.sigma_w}};
  if (cfg.teacher) {
    doc["teacher"] = {{"mode", cfg.teacher->mode == TeacherMode::kIdeal ? "ideal" : "sampled"},
                      {"width", cfg.teacher->width},
                      {"hidden_variance", cfg.teacher->hidden_variance},
                      {"readout_variances", cfg.teacher->readout_variances}};
  }
  doc["temperature"] = {{"multiple_of_prior", cfg.temperature_multiple}};
  doc["solver"] = {{"damping", cfg.solver.damping},
                   {"tol", cfg.solver.tol},
                   {"max_iter", cfg.solver.max_iter},
                   {"map", cfg.solver.map == FixedPointMap::kAdditive ? "additive"
                                                                      : "multiplicative"}};
  const HmcConfig& h = cfg.hmc.config;
  doc["hmc"] = {{"enabled", cfg.hmc.enabled},
                {"step_size", h.step_size},
                {"leapfrog_steps", h.leapfrog_steps},
                {"num_chains", h.num_chains},
                {"warmup_samples", h.warmup_samples},
                {"kept_samples", h.kept_samples},
                {"thinning", h.thinning},
                {"max_width", cfg.hmc.max_width},
                {"max_train", cfg.hmc.max_train},
                {"raw_samples", cfg.hmc.raw_samples}};
  doc["seeds"] = {{"data", cfg.seeds.data},
                  {"split", cfg.seeds.split},
                  {"teacher", cfg.seeds.teacher},
                  {"hmc", cfg.seeds.hmc}};
  doc["output_dir"] = cfg.output_dir.string();
  doc["threads"] = cfg.threads;
  return doc.dump(2);
}

namespace {

ExperimentConfig csbm_base(bool full) {
  ExperimentConfig cfg;
  cfg.scenario = Scenario::kCsbmStudentTeacher;
  cfg.csbm.n = full ? 2600 : 520;
  cfg.csbm.feature_dim = full ? 950 : 190;
  cfg.csbm.avg_degree = 20.0;
  cfg.csbm.homophily = 4.0;
  cfg.csbm.signal_strength = 4.0;
  cfg.train_ratio = 0.65;
  cfg.branch_kinds = {BranchKind::kGraphConvolution, BranchKind::kGraphConvolution};
  cfg.teacher = TeacherSettings{TeacherMode::kSampled, full ? 1024 : 512, 1.0, {0.4, 2.0}};
  cfg.temperature_multiple = 5e-4;
  cfg.widths = {4, 16, 64, 256, 1024};
  cfg.sigma_w = {0.5, 0.8, 1.0, 1.2};
  cfg.hmc.config.step_size = 2e-3;
  cfg.hmc.config.leapfrog_steps = 200;
  cfg.hmc.config.num_chains = 4;
  cfg.hmc.config.warmup_samples = 500;
  cfg.hmc.config.kept_samples = 2000;
  cfg.hmc.config.thinning = 1;
  return cfg;
}

ExperimentConfig mlp_base(bool full) {
  ExperimentConfig cfg;
  cfg.scenario = Scenario::kResidualMlpStudentTeacher;
  cfg.mlp.input_dim = full ? 1024 : 256;
  cfg.mlp.train_samples = full ? 1280 : 320;
  cfg.mlp.test_samples = full ? 320 : 80;
  cfg.branch_kinds = {BranchKind::kLinear, BranchKind::kRelu};
  cfg.teacher = TeacherSettings{TeacherMode::kSampled, full ? 1024 : 512, 1.0, {2.4, 0.4}};
  cfg.temperature_multiple = 1e-3;
  cfg.widths = {4, 16, 64, 256, 1024};
  cfg.sigma_w = {0.6, 0.8, 1.0, 1.2, 1.5};
  cfg.hmc.config.step_size = 2e-3;
  cfg.hmc.config.leapfrog_steps = 200;
  cfg.hmc.config.num_chains = 4;
  cfg.hmc.config.warmup_samples = 500;
  cfg.hmc.config.kept_samples = 2000;
  cfg.hmc.config.thinning = 1;
  return cfg;
}

}  // namespace

std::vector<PresetInfo> list_presets() {
  return {
      {"fig1b", "CSBM student-teacher, sigma_w=1, N in {4, 1024}, HMC at N=4 (n=520, N0=190)"},
      {"fig1b-full", "fig1b at paper scale (n=2600, N0=950, N_t=1024), HMC at N=4"},
      {"fig2", "CSBM student-teacher norm sweep, 5 widths x 4 sigma_w, theory only (n=520, N0=190)"},
      {"fig2-full", "fig2 at paper scale (n=2600, N0=950, N_t=1024)"},
      {"fig3-4", "CSBM student-teacher bias/variance sweep with HMC up to N=64 (n=520, N0=190)"},
      {"fig3-4-full", "fig3-4 at paper scale, HMC up to N=1024"},
      {"fig9-10", "residual-MLP student-teacher sweep (N0=256, P=320, N_t=512), theory only"},
      {"fig9-10-full", "residual-MLP at paper scale (N0=1024, P=1280, N_t=1024)"},
  };
}

ExperimentConfig preset(const std::string& name) {
  const bool full = name.size() > 5 && name.ends_with("-full");
  const std::string base = full ? name.substr(0, name.size() - 5) : name;
  ExperimentConfig cfg;
  if (base == "fig1b") {
    cfg = csbm_base(full);
    cfg.widths = {4, 1024};
    cfg.sigma_w = {1.0};
    cfg.hmc.enabled = true;
    cfg.hmc.max_width = 4;
    cfg.hmc.raw_samples = true;
  } else if (base == "fig2" || base == "fig2-csbm") {
    cfg = csbm_base(full);
  } else if (base == "fig3-4") {
    cfg = csbm_base(full);
    cfg.hmc.enabled = true;
    cfg.hmc.max_width = full ? 1024 : 64;
  } else if (base == "fig9-10") {
    cfg = mlp_base(full);
  } else {
    throw ConfigError("preset", "unknown preset '" + name + "'");
  }
  cfg.name = name;
  cfg.output_dir = std::filesystem::path("out") / name;
  validate(cfg);
  return cfg;
}

}  // namespace bpbnn
