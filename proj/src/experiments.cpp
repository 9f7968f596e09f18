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


#include "bpbnn/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "bpbnn/datagen.hpp"
#include "bpbnn/network.hpp"
#include "bpbnn/rng.hpp"
#include "json.hpp"

namespace bpbnn {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

Vector gather(const Vector& v, const IndexList& idx) {
  Vector out(static_cast<Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) out(static_cast<Index>(i)) = v(idx[i]);
  return out;
}

Matrix gather_rows(const Matrix& m, const IndexList& idx) {
  Matrix out(static_cast<Index>(idx.size()), m.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Index>(i)) = m.row(idx[i]);
  return out;
}

IndexList iota_list(Index begin, Index end) {
  IndexList out;
  for (Index i = begin; i < end; ++i) out.push_back(i);
  return out;
}

std::uint64_t mix(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

int SweepResult::exit_code() const {
  bool hmc_failed = false;
  for (const auto& p : points) {
    if (!p.theory_ok || !p.order.converged) return kExitComputationFailure;
    if (p.hmc && !p.hmc->ok) hmc_failed = true;
  }
  return hmc_failed ? kExitHmcFailure : kExitOk;
}

ExperimentData prepare_data(const ExperimentConfig& cfg) {
  ExperimentData data;
  const int L = cfg.num_branches();
  if (cfg.scenario == Scenario::kResidualMlpStudentTeacher) {
    data.architecture = Architecture::kResidualMlp;
    const Index p = cfg.mlp.train_samples;
    const Index t = cfg.mlp.test_samples;
    CounterRng rng(cfg.seeds.data, 0);
    Matrix x = rng.normal_matrix(p + t, cfg.mlp.input_dim, 1.0);
    data.branch_inputs.assign(L, x);
    data.unit_kernels = mlp_branch_kernels(x, cfg.branch_kinds, 1.0);
    data.train_idx = iota_list(0, p);
    data.test_idx = iota_list(p, p + t);
  } else {
    data.architecture = Architecture::kGraphConvolution;
    Graph graph;
    if (cfg.scenario == Scenario::kCsbmStudentTeacher) {
      CsbmConfig c = cfg.csbm;
      c.seed = cfg.seeds.data;
      graph = generate_csbm(c);
    } else {
      graph = load_dataset(cfg.files);
      data.labels = graph.labels;
    }
    NodeSplit split = split_nodes(graph.num_nodes(), cfg.train_ratio, cfg.seeds.split);
    data.train_idx = split.train;
    data.test_idx = split.test;
    data.branch_inputs = branch_features(graph, L);
    data.unit_kernels = graph_branch_kernels(data.branch_inputs, 1.0);
  }
  data.input_dim = data.branch_inputs.front().cols();

  if (cfg.teacher) {
    const TeacherSettings& ts = *cfg.teacher;
    Vector betas = Eigen::Map<const Vector>(ts.readout_variances.data(),
                                            static_cast<Index>(ts.readout_variances.size()));
    if (ts.mode == TeacherMode::kSampled) {
      TeacherConfig tc{ts.width, ts.hidden_variance, betas, cfg.seeds.teacher};
      NetworkParams teacher =
          sample_teacher(tc, data.architecture, cfg.branch_kinds, data.input_dim);
      ForwardResult f = teacher_labels(teacher, data.branch_inputs);
      data.labels = f.output;
      data.branch_targets = f.branches;
    } else {
      BranchKernels tk = data.unit_kernels.rescaled(ts.hidden_variance);
      std::vector<Matrix> restricted;
      for (const Matrix& k : tk.kernels)
        restricted.push_back(restrict(k, data.train_idx, data.train_idx));
      data.label_second_moment = analytic_label_covariance(restricted, betas);
    }
  }
  return data;
}

SweepPoint run_point(const ExperimentConfig& cfg, const ExperimentData& data,
                     Index width, double sigma_w, std::uint64_t point_index,
                     int hmc_threads) {
  SweepPoint pt;
  pt.width = width;
  pt.sigma_w = sigma_w;
  const double var = sigma_w * sigma_w;
  pt.temperature = cfg.temperature_multiple * var;
  const int L = cfg.num_branches();
  const bool have_labels = data.labels.size() > 0;
  const Vector train_labels = have_labels ? gather(data.labels, data.train_idx) : Vector();

  auto start = Clock::now();
  const BranchKernels kernels = data.unit_kernels.rescaled(var);
  SaddleProblem problem;
  try {
    for (const Matrix& k : kernels.kernels)
      problem.kernels.push_back(restrict(k, data.train_idx, data.train_idx));
    if (data.label_second_moment) {
      problem.label_second_moment = *data.label_second_moment;
      problem.labels = Vector::Zero(static_cast<Index>(data.train_idx.size()));
    } else {
      problem.labels = train_labels;
    }
    problem.width = static_cast<double>(width);
    problem.temperature = pt.temperature;
    problem.prior_variance = var;
    problem.input_dim = data.input_dim;

    SolveOptions opts = cfg.solver;
    opts.on_warning = [&pt](const std::string& w) { pt.warnings.push_back(w); };
    pt.order = solve(problem, opts);
    pt.norms = norm_report(pt.order, problem);

    if (have_labels) {
      PredictorInputs in{&kernels, data.train_idx, data.test_idx, train_labels, pt.temperature};
      PredictorStats stats = branch_predictor_stats(pt.order.u, in);
      const Vector targets = gather(data.labels, data.test_idx);
      std::vector<Vector> branch_targets;
      for (const Vector& b : data.branch_targets) branch_targets.push_back(gather(b, data.test_idx));
      pt.generalization =
          bias_variance(stats, targets, branch_targets.empty() ? nullptr : &branch_targets);
      PredictorInputs on_train{&kernels, data.train_idx, data.train_idx, train_labels,
                               pt.temperature};
      const Vector fit = mean_predictor(pt.order.u, on_train);
      pt.train_mse = (fit - train_labels).squaredNorm() / static_cast<double>(fit.size());
    }
    pt.theory_ok = true;
  } catch (const std::exception& e) {
    pt.error = e.what();
    pt.theory_ok = false;
  }
  pt.theory_seconds = seconds_since(start);

  const bool hmc_eligible = cfg.hmc.enabled && have_labels && width <= cfg.hmc.max_width &&
                            static_cast<Index>(data.train_idx.size()) <= cfg.hmc.max_train;
  if (!hmc_eligible) return pt;

  start = Clock::now();
  HmcSummary summary;
  try {
    HmcTarget target;
    target.architecture = data.architecture;
    target.kinds = cfg.branch_kinds;
    for (const Matrix& x : data.branch_inputs) {
      target.train_inputs.push_back(gather_rows(x, data.train_idx));
      target.test_inputs.push_back(gather_rows(x, data.test_idx));
    }
    target.train_labels = train_labels;
    target.width = width;
    target.temperature = pt.temperature;
    target.prior_variance = var;

    HmcConfig hc = cfg.hmc.config;
    hc.seed = mix(cfg.seeds.hmc, point_index);
    hc.threads = std::max(1, hmc_threads);
    std::vector<HmcChain> chains = sample(hc, target);

    summary.norms = estimate_norms(chains);
    const Vector targets = gather(data.labels, data.test_idx);
    std::vector<Vector> branch_targets;
    for (const Vector& b : data.branch_targets) branch_targets.push_back(gather(b, data.test_idx));
    summary.predictor = estimate_predictor(
        chains, targets, branch_targets.empty() ? nullptr : &branch_targets);
    double ess = std::numeric_limits<double>::infinity();
    std::vector<double> energy_errors;
    for (const HmcChain& c : chains) {
      summary.acceptance_rate += c.acceptance_rate / static_cast<double>(chains.size());
      summary.divergences += c.divergences;
      summary.step_size = c.step_size;
      energy_errors.push_back(c.median_energy_error);
      for (Index l = 0; l < c.norm_ess.size(); ++l) ess = std::min(ess, c.norm_ess(l));
    }
    std::sort(energy_errors.begin(), energy_errors.end());
    summary.median_energy_error = energy_errors[energy_errors.size() / 2];
    summary.min_ess = std::isfinite(ess) ? ess : 0.0;
    if (summary.divergences > 0)
      pt.warnings.push_back("hmc: " + std::to_string(summary.divergences) +
                            " divergent trajectories");
    if (summary.acceptance_rate < 0.4 || summary.acceptance_rate > 0.95)
      pt.warnings.push_back("hmc: acceptance rate " + format_double(summary.acceptance_rate) +
                            " outside [0.4, 0.95]");
    for (HmcChain& c : chains) {
      c.test_predictions.clear();
      c.parameters.clear();
    }
    summary.chains = std::move(chains);
    summary.ok = true;
  } catch (const std::exception& e) {
    summary.ok = false;
    summary.error = e.what();
    pt.warnings.push_back(std::string("hmc failed: ") + e.what());
  }
  (void)L;
  pt.hmc = std::move(summary);
  pt.hmc_seconds = seconds_since(start);
  return pt;
}

SweepResult run(const ExperimentConfig& cfg, std::ostream* log) {
  validate(cfg);
  const auto start = Clock::now();
  SweepResult result;
  result.config = cfg;
  const ExperimentData data = prepare_data(cfg);
  result.num_train = static_cast<Index>(data.train_idx.size());
  result.num_test = static_cast<Index>(data.test_idx.size());
  if (cfg.teacher) {
    result.teacher_norms.resize(cfg.num_branches());
    for (int l = 0; l < cfg.num_branches(); ++l)
      result.teacher_norms(l) = cfg.teacher->readout_variances[l] * cfg.teacher->hidden_variance;
  }
  result.setup_seconds = seconds_since(start);

  struct Task {
    Index width;
    double sigma_w;
  };
  std::vector<Task> tasks;
  for (double s : cfg.sigma_w)
    for (Index n : cfg.widths) tasks.push_back({n, s});
  result.points.resize(tasks.size());

  const int threads = std::max(1, cfg.threads);
  const int point_workers =
      cfg.hmc.enabled ? 1 : std::min<int>(threads, static_cast<int>(tasks.size()));
  const int hmc_threads = cfg.hmc.enabled ? threads : 1;
  std::atomic<std::size_t> next{0};
  std::mutex log_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < tasks.size(); i = next++) {
      result.points[i] = run_point(cfg, data, tasks[i].width, tasks[i].sigma_w, i, hmc_threads);
      if (log) {
        const SweepPoint& p = result.points[i];
        std::lock_guard lock(log_mutex);
        *log << "N=" << p.width << " sigma_w=" << format_double(p.sigma_w);
        if (!p.theory_ok) {
          *log << " FAILED: " << p.error;
        } else {
          *log << " u=(";
          for (Index l = 0; l < p.order.u.size(); ++l)
            *log << (l ? ", " : "") << format_double(p.order.u(l));
          *log << ") iterations=" << p.order.iterations
               << (p.order.converged ? "" : " NOT CONVERGED");
        }
        if (p.hmc) {
          if (p.hmc->ok) {
            *log << " hmc=(";
            for (std::size_t l = 0; l < p.hmc->norms.size(); ++l)
              *log << (l ? ", " : "") << format_double(p.hmc->norms[l].mean);
            *log << ") acceptance=" << format_double(p.hmc->acceptance_rate);
          } else {
            *log << " hmc FAILED: " << p.hmc->error;
          }
        }
        *log << '\n';
        for (const auto& w : p.warnings) *log << "  warning: " << w << '\n';
      }
    }
  };
  if (point_workers == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int w = 0; w < point_workers; ++w) pool.emplace_back(worker);
  }
  result.total_seconds = seconds_since(start);
  return result;
}

namespace {

class CsvWriter {
 public:
  CsvWriter(std::ostream& out, std::string scenario) : out_(out), scenario_(std::move(scenario)) {
    out_ << "scenario,N,sigma_w,branch,quantity,source,value,stderr\n";
  }
  void row(const SweepPoint& p, const std::string& branch, const std::string& quantity,
           const std::string& source, double value, std::optional<double> err = std::nullopt) {
    out_ << scenario_ << ',' << p.width << ',' << format_double(p.sigma_w) << ',' << branch << ','
         << quantity << ',' << source << ',' << format_double(value) << ',';
    if (err) out_ << format_double(*err);
    out_ << '\n';
  }

 private:
  std::ostream& out_;
  std::string scenario_;
};

}  // namespace

void write_csv(const SweepResult& result, std::ostream& out) {
  CsvWriter csv(out, to_string(result.config.scenario));
  for (const SweepPoint& p : result.points) {
    const double var = p.sigma_w * p.sigma_w;
    if (p.theory_ok) {
      csv.row(p, "all", "converged", "theory", p.order.converged ? 1.0 : 0.0);
      csv.row(p, "all", "iterations", "theory", p.order.iterations);
      csv.row(p, "all", "residual", "theory", p.order.final_residual);
      csv.row(p, "all", "hamiltonian", "theory", p.order.hamiltonian_final);
      for (std::size_t l = 0; l < p.norms.branches.size(); ++l) {
        const BranchNorm& b = p.norms.branches[l];
        const std::string br = std::to_string(l);
        csv.row(p, br, "u", "theory", b.u);
        csv.row(p, br, "norm", "theory", b.plotted);
        csv.row(p, br, "norm_mean_squared", "theory", b.mean_squared);
        csv.row(p, br, "norm_fluctuation", "theory", b.fluctuation);
      }
      if (p.generalization) {
        const GeneralizationReport& g = *p.generalization;
        csv.row(p, "all", "bias", "theory", g.bias);
        csv.row(p, "all", "variance", "theory", g.variance);
        csv.row(p, "all", "generalization", "theory", g.generalization);
        csv.row(p, "all", "label_second_moment", "theory", g.normalization);
        csv.row(p, "all", "bias_normalized", "theory", g.normalized_bias());
        csv.row(p, "all", "variance_normalized", "theory", g.normalized_variance());
        csv.row(p, "all", "generalization_normalized", "theory", g.normalized_generalization());
        if (g.branches) {
          for (std::size_t l = 0; l < g.branches->size(); ++l) {
            csv.row(p, std::to_string(l), "bias", "theory", (*g.branches)[l].bias);
            csv.row(p, std::to_string(l), "variance", "theory", (*g.branches)[l].variance);
          }
        }
      }
      if (p.train_mse) csv.row(p, "all", "train_mse", "theory", *p.train_mse);
    }
    if (p.hmc && p.hmc->ok) {
      const HmcSummary& h = *p.hmc;
      for (std::size_t l = 0; l < h.norms.size(); ++l) {
        const std::string br = std::to_string(l);
        csv.row(p, br, "u", "hmc", h.norms[l].mean, h.norms[l].std_error);
        csv.row(p, br, "norm", "hmc", h.norms[l].mean * var, h.norms[l].std_error * var);
      }
      if (h.predictor) {
        const PredictorEstimate& e = *h.predictor;
        const double norm = p.generalization ? p.generalization->normalization : 0.0;
        csv.row(p, "all", "bias", "hmc", e.bias.mean, e.bias.std_error);
        csv.row(p, "all", "variance", "hmc", e.variance_avg.mean, e.variance_avg.std_error);
        csv.row(p, "all", "generalization", "hmc", e.generalization.mean,
                e.generalization.std_error);
        if (norm > 0.0) {
          csv.row(p, "all", "bias_normalized", "hmc", e.bias.mean / norm, e.bias.std_error / norm);
          csv.row(p, "all", "variance_normalized", "hmc", e.variance_avg.mean / norm,
                  e.variance_avg.std_error / norm);
          csv.row(p, "all", "generalization_normalized", "hmc", e.generalization.mean / norm,
                  e.generalization.std_error / norm);
        }
        for (std::size_t l = 0; l < e.branch_bias.size(); ++l) {
          csv.row(p, std::to_string(l), "bias", "hmc", e.branch_bias[l].mean,
                  e.branch_bias[l].std_error);
          csv.row(p, std::to_string(l), "variance", "hmc", e.branch_variance[l].mean,
                  e.branch_variance[l].std_error);
        }
      }
      csv.row(p, "all", "acceptance_rate", "hmc", h.acceptance_rate);
      csv.row(p, "all", "divergences", "hmc", h.divergences);
      csv.row(p, "all", "min_ess", "hmc", h.min_ess);
    }
  }
}

std::string metadata_json(const SweepResult& result) {
  using nlohmann::json;
  const ExperimentConfig& cfg = result.config;
  json doc;
  doc["version"] = kVersion;
  doc["eigen_version"] = std::to_string(EIGEN_WORLD_VERSION) + "." +
                         std::to_string(EIGEN_MAJOR_VERSION) + "." +
                         std::to_string(EIGEN_MINOR_VERSION);
  doc["config"] = json::parse(to_json(cfg));
  doc["num_train"] = result.num_train;
  doc["num_test"] = result.num_test;
  doc["exit_code"] = result.exit_code();
  doc["timings"] = {{"setup_seconds", result.setup_seconds},
                    {"total_seconds", result.total_seconds}};
  json points = json::array();
  for (const SweepPoint& p : result.points) {
    json jp = {{"N", p.width},
               {"sigma_w", p.sigma_w},
               {"temperature", p.temperature},
               {"theory_ok", p.theory_ok},
               {"converged", p.order.converged},
               {"iterations", p.order.iterations},
               {"final_damping", p.order.final_damping},
               {"theory_seconds", p.theory_seconds},
               {"warnings", p.warnings}};
    if (!p.error.empty()) jp["error"] = p.error;
    if (p.hmc) {
      jp["hmc"] = {{"ok", p.hmc->ok},
                   {"seconds", p.hmc_seconds},
                   {"acceptance_rate", p.hmc->acceptance_rate},
                   {"divergences", p.hmc->divergences},
                   {"step_size", p.hmc->step_size},
                   {"median_energy_error", p.hmc->median_energy_error}};
      if (!p.hmc->ok) jp["hmc"]["error"] = p.hmc->error;
    }
    points.push_back(jp);
  }
  doc["points"] = points;
  return doc.dump(2);
}

std::string default_plot_spec(const SweepResult& result) {
  nlohmann::json doc;
  doc["title"] = result.config.name;
  std::vector<double> teacher(result.teacher_norms.data(),
                              result.teacher_norms.data() + result.teacher_norms.size());
  doc["teacher_norms"] = teacher;
  doc["normalized"] = true;
  doc["prefix"] = result.config.name;
  return doc.dump(2);
}

void write_outputs(const SweepResult& result) {
  const auto& dir = result.config.output_dir;
  std::filesystem::create_directories(dir);
  auto open = [](const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    return out;
  };
  {
    auto out = open(dir / "results.csv");
    write_csv(result, out);
  }
  open(dir / "metadata.json") << metadata_json(result) << '\n';
  open(dir / "plot_spec.json") << default_plot_spec(result) << '\n';

  bool any_hmc = false;
  for (const auto& p : result.points) any_hmc = any_hmc || (p.hmc && p.hmc->ok);
  if (!any_hmc) return;
  auto chains = open(dir / "hmc_chains.csv");
  chains << "N,sigma_w,chain,acceptance_rate,divergences,step_size,median_energy_error,min_ess\n";
  for (const auto& p : result.points) {
    if (!p.hmc || !p.hmc->ok) continue;
    const bool raw = result.config.hmc.raw_samples;
    std::ofstream samples;
    const Index L = p.hmc->chains.front().branch_norms.cols();
    if (raw) {
      samples = open(dir / ("hmc_samples_N" + std::to_string(p.width) + "_sw" +
                            format_double(p.sigma_w) + ".csv"));
      samples << "chain,sample";
      for (Index l = 0; l < L; ++l) samples << ",norm_" << l;
      samples << ",training_loss\n";
    }
    for (std::size_t c = 0; c < p.hmc->chains.size(); ++c) {
      const HmcChain& ch = p.hmc->chains[c];
      double ess = ch.norm_ess.size() ? ch.norm_ess.minCoeff() : 0.0;
      chains << p.width << ',' << format_double(p.sigma_w) << ',' << c << ','
             << format_double(ch.acceptance_rate) << ',' << ch.divergences << ','
             << format_double(ch.step_size) << ',' << format_double(ch.median_energy_error)
             << ',' << format_double(ess) << '\n';
      if (!raw) continue;
      for (Index s = 0; s < ch.num_samples(); ++s) {
        samples << c << ',' << s;
        for (Index l = 0; l < L; ++l) samples << ',' << format_double(ch.branch_norms(s, l));
        samples << ',' << format_double(ch.training_loss(s)) << '\n';
      }
    }
  }
}

void apply_environment(ExperimentConfig& cfg) {
  if (const char* dir = std::getenv("BPBNN_OUTPUT_DIR"); dir && *dir) cfg.output_dir = dir;
  if (const char* t = std::getenv("BPBNN_THREADS"); t && *t) {
    int v = 0;
    auto res = std::from_chars(t, t + std::strlen(t), v);
    if (res.ec != std::errc() || *res.ptr != '\0' || v < 1)
      throw ConfigError("BPBNN_THREADS", "must be a positive integer");
    cfg.threads = v;
  }
}

}  // namespace bpbnn
