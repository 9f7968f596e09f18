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


#include "bpbnn/hmc.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <stdexcept>
#include <limits>
#include <thread>

#include "bpbnn/rng.hpp"

namespace bpbnn {

Index HmcTarget::input_dim() const {
  if (!train_inputs.empty()) return train_inputs.front().cols();
  return test_inputs.empty() ? 0 : test_inputs.front().cols();
}

Index HmcTarget::num_parameters() const {
  return static_cast<Index>(num_branches()) * (input_dim() * width + width);
}

void HmcTarget::validate() const {
  if (kinds.empty()) throw std::invalid_argument("hmc target: no branches");
  if (train_inputs.size() != kinds.size())
    throw std::invalid_argument("hmc target: one training input per branch");
  if (!test_inputs.empty() && test_inputs.size() != kinds.size())
    throw std::invalid_argument("hmc target: one test input per branch");
  const Index p = train_labels.size();
  for (const auto& x : train_inputs)
    if (x.rows() != p || x.cols() != input_dim())
      throw std::invalid_argument("hmc target: training inputs must be P x N0");
  for (const auto& x : test_inputs)
    if (x.rows() != test_inputs.front().rows() || x.cols() != input_dim())
      throw std::invalid_argument("hmc target: inconsistent test inputs");
  if (width < 1) throw std::invalid_argument("hmc target: width must be >= 1");
  if (input_dim() < 1)
    throw std::invalid_argument("hmc target: input dimension must be >= 1");
  if (!(temperature > 0.0))
    throw std::invalid_argument("hmc target: temperature must be > 0");
  if (!(prior_variance > 0.0))
    throw std::invalid_argument("hmc target: prior variance must be > 0");
}

Vector flatten(const NetworkParams& params) {
  const Index n0 = params.input_dim(), n = params.width();
  Vector theta(params.num_branches() * (n0 * n + n));
  Index offset = 0;
  for (int l = 0; l < params.num_branches(); ++l) {
    const auto li = static_cast<std::size_t>(l);
    theta.segment(offset, n0 * n) =
        Eigen::Map<const Vector>(params.hidden[li].data(), n0 * n);
    offset += n0 * n;
    theta.segment(offset, n) = params.readout[li];
    offset += n;
  }
  return theta;
}

NetworkParams unflatten(const Vector& theta, const HmcTarget& target) {
  const Index n0 = target.input_dim(), n = target.width;
  if (theta.size() != target.num_parameters())
    throw std::invalid_argument("unflatten: parameter vector has wrong size");
  NetworkParams p;
  p.architecture = target.architecture;
  p.kinds = target.kinds;
  Index offset = 0;
  for (int l = 0; l < target.num_branches(); ++l) {
    p.hidden.push_back(Eigen::Map<const Matrix>(theta.data() + offset, n0, n));
    offset += n0 * n;
    p.readout.push_back(theta.segment(offset, n));
    offset += n;
  }
  return p;
}

Potential::Potential(const HmcTarget& target) : target_(target) {
  target_.validate();
  const Index n0 = target.input_dim();
  const int num_branches = target.num_branches();
  scale_ = 1.0 / std::sqrt(static_cast<double>(num_branches) *
                           static_cast<double>(target.width) *
                           static_cast<double>(n0));
  gram_path_ = std::none_of(target.kinds.begin(), target.kinds.end(),
                            [](BranchKind k) { return k == BranchKind::kRelu; });
  if (gram_path_ && target.train_labels.size() > 0) {
    Matrix stacked(target.train_labels.size(), num_branches * n0);
    for (int l = 0; l < num_branches; ++l)
      stacked.middleCols(l * n0, n0) = target.train_inputs[static_cast<std::size_t>(l)];
    gram_ = stacked.transpose() * stacked;
    projected_ = stacked.transpose() * target.train_labels;
    label_energy_ = target.train_labels.squaredNorm();
  }
}

double Potential::likelihood(const Vector& theta, Vector* gradient) const {
  const HmcTarget& t = target_;
  const Index p = t.train_labels.size();
  if (p == 0) return 0.0;
  const Index n0 = t.input_dim(), n = t.width;
  const Index block = n0 * n + n;
  const int num_branches = t.num_branches();
  const double inv_t = 1.0 / t.temperature;

  if (gram_path_) {
    Vector v(num_branches * n0);
    for (int l = 0; l < num_branches; ++l) {
      Eigen::Map<const Matrix> w(theta.data() + l * block, n0, n);
      v.segment(l * n0, n0).noalias() = w * theta.segment(l * block + n0 * n, n);
    }
    const Vector gv = gram_ * v;
    const double c = scale_;
    const double sq_error =
        std::max(0.0, c * c * v.dot(gv) - 2.0 * c * v.dot(projected_) + label_energy_);
    if (gradient != nullptr) {
      const Vector g = (c * c * gv - c * projected_) * inv_t;
      for (int l = 0; l < num_branches; ++l) {
        Eigen::Map<const Matrix> w(theta.data() + l * block, n0, n);
        const auto a = theta.segment(l * block + n0 * n, n);
        const auto g_l = g.segment(l * n0, n0);
        Eigen::Map<Matrix>(gradient->data() + l * block, n0, n).noalias() +=
            g_l * a.transpose();
        gradient->segment(l * block + n0 * n, n).noalias() += w.transpose() * g_l;
      }
    }
    return 0.5 * inv_t * sq_error;
  }

  const double out_scale = 1.0 / std::sqrt(static_cast<double>(num_branches) *
                                           static_cast<double>(n));
  const double in_scale = 1.0 / std::sqrt(static_cast<double>(n0));
  std::vector<Matrix> act(static_cast<std::size_t>(num_branches));
  Vector f = Vector::Zero(p);
  for (int l = 0; l < num_branches; ++l) {
    const auto li = static_cast<std::size_t>(l);
    Eigen::Map<const Matrix> w(theta.data() + l * block, n0, n);
    act[li] = in_scale * (t.train_inputs[li] * w);
    if (t.kinds[li] == BranchKind::kRelu) act[li] = act[li].cwiseMax(0.0);
    f.noalias() += out_scale * (act[li] * theta.segment(l * block + n0 * n, n));
  }
  const Vector err = f - t.train_labels;
  if (gradient != nullptr) {
    const Vector df = err * inv_t;
    for (int l = 0; l < num_branches; ++l) {
      const auto li = static_cast<std::size_t>(l);
      const auto a = theta.segment(l * block + n0 * n, n);
      gradient->segment(l * block + n0 * n, n).noalias() +=
          out_scale * (act[li].transpose() * df);
      Matrix d_pre = out_scale * (df * a.transpose());
      if (t.kinds[li] == BranchKind::kRelu)
        d_pre = d_pre.cwiseProduct((act[li].array() > 0.0).cast<double>().matrix());
      Eigen::Map<Matrix>(gradient->data() + l * block, n0, n).noalias() +=
          in_scale * (t.train_inputs[li].transpose() * d_pre);
    }
  }
  return 0.5 * inv_t * err.squaredNorm();
}

PotentialResult Potential::operator()(const Vector& theta) const {
  PotentialResult out;
  const double inv_s2 = 1.0 / target_.prior_variance;
  out.gradient = inv_s2 * theta;
  out.value = 0.5 * inv_s2 * theta.squaredNorm() + likelihood(theta, &out.gradient);
  return out;
}

double Potential::value(const Vector& theta) const {
  return 0.5 / target_.prior_variance * theta.squaredNorm() +
         likelihood(theta, nullptr);
}

double Potential::training_mse(const Vector& theta) const {
  const Index p = target_.train_labels.size();
  if (p == 0) return 0.0;
  const NetworkParams params = unflatten(theta, target_);
  const ForwardResult fwd = forward(params, target_.train_inputs);
  return (fwd.output - target_.train_labels).squaredNorm() / static_cast<double>(p);
}

PotentialResult potential(const NetworkParams& params, const HmcTarget& target) {
  return Potential(target)(flatten(params));
}

void HmcConfig::validate() const {
  if (step_size < 0.0) throw std::invalid_argument("hmc: step_size must be > 0");
  if (leapfrog_steps < 1) throw std::invalid_argument("hmc: leapfrog_steps must be >= 1");
  if (num_chains < 1) throw std::invalid_argument("hmc: num_chains must be >= 1");
  if (warmup_samples < 0) throw std::invalid_argument("hmc: warmup_samples must be >= 0");
  if (kept_samples < 1) throw std::invalid_argument("hmc: kept_samples must be >= 1");
  if (thinning < 1) throw std::invalid_argument("hmc: thinning must be >= 1");
  if (init_descent_steps < 0)
    throw std::invalid_argument("hmc: init_descent_steps must be >= 0");
}

HmcChain sample_chain(const HmcConfig& cfg, const HmcTarget& target,
                      int chain_index, std::optional<Vector> initial) {
  cfg.validate();
  const Potential pot(target);
  CounterRng rng(cfg.seed, static_cast<std::uint64_t>(chain_index) + 1);
  const Index dim = target.num_parameters();
  const Index n0 = target.input_dim(), n = target.width;
  const Index block = n0 * n + n;
  const int num_branches = target.num_branches();

  Vector theta = initial ? *initial : rng.normal_vector(dim, target.prior_variance);
  if (theta.size() != dim)
    throw std::invalid_argument("hmc: initial state has wrong dimension");
  HmcChain chain;
  chain.step_size = cfg.step_size > 0.0 ? cfg.step_size : 0.01 * std::sqrt(target.temperature);

  const double typical_likelihood = static_cast<double>(target.train_labels.size());
  if (!initial && cfg.init_descent_steps > 0) {
    double rate = chain.step_size * chain.step_size;
    PotentialResult state = pot(theta);
    for (int i = 0; i < cfg.init_descent_steps &&
                    pot.likelihood_energy(theta) > typical_likelihood;
         ++i) {
      Vector next = theta - rate * state.gradient;
      PotentialResult next_state = pot(next);
      if (!(next_state.value < state.value)) {
        rate *= 0.5;
        continue;
      }
      theta = std::move(next);
      state = std::move(next_state);
      rate *= 1.2;
    }
  }
  PotentialResult current = pot(theta);
  chain.branch_norms.resize(cfg.kept_samples, num_branches);
  chain.training_loss.resize(cfg.kept_samples);
  chain.potential.resize(cfg.kept_samples);
  const bool record_test = !target.test_inputs.empty();
  if (record_test)
    chain.test_predictions.assign(
        static_cast<std::size_t>(num_branches),
        Matrix(cfg.kept_samples, target.test_inputs.front().rows()));

  std::vector<double> energy_errors;
  long accepted = 0, proposals = 0;
  long warm_accepted = 0, warm_proposals = 0;
  bool halved = false;

  auto trajectory = [&]() -> bool {
    Vector momentum = rng.normal_vector(dim);
    const double h0 = current.value + 0.5 * momentum.squaredNorm();
    Vector q = theta;
    PotentialResult state = current;
    const double eps = chain.step_size;
    momentum -= 0.5 * eps * state.gradient;
    bool finite = true;
    for (int s = 0; s < cfg.leapfrog_steps; ++s) {
      q += eps * momentum;
      state = pot(q);
      if (!std::isfinite(state.value)) {
        finite = false;
        break;
      }
      if (s + 1 < cfg.leapfrog_steps) momentum -= eps * state.gradient;
    }
    double delta = std::numeric_limits<double>::infinity();
    if (finite) {
      momentum -= 0.5 * eps * state.gradient;
      delta = state.value + 0.5 * momentum.squaredNorm() - h0;
    }
    if (!std::isfinite(delta) || std::abs(delta) > cfg.divergence_threshold) {
      ++chain.divergences;
      return false;
    }
    energy_errors.push_back(std::abs(delta));
    if (delta <= 0.0 || rng.uniform() < std::exp(-delta)) {
      theta = std::move(q);
      current = std::move(state);
      return true;
    }
    return false;
  };

  for (int i = 0; i < cfg.warmup_samples; ++i) {
    ++warm_proposals;
    if (trajectory()) ++warm_accepted;
    if (cfg.adapt_step && !halved && i + 1 == cfg.warmup_samples / 2) {
      if (static_cast<double>(warm_accepted) < 0.4 * static_cast<double>(warm_proposals))
        chain.step_size *= 0.5;
      halved = true;
    }
  }
  energy_errors.clear();

  for (int k = 0; k < cfg.kept_samples; ++k) {
    for (int j = 0; j < cfg.thinning; ++j) {
      ++proposals;
      if (trajectory()) ++accepted;
    }
    for (int l = 0; l < num_branches; ++l)
      chain.branch_norms(k, l) =
          theta.segment(l * block + n0 * n, n).squaredNorm() / static_cast<double>(n);
    chain.training_loss(k) = pot.training_mse(theta);
    chain.potential(k) = current.value;
    if (cfg.keep_parameters) chain.parameters.push_back(theta);
    if (record_test) {
      const ForwardResult fwd = forward(unflatten(theta, target), target.test_inputs);
      for (int l = 0; l < num_branches; ++l)
        chain.test_predictions[static_cast<std::size_t>(l)].row(k) =
            fwd.branches[static_cast<std::size_t>(l)].transpose();
    }
  }

  chain.acceptance_rate =
      proposals > 0 ? static_cast<double>(accepted) / static_cast<double>(proposals) : 0.0;
  if (!energy_errors.empty()) {
    auto mid = energy_errors.begin() + static_cast<long>(energy_errors.size() / 2);
    std::nth_element(energy_errors.begin(), mid, energy_errors.end());
    chain.median_energy_error = *mid;
  }
  chain.norm_ess.resize(num_branches);
  for (int l = 0; l < num_branches; ++l) {
    const Vector series = chain.branch_norms.col(l);
    const MeanEstimate est = batch_means(std::span<const Vector>(&series, 1));
    const double centered_var =
        (series.array() - series.mean()).square().sum() /
        std::max<double>(1.0, static_cast<double>(series.size() - 1));
    chain.norm_ess(l) = est.std_error > 0.0 ? centered_var / (est.std_error * est.std_error)
                                             : static_cast<double>(series.size());
  }
  return chain;
}

std::vector<HmcChain> sample(const HmcConfig& cfg, const HmcTarget& target) {
  cfg.validate();
  std::vector<HmcChain> chains(static_cast<std::size_t>(cfg.num_chains));
  const int workers = std::clamp(cfg.threads, 1, cfg.num_chains);
  if (workers == 1) {
    for (int c = 0; c < cfg.num_chains; ++c)
      chains[static_cast<std::size_t>(c)] = sample_chain(cfg, target, c);
    return chains;
  }
  std::atomic<int> next{0};
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(cfg.num_chains));
  {
    std::vector<std::jthread> pool;
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (int c = next++; c < cfg.num_chains; c = next++) {
          try {
            chains[static_cast<std::size_t>(c)] = sample_chain(cfg, target, c);
          } catch (...) {
            errors[static_cast<std::size_t>(c)] = std::current_exception();
          }
        }
      });
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return chains;
}

MeanEstimate batch_means(std::span<const Vector> series, int batches_per_chain) {
  std::vector<double> means;
  double total = 0.0;
  Index count = 0;
  for (const Vector& s : series) {
    total += s.sum();
    count += s.size();
    const Index batch = s.size() / batches_per_chain;
    if (batch == 0) continue;
    for (int b = 0; b < batches_per_chain; ++b)
      means.push_back(s.segment(b * batch, batch).mean());
  }
  MeanEstimate out;
  if (count == 0) return out;
  out.mean = total / static_cast<double>(count);
  if (means.size() < 2) return out;
  double mm = 0.0;
  for (double m : means) mm += m;
  mm /= static_cast<double>(means.size());
  double ss = 0.0;
  for (double m : means) ss += (m - mm) * (m - mm);
  const double b = static_cast<double>(means.size());
  out.std_error = std::sqrt(ss / (b - 1.0) / b);
  return out;
}

std::vector<MeanEstimate> estimate_norms(std::span<const HmcChain> chains) {
  if (chains.empty()) throw std::invalid_argument("estimate_norms: no chains");
  Index total = 0;
  for (const auto& c : chains) total += c.num_samples();
  if (total < 100)
    throw std::invalid_argument("estimate_norms: need at least 100 kept samples, got " +
                                std::to_string(total));
  const Index num_branches = chains.front().branch_norms.cols();
  std::vector<MeanEstimate> out;
  for (Index l = 0; l < num_branches; ++l) {
    std::vector<Vector> series;
    for (const auto& c : chains) series.push_back(c.branch_norms.col(l));
    out.push_back(batch_means(series));
  }
  return out;
}

namespace {

// Batch summaries of a (samples x t) prediction matrix.
struct BatchMoments {
  std::vector<Vector> mean;    // per batch, length t
  std::vector<Vector> second;  // per batch, E[f^2]
};

void append_batches(const Matrix& predictions, int batches, BatchMoments& out) {
  const Index batch = predictions.rows() / batches;
  if (batch == 0) return;
  for (int b = 0; b < batches; ++b) {
    const auto rows = predictions.middleRows(b * batch, batch);
    out.mean.push_back(rows.colwise().mean().transpose());
    out.second.push_back(rows.array().square().colwise().mean().transpose());
  }
}

struct JackknifeResult {
  MeanEstimate bias;
  MeanEstimate variance;
  MeanEstimate generalization;
  Vector mean;
  Vector node_variance;
};

// Bias uses the cross-batch product sum_{b != c} (m_b - y)^T (m_c - y), whose
// expectation is |<f> - y|^2 when batches are independent.
JackknifeResult jackknife(const BatchMoments& moments, const Vector& targets) {
  const std::size_t nb = moments.mean.size();
  if (nb < 3) throw std::invalid_argument("estimate_predictor: too few samples for batching");
  const double t = static_cast<double>(targets.size());
  Vector sum_dev = Vector::Zero(targets.size());
  Vector sum_mean = Vector::Zero(targets.size());
  Vector sum_second = Vector::Zero(targets.size());
  double sum_sq = 0.0;
  std::vector<Vector> dev(nb);
  for (std::size_t b = 0; b < nb; ++b) {
    dev[b] = moments.mean[b] - targets;
    sum_dev += dev[b];
    sum_mean += moments.mean[b];
    sum_second += moments.second[b];
    sum_sq += dev[b].squaredNorm();
  }
  auto stats = [&](const Vector& sdev, const Vector& smean, const Vector& ssecond,
                   double ssq, double count) {
    const double bias = (sdev.squaredNorm() - ssq) / (count * (count - 1.0)) / t;
    const Vector m = smean / count;
    const double var = ((ssecond / count).array() - m.array().square()).sum() / t;
    return std::pair{bias, var};
  };
  const double nbd = static_cast<double>(nb);
  const auto [bias_all, var_all] = stats(sum_dev, sum_mean, sum_second, sum_sq, nbd);
  std::vector<double> jb(nb), jv(nb);
  for (std::size_t b = 0; b < nb; ++b) {
    const auto [bb, vv] = stats(sum_dev - dev[b], sum_mean - moments.mean[b],
                                sum_second - moments.second[b],
                                sum_sq - dev[b].squaredNorm(), nbd - 1.0);
    jb[b] = bb;
    jv[b] = vv;
  }
  auto jack_se = [&](const std::vector<double>& xs) {
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= nbd;
    double ss = 0.0;
    for (double x : xs) ss += (x - mean) * (x - mean);
    return std::sqrt((nbd - 1.0) / nbd * ss);
  };
  std::vector<double> jg(nb);
  for (std::size_t b = 0; b < nb; ++b) jg[b] = jb[b] + jv[b];
  JackknifeResult out;
  out.bias = {bias_all, jack_se(jb)};
  out.variance = {var_all, jack_se(jv)};
  out.generalization = {bias_all + var_all, jack_se(jg)};
  out.mean = sum_mean / nbd;
  out.node_variance = ((sum_second / nbd).array() - out.mean.array().square()).matrix();
  return out;
}

}  // namespace

PredictorEstimate estimate_predictor(std::span<const HmcChain> chains,
                                     const Vector& targets,
                                     const std::vector<Vector>* branch_targets,
                                     const HmcTarget* target,
                                     const std::vector<Matrix>* test_inputs) {
  if (chains.empty()) throw std::invalid_argument("estimate_predictor: no chains");
  constexpr int kBatches = 20;
  std::vector<std::vector<Matrix>> per_chain;  // chain -> branch -> kept x t
  for (const auto& c : chains) {
    if (test_inputs != nullptr) {
      if (target == nullptr || c.parameters.empty())
        throw std::invalid_argument(
            "estimate_predictor: stored parameters and the target are needed to "
            "evaluate new test inputs");
      const Index t = test_inputs->front().rows();
      std::vector<Matrix> preds(test_inputs->size(),
                                Matrix(static_cast<Index>(c.parameters.size()), t));
      for (std::size_t k = 0; k < c.parameters.size(); ++k) {
        const ForwardResult fwd = forward(unflatten(c.parameters[k], *target), *test_inputs);
        for (std::size_t l = 0; l < preds.size(); ++l)
          preds[l].row(static_cast<Index>(k)) = fwd.branches[l].transpose();
      }
      per_chain.push_back(std::move(preds));
    } else {
      if (c.test_predictions.empty())
        throw std::invalid_argument("estimate_predictor: chain has no recorded test predictions");
      per_chain.push_back(c.test_predictions);
    }
  }
  Index total = 0;
  for (const auto& c : per_chain) total += c.front().rows();
  if (total < 100)
    throw std::invalid_argument("estimate_predictor: need at least 100 kept samples");
  for (const auto& c : per_chain)
    if (c.front().cols() != targets.size())
      throw std::invalid_argument("estimate_predictor: targets do not match test nodes");

  BatchMoments overall;
  for (const auto& c : per_chain) {
    Matrix sum = c.front();
    for (std::size_t l = 1; l < c.size(); ++l) sum += c[l];
    append_batches(sum, kBatches, overall);
  }
  const JackknifeResult all = jackknife(overall, targets);
  PredictorEstimate out;
  out.mean = all.mean;
  out.variance = all.node_variance;
  out.bias = all.bias;
  out.variance_avg = all.variance;
  out.generalization = all.generalization;

  if (branch_targets != nullptr) {
    const std::size_t num_branches = per_chain.front().size();
    if (branch_targets->size() != num_branches)
      throw std::invalid_argument("estimate_predictor: one target per branch");
    for (std::size_t l = 0; l < num_branches; ++l) {
      BatchMoments moments;
      for (const auto& c : per_chain) append_batches(c[l], kBatches, moments);
      const JackknifeResult br = jackknife(moments, (*branch_targets)[l]);
      out.branch_bias.push_back(br.bias);
      out.branch_variance.push_back(br.variance);
    }
  }
  return out;
}

}  // namespace bpbnn
