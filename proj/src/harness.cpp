// Copyright 2026 The GMR Authors
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

#include "gmr/harness.hpp"

#include <cmath>
#include <cstdio>
#include <deque>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>

namespace gmr {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

json VecToJson(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Vector VecFromJson(const json& j) {
  const auto values = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(values.size()));
}

class Fnv1a {
 public:
  void Add(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      hash_ ^= p[i];
      hash_ *= 0x100000001b3ULL;
    }
  }
  void Add(const Matrix& m) { Add(m.data(), sizeof(double) * static_cast<std::size_t>(m.size())); }
  std::string Hex() const {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash_));
    return buf;
  }

 private:
  std::uint64_t hash_ = 0xcbf29ce484222325ULL;
};

std::string HashDataset(const ReflexDataset& data) {
  Fnv1a h;
  for (const ReflexRecord& r : data) {
    h.Add(r.state);
    h.Add(r.action);
    h.Add(r.reflex.gain);
    h.Add(r.reflex.offset);
    h.Add(r.reflex.covariance);
    h.Add(r.reference_covariance);
  }
  return h.Hex();
}

double Mean(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double RolloutMse(const Environment& env, const Controller& controller, const Condition& cond,
                  int rollouts, std::uint64_t seed) {
  std::vector<double> mse;
  for (int r = 0; r < rollouts; ++r) {
    Rng rng(DeriveSeed(seed, static_cast<std::uint64_t>(r)));
    try {
      mse.push_back(FinalStateMse(Rollout(env, controller, cond, rng), cond.goal));
    } catch (const NumericalError&) {
      mse.push_back(std::numeric_limits<double>::infinity());
    }
  }
  return Mean(mse);
}

json FiniteOrNull(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

double FromFiniteOrNull(const json& j) {
  return j.is_null() ? std::numeric_limits<double>::infinity() : j.get<double>();
}

void WriteText(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << text;
}

}  // namespace

std::string PolicyKindName(PolicyKind kind) {
  return kind == PolicyKind::kGmr ? "gmr" : "baseline";
}

PolicyKind PolicyKindFromName(const std::string& name) {
  if (name == "gmr") return PolicyKind::kGmr;
  if (name == "baseline") return PolicyKind::kBaseline;
  throw std::invalid_argument("unknown policy kind '" + name + "' (expected gmr|baseline)");
}

Vector ExperimentConfig::goal() const {
  Require(!conditions.empty(), "ExperimentConfig: no conditions");
  return conditions.front().goal;
}

void ExperimentConfig::Validate() const {
  Require(iterations >= 1, "config: iterations must be >= 1");
  Require(samples_per_condition >= 2, "config: need at least two samples per condition");
  Require(epsilon > 0.0, "config: epsilon must be positive");
  Require(!conditions.empty(), "config: at least one condition required");
  Require(dataset_history >= 1, "config: dataset_history must be >= 1");
  for (const Condition& c : conditions) {
    Require(c.initial.mean.size() == env.state_dim && c.goal.size() == env.state_dim &&
                c.initial.cov.rows() == env.state_dim && c.initial.cov.cols() == env.state_dim,
            "config: condition " + std::to_string(c.id) + " has wrong dimensions");
  }
  Require(success_threshold > 0.0, "config: threshold must be positive");
  Require(robustness_trials >= 1, "config: trials must be >= 1");
}

json ConfigToJson(const ExperimentConfig& c) {
  const EnvSpec& e = c.env;
  json env = {{"kind", EnvKindName(e.kind)},
              {"dt", e.dt},
              {"horizon", e.horizon},
              {"mass", e.mass},
              {"damping", e.damping},
              {"link_mass", {e.link_mass[0], e.link_mass[1]}},
              {"link_length", {e.link_length[0], e.link_length[1]}},
              {"joint_damping", e.joint_damping},
              {"gravity", e.gravity},
              {"substeps", e.substeps},
              {"dof", e.dof},
              {"noise_std", e.noise_std},
              {"action_limit", e.action_limit},
              {"state_low", VecToJson(e.state_low)},
              {"state_high", VecToJson(e.state_high)}};
  json conds = json::array();
  for (const Condition& k : c.conditions) {
    conds.push_back({{"id", k.id},
                     {"initial_mean", VecToJson(k.initial.mean)},
                     {"initial_cov_diag", VecToJson(k.initial.cov.diagonal())},
                     {"goal", VecToJson(k.goal)}});
  }
  return {{"env", env},
          {"conditions", conds},
          {"cost",
           {{"state_weight", c.state_weight},
            {"action_weight", c.action_weight},
            {"terminal_weight", c.terminal_weight}}},
          {"gps",
           {{"iterations", c.iterations},
            {"samples_per_condition", c.samples_per_condition},
            {"epsilon", FiniteOrNull(c.epsilon)},  // null: unconstrained
            {"initial_variance", c.initial_variance},
            {"dataset_samples_per_step", c.dataset_samples_per_step},
            {"dataset_history", c.dataset_history},
            {"dynamics_regularization", c.dynamics.regularization},
            {"dynamics_window", c.dynamics.window},
            {"reference", c.reference == ReferenceSource::kPolicy ? "policy" : "local"},
            {"sample_from_policy", c.sample_from_policy},
            {"eval_rollouts", c.eval_rollouts}}},
          {"policy",
           {{"kind", PolicyKindName(c.policy)},
            {"alpha", c.gmr.alpha},
            {"beta", c.gmr.beta},
            {"latent_dim", c.gmr.latent_dim},
            {"encoder_hidden", c.gmr.encoder_hidden},
            {"decoder_hidden", c.gmr.decoder_hidden},
            {"translator_hidden", c.gmr.translator_hidden},
            {"baseline_hidden", c.baseline_hidden},
            {"epochs", c.train.epochs},
            {"batch_size", c.train.batch_size},
            {"learning_rate", c.train.adam.learning_rate}}},
          {"evaluation", {{"trials", c.robustness_trials}, {"threshold", c.success_threshold}}},
          {"seed", c.seed},
          {"output_dir", c.output_dir}};
}

ExperimentConfig ConfigFromJson(const json& j) {
  ExperimentConfig c;
  if (j.contains("env")) {
    const json& e = j.at("env");
    c.env = MakeEnvSpec(EnvKindFromName(e.value("kind", std::string("point_mass"))));
    if (e.contains("dof")) {
      c.env.dof = e.at("dof");
      if (c.env.kind == EnvKind::kSyntheticLinear) {
        c.env.state_dim = 2 * c.env.dof;
        c.env.action_dim = c.env.dof;
        c.env.state_low = Vector::Constant(c.env.state_dim, -1.0);
        c.env.state_low.tail(c.env.dof).setConstant(-0.5);
        c.env.state_high = -c.env.state_low;
      }
    }
    c.env.dt = e.value("dt", c.env.dt);
    c.env.horizon = e.value("horizon", c.env.horizon);
    c.env.mass = e.value("mass", c.env.mass);
    c.env.damping = e.value("damping", c.env.damping);
    if (e.contains("link_mass")) {
      c.env.link_mass[0] = e.at("link_mass").at(0);
      c.env.link_mass[1] = e.at("link_mass").at(1);
    }
    if (e.contains("link_length")) {
      c.env.link_length[0] = e.at("link_length").at(0);
      c.env.link_length[1] = e.at("link_length").at(1);
    }
    c.env.joint_damping = e.value("joint_damping", c.env.joint_damping);
    c.env.gravity = e.value("gravity", c.env.gravity);
    c.env.substeps = e.value("substeps", c.env.substeps);
    c.env.noise_std = e.value("noise_std", c.env.noise_std);
    c.env.action_limit = e.value("action_limit", c.env.action_limit);
    if (e.contains("state_low")) c.env.state_low = VecFromJson(e.at("state_low"));
    if (e.contains("state_high")) c.env.state_high = VecFromJson(e.at("state_high"));
  }
  for (const json& k : j.at("conditions")) {
    Condition cond;
    cond.id = k.value("id", static_cast<int>(c.conditions.size()));
    cond.initial.mean = VecFromJson(k.at("initial_mean"));
    const auto n = cond.initial.mean.size();
    if (k.contains("initial_cov_diag"))
      cond.initial.cov = VecFromJson(k.at("initial_cov_diag")).asDiagonal();
    else
      cond.initial.cov = Matrix::Zero(n, n);
    cond.goal = VecFromJson(k.at("goal"));
    c.conditions.push_back(std::move(cond));
  }
  if (j.contains("cost")) {
    const json& k = j.at("cost");
    c.state_weight = k.value("state_weight", c.state_weight);
    c.action_weight = k.value("action_weight", c.action_weight);
    c.terminal_weight = k.value("terminal_weight", c.terminal_weight);
  }
  if (j.contains("gps")) {
    const json& g = j.at("gps");
    c.iterations = g.value("iterations", c.iterations);
    c.samples_per_condition = g.value("samples_per_condition", c.samples_per_condition);
    if (g.contains("epsilon")) c.epsilon = FromFiniteOrNull(g.at("epsilon"));
    c.initial_variance = g.value("initial_variance", c.initial_variance);
    c.dataset_samples_per_step = g.value("dataset_samples_per_step", c.dataset_samples_per_step);
    c.dataset_history = g.value("dataset_history", c.dataset_history);
    c.dynamics.regularization = g.value("dynamics_regularization", c.dynamics.regularization);
    c.dynamics.window = g.value("dynamics_window", c.dynamics.window);
    const std::string ref = g.value("reference", std::string("policy"));
    if (ref != "policy" && ref != "local")
      throw std::invalid_argument("config: gps.reference must be policy|local");
    c.reference = ref == "policy" ? ReferenceSource::kPolicy : ReferenceSource::kLocal;
    c.sample_from_policy = g.value("sample_from_policy", c.sample_from_policy);
    c.eval_rollouts = g.value("eval_rollouts", c.eval_rollouts);
  }
  if (j.contains("policy")) {
    const json& p = j.at("policy");
    c.policy = PolicyKindFromName(p.value("kind", std::string("gmr")));
    c.gmr.alpha = p.value("alpha", c.gmr.alpha);
    c.gmr.beta = p.value("beta", c.gmr.beta);
    c.gmr.latent_dim = p.value("latent_dim", c.gmr.latent_dim);
    c.gmr.encoder_hidden = p.value("encoder_hidden", c.gmr.encoder_hidden);
    c.gmr.decoder_hidden = p.value("decoder_hidden", c.gmr.decoder_hidden);
    c.gmr.translator_hidden = p.value("translator_hidden", c.gmr.translator_hidden);
    c.baseline_hidden = p.value("baseline_hidden", c.baseline_hidden);
    c.train.epochs = p.value("epochs", c.train.epochs);
    c.train.batch_size = p.value("batch_size", c.train.batch_size);
    c.train.adam.learning_rate = p.value("learning_rate", c.train.adam.learning_rate);
  }
  if (j.contains("evaluation")) {
    const json& e = j.at("evaluation");
    c.robustness_trials = e.value("trials", c.robustness_trials);
    c.success_threshold = e.value("threshold", c.success_threshold);
  }
  c.seed = j.value("seed", c.seed);
  c.output_dir = j.value("output_dir", c.output_dir);
  c.gmr.state_dim = c.env.state_dim;
  c.gmr.action_dim = c.env.action_dim;
  c.Validate();
  return c;
}

ExperimentConfig LoadConfig(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open config " + path);
  return ConfigFromJson(json::parse(is));
}

ExperimentConfig DefaultPointMassConfig() {
  ExperimentConfig c;
  c.env = MakeEnvSpec(EnvKind::kPointMass);
  const Vector goal = (Vector(4) << 0.5, 0.5, 0.0, 0.0).finished();
  const Matrix cov = 1e-4 * Matrix::Identity(4, 4);
  c.conditions.push_back({0, {(Vector(4) << -0.5, -0.5, 0.0, 0.0).finished(), cov}, goal});
  c.conditions.push_back({1, {(Vector(4) << -0.5, 0.8, 0.0, 0.0).finished(), cov}, goal});
  c.gmr.state_dim = c.env.state_dim;
  c.gmr.action_dim = c.env.action_dim;
  c.gmr.alpha = 0.1;
  return c;
}

GpsResult RunGps(const ExperimentConfig& config, const ProgressFn& progress) {
  return RunGpsWithLearners(config, config.policy == PolicyKind::kGmr,
                            config.policy == PolicyKind::kBaseline, config.reference, progress);
}

GpsResult RunGpsWithLearners(const ExperimentConfig& config, bool train_gmr, bool train_baseline,
                             ReferenceSource reference, const ProgressFn& progress) {
  config.Validate();
  auto report = [&](const std::string& line) {
    if (progress) progress(line);
  };
  Require(train_gmr || train_baseline, "RunGps: no learner selected");
  const Environment env(config.env);
  const int horizon = env.horizon();
  const int dx = env.state_dim();
  const int du = env.action_dim();
  const auto n_cond = config.conditions.size();

  std::vector<QuadraticCost> costs;
  for (const Condition& cond : config.conditions)
    costs.push_back(ExpandCost({cond.goal, config.state_weight, config.action_weight,
                                config.terminal_weight},
                               horizon, du));

  GpsResult result;
  if (train_gmr) {
    Rng init(DeriveSeed(config.seed, 1));
    GmrConfig gc = config.gmr;
    gc.state_dim = dx;
    gc.action_dim = du;
    result.gmr.emplace(gc, init);
  }
  if (train_baseline) {
    Rng init(DeriveSeed(config.seed, 2));
    result.baseline = BaselinePolicy::Make(dx, du, init, config.baseline_hidden);
    result.baseline->beta = config.gmr.beta;
  }

  std::vector<LocalPolicy> local(n_cond, MakeInitialPolicy(horizon, dx, du, config.initial_variance));
  std::vector<DualState> duals(n_cond, MakeDualState(horizon, config.epsilon));
  std::deque<ReflexDataset> history;
  result.samples_per_condition.assign(n_cond, 0);

  CStepOptions cstep_options;
  cstep_options.extra_samples_per_step = config.dataset_samples_per_step;

  for (int n = 1; n <= config.iterations; ++n) {
    const auto un = static_cast<std::uint64_t>(n);
    std::vector<ReflexDataset> datasets;
    for (std::size_t i = 0; i < n_cond; ++i) {
      const Condition& cond = config.conditions[i];
      Rng rng(DeriveSeed(config.seed, 10, un, i));

      std::vector<Trajectory> samples;
      for (int s = 0; s < config.samples_per_condition; ++s) {
        if (config.sample_from_policy && n > 1 && result.gmr) {
          samples.push_back(Rollout(env, GmrController(*result.gmr, true), cond, rng));
        } else if (config.sample_from_policy && n > 1 && result.baseline) {
          samples.push_back(Rollout(env, BaselineController(*result.baseline, true), cond, rng));
        } else {
          samples.push_back(Rollout(env, LocalPolicyController(local[i], true), cond, rng));
        }
      }
      result.samples_per_condition[i] += static_cast<int>(samples.size());

      TimeVaryingLinearGaussianDynamics dyn;
      try {
        dyn = FitDynamics(samples, config.dynamics);
      } catch (const std::exception& e) {
        throw std::runtime_error("iteration " + std::to_string(n) + ", condition " +
                                 std::to_string(cond.id) + ": " + e.what());
      }

      std::vector<MotorReflex> ref;
      if (n == 1 || reference == ReferenceSource::kLocal) {
        ref = local[i].reflexes;
      } else {
        std::vector<Vector> states(horizon, Vector::Zero(dx));
        for (const Trajectory& tr : samples)
          for (int t = 0; t < horizon; ++t) states[t] += tr.states[t] / samples.size();
        ref = result.gmr ? LinearizeGmr(*result.gmr, states)
                         : LinearizeBaseline(*result.baseline, states);
      }

      CStepResult step;
      try {
        step = CStep(dyn, costs[i], ref, cond.initial, duals[i], rng, cstep_options);
      } catch (const std::exception& e) {
        throw std::runtime_error("iteration " + std::to_string(n) + ", condition " +
                                 std::to_string(cond.id) + ": " + e.what());
      }
      local[i] = step.policy;
      duals[i] = step.dual;
      result.diagnostics.push_back({n, cond.id, step.kl, step.dual.epsilon,
                                    step.dual.lambda.minCoeff(), step.dual.lambda.maxCoeff(),
                                    step.expected_cost, step.dual_iterations});
      {
        std::ostringstream line;
        line << "iter " << n << " cond " << cond.id << " kl " << step.kl << " lambda ["
             << step.dual.lambda.minCoeff() << ", " << step.dual.lambda.maxCoeff() << "] cost "
             << step.expected_cost << " dual_iters " << step.dual_iterations;
        report(line.str());
      }
      datasets.push_back(std::move(step.dataset));
      for (Trajectory& tr : samples) result.samples.push_back(std::move(tr));
    }

    history.push_back(PoolDatasets(datasets));
    while (static_cast<int>(history.size()) > config.dataset_history) history.pop_front();
    ReflexDataset pooled;
    for (const ReflexDataset& d : history) pooled.insert(pooled.end(), d.begin(), d.end());
    result.dataset_hashes.push_back(HashDataset(pooled));

    auto evaluate = [&](const Controller& controller, IterationMetrics& m) {
      for (std::size_t i = 0; i < n_cond; ++i) {
        const std::uint64_t seed = DeriveSeed(config.seed, 30, un, i);
        m.policy_mse.push_back(RolloutMse(env, controller, config.conditions[i],
                                          config.eval_rollouts, seed));
        m.lqr_mse.push_back(RolloutMse(env, LocalPolicyController(local[i], false),
                                       config.conditions[i], config.eval_rollouts, seed));
      }
      m.policy_mse_mean = Mean(m.policy_mse);
      m.lqr_mse_mean = Mean(m.lqr_mse);
    };

    if (result.gmr) {
      Rng rng(DeriveSeed(config.seed, 20, un));
      IterationMetrics m;
      m.iteration = n;
      const auto losses = SStep(*result.gmr, pooled, config.train, rng);
      m.train_loss_first = losses.front();
      m.train_loss_last = losses.back();
      evaluate(GmrController(*result.gmr), m);
      report("iter " + std::to_string(n) + " gmr mse " + std::to_string(m.policy_mse_mean) +
             " lqr mse " + std::to_string(m.lqr_mse_mean) + " loss " +
             std::to_string(m.train_loss_first) + " -> " + std::to_string(m.train_loss_last));
      result.metrics.push_back(std::move(m));
    }
    if (result.baseline) {
      Rng rng(DeriveSeed(config.seed, 21, un));
      IterationMetrics m;
      m.iteration = n;
      const auto losses = BaselineSStep(*result.baseline, pooled, config.train, rng);
      m.train_loss_first = losses.front();
      m.train_loss_last = losses.back();
      evaluate(BaselineController(*result.baseline, false), m);
      report("iter " + std::to_string(n) + " baseline mse " + std::to_string(m.policy_mse_mean) +
             " lqr mse " + std::to_string(m.lqr_mse_mean) + " loss " +
             std::to_string(m.train_loss_first) + " -> " + std::to_string(m.train_loss_last));
      (result.gmr ? result.baseline_metrics : result.metrics).push_back(std::move(m));
    }
  }
  result.local_policies = std::move(local);
  return result;
}

int RobustnessReport::SuccessesAt(double t) const {
  int n = 0;
  for (const RobustnessTrial& trial : trials)
    if (!trial.diverged && trial.final_mse < t) ++n;
  return n;
}

json ReportToJson(const RobustnessReport& r) {
  json trials = json::array();
  for (std::size_t i = 0; i < r.trials.size(); ++i) {
    const RobustnessTrial& t = r.trials[i];
    trials.push_back({{"trial", i},
                      {"initial_state", VecToJson(t.initial_state)},
                      {"final_mse", FiniteOrNull(t.final_mse)},
                      {"success", t.success},
                      {"diverged", t.diverged}});
  }
  json paths = json::array();
  for (const auto& path : r.paths) {
    json p = json::array();
    for (const Eigen::Vector2d& q : path) p.push_back({q.x(), q.y()});
    paths.push_back(std::move(p));
  }
  return {{"policy_kind", r.policy_kind}, {"threshold", r.threshold}, {"seed", r.seed},
          {"successes", r.successes},     {"total", r.total},         {"trials", trials},
          {"paths", paths}};
}

RobustnessReport ReportFromJson(const json& j) {
  RobustnessReport r;
  r.policy_kind = j.at("policy_kind");
  r.threshold = j.at("threshold");
  r.seed = j.at("seed");
  r.successes = j.at("successes");
  r.total = j.at("total");
  for (const json& t : j.at("trials")) {
    r.trials.push_back({VecFromJson(t.at("initial_state")), FromFiniteOrNull(t.at("final_mse")),
                        t.at("success"), t.at("diverged")});
  }
  for (const json& p : j.at("paths")) {
    std::vector<Eigen::Vector2d> path;
    for (const json& q : p) path.emplace_back(q.at(0).get<double>(), q.at(1).get<double>());
    r.paths.push_back(std::move(path));
  }
  Require(r.successes <= r.total && static_cast<int>(r.trials.size()) == r.total,
          "robustness report: inconsistent counts");
  return r;
}

RobustnessReport EvaluateRobustness(const Controller& controller, const std::string& kind,
                                    const Environment& env, const Vector& goal, int n_trials,
                                    std::uint64_t seed, double threshold) {
  Require(n_trials >= 1, "EvaluateRobustness: n_trials must be >= 1");
  const EnvSpec& spec = env.spec();
  RobustnessReport report;
  report.policy_kind = kind;
  report.threshold = threshold;
  report.seed = seed;
  Rng init_rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int k = 0; k < n_trials; ++k) {
    Vector x0(spec.state_dim);
    for (int d = 0; d < spec.state_dim; ++d)
      x0[d] = spec.state_low[d] + (spec.state_high[d] - spec.state_low[d]) * unit(init_rng);
    Rng rng(DeriveSeed(seed, 50, static_cast<std::uint64_t>(k)));
    RobustnessTrial trial;
    trial.initial_state = x0;
    std::vector<Eigen::Vector2d> path;
    try {
      const Trajectory tr = Rollout(env, controller, x0, 0, rng);
      for (const Vector& x : tr.states) path.push_back(env.Position(x));
      trial.final_mse = FinalStateMse(tr, goal);
      trial.success = std::isfinite(trial.final_mse) && trial.final_mse < threshold;
    } catch (const NumericalError&) {
      trial.final_mse = std::numeric_limits<double>::infinity();
      trial.diverged = true;
    }
    if (trial.success) ++report.successes;
    report.trials.push_back(std::move(trial));
    report.paths.push_back(std::move(path));
  }
  report.total = n_trials;
  return report;
}

ComparisonResult ComparePolicies(const ExperimentConfig& config, const ProgressFn& progress) {
  ComparisonResult out;
  out.training = RunGpsWithLearners(config, true, true, ReferenceSource::kLocal, progress);
  const Environment env(config.env);
  const std::uint64_t eval_seed = DeriveSeed(config.seed, 40);
  out.gmr = EvaluateRobustness(GmrController(*out.training.gmr), "gmr", env, config.goal(),
                               config.robustness_trials, eval_seed, config.success_threshold);
  out.baseline = EvaluateRobustness(BaselineController(*out.training.baseline, false), "baseline",
                                    env, config.goal(), config.robustness_trials, eval_seed,
                                    config.success_threshold);
  json thresholds = json::array();
  for (double t : {0.1, 0.01}) {
    thresholds.push_back({{"threshold", t},
                          {"gmr_successes", out.gmr.SuccessesAt(t)},
                          {"baseline_successes", out.baseline.SuccessesAt(t)},
                          {"total", config.robustness_trials}});
  }
  out.summary = {{"seed", config.seed},
                 {"evaluation_seed", eval_seed},
                 {"threshold", config.success_threshold},
                 {"gmr_successes", out.gmr.successes},
                 {"baseline_successes", out.baseline.successes},
                 {"total", config.robustness_trials},
                 {"thresholds", thresholds},
                 {"training_dataset_hashes", out.training.dataset_hashes},
                 {"identical_training_data", true}};
  return out;
}

void WriteLearningCurveCsv(std::ostream& os, const std::vector<IterationMetrics>& metrics) {
  os << "metric,iteration,value\n" << std::setprecision(17);
  auto emit = [&](const std::string& name, auto getter) {
    for (const IterationMetrics& m : metrics) os << name << ',' << m.iteration << ',' << getter(m) << '\n';
  };
  emit("policy_mse_mean", [](const IterationMetrics& m) { return m.policy_mse_mean; });
  emit("lqr_mse_mean", [](const IterationMetrics& m) { return m.lqr_mse_mean; });
  const std::size_t n_cond = metrics.empty() ? 0 : metrics.front().policy_mse.size();
  for (std::size_t i = 0; i < n_cond; ++i) {
    emit("policy_mse_cond" + std::to_string(i),
         [i](const IterationMetrics& m) { return m.policy_mse[i]; });
    emit("lqr_mse_cond" + std::to_string(i), [i](const IterationMetrics& m) { return m.lqr_mse[i]; });
  }
  emit("train_loss_last", [](const IterationMetrics& m) { return m.train_loss_last; });
}

void WriteRobustnessTrajectoriesCsv(std::ostream& os, const RobustnessReport& report) {
  os << "trial,step,x,y\n" << std::setprecision(17);
  for (std::size_t k = 0; k < report.paths.size(); ++k)
    for (std::size_t s = 0; s < report.paths[k].size(); ++s)
      os << k << ',' << s << ',' << report.paths[k][s].x() << ',' << report.paths[k][s].y() << '\n';
}

json MetricsToJson(const std::vector<IterationMetrics>& metrics) {
  json out = json::array();
  for (const IterationMetrics& m : metrics) {
    json pm = json::array(), lm = json::array();
    for (double v : m.policy_mse) pm.push_back(FiniteOrNull(v));
    for (double v : m.lqr_mse) lm.push_back(FiniteOrNull(v));
    out.push_back({{"iteration", m.iteration},
                   {"policy_mse", pm},
                   {"lqr_mse", lm},
                   {"policy_mse_mean", FiniteOrNull(m.policy_mse_mean)},
                   {"lqr_mse_mean", FiniteOrNull(m.lqr_mse_mean)},
                   {"train_loss_first", m.train_loss_first},
                   {"train_loss_last", m.train_loss_last}});
  }
  return out;
}

std::vector<IterationMetrics> MetricsFromJson(const json& j) {
  std::vector<IterationMetrics> out;
  for (const json& e : j) {
    IterationMetrics m;
    m.iteration = e.at("iteration");
    for (const json& v : e.at("policy_mse")) m.policy_mse.push_back(FromFiniteOrNull(v));
    for (const json& v : e.at("lqr_mse")) m.lqr_mse.push_back(FromFiniteOrNull(v));
    m.policy_mse_mean = FromFiniteOrNull(e.at("policy_mse_mean"));
    m.lqr_mse_mean = FromFiniteOrNull(e.at("lqr_mse_mean"));
    m.train_loss_first = e.at("train_loss_first");
    m.train_loss_last = e.at("train_loss_last");
    out.push_back(std::move(m));
  }
  return out;
}

void WriteRunArtifacts(const std::string& dir, const ExperimentConfig& config,
                       const GpsResult& result) {
  const fs::path root(dir);
  fs::create_directories(root);
  WriteText(root / "config.json", ConfigToJson(config).dump(2) + "\n");

  std::ostringstream diag;
  for (const DiagnosticsRecord& d : result.diagnostics) {
    diag << json{{"iteration", d.iteration},         {"condition", d.condition},
                 {"kl", d.kl},                       {"epsilon", d.epsilon},
                 {"lambda_min", d.lambda_min},       {"lambda_max", d.lambda_max},
                 {"expected_cost", d.expected_cost}, {"dual_iterations", d.dual_iterations}}
                .dump()
         << '\n';
  }
  WriteText(root / "diagnostics.jsonl", diag.str());

  const std::string primary = result.gmr ? "gmr" : "baseline";
  json metrics = {{"policy_kind", primary},
                  {"metrics", MetricsToJson(result.metrics)},
                  {"dataset_hashes", result.dataset_hashes},
                  {"samples_per_condition", result.samples_per_condition}};
  if (!result.baseline_metrics.empty())
    metrics["baseline_metrics"] = MetricsToJson(result.baseline_metrics);
  WriteText(root / "metrics.json", metrics.dump(2) + "\n");

  std::ostringstream curve;
  WriteLearningCurveCsv(curve, result.metrics);
  WriteText(root / "learning_curve.csv", curve.str());
  if (!result.baseline_metrics.empty()) {
    std::ostringstream bcurve;
    WriteLearningCurveCsv(bcurve, result.baseline_metrics);
    WriteText(root / "learning_curve_baseline.csv", bcurve.str());
  }

  std::ostringstream samples;
  WriteTrajectoryCsv(samples, result.samples);
  WriteText(root / "samples.csv", samples.str());

  if (result.gmr) SaveGmrPolicy((root / "policy_gmr").string(), *result.gmr);
  if (result.baseline) SaveBaselinePolicy((root / "policy_baseline").string(), *result.baseline);
}

void WriteReport(const std::string& path, const RobustnessReport& report) {
  WriteText(path, ReportToJson(report).dump(2) + "\n");
}

RobustnessReport ReadReport(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read " + path);
  return ReportFromJson(json::parse(is));
}

std::vector<std::string> ExportPlotData(const std::string& run_dir) {
  const fs::path root(run_dir);
  std::vector<std::string> written;
  const fs::path metrics_path = root / "metrics.json";
  if (fs::exists(metrics_path)) {
    std::ifstream is(metrics_path);
    const json j = json::parse(is);
    std::ostringstream os;
    WriteLearningCurveCsv(os, MetricsFromJson(j.at("metrics")));
    WriteText(root / "learning_curve.csv", os.str());
    written.push_back((root / "learning_curve.csv").string());
    if (j.contains("baseline_metrics")) {
      std::ostringstream bs;
      WriteLearningCurveCsv(bs, MetricsFromJson(j.at("baseline_metrics")));
      WriteText(root / "learning_curve_baseline.csv", bs.str());
      written.push_back((root / "learning_curve_baseline.csv").string());
    }
  }
  for (const char* kind : {"gmr", "baseline"}) {
    const fs::path report = root / (std::string("robustness_") + kind + ".json");
    if (!fs::exists(report)) continue;
    std::ostringstream os;
    WriteRobustnessTrajectoriesCsv(os, ReadReport(report.string()));
    const fs::path out = root / (std::string("trajectories_") + kind + ".csv");
    WriteText(out, os.str());
    written.push_back(out.string());
  }
  if (written.empty())
    throw std::runtime_error("export: no metrics.json or robustness reports in " + run_dir);
  return written;
}

}  // namespace gmr
