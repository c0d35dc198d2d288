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

#ifndef GMR_HARNESS_HPP_
#define GMR_HARNESS_HPP_

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gmr/dynamics.hpp"
#include "gmr/envs.hpp"
#include "gmr/policy.hpp"
#include "gmr/trajopt.hpp"

namespace gmr {

enum class PolicyKind { kGmr, kBaseline };
std::string PolicyKindName(PolicyKind kind);
PolicyKind PolicyKindFromName(const std::string& name);

// Which controller the C-step trust region is measured against.
enum class ReferenceSource {
  kPolicy,  // linearized global policy (previous local policy on iteration 1)
  kLocal,   // previous local policy on every iteration
};

struct ExperimentConfig {
  EnvSpec env = MakeEnvSpec(EnvKind::kPointMass);
  std::vector<Condition> conditions;
  double state_weight = 1.0;
  double action_weight = 1e-2;
  double terminal_weight = 1.0;

  int iterations = 10;
  int samples_per_condition = 5;
  double epsilon = 2.0;
  double initial_variance = 1.0;
  int dataset_samples_per_step = 5;
  int dataset_history = 1;
  // Pooling +-3 neighbouring timesteps keeps the fit determined with 5 samples.
  DynamicsFitOptions dynamics{.regularization = 1e-6, .window = 3};
  ReferenceSource reference = ReferenceSource::kPolicy;
  bool sample_from_policy = false;
  int eval_rollouts = 5;

  PolicyKind policy = PolicyKind::kGmr;
  GmrConfig gmr;
  int baseline_hidden = 64;
  TrainOptions train;

  int robustness_trials = 50;
  double success_threshold = 0.1;

  std::uint64_t seed = 1;
  std::string output_dir = "runs/default";

  Vector goal() const;
  void Validate() const;
};

nlohmann::json ConfigToJson(const ExperimentConfig& config);
ExperimentConfig ConfigFromJson(const nlohmann::json& j);
ExperimentConfig LoadConfig(const std::string& path);

// Built-in experiment: point mass, conditions A and B sharing a goal.
ExperimentConfig DefaultPointMassConfig();

struct DiagnosticsRecord {
  int iteration = 0;
  int condition = 0;
  double kl = 0.0;
  double epsilon = 0.0;
  double lambda_min = 0.0;
  double lambda_max = 0.0;
  double expected_cost = 0.0;
  int dual_iterations = 0;
};

struct IterationMetrics {
  int iteration = 0;
  std::vector<double> policy_mse;  // per condition
  std::vector<double> lqr_mse;     // per condition
  double policy_mse_mean = 0.0;
  double lqr_mse_mean = 0.0;
  double train_loss_first = 0.0;
  double train_loss_last = 0.0;
};

struct GpsResult {
  std::optional<GmrPolicy> gmr;
  std::optional<BaselinePolicy> baseline;
  std::vector<IterationMetrics> metrics;          // one per iteration (primary learner)
  std::vector<IterationMetrics> baseline_metrics;  // filled when both learners run
  std::vector<DiagnosticsRecord> diagnostics;
  std::vector<LocalPolicy> local_policies;
  std::vector<Trajectory> samples;         // every exploration rollout, in order
  std::vector<std::string> dataset_hashes;  // per iteration, data the S-step consumed
  std::vector<int> samples_per_condition;
};

// Receives one human-readable line after every C-step and S-step.
using ProgressFn = std::function<void(const std::string&)>;

// Full outer loop for the configured policy kind.
GpsResult RunGps(const ExperimentConfig& config, const ProgressFn& progress = {});

// Same loop training the requested learners side by side on identical data.
GpsResult RunGpsWithLearners(const ExperimentConfig& config, bool train_gmr, bool train_baseline,
                             ReferenceSource reference, const ProgressFn& progress = {});

struct RobustnessTrial {
  Vector initial_state;
  double final_mse = 0.0;
  bool success = false;
  bool diverged = false;
};

struct RobustnessReport {
  std::string policy_kind;
  double threshold = 0.1;
  std::uint64_t seed = 0;
  std::vector<RobustnessTrial> trials;
  std::vector<std::vector<Eigen::Vector2d>> paths;  // planar path per trial
  int successes = 0;
  int total = 0;

  int SuccessesAt(double threshold) const;
};

nlohmann::json ReportToJson(const RobustnessReport& report);
RobustnessReport ReportFromJson(const nlohmann::json& j);

// Uniform random initial states in the env's state box, test-mode policy.
RobustnessReport EvaluateRobustness(const Controller& controller, const std::string& kind,
                                    const Environment& env, const Vector& goal, int n_trials,
                                    std::uint64_t seed, double threshold);

struct ComparisonResult {
  GpsResult training;
  RobustnessReport gmr;
  RobustnessReport baseline;
  nlohmann::json summary;
};

ComparisonResult ComparePolicies(const ExperimentConfig& config, const ProgressFn& progress = {});

// Plot data. Learning curve: metric,iteration,value (N rows per metric).
// Trajectories: trial,step,x,y.
void WriteLearningCurveCsv(std::ostream& os, const std::vector<IterationMetrics>& metrics);
void WriteRobustnessTrajectoriesCsv(std::ostream& os, const RobustnessReport& report);

nlohmann::json MetricsToJson(const std::vector<IterationMetrics>& metrics);
std::vector<IterationMetrics> MetricsFromJson(const nlohmann::json& j);

// Writes config snapshot, diagnostics log, metrics, checkpoints and sample
// log under `dir`.
void WriteRunArtifacts(const std::string& dir, const ExperimentConfig& config,
                       const GpsResult& result);
void WriteReport(const std::string& path, const RobustnessReport& report);
RobustnessReport ReadReport(const std::string& path);

// Exports learning_curve.csv and, when report files exist, one
// trajectories CSV per report. Returns the written paths.
std::vector<std::string> ExportPlotData(const std::string& run_dir);

}  // namespace gmr

#endif  // GMR_HARNESS_HPP_
