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

// Command-line front end: train, eval, compare, export.
//
// Precedence for the seed and the output directory is
//   command-line flag > environment (GMR_SEED, GMR_OUT_DIR) > config file.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "gmr/harness.hpp"

namespace {

namespace fs = std::filesystem;

struct CommonFlags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string policy;
  std::optional<int> trials;
  std::optional<double> threshold;
  bool verbose = false;
};

void AddCommonFlags(CLI::App* cmd, CommonFlags& f, bool with_policy, bool with_eval) {
  cmd->add_option("--config", f.config_path, "experiment config (JSON)");
  cmd->add_option("--seed", f.seed, "root RNG seed");
  cmd->add_option("--out", f.out, "output / run directory");
  cmd->add_flag("-v,--verbose", f.verbose, "print per-iteration progress to stderr");
  if (with_policy)
    cmd->add_option("--policy", f.policy, "policy class")->check(CLI::IsMember({"gmr", "baseline"}));
  if (with_eval) {
    cmd->add_option("--trials", f.trials, "number of random initial states")->check(CLI::PositiveNumber);
    cmd->add_option("--threshold", f.threshold, "success threshold on final-state MSE")
        ->check(CLI::PositiveNumber);
  }
}

gmr::ProgressFn Progress(const CommonFlags& f) {
  if (!f.verbose) return {};
  return [](const std::string& line) { std::cerr << line << std::endl; };
}

gmr::ExperimentConfig ResolveConfig(const CommonFlags& f, const std::string& fallback_dir = "") {
  gmr::ExperimentConfig config;
  if (!f.config_path.empty()) {
    config = gmr::LoadConfig(f.config_path);
  } else if (!fallback_dir.empty() && fs::exists(fs::path(fallback_dir) / "config.json")) {
    config = gmr::LoadConfig((fs::path(fallback_dir) / "config.json").string());
  } else {
    config = gmr::DefaultPointMassConfig();
  }
  if (const char* env = std::getenv("GMR_SEED")) config.seed = std::stoull(env);
  if (const char* env = std::getenv("GMR_OUT_DIR")) config.output_dir = env;
  if (f.seed) config.seed = *f.seed;
  if (!f.out.empty()) config.output_dir = f.out;
  if (!f.policy.empty()) config.policy = gmr::PolicyKindFromName(f.policy);
  if (f.trials) config.robustness_trials = *f.trials;
  if (f.threshold) config.success_threshold = *f.threshold;
  config.Validate();
  return config;
}

std::string RunDir(const CommonFlags& f) {
  if (!f.out.empty()) return f.out;
  if (const char* env = std::getenv("GMR_OUT_DIR")) return env;
  return "";
}

int Train(const CommonFlags& f) {
  const gmr::ExperimentConfig config = ResolveConfig(f);
  const auto start = std::chrono::steady_clock::now();
  const gmr::GpsResult result = gmr::RunGps(config, Progress(f));
  gmr::WriteRunArtifacts(config.output_dir, config, result);
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  for (const gmr::IterationMetrics& m : result.metrics) {
    std::cout << "iteration " << m.iteration << "  policy_mse " << m.policy_mse_mean
              << "  lqr_mse " << m.lqr_mse_mean << '\n';
  }
  std::cout << "wrote " << config.output_dir << " (" << seconds << " s)\n";
  return 0;
}

int Eval(const CommonFlags& f) {
  const std::string run_dir = RunDir(f);
  if (run_dir.empty()) throw CLI::ValidationError("eval", "--out <run dir> is required");
  const gmr::ExperimentConfig config = ResolveConfig(f, run_dir);
  const gmr::Environment env(config.env);
  const std::string kind = gmr::PolicyKindName(config.policy);
  const fs::path ckpt = fs::path(run_dir) / ("policy_" + kind);
  if (!fs::exists(ckpt / "policy.json"))
    throw std::runtime_error("no " + kind + " checkpoint in " + run_dir);

  gmr::RobustnessReport report;
  if (config.policy == gmr::PolicyKind::kGmr) {
    const gmr::GmrPolicy policy = gmr::LoadGmrPolicy(ckpt.string());
    report = gmr::EvaluateRobustness(gmr::GmrController(policy), kind, env, config.goal(),
                                     config.robustness_trials, config.seed,
                                     config.success_threshold);
  } else {
    const gmr::BaselinePolicy policy = gmr::LoadBaselinePolicy(ckpt.string());
    report = gmr::EvaluateRobustness(gmr::BaselineController(policy, false), kind, env,
                                     config.goal(), config.robustness_trials, config.seed,
                                     config.success_threshold);
  }
  const fs::path out = fs::path(run_dir) / ("robustness_" + kind + ".json");
  gmr::WriteReport(out.string(), report);
  std::cout << kind << ": " << report.successes << "/" << report.total
            << " below threshold " << report.threshold << "  (" << out.string() << ")\n";
  return 0;
}

int Compare(const CommonFlags& f) {
  const gmr::ExperimentConfig config = ResolveConfig(f);
  const gmr::ComparisonResult cmp = gmr::ComparePolicies(config, Progress(f));
  gmr::WriteRunArtifacts(config.output_dir, config, cmp.training);
  const fs::path dir(config.output_dir);
  gmr::WriteReport((dir / "robustness_gmr.json").string(), cmp.gmr);
  gmr::WriteReport((dir / "robustness_baseline.json").string(), cmp.baseline);
  std::ofstream((dir / "comparison.json").string()) << cmp.summary.dump(2) << '\n';
  std::cout << "gmr      " << cmp.gmr.successes << "/" << cmp.gmr.total << '\n'
            << "baseline " << cmp.baseline.successes << "/" << cmp.baseline.total << '\n'
            << "threshold " << config.success_threshold << ", wrote " << config.output_dir << '\n';
  return 0;
}

int Export(const CommonFlags& f) {
  const std::string run_dir = RunDir(f);
  if (run_dir.empty()) throw CLI::ValidationError("export", "--out <run dir> is required");
  for (const std::string& path : gmr::ExportPlotData(run_dir)) std::cout << path << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Guided policy search with generative motor reflexes"};
  app.require_subcommand(1);

  CommonFlags train_flags, eval_flags, compare_flags, export_flags;
  CLI::App* train = app.add_subcommand("train", "run guided policy search and save a checkpoint");
  AddCommonFlags(train, train_flags, true, false);
  CLI::App* eval = app.add_subcommand("eval", "robustness evaluation of a saved checkpoint");
  AddCommonFlags(eval, eval_flags, true, true);
  CLI::App* compare =
      app.add_subcommand("compare", "train GMR and baseline on identical data and evaluate both");
  AddCommonFlags(compare, compare_flags, false, true);
  CLI::App* exp = app.add_subcommand("export", "write plot-ready CSVs for a run directory");
  exp->add_option("--out", export_flags.out, "run directory");

  CLI11_PARSE(app, argc, argv);
  try {
    if (train->parsed()) return Train(train_flags);
    if (eval->parsed()) return Eval(eval_flags);
    if (compare->parsed()) return Compare(compare_flags);
    if (exp->parsed()) return Export(export_flags);
  } catch (const CLI::Error& e) {
    return app.exit(e);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const gmr::ContractViolation& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
