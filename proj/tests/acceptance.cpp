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

// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero if any criterion fails. Usage: acceptance <configs-dir>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <sstream>
#include <string>

#include "gmr/harness.hpp"
#include "test_util.hpp"

namespace gmr {
namespace {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

double Seconds(Clock::time_point since) {
  return std::chrono::duration<double>(Clock::now() - since).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

// --- 1: Riccati oracle ------------------------------------------------------

// Finite-horizon recursion for sum_t 1/2 (x'Qx + u'Ru) + 1/2 x_T' Qf x_T.
std::vector<Matrix> RiccatiGains(const Matrix& a, const Matrix& b, const Matrix& q, const Matrix& r,
                                 const Matrix& qf, int horizon) {
  std::vector<Matrix> gains(horizon);
  Matrix p = qf;
  for (int t = horizon - 1; t >= 0; --t) {
    const Matrix s = r + b.transpose() * p * b;
    gains[t] = -s.ldlt().solve(b.transpose() * p * a);
    p = q + a.transpose() * p * (a + b * gains[t]);
    p = 0.5 * (p + p.transpose());
  }
  return gains;
}

double MaxGainError(const Matrix& a, const Matrix& b, double wx, double wu, double wf, int horizon) {
  const int dx = static_cast<int>(a.rows()), du = static_cast<int>(b.cols());
  const auto dyn = MakeTimeInvariantDynamics(a, b, Vector::Zero(dx), 1e-2 * Matrix::Identity(dx, dx),
                                             horizon);
  const auto cost = ExpandCost({Vector::Zero(dx), wx, wu, wf}, horizon, du);
  const auto ref = MakeInitialPolicy(horizon, dx, du, 1.0).reflexes;
  const auto out = LqrBackward(dyn, cost, ref, Vector::Zero(horizon));
  const auto oracle = RiccatiGains(a, b, wx * Matrix::Identity(dx, dx), wu * Matrix::Identity(du, du),
                                   wf * Matrix::Identity(dx, dx), horizon);
  double worst = 0.0;
  for (int t = 0; t < horizon; ++t)
    worst = std::max(worst, (out.reflexes[t].gain - oracle[t]).cwiseAbs().maxCoeff());
  return worst;
}

Outcome Riccati() {
  const auto start = Clock::now();
  const double scalar = MaxGainError(Matrix::Constant(1, 1, 1.1), Matrix::Constant(1, 1, 0.5), 1.0,
                                     0.1, 2.0, 80);
  Matrix a(2, 2), b(2, 1);
  a << 1.0, 0.05, 0.0, 0.99;
  b << 0.0, 0.05;
  const double two = MaxGainError(a, b, 1.0, 1e-2, 1.0, 80);
  const double secs = Seconds(start);
  std::ostringstream os;
  os << "max gain error scalar " << scalar << ", 2-state " << two << " (" << secs << " s)";
  return {scalar < 1e-10 && two < 1e-10 && secs < 1.0, os.str()};
}

// --- 2: dynamics recovery ---------------------------------------------------

std::vector<Trajectory> LinearData(const Matrix& a, const Matrix& b, int n, int horizon,
                                   double noise_std, Rng& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<Trajectory> out;
  for (int s = 0; s < n; ++s) {
    Trajectory tr;
    tr.states.push_back(testing::RandomVector(static_cast<int>(a.rows()), rng));
    for (int t = 0; t < horizon; ++t) {
      const Vector u = testing::RandomVector(static_cast<int>(b.cols()), rng);
      Vector next = a * tr.states.back() + b * u;
      for (Eigen::Index i = 0; i < next.size(); ++i) next[i] += noise_std * g(rng);
      tr.actions.push_back(u);
      tr.states.push_back(next);
    }
    out.push_back(std::move(tr));
  }
  return out;
}

Outcome Dynamics() {
  const auto start = Clock::now();
  Rng rng(2);
  const Matrix a = testing::RandomMatrix(4, 4, rng, 0.5);
  const Matrix b = testing::RandomMatrix(4, 2, rng);
  Matrix ab(4, 6);
  ab << a, b;
  auto worst = [&](const TimeVaryingLinearGaussianDynamics& dyn) {
    double w = 0.0;
    for (int t = 0; t < dyn.horizon(); ++t) w = std::max(w, (dyn.fxu[t] - ab).norm());
    return w;
  };
  const double clean = worst(FitDynamics(LinearData(a, b, 20, 10, 0.0, rng), {.regularization = 0.0}));
  // 500 independent transitions from uniformly drawn states and actions. Long
  // rollouts of this contracting system leave some state directions almost
  // unexcited, which limits any estimator, not just this one.
  const double noisy = worst(FitDynamics(LinearData(a, b, 500, 1, 0.01, rng)));
  const double secs = Seconds(start);
  std::ostringstream os;
  os << "Frobenius error noiseless " << clean << ", noise 0.01/500 samples " << noisy << " (" << secs
     << " s)";
  return {clean < 1e-8 && noisy < 0.05 && secs < 5.0, os.str()};
}

// --- 4: gradient correctness ------------------------------------------------

// Counts parameters of `net` whose analytic gradient disagrees with a central
// difference of `loss`.
int Mismatches(nn::Network& net, const nn::GradientTape& tape, const std::function<double()>& loss,
               int& checked) {
  int bad = 0;
  for (std::size_t li = 0; li < net.layers().size(); ++li) {
    nn::Layer& l = net.mutable_layers()[li];
    for (Eigen::Index i = 0; i < l.weight.size(); ++i, ++checked)
      bad += !testing::GradientsAgree(tape.weight[li].data()[i],
                                      testing::CentralDifference(l.weight.data() + i, loss));
    for (Eigen::Index i = 0; i < l.bias.size(); ++i, ++checked)
      bad += !testing::GradientsAgree(tape.bias[li][i],
                                      testing::CentralDifference(l.bias.data() + i, loss));
  }
  return bad;
}

nn::GradientTape Difference(const nn::GradientTape& x, const nn::GradientTape& y) {
  nn::GradientTape d = x;
  for (std::size_t i = 0; i < d.weight.size(); ++i) {
    d.weight[i] -= y.weight[i];
    d.bias[i] -= y.bias[i];
  }
  return d;
}

Outcome Gradients() {
  const auto start = Clock::now();
  Rng rng(4);
  GmrConfig config;  // default widths
  GmrPolicy p(config, rng);
  for (nn::Network* net : {&p.encoder, &p.decoder, &p.translator})
    for (nn::Layer& l : net->mutable_layers()) l.bias = testing::RandomVector(l.bias.size(), rng, 0.3);
  ReflexDataset records;
  for (int i = 0; i < 3; ++i) {
    MotorReflex r{testing::RandomMatrix(2, 4, rng), testing::RandomVector(2, rng),
                  testing::RandomSpd(2, rng, 0.5)};
    const Vector x = testing::RandomVector(4, rng);
    records.push_back({x, r, r.Mean(x), r.covariance});
  }
  const Matrix noise = testing::RandomMatrix(config.latent_dim, 3, rng);

  // The tape holds d(total); per-term gradients follow from switching the
  // weights: latent KL = g(1,0) - g(0,0), L2 = g(0,1) - g(0,0). With both
  // weights zero the decoder only sees reconstruction and the translator only
  // the reflex KL; the encoder sees their sum.
  const GmrGradients g00 = GmrLoss(p, records, 0.0, 0.0, noise).gradients;
  const GmrGradients g10 = GmrLoss(p, records, 1.0, 0.0, noise).gradients;
  const GmrGradients g01 = GmrLoss(p, records, 0.0, 1.0, noise).gradients;
  auto term = [&](auto pick) { return [&, pick] { return pick(GmrLoss(p, records, 0.0, 0.0, noise).loss); }; };
  const auto recon = term([](const GmrLossBreakdown& l) { return l.recon; });
  const auto latent = term([](const GmrLossBreakdown& l) { return l.latent_kl; });
  const auto reflex = term([](const GmrLossBreakdown& l) { return l.reflex_kl; });
  const auto l2 = term([](const GmrLossBreakdown& l) { return l.l2; });
  const auto recon_reflex = term([](const GmrLossBreakdown& l) { return l.recon + l.reflex_kl; });

  int checked = 0, bad = 0;
  bad += Mismatches(p.decoder, g00.decoder, recon, checked);
  bad += Mismatches(p.translator, g00.translator, reflex, checked);
  bad += Mismatches(p.encoder, g00.encoder, recon_reflex, checked);
  bad += Mismatches(p.encoder, Difference(g10.encoder, g00.encoder), latent, checked);
  bad += Mismatches(p.encoder, Difference(g01.encoder, g00.encoder), l2, checked);
  bad += Mismatches(p.decoder, Difference(g01.decoder, g00.decoder), l2, checked);
  bad += Mismatches(p.translator, Difference(g01.translator, g00.translator), l2, checked);
  const double alpha = 0.3, beta = 0.05;
  const GmrGradients full = GmrLoss(p, records, alpha, beta, noise).gradients;
  auto total = [&] { return GmrLoss(p, records, alpha, beta, noise).loss.total(); };
  bad += Mismatches(p.encoder, full.encoder, total, checked);
  bad += Mismatches(p.decoder, full.decoder, total, checked);
  bad += Mismatches(p.translator, full.translator, total, checked);

  BaselinePolicy base = BaselinePolicy::Make(4, 2, rng);
  for (nn::Layer& l : base.net.mutable_layers()) l.bias = testing::RandomVector(l.bias.size(), rng, 0.3);
  const BaselineLossResult bl = BaselineLoss(base, records, beta);
  bad += Mismatches(base.net, bl.gradient, [&] { return BaselineLoss(base, records, beta).total(); },
                    checked);

  const double secs = Seconds(start);
  std::ostringstream os;
  os << bad << " of " << checked << " gradient entries exceed relative error 1e-4 (" << secs << " s)";
  return {bad == 0 && secs < 10.0, os.str()};
}

// --- 5: reflex KL substitution ----------------------------------------------

Outcome ReflexIdentity() {
  Rng rng(5);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const int dx = 1 + i % 6, du = 1 + i % 3;
    const MotorReflex psi{testing::RandomMatrix(du, dx, rng), testing::RandomVector(du, rng),
                          testing::RandomSpd(du, rng)};
    const MotorReflex ref{testing::RandomMatrix(du, dx, rng), testing::RandomVector(du, rng),
                          testing::RandomSpd(du, rng)};
    const Vector x = testing::RandomVector(dx, rng, 2.0);
    const double implemented =
        ReflexKlLoss(psi, ref.Mean(x), ref.gain, ref.covariance, x).total();
    const Matrix prec = ref.covariance.inverse();
    const Vector dm = (psi.gain - ref.gain) * x + (psi.offset - ref.offset);
    const double direct = (prec * psi.covariance).trace() -
                          std::log(psi.covariance.determinant()) + dm.dot(prec * dm);
    worst = std::max(worst, std::abs(implemented - direct));
  }
  std::ostringstream os;
  os << "max |substituted - direct| = " << worst << " over 100 instances";
  return {worst < 1e-10, os.str()};
}

// --- 9: parameter count -----------------------------------------------------

Outcome ParameterShape() {
  const EnvSpec env = MakeEnvSpec(EnvKind::kSyntheticLinear);
  GmrConfig config;
  config.state_dim = env.state_dim;
  config.action_dim = env.action_dim;
  Rng rng(9);
  const GmrPolicy p(config, rng);
  const MotorReflex r = GmrForward(p, Vector::Zero(env.state_dim)).reflex;
  const long n = r.gain.size() + r.offset.size() + r.covariance.size();
  std::ostringstream os;
  os << "d_x=" << env.state_dim << ", d_u=" << env.action_dim << ": reflex has " << n
     << " parameters";
  return {n == 114 && MotorReflex::ParameterCount(env.state_dim, env.action_dim) == 114, os.str()};
}

// --- 3, 6, 8: point-mass training run --------------------------------------

std::string Slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

struct TrainingChecks {
  Outcome kl, curve, determinism;
};

TrainingChecks Training(const std::string& config_path) {
  TrainingChecks out;
  ExperimentConfig config = LoadConfig(config_path);
  const fs::path root = fs::temp_directory_path() / "gmr_acceptance";
  fs::remove_all(root);

  const auto start = Clock::now();
  const GpsResult run = RunGps(config);
  const double secs = Seconds(start);
  WriteRunArtifacts((root / "a").string(), config, run);

  {
    int violations = 0;
    double worst = 0.0;
    for (const DiagnosticsRecord& d : run.diagnostics) {
      worst = std::max(worst, d.kl / d.epsilon);
      if (d.kl > 1.1 * d.epsilon) ++violations;
    }
    std::ostringstream os;
    os << run.diagnostics.size() << " C-steps over N=" << config.iterations
       << ", max KL/epsilon = " << worst << ", violations " << violations;
    out.kl = {violations == 0 && static_cast<int>(run.metrics.size()) == config.iterations &&
                  run.diagnostics.size() == config.iterations * config.conditions.size(),
              os.str()};
  }
  {
    const double first = run.metrics.front().policy_mse_mean;
    const double last = run.metrics.back().policy_mse_mean;
    int within = -1;
    for (const IterationMetrics& m : run.metrics)
      if (m.policy_mse_mean <= 1.2 * m.lqr_mse_mean) {
        within = m.iteration;
        break;
      }
    std::ostringstream os;
    os << config.conditions.size() << " conditions, N=" << config.iterations
       << ": final/first MSE = " << last / first << " (" << last << " / " << first
       << "), GMR within 20% of LQR first at iteration " << within << ", runtime " << secs << " s";
    out.curve = {config.conditions.size() == 2 && config.iterations == 10 &&
                     config.samples_per_condition == 5 && last < 0.1 * first && within >= 1 &&
                     within <= 4 && secs < 600.0,
                 os.str()};
  }
  {
    const GpsResult again = RunGps(config);
    WriteRunArtifacts((root / "b").string(), config, again);
    bool same = true;
    std::string files;
    for (const char* f : {"learning_curve.csv", "samples.csv", "diagnostics.jsonl", "metrics.json"}) {
      const std::string a = Slurp(root / "a" / f), b = Slurp(root / "b" / f);
      same = same && !a.empty() && a == b;
      files += std::string(files.empty() ? "" : ", ") + f;
    }
    out.determinism = {same, (same ? "byte-identical: " : "differ among: ") + files};
  }
  fs::remove_all(root);
  return out;
}

// --- 7: robustness ----------------------------------------------------------

Outcome Robustness(const std::string& config_path) {
  const ExperimentConfig config = LoadConfig(config_path);
  const ComparisonResult r = ComparePolicies(config);
  const int gmr = r.gmr.SuccessesAt(0.1), base = r.baseline.SuccessesAt(0.1);
  std::ostringstream os;
  os << config.conditions.size() << " training condition, " << r.gmr.total
     << " trials at threshold 0.1: GMR " << gmr << "/" << r.gmr.total << ", baseline " << base
     << "/" << r.baseline.total;
  return {config.conditions.size() == 1 && r.gmr.total == 50 && r.baseline.total == 50 &&
              gmr > base && gmr >= 40,
          os.str()};
}

}  // namespace
}  // namespace gmr

int main(int argc, char** argv) {
  using gmr::Outcome;
  if (argc < 2) {
    std::cerr << "usage: acceptance <configs-dir>\n";
    return 2;
  }
  const std::string configs = argv[1];
  int failures = 0;
  auto report = [&](int id, const char* name, const std::function<Outcome()>& check) {
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " [" << id << "] " << name << ": " << o.detail
              << std::endl;
  };

  report(1, "riccati oracle", gmr::Riccati);
  report(2, "dynamics recovery", gmr::Dynamics);
  report(4, "gradient correctness", gmr::Gradients);
  report(5, "reflex KL substitution", gmr::ReflexIdentity);
  report(9, "parameter count", gmr::ParameterShape);

  gmr::TrainingChecks training;
  bool trained = false;
  std::string error;
  try {
    training = gmr::Training(configs + "/point_mass.json");
    trained = true;
  } catch (const std::exception& e) {
    error = std::string("exception: ") + e.what();
  }
  auto from_training = [&](Outcome gmr::TrainingChecks::*field) {
    return [&, field] { return trained ? training.*field : Outcome{false, error}; };
  };
  report(3, "KL constraint satisfaction", from_training(&gmr::TrainingChecks::kl));
  report(6, "learning curve", from_training(&gmr::TrainingChecks::curve));
  report(7, "robustness", [&] { return gmr::Robustness(configs + "/point_mass_robustness.json"); });
  report(8, "determinism", from_training(&gmr::TrainingChecks::determinism));

  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed")
            << std::endl;
  return failures == 0 ? 0 : 1;
}
