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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <limits>

#include "gmr/envs.hpp"
#include "test_util.hpp"

namespace gmr {
namespace {

EnvSpec Quiet(EnvKind kind) {
  EnvSpec s = MakeEnvSpec(kind);
  s.noise_std = 0.0;
  return s;
}

class ConstantController : public Controller {
 public:
  explicit ConstantController(Vector u) : u_(std::move(u)) {}
  Vector Act(const Vector&, int, Rng&) const override { return u_; }

 private:
  Vector u_;
};

TEST_CASE("env names and default specs") {
  for (EnvKind k : {EnvKind::kPointMass, EnvKind::kTwoLinkArm, EnvKind::kSyntheticLinear})
    CHECK(EnvKindFromName(EnvKindName(k)) == k);
  CHECK_THROWS_AS(EnvKindFromName("cartpole"), std::invalid_argument);
  const EnvSpec s = MakeEnvSpec(EnvKind::kPointMass);
  CHECK(s.dt == 0.05);
  CHECK(s.horizon == 80);
  CHECK(s.state_high[2] == 0.5);
  const EnvSpec lin = MakeEnvSpec(EnvKind::kSyntheticLinear);
  CHECK(lin.state_dim == 12);
  CHECK(lin.action_dim == 6);
  EnvSpec bad = s;
  bad.dt = 0.0;
  CHECK_THROWS_AS(Environment{bad}, ContractViolation);
  bad = s;
  bad.noise_std = -1.0;
  CHECK_THROWS_AS(Environment{bad}, ContractViolation);
}

TEST_CASE("point mass: rest is an equilibrium") {
  const Environment env(Quiet(EnvKind::kPointMass));
  Rng rng(1);
  const Vector x = (Vector(4) << 0.3, -0.2, 0.0, 0.0).finished();
  CHECK(env.Step(x, Vector::Zero(2), rng) == x);
}

TEST_CASE("point mass: constant force integrates exactly") {
  EnvSpec s = Quiet(EnvKind::kPointMass);
  s.damping = 0.0;
  s.mass = 2.0;
  const Environment env(s);
  Rng rng(2);
  const Vector f = (Vector(2) << 1.5, -0.5).finished();
  Vector x = Vector::Zero(4);
  const int n = 37;
  double position = 0.0;
  for (int i = 1; i <= n; ++i) {
    x = env.Step(x, f, rng);
    position += i * s.dt * s.dt * f[0] / s.mass;  // semi-implicit: velocity first
  }
  CHECK(std::abs(x[2] - n * s.dt * f[0] / s.mass) < 1e-12);
  CHECK(std::abs(x[3] - n * s.dt * f[1] / s.mass) < 1e-12);
  CHECK(std::abs(x[0] - position) < 1e-12);
}

TEST_CASE("two-link arm: equilibrium without gravity or torque") {
  const Environment env(Quiet(EnvKind::kTwoLinkArm));
  Rng rng(3);
  const Vector x = (Vector(4) << 0.4, -1.1, 0.0, 0.0).finished();
  Vector y = x;
  for (int t = 0; t < 80; ++t) y = env.Step(y, Vector::Zero(2), rng);
  CHECK(y == x);
}

TEST_CASE("two-link arm: energy is conserved without torque, gravity, damping") {
  EnvSpec s = Quiet(EnvKind::kTwoLinkArm);
  s.joint_damping = 0.0;
  const Environment env(s);
  Rng rng(4);
  Vector x = (Vector(4) << 0.2, 0.9, 1.5, -2.0).finished();
  const double e0 = env.Energy(x);
  double worst = 0.0;
  for (int t = 0; t < 80; ++t) {
    x = env.Step(x, Vector::Zero(2), rng);
    worst = std::max(worst, std::abs(env.Energy(x) - e0) / e0);
  }
  CHECK(worst < 0.01);
}

TEST_CASE("two-link arm: a hanging arm swings and stays bounded") {
  EnvSpec s = Quiet(EnvKind::kTwoLinkArm);
  s.gravity = 9.81;
  s.joint_damping = 0.0;
  const Environment env(s);
  Rng rng(5);
  Vector x = (Vector(4) << -1.2, 0.3, 0.0, 0.0).finished();
  const double e0 = env.Energy(x);
  for (int t = 0; t < 80; ++t) x = env.Step(x, Vector::Zero(2), rng);
  CHECK(std::abs(env.Energy(x) - e0) < 0.02 * std::abs(e0));
  CHECK(env.Position(Vector::Zero(4)).isApprox(Eigen::Vector2d(1.0, 0.0)));
}

TEST_CASE("step: divergence and bad input") {
  const Environment env(Quiet(EnvKind::kPointMass));
  Rng rng(6);
  const double big = std::numeric_limits<double>::max();
  CHECK_THROWS_AS(env.Step((Vector(4) << big, 0, big, 0).finished(), Vector::Zero(2), rng),
                  NumericalError);
  CHECK_THROWS_AS(env.Step(Vector::Zero(4), Vector::Constant(2, std::nan("")), rng), NumericalError);
  CHECK_THROWS_AS(env.Step(Vector::Zero(3), Vector::Zero(2), rng), ContractViolation);
}

TEST_CASE("rollout: shapes, clamping, zero controller") {
  const Environment env(Quiet(EnvKind::kPointMass));
  Rng rng(7);
  const Vector x0 = (Vector(4) << 1.0, 2.0, 0.0, 0.0).finished();
  const Trajectory still = Rollout(env, LinearController(Matrix::Zero(2, 4), Vector::Zero(2)), x0, 3, rng);
  CHECK(still.states.size() == 81);
  CHECK(still.actions.size() == 80);
  CHECK(still.condition_id == 3);
  for (const Vector& x : still.states) CHECK(x == x0);

  const Trajectory pushed = Rollout(env, ConstantController(Vector::Constant(2, 1e3)), x0, 0, rng);
  for (const Vector& u : pushed.actions) CHECK(u.cwiseAbs().maxCoeff() <= env.spec().action_limit);
  CHECK_THROWS_AS(Rollout(env, ConstantController(Vector::Zero(3)), x0, 0, rng), ContractViolation);
}

TEST_CASE("rollout: a fixed seed gives bit-identical trajectories") {
  const Environment env(MakeEnvSpec(EnvKind::kPointMass));
  const LocalPolicy p = MakeInitialPolicy(80, 4, 2, 1.0);
  const Condition c{0, {Vector::Zero(4), 0.01 * Matrix::Identity(4, 4)}, Vector::Zero(4)};
  Rng a(8), b(8);
  const Trajectory ta = Rollout(env, LocalPolicyController(p, true), c, a);
  const Trajectory tb = Rollout(env, LocalPolicyController(p, true), c, b);
  for (int t = 0; t <= 80; ++t) CHECK(ta.states[t] == tb.states[t]);
}

TEST_CASE("final state mse") {
  Trajectory tr;
  tr.states = {Vector::Zero(2), (Vector(2) << 1.0, 1.0).finished()};
  CHECK(FinalStateMse(tr, Vector::Zero(2)) == 1.0);
  CHECK(FinalStateMse(tr, tr.states.back()) == 0.0);
  Trajectory scalar;
  scalar.states = {Vector::Constant(1, 1.0)};
  CHECK(FinalStateMse(scalar, Vector::Zero(1)) == 1.0);
  CHECK_THROWS_AS(FinalStateMse(tr, Vector::Zero(3)), ContractViolation);
}

TEST_CASE("controllers: gmr acts in test mode, baseline mean or sampled") {
  Rng rng(9);
  GmrPolicy g(GmrConfig{}, rng);
  g.set_mode(PolicyMode::kTrain);
  const GmrController gc(g);
  const Vector x = testing::RandomVector(4, rng);
  Rng r1(1), r2(2);
  CHECK(gc.Act(x, 0, r1) == gc.Act(x, 0, r2));
  const BaselinePolicy b = BaselinePolicy::Make(4, 2, rng);
  CHECK(BaselineController(b, false).Act(x, 0, r1) == b.Act(x));
  CHECK(BaselineController(b, true).Act(x, 0, r1) != b.Act(x));
}

}  // namespace
}  // namespace gmr
