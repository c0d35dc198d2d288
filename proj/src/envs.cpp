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

#include "gmr/envs.hpp"

#include <cmath>
#include <numbers>

namespace gmr {

std::string EnvKindName(EnvKind kind) {
  switch (kind) {
    case EnvKind::kPointMass:
      return "point_mass";
    case EnvKind::kTwoLinkArm:
      return "two_link_arm";
    case EnvKind::kSyntheticLinear:
      return "synthetic_linear";
  }
  return "point_mass";
}

EnvKind EnvKindFromName(const std::string& name) {
  if (name == "point_mass") return EnvKind::kPointMass;
  if (name == "two_link_arm") return EnvKind::kTwoLinkArm;
  if (name == "synthetic_linear") return EnvKind::kSyntheticLinear;
  throw std::invalid_argument("unknown environment kind '" + name + "'");
}

EnvSpec MakeEnvSpec(EnvKind kind) {
  EnvSpec s;
  s.kind = kind;
  switch (kind) {
    case EnvKind::kPointMass:
      s.state_dim = 4;
      s.action_dim = 2;
      s.state_low = (Vector(4) << -3.0, -3.0, -0.5, -0.5).finished();
      s.state_high = -s.state_low;
      break;
    case EnvKind::kTwoLinkArm:
      s.state_dim = 4;
      s.action_dim = 2;
      s.state_low = (Vector(4) << -std::numbers::pi, -std::numbers::pi, -0.5, -0.5).finished();
      s.state_high = -s.state_low;
      break;
    case EnvKind::kSyntheticLinear:
      s.state_dim = 2 * s.dof;
      s.action_dim = s.dof;
      s.state_low = Vector::Constant(s.state_dim, -1.0);
      s.state_low.tail(s.dof).setConstant(-0.5);
      s.state_high = -s.state_low;
      break;
  }
  return s;
}

Environment::Environment(EnvSpec spec) : spec_(std::move(spec)) {
  Require(spec_.dt > 0.0, "EnvSpec: dt must be positive");
  Require(spec_.horizon >= 1, "EnvSpec: horizon must be >= 1");
  Require(spec_.noise_std >= 0.0, "EnvSpec: noise std must be nonnegative");
  Require(spec_.action_limit > 0.0, "EnvSpec: action limit must be positive");
  Require(spec_.substeps >= 1, "EnvSpec: substeps must be >= 1");
  switch (spec_.kind) {
    case EnvKind::kPointMass:
    case EnvKind::kTwoLinkArm:
      Require(spec_.state_dim == 4 && spec_.action_dim == 2, "EnvSpec: planar envs use dx=4, du=2");
      break;
    case EnvKind::kSyntheticLinear:
      Require(spec_.dof >= 1 && spec_.state_dim == 2 * spec_.dof && spec_.action_dim == spec_.dof,
              "EnvSpec: synthetic env dims must be (2*dof, dof)");
      break;
  }
  Require(spec_.state_low.size() == spec_.state_dim && spec_.state_high.size() == spec_.state_dim,
          "EnvSpec: state bounds have wrong length");
}

Vector Environment::Clamp(const Vector& u) const {
  return u.cwiseMax(-spec_.action_limit).cwiseMin(spec_.action_limit);
}

Vector Environment::Step(const Vector& x, const Vector& u_raw, Rng& rng) const {
  Require(x.size() == spec_.state_dim && u_raw.size() == spec_.action_dim,
          "Environment::Step: dimension mismatch");
  if (!u_raw.allFinite()) throw NumericalError("Environment::Step: non-finite action");
  const Vector u = Clamp(u_raw);
  const double dt = spec_.dt;
  Vector next;
  switch (spec_.kind) {
    case EnvKind::kPointMass: {
      next = x;
      next.tail<2>() += dt * (u - spec_.damping * x.tail<2>()) / spec_.mass;
      next.head<2>() += dt * next.tail<2>();
      break;
    }
    case EnvKind::kTwoLinkArm:
      next = StepArm(x, u);
      break;
    case EnvKind::kSyntheticLinear: {
      const int n = spec_.dof;
      next = x;
      next.tail(n) += dt * (u - spec_.damping * x.tail(n)) / spec_.mass;
      next.head(n) += dt * next.tail(n);
      break;
    }
  }
  if (spec_.noise_std > 0.0) {
    const int nv = spec_.state_dim / 2;
    next.tail(nv) += spec_.noise_std * StandardNormal(nv, rng);
  }
  if (!next.allFinite()) throw NumericalError("Environment::Step: state diverged");
  return next;
}

Vector Environment::StepArm(const Vector& x, const Vector& u) const {
  const double m1 = spec_.link_mass[0], m2 = spec_.link_mass[1];
  const double l1 = spec_.link_length[0], l2 = spec_.link_length[1];
  const double c1 = 0.5 * l1, c2 = 0.5 * l2;
  const double i1 = m1 * l1 * l1 / 12.0, i2 = m2 * l2 * l2 / 12.0;
  const double g = spec_.gravity;
  const double h = spec_.dt / spec_.substeps;
  Eigen::Vector2d q = x.head<2>();
  Eigen::Vector2d qd = x.tail<2>();
  for (int s = 0; s < spec_.substeps; ++s) {
    const double cos2 = std::cos(q[1]);
    const double sin2 = std::sin(q[1]);
    Eigen::Matrix2d mass;
    mass(0, 0) = i1 + i2 + m1 * c1 * c1 + m2 * (l1 * l1 + c2 * c2 + 2.0 * l1 * c2 * cos2);
    mass(0, 1) = i2 + m2 * (c2 * c2 + l1 * c2 * cos2);
    mass(1, 0) = mass(0, 1);
    mass(1, 1) = i2 + m2 * c2 * c2;
    const double hc = m2 * l1 * c2 * sin2;
    Eigen::Vector2d coriolis(-hc * (2.0 * qd[0] * qd[1] + qd[1] * qd[1]), hc * qd[0] * qd[0]);
    Eigen::Vector2d grav((m1 * c1 + m2 * l1) * g * std::cos(q[0]) +
                             m2 * c2 * g * std::cos(q[0] + q[1]),
                         m2 * c2 * g * std::cos(q[0] + q[1]));
    const Eigen::Vector2d qdd =
        mass.ldlt().solve(u.head<2>() - coriolis - grav - spec_.joint_damping * qd);
    qd += h * qdd;
    q += h * qd;
  }
  Vector next(4);
  next << q, qd;
  return next;
}

double Environment::Energy(const Vector& x) const {
  switch (spec_.kind) {
    case EnvKind::kTwoLinkArm: {
      const double m1 = spec_.link_mass[0], m2 = spec_.link_mass[1];
      const double l1 = spec_.link_length[0], l2 = spec_.link_length[1];
      const double c1 = 0.5 * l1, c2 = 0.5 * l2;
      const double i1 = m1 * l1 * l1 / 12.0, i2 = m2 * l2 * l2 / 12.0;
      const double cos2 = std::cos(x[1]);
      Eigen::Matrix2d mass;
      mass(0, 0) = i1 + i2 + m1 * c1 * c1 + m2 * (l1 * l1 + c2 * c2 + 2.0 * l1 * c2 * cos2);
      mass(0, 1) = i2 + m2 * (c2 * c2 + l1 * c2 * cos2);
      mass(1, 0) = mass(0, 1);
      mass(1, 1) = i2 + m2 * c2 * c2;
      const Eigen::Vector2d qd = x.tail<2>();
      const double potential = spec_.gravity * (m1 * c1 * std::sin(x[0]) +
                                                m2 * (l1 * std::sin(x[0]) +
                                                      c2 * std::sin(x[0] + x[1])));
      return 0.5 * qd.dot(mass * qd) + potential;
    }
    case EnvKind::kPointMass:
    case EnvKind::kSyntheticLinear: {
      const int nv = spec_.state_dim / 2;
      return 0.5 * spec_.mass * x.tail(nv).squaredNorm();
    }
  }
  return 0.0;
}

Eigen::Vector2d Environment::Position(const Vector& x) const {
  if (spec_.kind == EnvKind::kTwoLinkArm) {
    const double l1 = spec_.link_length[0], l2 = spec_.link_length[1];
    return {l1 * std::cos(x[0]) + l2 * std::cos(x[0] + x[1]),
            l1 * std::sin(x[0]) + l2 * std::sin(x[0] + x[1])};
  }
  return {x[0], x.size() > 1 ? x[1] : 0.0};
}

Vector LocalPolicyController::Act(const Vector& x, int t, Rng& rng) const {
  Require(t >= 0 && t < policy_.horizon(), "LocalPolicyController: timestep out of range");
  const MotorReflex& r = policy_.reflexes[t];
  const Vector mean = r.Mean(x);
  return stochastic_ ? SampleGaussian(mean, r.covariance, rng) : mean;
}

GmrController::GmrController(const GmrPolicy& policy, bool sample_action)
    : policy_(policy), sample_action_(sample_action) {
  policy_.set_mode(PolicyMode::kTest);
}

Vector GmrController::Act(const Vector& x, int, Rng& rng) const {
  return GmrForward(policy_, x, &rng, sample_action_).action;
}

Vector BaselineController::Act(const Vector& x, int, Rng& rng) const {
  const Vector mean = policy_.Act(x);
  if (!stochastic_) return mean;
  const auto du = mean.size();
  return SampleGaussian(mean, policy_.exploration_variance * Matrix::Identity(du, du), rng);
}

Trajectory Rollout(const Environment& env, const Controller& controller, const Vector& x0,
                   int condition_id, Rng& rng) {
  Require(x0.size() == env.state_dim(), "Rollout: initial state dimension mismatch");
  Trajectory tr;
  tr.condition_id = condition_id;
  tr.states.reserve(env.horizon() + 1);
  tr.actions.reserve(env.horizon());
  tr.states.push_back(x0);
  for (int t = 0; t < env.horizon(); ++t) {
    const Vector u = env.Clamp(controller.Act(tr.states.back(), t, rng));
    Require(u.size() == env.action_dim(), "Rollout: controller action dimension mismatch");
    tr.states.push_back(env.Step(tr.states.back(), u, rng));
    tr.actions.push_back(u);
  }
  return tr;
}

Trajectory Rollout(const Environment& env, const Controller& controller,
                   const Condition& condition, Rng& rng) {
  const Vector x0 = SampleGaussian(condition.initial.mean, condition.initial.cov, rng);
  return Rollout(env, controller, x0, condition.id, rng);
}

double FinalStateMse(const Trajectory& trajectory, const Vector& goal) {
  Require(!trajectory.states.empty(), "FinalStateMse: empty trajectory");
  Require(trajectory.states.back().size() == goal.size(), "FinalStateMse: dimension mismatch");
  return (trajectory.states.back() - goal).squaredNorm() / static_cast<double>(goal.size());
}

}  // namespace gmr
