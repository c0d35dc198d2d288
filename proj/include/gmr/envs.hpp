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

#ifndef GMR_ENVS_HPP_
#define GMR_ENVS_HPP_

#include <string>

#include "gmr/dynamics.hpp"
#include "gmr/policy.hpp"
#include "gmr/trajopt.hpp"
#include "gmr/types.hpp"

namespace gmr {

enum class EnvKind { kPointMass, kTwoLinkArm, kSyntheticLinear };

std::string EnvKindName(EnvKind kind);
EnvKind EnvKindFromName(const std::string& name);

struct EnvSpec {
  EnvKind kind = EnvKind::kPointMass;
  double dt = 0.05;  // 20 Hz
  int horizon = 80;
  int state_dim = 4;
  int action_dim = 2;

  // point mass
  double mass = 1.0;
  double damping = 0.1;

  // two-link arm: uniform rods, angles measured from the horizontal
  double link_mass[2] = {1.0, 1.0};
  double link_length[2] = {0.5, 0.5};
  double joint_damping = 0.1;
  double gravity = 0.0;
  int substeps = 20;  // semi-implicit Euler steps per control period

  // synthetic linear: degrees of freedom of a decoupled double integrator
  int dof = 6;

  double noise_std = 1e-3;   // per velocity component
  double action_limit = 10;  // symmetric clamp on every action component

  // Box used for uniform random initial states.
  Vector state_low;
  Vector state_high;
};

// Fills dims and default bounds for `kind`.
EnvSpec MakeEnvSpec(EnvKind kind);

struct Condition {
  int id = 0;
  Gaussian initial;
  Vector goal;
};

class Environment {
 public:
  explicit Environment(EnvSpec spec);

  const EnvSpec& spec() const { return spec_; }
  int state_dim() const { return spec_.state_dim; }
  int action_dim() const { return spec_.action_dim; }
  int horizon() const { return spec_.horizon; }

  Vector Clamp(const Vector& u) const;

  // Applies the clamped action for one control period. Throws NumericalError
  // if the state diverges.
  Vector Step(const Vector& x, const Vector& u, Rng& rng) const;

  // Mechanical energy (kinetic + potential) of the arm; kinetic energy of the
  // point mass.
  double Energy(const Vector& x) const;

  // Planar position used for plotting (arm end effector or mass position).
  Eigen::Vector2d Position(const Vector& x) const;

 private:
  Vector StepArm(const Vector& x, const Vector& u) const;

  EnvSpec spec_;
};

class Controller {
 public:
  virtual ~Controller() = default;
  virtual Vector Act(const Vector& x, int t, Rng& rng) const = 0;
};

class LocalPolicyController : public Controller {
 public:
  LocalPolicyController(const LocalPolicy& policy, bool stochastic)
      : policy_(policy), stochastic_(stochastic) {}
  Vector Act(const Vector& x, int t, Rng& rng) const override;

 private:
  const LocalPolicy& policy_;
  bool stochastic_;
};

class GmrController : public Controller {
 public:
  // Always acts in test mode; `sample_action` draws from the reflex.
  explicit GmrController(const GmrPolicy& policy, bool sample_action = false);
  Vector Act(const Vector& x, int t, Rng& rng) const override;

 private:
  GmrPolicy policy_;
  bool sample_action_;
};

class BaselineController : public Controller {
 public:
  BaselineController(const BaselinePolicy& policy, bool stochastic)
      : policy_(policy), stochastic_(stochastic) {}
  Vector Act(const Vector& x, int t, Rng& rng) const override;

 private:
  const BaselinePolicy& policy_;
  bool stochastic_;
};

// u = gain x + offset at every step.
class LinearController : public Controller {
 public:
  LinearController(Matrix gain, Vector offset) : gain_(std::move(gain)), offset_(std::move(offset)) {}
  Vector Act(const Vector& x, int, Rng&) const override { return gain_ * x + offset_; }

 private:
  Matrix gain_;
  Vector offset_;
};

// Runs T steps from x0 and records states and executed (clamped) actions.
Trajectory Rollout(const Environment& env, const Controller& controller, const Vector& x0,
                   int condition_id, Rng& rng);
// Draws x0 from the condition's initial distribution.
Trajectory Rollout(const Environment& env, const Controller& controller,
                   const Condition& condition, Rng& rng);

// Mean over state components of the squared error of x_T against goal.
double FinalStateMse(const Trajectory& trajectory, const Vector& goal);

}  // namespace gmr

#endif  // GMR_ENVS_HPP_
