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

#ifndef GMR_TRAJOPT_HPP_
#define GMR_TRAJOPT_HPP_

#include <limits>
#include <span>
#include <vector>

#include "gmr/dynamics.hpp"
#include "gmr/types.hpp"

namespace gmr {

// l(x, u) = 1/2 w_x |x - goal|^2 + 1/2 w_u |u|^2 on stages 0..T-1, and
// 1/2 w_T |x - goal|^2 on the final state.
struct CostSpec {
  Vector goal;
  double state_weight = 1.0;
  double action_weight = 1e-2;
  double terminal_weight = 1.0;
};

// Per-stage l(x, u) = 1/2 z^T H z + z^T g + c with z = [x; u].
struct QuadraticCost {
  std::vector<Matrix> hessian;
  std::vector<Vector> gradient;
  std::vector<double> constant;
  Matrix terminal_hessian;  // state block only
  Vector terminal_gradient;
  double terminal_constant = 0.0;
  int state_dim = 0;
  int action_dim = 0;

  int horizon() const { return static_cast<int>(hessian.size()); }
  double Stage(int t, const Vector& x, const Vector& u) const;
  double Terminal(const Vector& x) const;
};

QuadraticCost ExpandCost(const CostSpec& spec, int horizon, int action_dim);

// u ~ N(gain x + offset, covariance)
struct MotorReflex {
  Matrix gain;
  Vector offset;
  Matrix covariance;

  Vector Mean(const Vector& x) const { return gain * x + offset; }
  int state_dim() const { return static_cast<int>(gain.cols()); }
  int action_dim() const { return static_cast<int>(gain.rows()); }

  // Size of the flattened [K; k; Sigma] with Sigma counted as a full matrix.
  static int ParameterCount(int state_dim, int action_dim) {
    return action_dim * state_dim + action_dim + action_dim * action_dim;
  }
};

struct LocalPolicy {
  std::vector<MotorReflex> reflexes;      // t = 0..T-1
  std::vector<Gaussian> state_marginals;  // t = 0..T

  int horizon() const { return static_cast<int>(reflexes.size()); }
};

// Zero-gain controller with isotropic covariance, used to start exploration.
LocalPolicy MakeInitialPolicy(int horizon, int state_dim, int action_dim, double variance);

struct DualState {
  Vector lambda;  // one multiplier per timestep
  double epsilon = 1.0;
  double violation = 0.0;
};

inline constexpr double kDualInitial = 0.01;
inline constexpr double kDualIncrease = 10.0;
inline constexpr double kDualDecrease = 5.0;
inline constexpr double kDualCap = 1e16;
inline constexpr double kDualFloor = 1e-8;
inline constexpr double kKlTolerance = 0.1;

DualState MakeDualState(int horizon, double epsilon, double initial = kDualInitial);

// One training tuple for the supervised step.
struct ReflexRecord {
  Vector state;
  MotorReflex reflex;           // reference controller at this state
  Vector action;                // reflex.Mean(state)
  Matrix reference_covariance;  // covariance of the reference policy at state
};
using ReflexDataset = std::vector<ReflexRecord>;

struct BackwardResult {
  std::vector<MotorReflex> reflexes;
  std::vector<Matrix> q_hessian;   // Q_{xu,xu}, t = 0..T-1
  std::vector<Vector> q_gradient;  // Q_{xu}
  std::vector<Matrix> v_hessian;   // V_{xx}, t = 0..T
  std::vector<Vector> v_gradient;  // V_x
  std::vector<double> v_constant;  // deterministic part of V
  std::vector<double> regularization;  // mu added to Q_uu at each t

  // Value of the noiseless quadratic value function at (t, x).
  double Value(int t, const Vector& x) const;
};

// Backward pass over the lambda-augmented cost. For lambda_t > 0 the stage
// cost is l_t / lambda_t - log p_ref(u | x); for lambda_t == 0 the stage is
// the plain cost and `reference` is not read at t. Gains and covariance are
// K = -Quu^-1 Qux, k = -Quu^-1 Qu, Sigma = Quu^-1.
BackwardResult LqrBackward(const TimeVaryingLinearGaussianDynamics& dyn,
                           const QuadraticCost& cost, std::span<const MotorReflex> reference,
                           const Vector& lambda);

// Gaussian state marginals t = 0..T of the closed loop.
std::vector<Gaussian> PropagateMarginals(const TimeVaryingLinearGaussianDynamics& dyn,
                                         std::span<const MotorReflex> reflexes,
                                         const Gaussian& initial);

// One record at every marginal mean plus `extra_per_step` states drawn from
// each marginal; every record at t carries reflex t.
ReflexDataset BuildDataset(std::span<const Gaussian> marginals,
                           std::span<const MotorReflex> reflexes, int extra_per_step, Rng& rng);

struct ForwardResult {
  std::vector<Gaussian> state_marginals;
  ReflexDataset dataset;
};

ForwardResult LqrForward(const TimeVaryingLinearGaussianDynamics& dyn,
                         std::span<const MotorReflex> reflexes, const Gaussian& initial,
                         int extra_per_step, Rng& rng);

// E_{x ~ N(mean, cov)} KL(N(Kx+k, S) || N(K'x+k', S')).
double ExpectedConditionalKl(const MotorReflex& p, const MotorReflex& q, const Gaussian& state);

// Sum over t of the expected conditional KL under p's state marginals.
double TrajectoryKl(std::span<const MotorReflex> p, std::span<const Gaussian> p_marginals,
                    std::span<const MotorReflex> reference);

// Expected total cost under the given marginals and controllers.
double ExpectedCost(const QuadraticCost& cost, std::span<const MotorReflex> reflexes,
                    std::span<const Gaussian> marginals);

// Multiplicative dual update: x kDualIncrease above epsilon, / kDualDecrease
// below epsilon / 2, unchanged otherwise.
DualState AdjustDual(const DualState& dual, double measured_kl);

struct CStepOptions {
  int extra_samples_per_step = 5;
  int max_dual_iterations = 60;
};

struct CStepResult {
  LocalPolicy policy;
  ReflexDataset dataset;
  DualState dual;
  double kl = 0.0;
  double expected_cost = 0.0;
  int dual_iterations = 0;
};

// KL-constrained trajectory optimization against `reference`. An infinite
// epsilon deactivates the constraint (lambda = 0, one pass). Throws
// NumericalError if lambda passes kDualCap without meeting the constraint.
CStepResult CStep(const TimeVaryingLinearGaussianDynamics& dyn, const QuadraticCost& cost,
                  std::span<const MotorReflex> reference, const Gaussian& initial,
                  const DualState& dual, Rng& rng, const CStepOptions& options = {});

}  // namespace gmr

#endif  // GMR_TRAJOPT_HPP_
