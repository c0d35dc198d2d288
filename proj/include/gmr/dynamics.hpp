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

#ifndef GMR_DYNAMICS_HPP_
#define GMR_DYNAMICS_HPP_

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "gmr/types.hpp"

namespace gmr {

// One rollout: states x_0..x_T and actions u_0..u_{T-1}.
struct Trajectory {
  std::vector<Vector> states;
  std::vector<Vector> actions;
  int condition_id = 0;

  int horizon() const { return static_cast<int>(actions.size()); }
  int state_dim() const { return states.empty() ? 0 : static_cast<int>(states.front().size()); }
  int action_dim() const { return actions.empty() ? 0 : static_cast<int>(actions.front().size()); }
};

// p(x_{t+1} | x_t, u_t) = N(fxu_t [x_t; u_t] + fc_t, cov_t)
struct TimeVaryingLinearGaussianDynamics {
  std::vector<Matrix> fxu;
  std::vector<Vector> fc;
  std::vector<Matrix> cov;
  int state_dim = 0;
  int action_dim = 0;

  int horizon() const { return static_cast<int>(fxu.size()); }
};

// Always added to the fitted residual covariance.
inline constexpr double kDynamicsCovarianceFloor = 1e-6;

struct DynamicsFitOptions {
  // Ridge weight on the linear part (the intercept is not penalized).
  double regularization = 1e-6;
  // Pairs from timesteps t-window..t+window are pooled into the fit at t.
  // Zero gives a strictly per-timestep fit.
  int window = 0;
};

// Fits one linear-Gaussian model per timestep by least squares of x_{t+1}
// on [x_t; u_t; 1]. Throws ContractViolation for fewer than two samples or
// inconsistent shapes, NumericalError for a rank-deficient regressor with
// zero regularization.
TimeVaryingLinearGaussianDynamics FitDynamics(std::span<const Trajectory> samples,
                                              const DynamicsFitOptions& options = {});

// Builds a time-invariant model with the given matrices repeated T times.
TimeVaryingLinearGaussianDynamics MakeTimeInvariantDynamics(const Matrix& a, const Matrix& b,
                                                            const Vector& c, const Matrix& cov,
                                                            int horizon);

Gaussian Predict(const TimeVaryingLinearGaussianDynamics& dyn, int t, const Vector& x,
                 const Vector& u);

// Trajectory log: CSV with header
//   condition,sample,t,x0..x{dx-1},u0..u{du-1}
// one row per timestep t = 0..T; action cells are empty on the t = T row.
void WriteTrajectoryCsv(std::ostream& os, std::span<const Trajectory> trajectories);
std::vector<Trajectory> ReadTrajectoryCsv(std::istream& is);

}  // namespace gmr

#endif  // GMR_DYNAMICS_HPP_
