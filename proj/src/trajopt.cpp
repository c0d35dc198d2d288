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

#include "gmr/trajopt.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>

namespace gmr {
namespace {

constexpr double kQuuRegularizationStart = 1e-8;
constexpr double kQuuRegularizationMax = 1e8;

Matrix JointCovariance(const Matrix& state_cov, const MotorReflex& r) {
  const Eigen::Index dx = state_cov.rows();
  const Eigen::Index du = r.offset.size();
  Matrix s(dx + du, dx + du);
  s.topLeftCorner(dx, dx) = state_cov;
  s.topRightCorner(dx, du) = state_cov * r.gain.transpose();
  s.bottomLeftCorner(du, dx) = r.gain * state_cov;
  s.bottomRightCorner(du, du) = r.gain * state_cov * r.gain.transpose() + r.covariance;
  return Symmetrize(s);
}

Matrix PrecisionOf(const Matrix& cov, const char* who) {
  Eigen::LLT<Matrix> llt(cov);
  if (llt.info() != Eigen::Success)
    throw NumericalError(std::string(who) + ": covariance is not positive definite");
  return Symmetrize(llt.solve(Matrix::Identity(cov.rows(), cov.cols())));
}

double LogDet(const Matrix& cov, const char* who) {
  Eigen::LLT<Matrix> llt(cov);
  if (llt.info() != Eigen::Success)
    throw NumericalError(std::string(who) + ": covariance is not positive definite");
  return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

void CheckReflexShapes(std::span<const MotorReflex> reflexes, int dx, int du, const char* who) {
  for (const MotorReflex& r : reflexes) {
    if (r.gain.rows() != du || r.gain.cols() != dx || r.offset.size() != du ||
        r.covariance.rows() != du || r.covariance.cols() != du)
      throw ContractViolation(std::string(who) + ": reflex shape mismatch");
  }
}

}  // namespace

double QuadraticCost::Stage(int t, const Vector& x, const Vector& u) const {
  Vector z(x.size() + u.size());
  z << x, u;
  return 0.5 * z.dot(hessian[t] * z) + z.dot(gradient[t]) + constant[t];
}

double QuadraticCost::Terminal(const Vector& x) const {
  return 0.5 * x.dot(terminal_hessian * x) + x.dot(terminal_gradient) + terminal_constant;
}

QuadraticCost ExpandCost(const CostSpec& spec, int horizon, int action_dim) {
  Require(horizon >= 1 && action_dim >= 1, "ExpandCost: bad horizon or action dim");
  Require(spec.goal.size() >= 1, "ExpandCost: goal state required");
  if (!(spec.action_weight > 0.0))
    throw std::invalid_argument("ExpandCost: action weight must be positive");
  Require(spec.state_weight >= 0.0 && spec.terminal_weight >= 0.0,
          "ExpandCost: state weights must be nonnegative");
  const int dx = static_cast<int>(spec.goal.size());
  QuadraticCost cost;
  cost.state_dim = dx;
  cost.action_dim = action_dim;
  Matrix h = Matrix::Zero(dx + action_dim, dx + action_dim);
  h.topLeftCorner(dx, dx).diagonal().setConstant(spec.state_weight);
  h.bottomRightCorner(action_dim, action_dim).diagonal().setConstant(spec.action_weight);
  Vector g = Vector::Zero(dx + action_dim);
  g.head(dx) = -spec.state_weight * spec.goal;
  const double c = 0.5 * spec.state_weight * spec.goal.squaredNorm();
  for (int t = 0; t < horizon; ++t) {
    cost.hessian.push_back(h);
    cost.gradient.push_back(g);
    cost.constant.push_back(c);
  }
  cost.terminal_hessian = spec.terminal_weight * Matrix::Identity(dx, dx);
  cost.terminal_gradient = -spec.terminal_weight * spec.goal;
  cost.terminal_constant = 0.5 * spec.terminal_weight * spec.goal.squaredNorm();
  return cost;
}

LocalPolicy MakeInitialPolicy(int horizon, int state_dim, int action_dim, double variance) {
  Require(variance > 0.0, "MakeInitialPolicy: variance must be positive");
  LocalPolicy p;
  for (int t = 0; t < horizon; ++t)
    p.reflexes.push_back({Matrix::Zero(action_dim, state_dim), Vector::Zero(action_dim),
                          variance * Matrix::Identity(action_dim, action_dim)});
  return p;
}

DualState MakeDualState(int horizon, double epsilon, double initial) {
  Require(epsilon > 0.0, "MakeDualState: epsilon must be positive");
  return {Vector::Constant(horizon, initial), epsilon, 0.0};
}

double BackwardResult::Value(int t, const Vector& x) const {
  return 0.5 * x.dot(v_hessian[t] * x) + v_gradient[t].dot(x) + v_constant[t];
}

BackwardResult LqrBackward(const TimeVaryingLinearGaussianDynamics& dyn,
                           const QuadraticCost& cost, std::span<const MotorReflex> reference,
                           const Vector& lambda) {
  const int horizon = dyn.horizon();
  const int dx = dyn.state_dim;
  const int du = dyn.action_dim;
  Require(cost.horizon() == horizon && cost.state_dim == dx && cost.action_dim == du,
          "LqrBackward: cost does not match dynamics");
  Require(lambda.size() == horizon, "LqrBackward: one multiplier per timestep required");
  Require((lambda.array() >= 0.0).all(), "LqrBackward: negative multiplier");
  const bool constrained = (lambda.array() > 0.0).any();
  if (constrained) {
    Require(static_cast<int>(reference.size()) == horizon,
            "LqrBackward: reference policy horizon mismatch");
    CheckReflexShapes(reference, dx, du, "LqrBackward");
  }

  BackwardResult out;
  out.reflexes.resize(horizon);
  out.q_hessian.resize(horizon);
  out.q_gradient.resize(horizon);
  out.v_hessian.resize(horizon + 1);
  out.v_gradient.resize(horizon + 1);
  out.v_constant.resize(horizon + 1);
  out.regularization.resize(horizon);

  const double terminal_scale = lambda[horizon - 1] > 0.0 ? 1.0 / lambda[horizon - 1] : 1.0;
  Matrix vxx = terminal_scale * cost.terminal_hessian;
  Vector vx = terminal_scale * cost.terminal_gradient;
  double v0 = terminal_scale * cost.terminal_constant;
  out.v_hessian[horizon] = vxx;
  out.v_gradient[horizon] = vx;
  out.v_constant[horizon] = v0;

  for (int t = horizon - 1; t >= 0; --t) {
    Matrix h = cost.hessian[t];
    Vector g = cost.gradient[t];
    double c0 = cost.constant[t];
    if (lambda[t] > 0.0) {
      h /= lambda[t];
      g /= lambda[t];
      c0 /= lambda[t];
      // -log p_ref(u|x) up to its normalizer
      const MotorReflex& ref = reference[t];
      const Matrix prec = PrecisionOf(ref.covariance, "LqrBackward reference");
      const Matrix pk = prec * ref.gain;
      h.topLeftCorner(dx, dx) += ref.gain.transpose() * pk;
      h.topRightCorner(dx, du) -= pk.transpose();
      h.bottomLeftCorner(du, dx) -= pk;
      h.bottomRightCorner(du, du) += prec;
      const Vector pkk = prec * ref.offset;
      g.head(dx) += ref.gain.transpose() * pkk;
      g.tail(du) -= pkk;
      c0 += 0.5 * ref.offset.dot(pkk);
    }

    const Matrix& f = dyn.fxu[t];
    const Vector& fc = dyn.fc[t];
    Matrix qzz = Symmetrize(h + f.transpose() * vxx * f);
    Vector qz = g + f.transpose() * (vx + vxx * fc);
    const double q0 = c0 + v0 + vx.dot(fc) + 0.5 * fc.dot(vxx * fc);

    const Matrix qxx = qzz.topLeftCorner(dx, dx);
    const Matrix qux = qzz.bottomLeftCorner(du, dx);
    const Matrix quu = qzz.bottomRightCorner(du, du);
    const Vector qx = qz.head(dx);
    const Vector qu = qz.tail(du);

    double mu = 0.0;
    Eigen::LLT<Matrix> llt(quu);
    while (llt.info() != Eigen::Success) {
      mu = mu == 0.0 ? kQuuRegularizationStart : mu * 10.0;
      if (mu > kQuuRegularizationMax)
        throw NumericalError("LqrBackward: Q_uu indefinite at t=" + std::to_string(t) +
                             " after regularization; cost and dynamics are inconsistent");
      llt.compute(quu + mu * Matrix::Identity(du, du));
    }
    const Matrix quu_inv = Symmetrize(llt.solve(Matrix::Identity(du, du)));

    MotorReflex& r = out.reflexes[t];
    r.gain = -quu_inv * qux;
    r.offset = -quu_inv * qu;
    r.covariance = quu_inv;
    if (!r.gain.allFinite() || !r.offset.allFinite())
      throw NumericalError("LqrBackward: non-finite gains at t=" + std::to_string(t));

    // V(x) = Q(x, Kx + k)
    vxx = Symmetrize(qxx + r.gain.transpose() * quu * r.gain + r.gain.transpose() * qux +
                     qux.transpose() * r.gain);
    vx = qx + r.gain.transpose() * quu * r.offset + r.gain.transpose() * qu +
         qux.transpose() * r.offset;
    v0 = q0 + 0.5 * r.offset.dot(quu * r.offset) + r.offset.dot(qu);

    out.q_hessian[t] = std::move(qzz);
    out.q_gradient[t] = std::move(qz);
    out.v_hessian[t] = vxx;
    out.v_gradient[t] = vx;
    out.v_constant[t] = v0;
    out.regularization[t] = mu;
  }
  return out;
}

std::vector<Gaussian> PropagateMarginals(const TimeVaryingLinearGaussianDynamics& dyn,
                                         std::span<const MotorReflex> reflexes,
                                         const Gaussian& initial) {
  const int horizon = dyn.horizon();
  Require(static_cast<int>(reflexes.size()) == horizon,
          "PropagateMarginals: reflex count != horizon");
  Require(initial.mean.size() == dyn.state_dim && initial.cov.rows() == dyn.state_dim &&
              initial.cov.cols() == dyn.state_dim,
          "PropagateMarginals: initial distribution shape mismatch");
  CheckReflexShapes(reflexes, dyn.state_dim, dyn.action_dim, "PropagateMarginals");
  std::vector<Gaussian> marginals;
  marginals.reserve(horizon + 1);
  marginals.push_back(initial);
  for (int t = 0; t < horizon; ++t) {
    const Gaussian& cur = marginals.back();
    const MotorReflex& r = reflexes[t];
    Vector z(dyn.state_dim + dyn.action_dim);
    z << cur.mean, r.Mean(cur.mean);
    const Matrix joint = JointCovariance(cur.cov, r);
    Gaussian next;
    next.mean = dyn.fxu[t] * z + dyn.fc[t];
    next.cov = Symmetrize(dyn.fxu[t] * joint * dyn.fxu[t].transpose() + dyn.cov[t]);
    marginals.push_back(std::move(next));
  }
  return marginals;
}

ReflexDataset BuildDataset(std::span<const Gaussian> marginals,
                           std::span<const MotorReflex> reflexes, int extra_per_step, Rng& rng) {
  Require(marginals.size() >= reflexes.size(), "BuildDataset: missing marginals");
  Require(extra_per_step >= 0, "BuildDataset: negative sample count");
  ReflexDataset data;
  data.reserve(reflexes.size() * (1 + extra_per_step));
  for (std::size_t t = 0; t < reflexes.size(); ++t) {
    const MotorReflex& r = reflexes[t];
    auto emit = [&](const Vector& x) {
      data.push_back({x, r, r.Mean(x), r.covariance});
    };
    emit(marginals[t].mean);
    if (extra_per_step > 0) {
      const Matrix factor = PsdFactor(marginals[t].cov);
      for (int s = 0; s < extra_per_step; ++s)
        emit(marginals[t].mean + factor * StandardNormal(marginals[t].mean.size(), rng));
    }
  }
  return data;
}

ForwardResult LqrForward(const TimeVaryingLinearGaussianDynamics& dyn,
                         std::span<const MotorReflex> reflexes, const Gaussian& initial,
                         int extra_per_step, Rng& rng) {
  ForwardResult out;
  out.state_marginals = PropagateMarginals(dyn, reflexes, initial);
  out.dataset = BuildDataset(out.state_marginals, reflexes, extra_per_step, rng);
  return out;
}

double ExpectedConditionalKl(const MotorReflex& p, const MotorReflex& q, const Gaussian& state) {
  const double du = static_cast<double>(p.offset.size());
  const Matrix q_prec = PrecisionOf(q.covariance, "TrajectoryKl reference");
  const double logdet_p = LogDet(p.covariance, "TrajectoryKl policy");
  const double logdet_q = LogDet(q.covariance, "TrajectoryKl reference");
  const Matrix dk = p.gain - q.gain;
  const Vector dmean = dk * state.mean + (p.offset - q.offset);
  const double kl = 0.5 * ((q_prec * p.covariance).trace() - du + logdet_q - logdet_p +
                           dmean.dot(q_prec * dmean) +
                           (dk.transpose() * q_prec * dk * state.cov).trace());
  return std::max(kl, 0.0);
}

double TrajectoryKl(std::span<const MotorReflex> p, std::span<const Gaussian> p_marginals,
                    std::span<const MotorReflex> reference) {
  Require(p.size() == reference.size(), "TrajectoryKl: horizon mismatch");
  Require(p_marginals.size() >= p.size(), "TrajectoryKl: missing marginals");
  double total = 0.0;
  for (std::size_t t = 0; t < p.size(); ++t)
    total += ExpectedConditionalKl(p[t], reference[t], p_marginals[t]);
  return total;
}

double ExpectedCost(const QuadraticCost& cost, std::span<const MotorReflex> reflexes,
                    std::span<const Gaussian> marginals) {
  Require(static_cast<int>(reflexes.size()) == cost.horizon() &&
              marginals.size() == reflexes.size() + 1,
          "ExpectedCost: horizon mismatch");
  double total = 0.0;
  for (std::size_t t = 0; t < reflexes.size(); ++t) {
    const Gaussian& m = marginals[t];
    Vector z(cost.state_dim + cost.action_dim);
    z << m.mean, reflexes[t].Mean(m.mean);
    const Matrix s = JointCovariance(m.cov, reflexes[t]);
    total += 0.5 * (cost.hessian[t] * s).trace() + 0.5 * z.dot(cost.hessian[t] * z) +
             z.dot(cost.gradient[t]) + cost.constant[t];
  }
  const Gaussian& last = marginals.back();
  total += 0.5 * (cost.terminal_hessian * last.cov).trace() + cost.Terminal(last.mean);
  return total;
}

DualState AdjustDual(const DualState& dual, double measured_kl) {
  DualState next = dual;
  next.violation = measured_kl - dual.epsilon;
  if (measured_kl > dual.epsilon)
    next.lambda *= kDualIncrease;
  else if (measured_kl < 0.5 * dual.epsilon)
    next.lambda /= kDualDecrease;
  return next;
}

CStepResult CStep(const TimeVaryingLinearGaussianDynamics& dyn, const QuadraticCost& cost,
                  std::span<const MotorReflex> reference, const Gaussian& initial,
                  const DualState& dual, Rng& rng, const CStepOptions& options) {
  const int horizon = dyn.horizon();
  Require(dual.epsilon > 0.0, "CStep: epsilon must be positive");
  Require(dual.lambda.size() == horizon, "CStep: dual state horizon mismatch");
  Require(static_cast<int>(reference.size()) == horizon, "CStep: reference horizon mismatch");

  struct Candidate {
    BackwardResult backward;
    std::vector<Gaussian> marginals;
    DualState dual;
    double kl;
  };
  auto evaluate = [&](const DualState& d) {
    Candidate c{LqrBackward(dyn, cost, reference, d.lambda), {}, d, 0.0};
    c.marginals = PropagateMarginals(dyn, c.backward.reflexes, initial);
    c.kl = TrajectoryKl(c.backward.reflexes, c.marginals, reference);
    c.dual.violation = c.kl - d.epsilon;
    return c;
  };

  std::optional<Candidate> accepted;
  int iterations = 0;
  if (!std::isfinite(dual.epsilon)) {
    DualState inactive = dual;
    inactive.lambda.setZero();
    accepted = evaluate(inactive);
    iterations = 1;
  } else {
    DualState d = dual;
    for (Eigen::Index t = 0; t < d.lambda.size(); ++t)
      if (!(d.lambda[t] > 0.0)) d.lambda[t] = kDualInitial;
    const double bound = (1.0 + kKlTolerance) * d.epsilon;
    while (iterations < options.max_dual_iterations) {
      Candidate c = evaluate(d);
      ++iterations;
      const double kl = c.kl;
      const bool at_floor = d.lambda.maxCoeff() <= kDualFloor;
      if (kl <= bound) {
        const bool settled = kl >= 0.5 * d.epsilon || at_floor;
        if (!accepted || kl > accepted->kl) accepted = std::move(c);
        if (settled) break;
      }
      DualState next = AdjustDual(d, kl);
      if (next.lambda.maxCoeff() > kDualCap) {
        if (accepted) break;
        throw NumericalError("CStep: dual variable exceeded cap " + std::to_string(kDualCap) +
                             " without satisfying KL <= " + std::to_string(bound));
      }
      next.lambda = next.lambda.cwiseMax(kDualFloor);
      d = next;
    }
    if (!accepted)
      throw NumericalError("CStep: no dual value met the KL bound within " +
                           std::to_string(options.max_dual_iterations) + " adjustments");
  }

  CStepResult out;
  out.policy.reflexes = std::move(accepted->backward.reflexes);
  out.policy.state_marginals = std::move(accepted->marginals);
  out.dataset = BuildDataset(out.policy.state_marginals, out.policy.reflexes,
                             options.extra_samples_per_step, rng);
  out.dual = accepted->dual;
  out.kl = accepted->kl;
  out.expected_cost = ExpectedCost(cost, out.policy.reflexes, out.policy.state_marginals);
  out.dual_iterations = iterations;
  return out;
}

}  // namespace gmr
