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

#include "gmr/dynamics.hpp"

#include <algorithm>
#include <iomanip>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <utility>

namespace gmr {

TimeVaryingLinearGaussianDynamics FitDynamics(std::span<const Trajectory> samples,
                                              const DynamicsFitOptions& options) {
  Require(samples.size() >= 2, "FitDynamics: need at least two trajectories");
  Require(options.regularization >= 0.0, "FitDynamics: negative regularization");
  Require(options.window >= 0, "FitDynamics: negative window");
  const int horizon = samples.front().horizon();
  const int dx = samples.front().state_dim();
  const int du = samples.front().action_dim();
  Require(horizon >= 1 && dx >= 1 && du >= 1, "FitDynamics: empty trajectory");
  for (const Trajectory& s : samples) {
    Require(s.horizon() == horizon && static_cast<int>(s.states.size()) == horizon + 1,
            "FitDynamics: trajectories do not share a horizon");
    for (const Vector& x : s.states)
      Require(x.size() == dx && x.allFinite(), "FitDynamics: bad state entry");
    for (const Vector& u : s.actions)
      Require(u.size() == du && u.allFinite(), "FitDynamics: bad action entry");
  }

  const int p = dx + du;
  TimeVaryingLinearGaussianDynamics dyn;
  dyn.state_dim = dx;
  dyn.action_dim = du;
  for (int t = 0; t < horizon; ++t) {
    const int lo = std::max(0, t - options.window);
    const int hi = std::min(horizon - 1, t + options.window);
    const Eigen::Index n = static_cast<Eigen::Index>(samples.size()) * (hi - lo + 1);
    Matrix inputs(n, p);
    Matrix targets(n, dx);
    Eigen::Index row = 0;
    for (int tau = lo; tau <= hi; ++tau) {
      for (const Trajectory& s : samples) {
        inputs.row(row).head(dx) = s.states[tau].transpose();
        inputs.row(row).tail(du) = s.actions[tau].transpose();
        targets.row(row) = s.states[tau + 1].transpose();
        ++row;
      }
    }
    const Eigen::RowVectorXd in_mean = inputs.colwise().mean();
    const Eigen::RowVectorXd out_mean = targets.colwise().mean();
    const Matrix in_c = inputs.rowwise() - in_mean;
    const Matrix out_c = targets.rowwise() - out_mean;

    Matrix gram = in_c.transpose() * in_c;
    if (options.regularization == 0.0) {
      Eigen::FullPivLU<Matrix> lu(gram);
      lu.setThreshold(1e-12);
      if (lu.rank() < p)
        throw NumericalError("FitDynamics: regressor is rank deficient at t=" + std::to_string(t) +
                             "; raise the regularization");
    }
    gram.diagonal().array() += options.regularization;
    Eigen::LDLT<Matrix> ldlt(gram);
    const Matrix coeffs = ldlt.solve(in_c.transpose() * out_c);  // p x dx
    if (!coeffs.allFinite())
      throw NumericalError("FitDynamics: solve failed at t=" + std::to_string(t));

    Matrix fxu = coeffs.transpose();
    Vector fc = out_mean.transpose() - fxu * in_mean.transpose();
    const Matrix residual = out_c - in_c * coeffs;
    Matrix cov = Symmetrize(residual.transpose() * residual / static_cast<double>(n));
    cov.diagonal().array() += kDynamicsCovarianceFloor;

    dyn.fxu.push_back(std::move(fxu));
    dyn.fc.push_back(std::move(fc));
    dyn.cov.push_back(std::move(cov));
  }
  return dyn;
}

TimeVaryingLinearGaussianDynamics MakeTimeInvariantDynamics(const Matrix& a, const Matrix& b,
                                                            const Vector& c, const Matrix& cov,
                                                            int horizon) {
  Require(a.rows() == a.cols() && b.rows() == a.rows() && c.size() == a.rows() &&
              cov.rows() == a.rows() && cov.cols() == a.rows(),
          "MakeTimeInvariantDynamics: shape mismatch");
  TimeVaryingLinearGaussianDynamics dyn;
  dyn.state_dim = static_cast<int>(a.rows());
  dyn.action_dim = static_cast<int>(b.cols());
  Matrix fxu(a.rows(), a.cols() + b.cols());
  fxu << a, b;
  for (int t = 0; t < horizon; ++t) {
    dyn.fxu.push_back(fxu);
    dyn.fc.push_back(c);
    dyn.cov.push_back(cov);
  }
  return dyn;
}

Gaussian Predict(const TimeVaryingLinearGaussianDynamics& dyn, int t, const Vector& x,
                 const Vector& u) {
  if (t < 0 || t >= dyn.horizon())
    throw std::out_of_range("Predict: timestep " + std::to_string(t) + " outside [0, " +
                            std::to_string(dyn.horizon()) + ")");
  Require(x.size() == dyn.state_dim && u.size() == dyn.action_dim, "Predict: dimension mismatch");
  Vector xu(x.size() + u.size());
  xu << x, u;
  return {dyn.fxu[t] * xu + dyn.fc[t], dyn.cov[t]};
}

void WriteTrajectoryCsv(std::ostream& os, std::span<const Trajectory> trajectories) {
  if (trajectories.empty()) {
    os << "condition,sample,t\n";
    return;
  }
  const int dx = trajectories.front().state_dim();
  const int du = trajectories.front().action_dim();
  os << "condition,sample,t";
  for (int i = 0; i < dx; ++i) os << ",x" << i;
  for (int i = 0; i < du; ++i) os << ",u" << i;
  os << '\n' << std::setprecision(17);
  for (std::size_t s = 0; s < trajectories.size(); ++s) {
    const Trajectory& tr = trajectories[s];
    Require(tr.state_dim() == dx && tr.action_dim() == du,
            "WriteTrajectoryCsv: trajectories differ in dimension");
    for (std::size_t t = 0; t < tr.states.size(); ++t) {
      os << tr.condition_id << ',' << s << ',' << t;
      for (int i = 0; i < dx; ++i) os << ',' << tr.states[t][i];
      for (int i = 0; i < du; ++i) {
        os << ',';
        if (t < tr.actions.size()) os << tr.actions[t][i];
      }
      os << '\n';
    }
  }
}

std::vector<Trajectory> ReadTrajectoryCsv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("ReadTrajectoryCsv: empty input");
  int dx = 0, du = 0;
  {
    std::stringstream header(line);
    std::string cell;
    while (std::getline(header, cell, ',')) {
      if (!cell.empty() && cell[0] == 'x') ++dx;
      if (!cell.empty() && cell[0] == 'u') ++du;
    }
  }
  std::map<int, Trajectory> by_sample;
  std::vector<int> order;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream row(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(row, cell, ',')) cells.push_back(cell);
    if (line.back() == ',') cells.emplace_back();
    if (static_cast<int>(cells.size()) != 3 + dx + du)
      throw std::runtime_error("ReadTrajectoryCsv: wrong column count in '" + line + "'");
    const int condition = std::stoi(cells[0]);
    const int sample = std::stoi(cells[1]);
    auto [it, inserted] = by_sample.try_emplace(sample);
    if (inserted) order.push_back(sample);
    Trajectory& tr = it->second;
    tr.condition_id = condition;
    Vector x(dx);
    for (int i = 0; i < dx; ++i) x[i] = std::stod(cells[3 + i]);
    tr.states.push_back(std::move(x));
    if (du > 0 && !cells[3 + dx].empty()) {
      Vector u(du);
      for (int i = 0; i < du; ++i) u[i] = std::stod(cells[3 + dx + i]);
      tr.actions.push_back(std::move(u));
    }
  }
  std::vector<Trajectory> out;
  for (int s : order) out.push_back(std::move(by_sample[s]));
  return out;
}

}  // namespace gmr
