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

#include <algorithm>
#include <sstream>

#include "gmr/dynamics.hpp"
#include "test_util.hpp"

namespace gmr {
namespace {

// Rollouts of x' = A x + B u + c + noise with random states and actions.
std::vector<Trajectory> LinearData(const Matrix& a, const Matrix& b, const Vector& c, int n,
                                   int horizon, double noise_std, Rng& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<Trajectory> out;
  for (int s = 0; s < n; ++s) {
    Trajectory tr;
    tr.states.push_back(testing::RandomVector(a.rows(), rng));
    for (int t = 0; t < horizon; ++t) {
      const Vector u = testing::RandomVector(b.cols(), rng);
      Vector next = a * tr.states.back() + b * u + c;
      for (Eigen::Index i = 0; i < next.size(); ++i) next[i] += noise_std * g(rng);
      tr.actions.push_back(u);
      tr.states.push_back(next);
    }
    out.push_back(std::move(tr));
  }
  return out;
}

TEST_CASE("fit: noiseless linear data recovers [A B] exactly") {
  Rng rng(1);
  const Matrix a = testing::RandomMatrix(3, 3, rng, 0.8);
  const Matrix b = testing::RandomMatrix(3, 2, rng);
  const auto data = LinearData(a, b, Vector::Zero(3), 12, 6, 0.0, rng);
  const auto dyn = FitDynamics(data, {.regularization = 0.0});
  Matrix ab(3, 5);
  ab << a, b;
  REQUIRE(dyn.horizon() == 6);
  for (int t = 0; t < 6; ++t) {
    CHECK((dyn.fxu[t] - ab).norm() < 1e-8);
    CHECK(dyn.fc[t].norm() < 1e-8);
  }
}

TEST_CASE("fit: default ridge still recovers noiseless data closely") {
  Rng rng(2);
  const Matrix a = testing::RandomMatrix(2, 2, rng);
  const Matrix b = testing::RandomMatrix(2, 1, rng);
  const Vector c = testing::RandomVector(2, rng);
  const auto dyn = FitDynamics(LinearData(a, b, c, 10, 4, 0.0, rng));
  Matrix ab(2, 3);
  ab << a, b;
  for (int t = 0; t < 4; ++t) {
    CHECK((dyn.fxu[t] - ab).norm() < 1e-4);
    CHECK((dyn.fc[t] - c).norm() < 1e-4);
  }
}

TEST_CASE("fit: identity dynamics ignore the action") {
  Rng rng(3);
  std::vector<Trajectory> data;
  for (int s = 0; s < 8; ++s) {
    Trajectory tr;
    const Vector x = testing::RandomVector(2, rng);
    tr.states.assign(4, x);
    for (int t = 0; t < 3; ++t) tr.actions.push_back(testing::RandomVector(1, rng));
    data.push_back(tr);
  }
  const auto dyn = FitDynamics(data, {.regularization = 0.0});
  Matrix expected = Matrix::Zero(2, 3);
  expected.leftCols(2).setIdentity();
  for (int t = 0; t < 3; ++t) {
    CHECK((dyn.fxu[t] - expected).norm() < 1e-10);
    CHECK(dyn.fc[t].norm() < 1e-10);
  }
  const Gaussian p = Predict(dyn, 0, (Vector(2) << 1.0, 0.0).finished(), Vector::Constant(1, 5.0));
  CHECK((p.mean - (Vector(2) << 1.0, 0.0).finished()).norm() < 1e-10);
  CHECK(p.cov == dyn.cov[0]);
}

TEST_CASE("predict: scalar doubling model") {
  Rng rng(4);
  const auto data = LinearData(Matrix::Constant(1, 1, 2.0), Matrix::Zero(1, 1), Vector::Zero(1),
                               6, 3, 0.0, rng);
  const auto dyn = FitDynamics(data);
  const Gaussian p = Predict(dyn, 1, Vector::Constant(1, 3.0), Vector::Zero(1));
  CHECK(p.mean[0] == doctest::Approx(6.0).epsilon(1e-6));
  CHECK_THROWS_AS(Predict(dyn, 3, Vector::Zero(1), Vector::Zero(1)), std::out_of_range);
  CHECK_THROWS_AS(Predict(dyn, -1, Vector::Zero(1), Vector::Zero(1)), std::out_of_range);
}

TEST_CASE("fit: residual covariance matches the noise level") {
  Rng rng(5);
  const double sigma = 0.05;
  const auto data = LinearData(testing::RandomMatrix(2, 2, rng, 0.5),
                               testing::RandomMatrix(2, 1, rng), Vector::Zero(2), 500, 3, sigma, rng);
  const auto dyn = FitDynamics(data);
  for (int t = 0; t < 3; ++t) {
    const Eigen::SelfAdjointEigenSolver<Matrix> es(dyn.cov[t]);
    CHECK(es.eigenvalues().minCoeff() > 0.5 * sigma * sigma);
    CHECK(es.eigenvalues().maxCoeff() < 2.0 * sigma * sigma);
  }
}

TEST_CASE("fit: covariance floor keeps F positive definite on degenerate data") {
  Trajectory tr;
  tr.states.assign(3, Vector::Ones(2));
  tr.actions.assign(2, Vector::Zero(1));
  const std::vector<Trajectory> data(4, tr);
  const auto dyn = FitDynamics(data, {.regularization = 1e-3});
  for (const Matrix& f : dyn.cov) {
    const Eigen::SelfAdjointEigenSolver<Matrix> es(f);
    CHECK(es.eigenvalues().minCoeff() >= kDynamicsCovarianceFloor * (1 - 1e-12));
    CHECK((f - f.transpose()).norm() == 0.0);
  }
}

TEST_CASE("fit: never worse than the best constant predictor") {
  for (std::uint64_t seed = 10; seed < 15; ++seed) {
    Rng rng(seed);
    // Mildly nonlinear data so the linear fit is not exact.
    std::vector<Trajectory> data;
    for (int s = 0; s < 15; ++s) {
      Trajectory tr;
      tr.states.push_back(testing::RandomVector(2, rng));
      for (int t = 0; t < 4; ++t) {
        const Vector u = testing::RandomVector(1, rng);
        const Vector& x = tr.states.back();
        tr.actions.push_back(u);
        tr.states.push_back((Vector(2) << std::sin(x[0]) + u[0], x[0] * x[1]).finished());
      }
      data.push_back(tr);
    }
    const auto dyn = FitDynamics(data);
    for (int t = 0; t < 4; ++t) {
      Vector mean = Vector::Zero(2);
      for (const auto& tr : data) mean += tr.states[t + 1] / data.size();
      double fit = 0.0, constant = 0.0;
      for (const auto& tr : data) {
        fit += (Predict(dyn, t, tr.states[t], tr.actions[t]).mean - tr.states[t + 1]).squaredNorm();
        constant += (mean - tr.states[t + 1]).squaredNorm();
      }
      CHECK(fit <= constant + 1e-12);
    }
  }
}

TEST_CASE("fit: invariant to trajectory order") {
  Rng rng(6);
  auto data = LinearData(testing::RandomMatrix(2, 2, rng), testing::RandomMatrix(2, 2, rng),
                         Vector::Zero(2), 9, 3, 0.1, rng);
  const auto a = FitDynamics(data);
  std::reverse(data.begin(), data.end());
  std::swap(data[1], data[5]);
  const auto b = FitDynamics(data);
  for (int t = 0; t < 3; ++t) {
    CHECK((a.fxu[t] - b.fxu[t]).norm() < 1e-10);
    CHECK((a.fc[t] - b.fc[t]).norm() < 1e-10);
    CHECK((a.cov[t] - b.cov[t]).norm() < 1e-10);
  }
}

TEST_CASE("fit: equals ordinary least squares on noisy rollouts") {
  Rng rng(9);
  const Matrix a = testing::RandomMatrix(4, 4, rng, 0.5);
  const Matrix b = testing::RandomMatrix(4, 2, rng);
  const auto data = LinearData(a, b, Vector::Zero(4), 200, 6, 0.01, rng);
  const auto dyn = FitDynamics(data, {.regularization = 0.0});
  for (int t = 0; t < 6; ++t) {
    // [x u 1] -> x' by Householder QR, independent of the fit's normal equations.
    Matrix design(200, 7), target(200, 4);
    for (int i = 0; i < 200; ++i) {
      design.row(i) << data[i].states[t].transpose(), data[i].actions[t].transpose(), 1.0;
      target.row(i) = data[i].states[t + 1].transpose();
    }
    const Matrix w = design.colPivHouseholderQr().solve(target).transpose();
    CHECK((dyn.fxu[t] - w.leftCols(6)).norm() < 1e-8);
    CHECK((dyn.fc[t] - w.col(6)).norm() < 1e-8);
  }
}

TEST_CASE("fit: window pools neighbouring timesteps") {
  Rng rng(7);
  const Matrix a = testing::RandomMatrix(4, 4, rng, 0.5);
  const Matrix b = testing::RandomMatrix(4, 2, rng);
  // Five samples are too few for a per-timestep fit of 7 regressors ...
  const auto data = LinearData(a, b, Vector::Zero(4), 5, 10, 0.0, rng);
  CHECK_THROWS_AS(FitDynamics(data, {.regularization = 0.0, .window = 0}), NumericalError);
  // ... but pooling +-2 steps determines the time-invariant model.
  const auto dyn = FitDynamics(data, {.regularization = 0.0, .window = 2});
  Matrix ab(4, 6);
  ab << a, b;
  for (int t = 0; t < 10; ++t) CHECK((dyn.fxu[t] - ab).norm() < 1e-8);
}

TEST_CASE("fit: error paths") {
  Rng rng(8);
  const auto data = LinearData(Matrix::Identity(2, 2), Matrix::Identity(2, 1), Vector::Zero(2), 3,
                               2, 0.0, rng);
  CHECK_THROWS_AS(FitDynamics(std::span(data).first(1)), ContractViolation);
  auto ragged = data;
  ragged[1].actions.pop_back();
  ragged[1].states.pop_back();
  CHECK_THROWS_AS(FitDynamics(ragged), ContractViolation);
  try {
    FitDynamics(data, {.regularization = 0.0});
    FAIL("expected a rank-deficiency error");
  } catch (const NumericalError& e) {
    CHECK(std::string(e.what()).find("regularization") != std::string::npos);
  }
}

TEST_CASE("trajectory csv round trip") {
  Rng rng(9);
  auto data = LinearData(testing::RandomMatrix(3, 3, rng), testing::RandomMatrix(3, 2, rng),
                         Vector::Zero(3), 3, 4, 0.1, rng);
  data[2].condition_id = 1;
  std::stringstream ss;
  WriteTrajectoryCsv(ss, data);
  std::string header;
  std::getline(std::stringstream(ss.str()), header);
  CHECK(header == "condition,sample,t,x0,x1,x2,u0,u1");
  const auto back = ReadTrajectoryCsv(ss);
  REQUIRE(back.size() == 3);
  CHECK(back[2].condition_id == 1);
  for (std::size_t s = 0; s < 3; ++s) {
    REQUIRE(back[s].horizon() == 4);
    for (int t = 0; t <= 4; ++t) CHECK(back[s].states[t] == data[s].states[t]);
    for (int t = 0; t < 4; ++t) CHECK(back[s].actions[t] == data[s].actions[t]);
  }
}

}  // namespace
}  // namespace gmr
