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

#ifndef GMR_TYPES_HPP_
#define GMR_TYPES_HPP_

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace gmr {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// All stochastic components draw from this engine so that a seed fully
// determines a run on one platform.
using Rng = std::mt19937_64;

// Raised when a caller breaks a documented precondition (shapes, ordering).
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Raised when a numerical procedure cannot produce a valid result.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Gaussian {
  Vector mean;
  Matrix cov;
};

// Standard normal vector of length n.
Vector StandardNormal(Eigen::Index n, Rng& rng);

// Draws from N(mean, cov). cov only needs to be positive semi-definite.
Vector SampleGaussian(const Vector& mean, const Matrix& cov, Rng& rng);

// Matrix square root factor L with L*L^T == cov for PSD cov (eigen route,
// negative eigenvalues clipped to zero).
Matrix PsdFactor(const Matrix& cov);

// Derives an independent stream from a root seed and a tag sequence.
std::uint64_t DeriveSeed(std::uint64_t root, std::uint64_t a, std::uint64_t b = 0,
                         std::uint64_t c = 0);

inline Matrix Symmetrize(const Matrix& m) { return 0.5 * (m + m.transpose()); }

bool AllFinite(const Matrix& m);

inline void Require(bool cond, const std::string& what) {
  if (!cond) throw ContractViolation(what);
}

}  // namespace gmr

#endif  // GMR_TYPES_HPP_
