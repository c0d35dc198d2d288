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

// Helpers shared by the unit suites.

#ifndef GMR_TESTS_TEST_UTIL_HPP_
#define GMR_TESTS_TEST_UTIL_HPP_

#include <algorithm>
#include <cmath>
#include <functional>

#include "gmr/types.hpp"

namespace gmr::testing {

// Relative error with an absolute floor for tiny entries.
inline bool GradientsAgree(double analytic, double numeric, double rel_tol = 1e-4,
                           double abs_floor = 1e-8) {
  const double scale = std::max(std::abs(analytic), std::abs(numeric));
  if (scale < abs_floor) return std::abs(analytic - numeric) < abs_floor;
  return std::abs(analytic - numeric) / scale < rel_tol;
}

// Central difference of f at parameter *p.
inline double CentralDifference(double* p, const std::function<double()>& f, double h = 1e-5) {
  const double saved = *p;
  *p = saved + h;
  const double up = f();
  *p = saved - h;
  const double down = f();
  *p = saved;
  return (up - down) / (2.0 * h);
}

inline Matrix RandomMatrix(int rows, int cols, Rng& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  Matrix m(rows, cols);
  for (int j = 0; j < cols; ++j)
    for (int i = 0; i < rows; ++i) m(i, j) = u(rng);
  return m;
}

inline Vector RandomVector(int n, Rng& rng, double scale = 1.0) {
  return RandomMatrix(n, 1, rng, scale).col(0);
}

inline Matrix RandomSpd(int n, Rng& rng, double floor = 0.2) {
  const Matrix a = RandomMatrix(n, n, rng);
  return a * a.transpose() + floor * Matrix::Identity(n, n);
}

}  // namespace gmr::testing

#endif  // GMR_TESTS_TEST_UTIL_HPP_
