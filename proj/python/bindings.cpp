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

// Python bindings. Configs and results cross the boundary as JSON text; the
// thin wrapper in gmr/__init__.py turns them into dicts.

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "gmr/harness.hpp"

namespace py = pybind11;
using gmr::Matrix;
using gmr::Vector;
using nlohmann::json;

namespace {

gmr::ExperimentConfig ParseConfig(const std::string& text) {
  return gmr::ConfigFromJson(json::parse(text));
}

json DiagnosticsJson(const std::vector<gmr::DiagnosticsRecord>& records) {
  json out = json::array();
  for (const gmr::DiagnosticsRecord& d : records)
    out.push_back({{"iteration", d.iteration},
                   {"condition", d.condition},
                   {"kl", d.kl},
                   {"epsilon", d.epsilon},
                   {"lambda_min", d.lambda_min},
                   {"lambda_max", d.lambda_max},
                   {"expected_cost", d.expected_cost},
                   {"dual_iterations", d.dual_iterations}});
  return out;
}

json ResultJson(const gmr::GpsResult& r) {
  json out = {{"metrics", gmr::MetricsToJson(r.metrics)},
              {"diagnostics", DiagnosticsJson(r.diagnostics)},
              {"dataset_hashes", r.dataset_hashes},
              {"samples_per_condition", r.samples_per_condition}};
  if (!r.baseline_metrics.empty()) out["baseline_metrics"] = gmr::MetricsToJson(r.baseline_metrics);
  return out;
}

std::string Train(const std::string& config_text, const std::string& out_dir) {
  const gmr::ExperimentConfig config = ParseConfig(config_text);
  gmr::GpsResult result;
  {
    py::gil_scoped_release release;
    result = gmr::RunGps(config);
    if (!out_dir.empty()) gmr::WriteRunArtifacts(out_dir, config, result);
  }
  return ResultJson(result).dump();
}

std::string Compare(const std::string& config_text, const std::string& out_dir) {
  const gmr::ExperimentConfig config = ParseConfig(config_text);
  gmr::ComparisonResult r;
  {
    py::gil_scoped_release release;
    r = gmr::ComparePolicies(config);
    if (!out_dir.empty()) {
      gmr::WriteRunArtifacts(out_dir, config, r.training);
      const std::filesystem::path dir(out_dir);
      gmr::WriteReport((dir / "robustness_gmr.json").string(), r.gmr);
      gmr::WriteReport((dir / "robustness_baseline.json").string(), r.baseline);
      std::ofstream((dir / "comparison.json").string()) << r.summary.dump(2) << '\n';
    }
  }
  json out = r.summary;
  out["training"] = ResultJson(r.training);
  return out.dump();
}

std::vector<std::tuple<Matrix, Vector, Matrix>> FitDynamicsPy(
    const std::vector<Matrix>& states, const std::vector<Matrix>& actions, double regularization,
    int window) {
  // states[i] is (T+1) x d_x, actions[i] is T x d_u, one row per timestep.
  gmr::Require(states.size() == actions.size(), "fit_dynamics: states/actions count mismatch");
  std::vector<gmr::Trajectory> trajectories(states.size());
  for (std::size_t i = 0; i < states.size(); ++i) {
    for (Eigen::Index t = 0; t < states[i].rows(); ++t)
      trajectories[i].states.push_back(states[i].row(t).transpose());
    for (Eigen::Index t = 0; t < actions[i].rows(); ++t)
      trajectories[i].actions.push_back(actions[i].row(t).transpose());
  }
  const auto dyn =
      gmr::FitDynamics(trajectories, {.regularization = regularization, .window = window});
  std::vector<std::tuple<Matrix, Vector, Matrix>> out;
  for (int t = 0; t < dyn.horizon(); ++t) out.emplace_back(dyn.fxu[t], dyn.fc[t], dyn.cov[t]);
  return out;
}

// Unconstrained LQR gains for x' = A x + B u + c with the quadratic goal cost.
std::vector<std::pair<Matrix, Vector>> LqrGains(const Matrix& a, const Matrix& b, const Vector& goal,
                                                double state_weight, double action_weight,
                                                double terminal_weight, int horizon) {
  const int dx = static_cast<int>(a.rows()), du = static_cast<int>(b.cols());
  const auto dyn = gmr::MakeTimeInvariantDynamics(a, b, Vector::Zero(dx),
                                                  1e-6 * Matrix::Identity(dx, dx), horizon);
  const auto cost =
      gmr::ExpandCost({goal, state_weight, action_weight, terminal_weight}, horizon, du);
  const auto ref = gmr::MakeInitialPolicy(horizon, dx, du, 1.0).reflexes;
  const auto back = gmr::LqrBackward(dyn, cost, ref, Vector::Zero(horizon));
  std::vector<std::pair<Matrix, Vector>> out;
  for (const gmr::MotorReflex& r : back.reflexes) out.emplace_back(r.gain, r.offset);
  return out;
}

std::pair<double, double> ReflexKl(const Matrix& gain, const Vector& offset, const Matrix& cov,
                                   const Vector& ref_action, const Matrix& ref_gain,
                                   const Matrix& ref_cov, const Vector& x) {
  const gmr::ReflexKlTerms t =
      gmr::ReflexKlLoss({gain, offset, cov}, ref_action, ref_gain, ref_cov, x);
  return {t.cov, t.mean};
}

class PyGmrPolicy {
 public:
  explicit PyGmrPolicy(gmr::GmrPolicy p) : policy_(std::move(p)) {}

  static PyGmrPolicy Create(int state_dim, int action_dim, std::uint64_t seed) {
    gmr::GmrConfig c;
    c.state_dim = state_dim;
    c.action_dim = action_dim;
    gmr::Rng rng(seed);
    return PyGmrPolicy(gmr::GmrPolicy(c, rng));
  }
  static PyGmrPolicy Load(const std::string& dir) { return PyGmrPolicy(gmr::LoadGmrPolicy(dir)); }

  Vector Act(const Vector& x) const { return gmr::GmrForward(policy_, x).action; }
  Vector Latent(const Vector& x) const { return gmr::GmrForward(policy_, x).z; }
  std::tuple<Matrix, Vector, Matrix> Reflex(const Vector& x) const {
    const gmr::MotorReflex r = gmr::GmrForward(policy_, x).reflex;
    return {r.gain, r.offset, r.covariance};
  }
  int state_dim() const { return policy_.config().state_dim; }
  int action_dim() const { return policy_.config().action_dim; }
  int reflex_parameters() const {
    return gmr::MotorReflex::ParameterCount(state_dim(), action_dim());
  }
  void Save(const std::string& dir) const { gmr::SaveGmrPolicy(dir, policy_); }

 private:
  gmr::GmrPolicy policy_;
};

}  // namespace

PYBIND11_MODULE(_gmr, m) {
  m.doc() = "Guided policy search with generative motor reflexes (native core)";

  py::register_exception<gmr::ContractViolation>(m, "ContractViolation", PyExc_ValueError);
  py::register_exception<gmr::NumericalError>(m, "NumericalError", PyExc_ArithmeticError);

  m.def("default_config_json", [] { return gmr::ConfigToJson(gmr::DefaultPointMassConfig()).dump(); });
  m.def("normalize_config_json",
        [](const std::string& text) { return gmr::ConfigToJson(ParseConfig(text)).dump(); });
  m.def("train_json", &Train, py::arg("config"), py::arg("out_dir") = "");
  m.def("compare_json", &Compare, py::arg("config"), py::arg("out_dir") = "");
  m.def("export_plot_data", &gmr::ExportPlotData, py::arg("run_dir"));
  m.def("fit_dynamics", &FitDynamicsPy, py::arg("states"), py::arg("actions"),
        py::arg("regularization") = 1e-6, py::arg("window") = 0);
  m.def("lqr_gains", &LqrGains, py::arg("a"), py::arg("b"), py::arg("goal"),
        py::arg("state_weight") = 1.0, py::arg("action_weight") = 1e-2,
        py::arg("terminal_weight") = 1.0, py::arg("horizon") = 80);
  m.def("reflex_kl", &ReflexKl, py::arg("gain"), py::arg("offset"), py::arg("cov"),
        py::arg("ref_action"), py::arg("ref_gain"), py::arg("ref_cov"), py::arg("x"));
  m.def(
      "env_step",
      [](const std::string& kind, const Vector& x, const Vector& u, std::uint64_t seed) {
        const gmr::Environment env(gmr::MakeEnvSpec(gmr::EnvKindFromName(kind)));
        gmr::Rng rng(seed);
        return env.Step(x, u, rng);
      },
      py::arg("kind"), py::arg("x"), py::arg("u"), py::arg("seed") = 0);

  py::class_<PyGmrPolicy>(m, "GmrPolicy")
      .def_static("create", &PyGmrPolicy::Create, py::arg("state_dim"), py::arg("action_dim"),
                  py::arg("seed") = 1)
      .def_static("load", &PyGmrPolicy::Load, py::arg("directory"))
      .def("save", &PyGmrPolicy::Save, py::arg("directory"))
      .def("act", &PyGmrPolicy::Act, py::arg("x"))
      .def("latent", &PyGmrPolicy::Latent, py::arg("x"))
      .def("reflex", &PyGmrPolicy::Reflex, py::arg("x"))
      .def_property_readonly("state_dim", &PyGmrPolicy::state_dim)
      .def_property_readonly("action_dim", &PyGmrPolicy::action_dim)
      .def_property_readonly("reflex_parameters", &PyGmrPolicy::reflex_parameters);
}
