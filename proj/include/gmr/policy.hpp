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

#ifndef GMR_POLICY_HPP_
#define GMR_POLICY_HPP_

#include <span>
#include <string>
#include <vector>

#include "gmr/nn.hpp"
#include "gmr/trajopt.hpp"
#include "gmr/types.hpp"

namespace gmr {

inline constexpr double kDefaultAlpha = 1e-2;
inline constexpr double kDefaultBeta = 2e-4;
inline constexpr double kLatentStdFloor = 1e-4;
inline constexpr double kReflexCovarianceJitter = 1e-6;

enum class PolicyMode { kTrain, kTest };

struct GmrConfig {
  int state_dim = 4;
  int action_dim = 2;
  int latent_dim = 8;
  int encoder_hidden = 64;
  int decoder_hidden = 64;
  int translator_hidden = 128;
  double alpha = kDefaultAlpha;
  double beta = kDefaultBeta;
};

// Encoder x -> [mu_z; log var_z], decoder z -> x, translator z -> reflex
// parameters [K (row-major); k; lower-triangular covariance factor].
class GmrPolicy {
 public:
  GmrPolicy() = default;
  GmrPolicy(const GmrConfig& config, Rng& rng);
  GmrPolicy(const GmrConfig& config, nn::Network encoder, nn::Network decoder,
            nn::Network translator);

  // d_u*d_x + d_u + d_u*(d_u+1)/2
  static int TranslatorOutputDim(int state_dim, int action_dim);

  // Maps a translator output vector to a reflex; the covariance factor's
  // diagonal passes through softplus and Sigma = L L^T + jitter.
  MotorReflex DecodeReflex(const Vector& translator_output) const;

  const GmrConfig& config() const { return config_; }
  PolicyMode mode() const { return mode_; }
  void set_mode(PolicyMode mode) { mode_ = mode; }

  nn::Network encoder;
  nn::Network decoder;
  nn::Network translator;

 private:
  GmrConfig config_;
  PolicyMode mode_ = PolicyMode::kTest;
};

struct GmrOutput {
  Vector z;
  Vector reconstruction;
  MotorReflex reflex;
  Vector action;
};

// Train mode samples z ~ N(mu_z, var_z) and u from the reflex. Test mode uses
// z = mu_z and returns the mean action unless `sample_action` is set.
GmrOutput GmrForward(const GmrPolicy& policy, const Vector& x, Rng* rng = nullptr,
                     bool sample_action = false);

struct ReflexKlTerms {
  double cov = 0.0;   // tr(P Sigma) - log|Sigma|
  double mean = 0.0;  // du^T P du
  double total() const { return cov + mean; }
};

// KL training term between a generated reflex and the local controller at x,
// trained on the reference gain and action with the offset difference
// eliminated as dk = du - dK x.
ReflexKlTerms ReflexKlLoss(const MotorReflex& reflex, const Vector& reference_action,
                           const Matrix& reference_gain, const Matrix& reference_covariance,
                           const Vector& x);

struct GmrLossBreakdown {
  double recon = 0.0;
  double latent_kl = 0.0;
  double reflex_kl = 0.0;
  double l2 = 0.0;
  double alpha = 0.0;
  double beta = 0.0;
  double total() const { return recon + alpha * latent_kl + reflex_kl + beta * l2; }
};

struct GmrGradients {
  nn::GradientTape encoder;
  nn::GradientTape decoder;
  nn::GradientTape translator;
};

struct GmrLossResult {
  GmrLossBreakdown loss;
  GmrGradients gradients;
};

// Mean loss over `records` with latent noise given explicitly (latent_dim x
// records.size()); z = mu + sigma * noise.
GmrLossResult GmrLoss(const GmrPolicy& policy, std::span<const ReflexRecord> records,
                      double alpha, double beta, const Matrix& noise);
GmrLossResult GmrLoss(const GmrPolicy& policy, std::span<const ReflexRecord> records,
                      double alpha, double beta, Rng& rng);

struct TrainOptions {
  int epochs = 400;
  int batch_size = 20;
  nn::AdamOptions adam;
};

// Mini-batch Adam over the pooled records. Returns the mean loss per epoch.
std::vector<double> SStep(GmrPolicy& policy, std::span<const ReflexRecord> records,
                          const TrainOptions& options, Rng& rng);

ReflexDataset PoolDatasets(std::span<const ReflexDataset> datasets);

// State -> action network with a fixed exploration covariance.
struct BaselinePolicy {
  nn::Network net;
  double exploration_variance = 1e-2;
  double beta = kDefaultBeta;

  static BaselinePolicy Make(int state_dim, int action_dim, Rng& rng, int hidden = 64);
  Vector Act(const Vector& x) const { return nn::Forward(net, x); }
  int state_dim() const { return net.input_dim(); }
  int action_dim() const { return net.output_dim(); }
};

struct BaselineLossResult {
  double precision_mse = 0.0;
  double l2 = 0.0;
  double beta = 0.0;
  nn::GradientTape gradient;
  double total() const { return precision_mse + beta * l2; }
};

// mean (mu(x) - u)^T P (mu(x) - u) + beta * |theta|^2
BaselineLossResult BaselineLoss(const BaselinePolicy& policy,
                                std::span<const ReflexRecord> records, double beta);

std::vector<double> BaselineSStep(BaselinePolicy& policy, std::span<const ReflexRecord> records,
                                  const TrainOptions& options, Rng& rng);

// Linear-Gaussian approximation of a global policy around each state, via a
// central-difference Jacobian of its mean action.
std::vector<MotorReflex> LinearizeGmr(const GmrPolicy& policy, std::span<const Vector> states);
std::vector<MotorReflex> LinearizeBaseline(const BaselinePolicy& policy,
                                           std::span<const Vector> states);

// Policy checkpoints: a manifest (policy.json) plus one network file per net.
void SaveGmrPolicy(const std::string& dir, const GmrPolicy& policy);
GmrPolicy LoadGmrPolicy(const std::string& dir);
void SaveBaselinePolicy(const std::string& dir, const BaselinePolicy& policy);
BaselinePolicy LoadBaselinePolicy(const std::string& dir);

}  // namespace gmr

#endif  // GMR_POLICY_HPP_
