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

#include "gmr/policy.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <utility>

#include <nlohmann/json.hpp>

namespace gmr {
namespace {

using nn::Activation;

double Softplus(double a) { return a > 30.0 ? a : std::log1p(std::exp(a)); }
double Sigmoid(double a) { return 1.0 / (1.0 + std::exp(-a)); }

int GainCount(int dx, int du) { return du * dx; }

// Runs a forward pass and names the first layer whose output is not finite.
Matrix CheckedForward(const nn::Network& net, const Matrix& in, nn::ForwardCache* cache,
                      const char* name) {
  nn::ForwardCache local;
  nn::ForwardCache* c = cache != nullptr ? cache : &local;
  Matrix out = nn::ForwardBatch(net, in, c);
  if (!out.allFinite()) {
    for (std::size_t i = 0; i < c->activations.size(); ++i) {
      if (!c->activations[i].allFinite())
        throw NumericalError(std::string(name) + ": non-finite output at layer " +
                             std::to_string(i));
    }
    throw NumericalError(std::string(name) + ": non-finite output");
  }
  return out;
}

Matrix InverseSpd(const Matrix& m, const char* who) {
  Eigen::LLT<Matrix> llt(m);
  if (llt.info() != Eigen::Success)
    throw NumericalError(std::string(who) + ": covariance is singular or indefinite");
  return Symmetrize(llt.solve(Matrix::Identity(m.rows(), m.cols())));
}

double LogDetSpd(const Matrix& m, const char* who) {
  Eigen::LLT<Matrix> llt(m);
  if (llt.info() != Eigen::Success)
    throw NumericalError(std::string(who) + ": covariance is singular or indefinite");
  return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

Matrix StatesOf(std::span<const ReflexRecord> records) {
  Matrix x(records.front().state.size(), static_cast<Eigen::Index>(records.size()));
  for (std::size_t b = 0; b < records.size(); ++b) x.col(static_cast<Eigen::Index>(b)) = records[b].state;
  return x;
}

template <typename StepFn>
std::vector<double> RunEpochs(std::size_t n, const TrainOptions& options, Rng& rng, StepFn step) {
  if (n == 0) throw std::invalid_argument("training on an empty dataset");
  Require(options.epochs >= 1 && options.batch_size >= 1,
          "training: epochs and batch size must be >= 1");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> history;
  history.reserve(options.epochs);
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double sum = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start < n; start += options.batch_size) {
      const std::size_t stop = std::min(n, start + static_cast<std::size_t>(options.batch_size));
      sum += step(std::span<const std::size_t>(order.data() + start, stop - start));
      ++batches;
    }
    history.push_back(sum / batches);
  }
  return history;
}

template <typename MeanFn, typename CovFn>
std::vector<MotorReflex> LinearizeMean(MeanFn mean_action, std::span<const Vector> states,
                                       CovFn covariance) {
  std::vector<MotorReflex> out;
  out.reserve(states.size());
  for (const Vector& x : states) {
    const Vector u0 = mean_action(x);
    Matrix jac(u0.size(), x.size());
    for (Eigen::Index j = 0; j < x.size(); ++j) {
      const double h = 1e-5 * std::max(1.0, std::abs(x[j]));
      Vector xp = x, xm = x;
      xp[j] += h;
      xm[j] -= h;
      jac.col(j) = (mean_action(xp) - mean_action(xm)) / (2.0 * h);
    }
    out.push_back({jac, u0 - jac * x, covariance(x)});
  }
  return out;
}

}  // namespace

GmrPolicy::GmrPolicy(const GmrConfig& config, Rng& rng) : config_(config) {
  Require(config.state_dim > 0 && config.action_dim > 0 && config.latent_dim > 0,
          "GmrPolicy: dimensions must be positive");
  const int p = TranslatorOutputDim(config.state_dim, config.action_dim);
  encoder = nn::Network({config.state_dim, config.encoder_hidden, 2 * config.latent_dim},
                        {Activation::kLeakyRelu, Activation::kIdentity}, rng);
  decoder = nn::Network({config.latent_dim, config.decoder_hidden, config.state_dim},
                        {Activation::kLeakyRelu, Activation::kIdentity}, rng);
  translator = nn::Network({config.latent_dim, config.translator_hidden, p},
                           {Activation::kLeakyRelu, Activation::kIdentity}, rng);
}

GmrPolicy::GmrPolicy(const GmrConfig& config, nn::Network enc, nn::Network dec,
                     nn::Network trans)
    : encoder(std::move(enc)),
      decoder(std::move(dec)),
      translator(std::move(trans)),
      config_(config) {
  Require(encoder.input_dim() == config.state_dim &&
              encoder.output_dim() == 2 * config.latent_dim,
          "GmrPolicy: encoder shape does not match config");
  Require(decoder.input_dim() == config.latent_dim && decoder.output_dim() == config.state_dim,
          "GmrPolicy: decoder shape does not match config");
  Require(translator.input_dim() == config.latent_dim &&
              translator.output_dim() ==
                  TranslatorOutputDim(config.state_dim, config.action_dim),
          "GmrPolicy: translator shape does not match config");
}

int GmrPolicy::TranslatorOutputDim(int state_dim, int action_dim) {
  return action_dim * state_dim + action_dim + action_dim * (action_dim + 1) / 2;
}

MotorReflex GmrPolicy::DecodeReflex(const Vector& o) const {
  const int dx = config_.state_dim;
  const int du = config_.action_dim;
  Require(o.size() == TranslatorOutputDim(dx, du), "DecodeReflex: wrong parameter count");
  MotorReflex r;
  r.gain.resize(du, dx);
  for (int i = 0; i < du; ++i)
    for (int j = 0; j < dx; ++j) r.gain(i, j) = o[i * dx + j];
  r.offset = o.segment(GainCount(dx, du), du);
  Matrix factor = Matrix::Zero(du, du);
  int idx = GainCount(dx, du) + du;
  for (int i = 0; i < du; ++i)
    for (int j = 0; j <= i; ++j, ++idx) factor(i, j) = i == j ? Softplus(o[idx]) : o[idx];
  r.covariance = factor * factor.transpose();
  r.covariance.diagonal().array() += kReflexCovarianceJitter;
  return r;
}

GmrOutput GmrForward(const GmrPolicy& policy, const Vector& x, Rng* rng, bool sample_action) {
  const GmrConfig& cfg = policy.config();
  Require(x.size() == cfg.state_dim, "GmrForward: state dimension mismatch");
  if (!x.allFinite()) throw std::invalid_argument("GmrForward: non-finite state");
  const bool train = policy.mode() == PolicyMode::kTrain;
  Require(!(train || sample_action) || rng != nullptr, "GmrForward: sampling requires an rng");

  const Vector enc = CheckedForward(policy.encoder, x, nullptr, "encoder");
  const Vector mu = enc.head(cfg.latent_dim);
  GmrOutput out;
  if (train) {
    const Vector var = enc.tail(cfg.latent_dim).array().exp() + kLatentStdFloor * kLatentStdFloor;
    out.z = mu + var.cwiseSqrt().cwiseProduct(StandardNormal(cfg.latent_dim, *rng));
  } else {
    out.z = mu;
  }
  out.reconstruction = CheckedForward(policy.decoder, out.z, nullptr, "decoder");
  out.reflex = policy.DecodeReflex(CheckedForward(policy.translator, out.z, nullptr, "translator"));
  out.action = out.reflex.Mean(x);
  if (train || sample_action) out.action = SampleGaussian(out.action, out.reflex.covariance, *rng);
  return out;
}

ReflexKlTerms ReflexKlLoss(const MotorReflex& reflex, const Vector& reference_action,
                           const Matrix& reference_gain, const Matrix& reference_covariance,
                           const Vector& x) {
  Require(reference_gain.rows() == reflex.gain.rows() &&
              reference_gain.cols() == reflex.gain.cols() &&
              reference_action.size() == reflex.offset.size() && x.size() == reflex.gain.cols(),
          "ReflexKlLoss: dimension mismatch");
  const Matrix precision = InverseSpd(reference_covariance, "ReflexKlLoss reference");
  ReflexKlTerms terms;
  terms.cov = (precision * reflex.covariance).trace() -
              LogDetSpd(reflex.covariance, "ReflexKlLoss reflex");
  const Vector dgain_x = (reflex.gain - reference_gain) * x;
  const Vector du = reflex.Mean(x) - reference_action;
  const Vector doffset = du - dgain_x;
  const Vector dmean = dgain_x + doffset;
  terms.mean = dmean.dot(precision * dmean);
  return terms;
}

GmrLossResult GmrLoss(const GmrPolicy& policy, std::span<const ReflexRecord> records,
                      double alpha, double beta, const Matrix& noise) {
  if (records.empty()) throw std::invalid_argument("GmrLoss: empty dataset");
  const GmrConfig& cfg = policy.config();
  const int dx = cfg.state_dim;
  const int du = cfg.action_dim;
  const int nz = cfg.latent_dim;
  const auto n = static_cast<Eigen::Index>(records.size());
  Require(noise.rows() == nz && noise.cols() == n, "GmrLoss: noise shape mismatch");
  const double inv_n = 1.0 / static_cast<double>(n);

  const Matrix x = StatesOf(records);
  Require(x.rows() == dx, "GmrLoss: record state dimension mismatch");

  nn::ForwardCache enc_cache, dec_cache, trans_cache;
  const Matrix enc = CheckedForward(policy.encoder, x, &enc_cache, "encoder");
  const Matrix mu = enc.topRows(nz);
  const Matrix logvar = enc.bottomRows(nz);
  const Matrix exp_logvar = logvar.array().exp().matrix();
  const Matrix var = (exp_logvar.array() + kLatentStdFloor * kLatentStdFloor).matrix();
  const Matrix sigma = var.cwiseSqrt();
  const Matrix z = mu + sigma.cwiseProduct(noise);

  const Matrix recon = CheckedForward(policy.decoder, z, &dec_cache, "decoder");
  const Matrix trans = CheckedForward(policy.translator, z, &trans_cache, "translator");

  GmrLossResult result;
  GmrLossBreakdown& loss = result.loss;
  loss.alpha = alpha;
  loss.beta = beta;

  const Matrix recon_err = x - recon;
  loss.recon = recon_err.squaredNorm() * inv_n;
  loss.latent_kl =
      0.5 * (var.array() + mu.array().square() - 1.0 - var.array().log()).sum() * inv_n;

  Matrix d_trans(trans.rows(), n);
  double reflex_sum = 0.0;
  const int gains = GainCount(dx, du);
  for (Eigen::Index b = 0; b < n; ++b) {
    const ReflexRecord& rec = records[static_cast<std::size_t>(b)];
    const Vector o = trans.col(b);
    const MotorReflex reflex = policy.DecodeReflex(o);
    const Matrix precision = InverseSpd(rec.reference_covariance, "GmrLoss reference");
    const Vector du_vec = reflex.Mean(rec.state) - rec.action;
    const Matrix sigma_inv = InverseSpd(reflex.covariance, "GmrLoss reflex");
    reflex_sum += (precision * reflex.covariance).trace() -
                  LogDetSpd(reflex.covariance, "GmrLoss reflex") +
                  du_vec.dot(precision * du_vec);

    // d/d(mean action), d/dSigma
    const Vector g_mean = 2.0 * precision * du_vec * inv_n;
    const Matrix g_cov = (precision - sigma_inv) * inv_n;

    Vector g(o.size());
    for (int i = 0; i < du; ++i)
      for (int j = 0; j < dx; ++j) g[i * dx + j] = g_mean[i] * rec.state[j];
    g.segment(gains, du) = g_mean;
    Matrix factor = Matrix::Zero(du, du);
    int idx = gains + du;
    for (int i = 0; i < du; ++i)
      for (int j = 0; j <= i; ++j, ++idx) factor(i, j) = i == j ? Softplus(o[idx]) : o[idx];
    const Matrix g_factor = 2.0 * g_cov * factor;
    idx = gains + du;
    for (int i = 0; i < du; ++i)
      for (int j = 0; j <= i; ++j, ++idx)
        g[idx] = i == j ? g_factor(i, j) * Sigmoid(o[idx]) : g_factor(i, j);
    d_trans.col(b) = g;
  }
  loss.reflex_kl = reflex_sum * inv_n;
  loss.l2 = policy.encoder.SquaredNorm() + policy.decoder.SquaredNorm() +
            policy.translator.SquaredNorm();

  if (!std::isfinite(loss.total())) throw NumericalError("GmrLoss: non-finite loss");

  GmrGradients& grads = result.gradients;
  grads.encoder = nn::GradientTape::ZerosLike(policy.encoder);
  grads.decoder = nn::GradientTape::ZerosLike(policy.decoder);
  grads.translator = nn::GradientTape::ZerosLike(policy.translator);

  const Matrix dz_trans = nn::Backward(policy.translator, trans_cache, d_trans, grads.translator);
  const Matrix dz_dec =
      nn::Backward(policy.decoder, dec_cache, -2.0 * inv_n * recon_err, grads.decoder);
  const Matrix dz = dz_trans + dz_dec;

  const Matrix d_mu = dz + alpha * inv_n * mu;
  const Matrix d_var = (dz.cwiseProduct(noise).array() / (2.0 * sigma.array()) +
                        alpha * inv_n * 0.5 * (1.0 - 1.0 / var.array()))
                           .matrix();
  Matrix d_enc(2 * nz, n);
  d_enc.topRows(nz) = d_mu;
  d_enc.bottomRows(nz) = d_var.cwiseProduct(exp_logvar);
  nn::Backward(policy.encoder, enc_cache, d_enc, grads.encoder);

  nn::AddL2Gradient(policy.encoder, beta, grads.encoder);
  nn::AddL2Gradient(policy.decoder, beta, grads.decoder);
  nn::AddL2Gradient(policy.translator, beta, grads.translator);
  return result;
}

GmrLossResult GmrLoss(const GmrPolicy& policy, std::span<const ReflexRecord> records,
                      double alpha, double beta, Rng& rng) {
  if (records.empty()) throw std::invalid_argument("GmrLoss: empty dataset");
  const int nz = policy.config().latent_dim;
  Matrix noise(nz, static_cast<Eigen::Index>(records.size()));
  for (Eigen::Index b = 0; b < noise.cols(); ++b) noise.col(b) = StandardNormal(nz, rng);
  return GmrLoss(policy, records, alpha, beta, noise);
}

std::vector<double> SStep(GmrPolicy& policy, std::span<const ReflexRecord> records,
                          const TrainOptions& options, Rng& rng) {
  if (records.empty()) throw std::invalid_argument("SStep: empty dataset");
  const double alpha = policy.config().alpha;
  const double beta = policy.config().beta;
  auto enc_state = nn::AdamState::For(policy.encoder, options.adam);
  auto dec_state = nn::AdamState::For(policy.decoder, options.adam);
  auto trans_state = nn::AdamState::For(policy.translator, options.adam);
  const PolicyMode previous_mode = policy.mode();
  policy.set_mode(PolicyMode::kTrain);
  std::vector<ReflexRecord> batch;
  auto history = RunEpochs(records.size(), options, rng, [&](std::span<const std::size_t> idx) {
    batch.clear();
    for (std::size_t i : idx) batch.push_back(records[i]);
    GmrLossResult r = GmrLoss(policy, batch, alpha, beta, rng);
    nn::AdamStep(policy.encoder, r.gradients.encoder, enc_state);
    nn::AdamStep(policy.decoder, r.gradients.decoder, dec_state);
    nn::AdamStep(policy.translator, r.gradients.translator, trans_state);
    return r.loss.total();
  });
  policy.set_mode(previous_mode);
  return history;
}

ReflexDataset PoolDatasets(std::span<const ReflexDataset> datasets) {
  ReflexDataset pooled;
  for (const ReflexDataset& d : datasets) pooled.insert(pooled.end(), d.begin(), d.end());
  return pooled;
}

BaselinePolicy BaselinePolicy::Make(int state_dim, int action_dim, Rng& rng, int hidden) {
  BaselinePolicy p;
  p.net = nn::Network({state_dim, hidden, hidden, action_dim},
                      {Activation::kRelu, Activation::kRelu, Activation::kIdentity}, rng);
  return p;
}

BaselineLossResult BaselineLoss(const BaselinePolicy& policy,
                                std::span<const ReflexRecord> records, double beta) {
  if (records.empty()) throw std::invalid_argument("BaselineLoss: empty dataset");
  const auto n = static_cast<Eigen::Index>(records.size());
  const double inv_n = 1.0 / static_cast<double>(n);
  const Matrix x = StatesOf(records);
  nn::ForwardCache cache;
  const Matrix u = CheckedForward(policy.net, x, &cache, "baseline");
  BaselineLossResult r;
  r.beta = beta;
  Matrix upstream(u.rows(), n);
  for (Eigen::Index b = 0; b < n; ++b) {
    const ReflexRecord& rec = records[static_cast<std::size_t>(b)];
    const Matrix precision = InverseSpd(rec.reference_covariance, "BaselineLoss reference");
    const Vector du = u.col(b) - rec.action;
    r.precision_mse += du.dot(precision * du) * inv_n;
    upstream.col(b) = 2.0 * inv_n * precision * du;
  }
  r.l2 = policy.net.SquaredNorm();
  if (!std::isfinite(r.total())) throw NumericalError("BaselineLoss: non-finite loss");
  r.gradient = nn::GradientTape::ZerosLike(policy.net);
  nn::Backward(policy.net, cache, upstream, r.gradient);
  nn::AddL2Gradient(policy.net, beta, r.gradient);
  return r;
}

std::vector<double> BaselineSStep(BaselinePolicy& policy, std::span<const ReflexRecord> records,
                                  const TrainOptions& options, Rng& rng) {
  if (records.empty()) throw std::invalid_argument("BaselineSStep: empty dataset");
  auto state = nn::AdamState::For(policy.net, options.adam);
  std::vector<ReflexRecord> batch;
  return RunEpochs(records.size(), options, rng, [&](std::span<const std::size_t> idx) {
    batch.clear();
    for (std::size_t i : idx) batch.push_back(records[i]);
    BaselineLossResult r = BaselineLoss(policy, batch, policy.beta);
    nn::AdamStep(policy.net, r.gradient, state);
    return r.total();
  });
}

std::vector<MotorReflex> LinearizeGmr(const GmrPolicy& policy, std::span<const Vector> states) {
  GmrPolicy test = policy;
  test.set_mode(PolicyMode::kTest);
  return LinearizeMean([&](const Vector& x) { return GmrForward(test, x).action; }, states,
                       [&](const Vector& x) { return GmrForward(test, x).reflex.covariance; });
}

std::vector<MotorReflex> LinearizeBaseline(const BaselinePolicy& policy,
                                           std::span<const Vector> states) {
  const int du = policy.action_dim();
  return LinearizeMean([&](const Vector& x) { return policy.Act(x); }, states,
                       [&](const Vector&) {
                         return Matrix(policy.exploration_variance * Matrix::Identity(du, du));
                       });
}

namespace {

namespace fs = std::filesystem;

void WriteJson(const fs::path& path, const nlohmann::json& j) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << j.dump(2) << '\n';
}

nlohmann::json ReadJson(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read " + path.string());
  return nlohmann::json::parse(is);
}

}  // namespace

void SaveGmrPolicy(const std::string& dir, const GmrPolicy& policy) {
  fs::create_directories(dir);
  const GmrConfig& c = policy.config();
  nlohmann::json manifest = {
      {"format", "gmr-policy"},  {"version", 1},
      {"kind", "gmr"},           {"state_dim", c.state_dim},
      {"action_dim", c.action_dim}, {"latent_dim", c.latent_dim},
      {"alpha", c.alpha},        {"beta", c.beta},
      {"mode", policy.mode() == PolicyMode::kTrain ? "train" : "test"},
      {"networks", {{"encoder", "encoder.net"}, {"decoder", "decoder.net"},
                    {"translator", "translator.net"}}}};
  WriteJson(fs::path(dir) / "policy.json", manifest);
  nn::SaveNetwork((fs::path(dir) / "encoder.net").string(), policy.encoder);
  nn::SaveNetwork((fs::path(dir) / "decoder.net").string(), policy.decoder);
  nn::SaveNetwork((fs::path(dir) / "translator.net").string(), policy.translator);
}

GmrPolicy LoadGmrPolicy(const std::string& dir) {
  const nlohmann::json m = ReadJson(fs::path(dir) / "policy.json");
  if (m.value("kind", "") != "gmr") throw std::runtime_error(dir + " is not a gmr policy");
  GmrConfig c;
  c.state_dim = m.at("state_dim");
  c.action_dim = m.at("action_dim");
  c.latent_dim = m.at("latent_dim");
  c.alpha = m.at("alpha");
  c.beta = m.at("beta");
  auto net = [&](const char* key) {
    return nn::LoadNetwork((fs::path(dir) / m.at("networks").at(key).get<std::string>()).string());
  };
  nn::Network enc = net("encoder");
  nn::Network dec = net("decoder");
  nn::Network trans = net("translator");
  c.encoder_hidden = enc.layers().front().weight.rows();
  c.decoder_hidden = dec.layers().front().weight.rows();
  c.translator_hidden = trans.layers().front().weight.rows();
  GmrPolicy p(c, std::move(enc), std::move(dec), std::move(trans));
  p.set_mode(m.value("mode", "test") == "train" ? PolicyMode::kTrain : PolicyMode::kTest);
  return p;
}

void SaveBaselinePolicy(const std::string& dir, const BaselinePolicy& policy) {
  fs::create_directories(dir);
  nlohmann::json manifest = {{"format", "gmr-policy"},
                             {"version", 1},
                             {"kind", "baseline"},
                             {"state_dim", policy.state_dim()},
                             {"action_dim", policy.action_dim()},
                             {"beta", policy.beta},
                             {"exploration_variance", policy.exploration_variance},
                             {"mode", "test"},
                             {"networks", {{"policy", "policy.net"}}}};
  WriteJson(fs::path(dir) / "policy.json", manifest);
  nn::SaveNetwork((fs::path(dir) / "policy.net").string(), policy.net);
}

BaselinePolicy LoadBaselinePolicy(const std::string& dir) {
  const nlohmann::json m = ReadJson(fs::path(dir) / "policy.json");
  if (m.value("kind", "") != "baseline")
    throw std::runtime_error(dir + " is not a baseline policy");
  BaselinePolicy p;
  p.net = nn::LoadNetwork(
      (fs::path(dir) / m.at("networks").at("policy").get<std::string>()).string());
  p.beta = m.at("beta");
  p.exploration_variance = m.at("exploration_variance");
  return p;
}

}  // namespace gmr
