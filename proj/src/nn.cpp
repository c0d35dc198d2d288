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

#include "gmr/nn.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>

namespace gmr::nn {
namespace {

constexpr const char* kCheckpointMagic = "gmr-network";
constexpr int kCheckpointVersion = 1;

Matrix Activate(Activation a, const Matrix& pre) {
  switch (a) {
    case Activation::kIdentity:
      return pre;
    case Activation::kLeakyRelu:
      return pre.unaryExpr([](double v) { return v >= 0.0 ? v : kLeakySlope * v; });
    case Activation::kRelu:
      return pre.cwiseMax(0.0);
  }
  return pre;
}

Matrix ActivationDerivative(Activation a, const Matrix& pre) {
  switch (a) {
    case Activation::kIdentity:
      return Matrix::Ones(pre.rows(), pre.cols());
    case Activation::kLeakyRelu:
      return pre.unaryExpr([](double v) { return v >= 0.0 ? 1.0 : kLeakySlope; });
    case Activation::kRelu:
      return pre.unaryExpr([](double v) { return v > 0.0 ? 1.0 : 0.0; });
  }
  return Matrix::Ones(pre.rows(), pre.cols());
}

}  // namespace

std::string ActivationName(Activation a) {
  switch (a) {
    case Activation::kIdentity:
      return "identity";
    case Activation::kLeakyRelu:
      return "leaky_relu";
    case Activation::kRelu:
      return "relu";
  }
  return "identity";
}

Activation ActivationFromName(const std::string& name) {
  if (name == "identity") return Activation::kIdentity;
  if (name == "leaky_relu") return Activation::kLeakyRelu;
  if (name == "relu") return Activation::kRelu;
  throw std::invalid_argument("unknown activation '" + name + "'");
}

Network::Network(const std::vector<int>& widths, const std::vector<Activation>& activations,
                 Rng& rng) {
  Require(widths.size() >= 2, "Network: need at least input and output width");
  Require(activations.size() == widths.size() - 1,
          "Network: one activation per affine layer required");
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    const int fan_in = widths[i];
    const int fan_out = widths[i + 1];
    Require(fan_in > 0 && fan_out > 0, "Network: widths must be positive");
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> uniform(-bound, bound);
    Layer layer;
    layer.weight.resize(fan_out, fan_in);
    for (int r = 0; r < fan_out; ++r)
      for (int c = 0; c < fan_in; ++c) layer.weight(r, c) = uniform(rng);
    layer.bias = Vector::Zero(fan_out);
    layer.activation = activations[i];
    layers_.push_back(std::move(layer));
  }
}

Network Network::FromLayers(std::vector<Layer> layers) {
  Network net;
  net.layers_ = std::move(layers);
  net.Validate();
  return net;
}

void Network::Validate() const {
  Require(!layers_.empty(), "Network: no layers");
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const Layer& l = layers_[i];
    Require(l.bias.size() == l.weight.rows(), "Network: bias length != layer output dim");
    if (i > 0)
      Require(layers_[i - 1].weight.rows() == l.weight.cols(),
              "Network: layer dimensions do not chain");
    Require(l.weight.allFinite() && l.bias.allFinite(), "Network: non-finite parameter");
  }
}

int Network::input_dim() const {
  return layers_.empty() ? 0 : static_cast<int>(layers_.front().weight.cols());
}

int Network::output_dim() const {
  return layers_.empty() ? 0 : static_cast<int>(layers_.back().weight.rows());
}

std::size_t Network::ParameterCount() const {
  std::size_t n = 0;
  for (const Layer& l : layers_) n += l.weight.size() + l.bias.size();
  return n;
}

double Network::SquaredNorm() const {
  double s = 0.0;
  for (const Layer& l : layers_) s += l.weight.squaredNorm() + l.bias.squaredNorm();
  return s;
}

GradientTape GradientTape::ZerosLike(const Network& net) {
  GradientTape tape;
  for (const Layer& l : net.layers()) {
    tape.weight.push_back(Matrix::Zero(l.weight.rows(), l.weight.cols()));
    tape.bias.push_back(Vector::Zero(l.bias.size()));
  }
  return tape;
}

void GradientTape::SetZero() {
  for (Matrix& w : weight) w.setZero();
  for (Vector& b : bias) b.setZero();
}

bool GradientTape::CongruentWith(const Network& net) const {
  if (weight.size() != net.layers().size() || bias.size() != weight.size()) return false;
  for (std::size_t i = 0; i < weight.size(); ++i) {
    const Layer& l = net.layers()[i];
    if (weight[i].rows() != l.weight.rows() || weight[i].cols() != l.weight.cols()) return false;
    if (bias[i].size() != l.bias.size()) return false;
  }
  return true;
}

double GradientTape::SquaredNorm() const {
  double s = 0.0;
  for (const Matrix& w : weight) s += w.squaredNorm();
  for (const Vector& b : bias) s += b.squaredNorm();
  return s;
}

Vector Forward(const Network& net, const Vector& input) {
  return ForwardBatch(net, input);
}

Matrix ForwardBatch(const Network& net, const Matrix& batch, ForwardCache* cache) {
  Require(!net.empty(), "Forward: empty network");
  if (batch.rows() != net.input_dim())
    throw ContractViolation("Forward: input dim " + std::to_string(batch.rows()) +
                            " != network input dim " + std::to_string(net.input_dim()));
  if (cache != nullptr) cache->clear();
  Matrix h = batch;
  for (const Layer& layer : net.layers()) {
    Matrix pre = layer.weight * h;
    pre.colwise() += layer.bias;
    if (cache != nullptr) {
      cache->inputs.push_back(std::move(h));
      h = Activate(layer.activation, pre);
      cache->activations.push_back(std::move(pre));
    } else {
      h = Activate(layer.activation, pre);
    }
  }
  return h;
}

Matrix Backward(const Network& net, const ForwardCache& cache, const Matrix& upstream,
                GradientTape& tape) {
  if (!cache.valid() || cache.inputs.size() != net.layers().size())
    throw ContractViolation("Backward: no cached forward pass for this network");
  Require(tape.CongruentWith(net), "Backward: tape not congruent with network");
  const Eigen::Index batch = cache.inputs.front().cols();
  Require(upstream.rows() == net.output_dim() && upstream.cols() == batch,
          "Backward: upstream gradient shape mismatch");

  Matrix grad = upstream;
  for (std::size_t i = net.layers().size(); i-- > 0;) {
    const Layer& layer = net.layers()[i];
    Matrix delta = grad.cwiseProduct(ActivationDerivative(layer.activation, cache.activations[i]));
    tape.weight[i].noalias() += delta * cache.inputs[i].transpose();
    tape.bias[i] += delta.rowwise().sum();
    grad.noalias() = layer.weight.transpose() * delta;
  }
  return grad;
}

void AddL2Gradient(const Network& net, double beta, GradientTape& tape) {
  Require(tape.CongruentWith(net), "AddL2Gradient: tape not congruent with network");
  for (std::size_t i = 0; i < net.layers().size(); ++i) {
    tape.weight[i] += 2.0 * beta * net.layers()[i].weight;
    tape.bias[i] += 2.0 * beta * net.layers()[i].bias;
  }
}

AdamState AdamState::For(const Network& net, AdamOptions options) {
  AdamState s;
  s.options = options;
  s.first_moment = GradientTape::ZerosLike(net);
  s.second_moment = GradientTape::ZerosLike(net);
  return s;
}

void AdamStep(Network& net, const GradientTape& tape, AdamState& state) {
  Require(tape.CongruentWith(net) && state.first_moment.CongruentWith(net) &&
              state.second_moment.CongruentWith(net),
          "AdamStep: tape/state not congruent with network");
  const AdamOptions& o = state.options;
  ++state.step;
  const double c1 = 1.0 - std::pow(o.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(o.beta2, static_cast<double>(state.step));
  auto update = [&](auto& param, const auto& g, auto& m, auto& v) {
    m = o.beta1 * m + (1.0 - o.beta1) * g;
    v = o.beta2 * v + (1.0 - o.beta2) * g.cwiseAbs2();
    param.array() -= o.learning_rate * (m.array() / c1) /
                     ((v.array() / c2).sqrt() + o.epsilon);
  };
  for (std::size_t i = 0; i < net.layers().size(); ++i) {
    Layer& layer = net.mutable_layers()[i];
    update(layer.weight, tape.weight[i], state.first_moment.weight[i],
           state.second_moment.weight[i]);
    update(layer.bias, tape.bias[i], state.first_moment.bias[i], state.second_moment.bias[i]);
  }
}

void SaveNetwork(std::ostream& os, const Network& net) {
  os << kCheckpointMagic << ' ' << kCheckpointVersion << '\n';
  os << "layers " << net.layers().size() << '\n';
  os << std::setprecision(17);
  for (const Layer& l : net.layers()) {
    os << "layer " << l.weight.cols() << ' ' << l.weight.rows() << ' '
       << ActivationName(l.activation) << '\n';
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c)
        os << l.weight(r, c) << (c + 1 == l.weight.cols() ? '\n' : ' ');
    for (Eigen::Index r = 0; r < l.bias.size(); ++r)
      os << l.bias[r] << (r + 1 == l.bias.size() ? '\n' : ' ');
  }
}

Network LoadNetwork(std::istream& is) {
  std::string magic;
  int version = 0;
  is >> magic >> version;
  if (!is || magic != kCheckpointMagic)
    throw std::runtime_error("LoadNetwork: not a gmr network checkpoint");
  if (version != kCheckpointVersion)
    throw std::runtime_error("LoadNetwork: unsupported checkpoint version " +
                             std::to_string(version));
  std::string tag;
  std::size_t count = 0;
  is >> tag >> count;
  if (!is || tag != "layers") throw std::runtime_error("LoadNetwork: malformed header");
  std::vector<Layer> layers;
  for (std::size_t i = 0; i < count; ++i) {
    Eigen::Index in = 0, out = 0;
    std::string act;
    is >> tag >> in >> out >> act;
    if (!is || tag != "layer" || in <= 0 || out <= 0)
      throw std::runtime_error("LoadNetwork: malformed layer header");
    Layer l;
    l.activation = ActivationFromName(act);
    l.weight.resize(out, in);
    l.bias.resize(out);
    for (Eigen::Index r = 0; r < out; ++r)
      for (Eigen::Index c = 0; c < in; ++c) is >> l.weight(r, c);
    for (Eigen::Index r = 0; r < out; ++r) is >> l.bias[r];
    if (!is) throw std::runtime_error("LoadNetwork: truncated parameter block");
    layers.push_back(std::move(l));
  }
  return Network::FromLayers(std::move(layers));
}

void SaveNetwork(const std::string& path, const Network& net) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  SaveNetwork(os, net);
}

Network LoadNetwork(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path);
  return LoadNetwork(is);
}

}  // namespace gmr::nn
