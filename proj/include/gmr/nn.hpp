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

#ifndef GMR_NN_HPP_
#define GMR_NN_HPP_

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

#include "gmr/types.hpp"

namespace gmr::nn {

enum class Activation { kIdentity, kLeakyRelu, kRelu };

inline constexpr double kLeakySlope = 0.01;

std::string ActivationName(Activation a);
Activation ActivationFromName(const std::string& name);

struct Layer {
  Matrix weight;  // out x in
  Vector bias;    // out
  Activation activation = Activation::kIdentity;
};

// Feedforward stack of affine layers. Consecutive dimensions always chain.
class Network {
 public:
  Network() = default;

  // widths = {input, hidden..., output}; one activation per affine layer.
  // Weights are Glorot-uniform, biases zero.
  Network(const std::vector<int>& widths, const std::vector<Activation>& activations,
          Rng& rng);

  static Network FromLayers(std::vector<Layer> layers);

  int input_dim() const;
  int output_dim() const;
  bool empty() const { return layers_.empty(); }

  const std::vector<Layer>& layers() const { return layers_; }
  std::vector<Layer>& mutable_layers() { return layers_; }

  std::size_t ParameterCount() const;
  double SquaredNorm() const;

 private:
  void Validate() const;

  std::vector<Layer> layers_;
};

// Intermediate values of one batched forward pass.
struct ForwardCache {
  std::vector<Matrix> inputs;       // input of each layer (in x batch)
  std::vector<Matrix> activations;  // pre-activation of each layer (out x batch)
  bool valid() const { return !inputs.empty(); }
  void clear() {
    inputs.clear();
    activations.clear();
  }
};

// Per-parameter gradient buffers aligned with a Network.
struct GradientTape {
  std::vector<Matrix> weight;
  std::vector<Vector> bias;

  static GradientTape ZerosLike(const Network& net);
  void SetZero();
  bool CongruentWith(const Network& net) const;
  double SquaredNorm() const;
};

Vector Forward(const Network& net, const Vector& input);

// Columns of `batch` are independent inputs. When `cache` is given the
// intermediates needed by Backward are stored in it.
Matrix ForwardBatch(const Network& net, const Matrix& batch, ForwardCache* cache = nullptr);

// Accumulates d(loss)/d(params) into `tape` given d(loss)/d(output) for each
// column of the cached batch, and returns d(loss)/d(input).
Matrix Backward(const Network& net, const ForwardCache& cache, const Matrix& upstream,
                GradientTape& tape);

// tape += 2 * beta * params
void AddL2Gradient(const Network& net, double beta, GradientTape& tape);

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  AdamOptions options;
  GradientTape first_moment;
  GradientTape second_moment;
  long step = 0;

  static AdamState For(const Network& net, AdamOptions options = {});
};

void AdamStep(Network& net, const GradientTape& tape, AdamState& state);

// Text checkpoint, see README for the layout.
void SaveNetwork(std::ostream& os, const Network& net);
Network LoadNetwork(std::istream& is);
void SaveNetwork(const std::string& path, const Network& net);
Network LoadNetwork(const std::string& path);

}  // namespace gmr::nn

#endif  // GMR_NN_HPP_
