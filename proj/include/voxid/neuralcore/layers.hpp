// Copyright 2026 The Voxid Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef VOXID_NEURALCORE_LAYERS_HPP_
#define VOXID_NEURALCORE_LAYERS_HPP_

#include <string>
#include <utility>
#include <vector>

#include "voxid/neuralcore/graph.hpp"
#include "voxid/neuralcore/tensor.hpp"
#include "voxid/rng.hpp"

namespace voxid::neuralcore {

using ParamList = std::vector<std::pair<std::string, Tensor*>>;

// Kaiming-uniform: U(-sqrt(6/fan_in), +sqrt(6/fan_in)).
void init_kaiming_uniform(Tensor& t, int fan_in, Rng& rng);
// Simple uniform +-1/sqrt(fan_in), used for recurrent weights.
void init_uniform_fan(Tensor& t, int fan_in, Rng& rng);

// y = x . W + b, with W stored (in x out).
class Dense {
 public:
  Dense() = default;
  Dense(int in_dim, int out_dim, Rng& rng);

  Value forward(Graph& g, Value x);
  // Pre-registered parameter handles for a graph that reuses the layer
  // several times (one leaf per tensor per graph).
  ParamList params(const std::string& prefix);

  int in_dim() const { return weight_.dim(0); }
  int out_dim() const { return weight_.dim(1); }
  Tensor& weight() { return weight_; }
  Tensor& bias() { return bias_; }

 private:
  Tensor weight_;
  Tensor bias_;
};

class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(int in_channels, int out_channels, int kernel_h, int kernel_w,
         int stride, int padding, Rng& rng);

  Value forward(Graph& g, Value x);
  ParamList params(const std::string& prefix);

 private:
  Tensor weight_;  // K x C x kh x kw
  Tensor bias_;    // K
  int stride_ = 1;
  int padding_ = 0;
};

class BatchNorm2d {
 public:
  BatchNorm2d() = default;
  explicit BatchNorm2d(int channels);

  Value forward(Graph& g, Value x, bool training);
  ParamList params(const std::string& prefix);

  double momentum = 0.1;
  double eps = 1e-5;

 private:
  Tensor gamma_;
  Tensor beta_;
  Tensor running_mean_;
  Tensor running_var_;
};

// Single GRU layer. Sequence layout T x B x D; zero initial hidden state.
//   z_t = sigma(x_t Wz + h_{t-1} Uz + bz)
//   r_t = sigma(x_t Wr + h_{t-1} Ur + br)
//   hc  = tanh(x_t Wh + (r_t * h_{t-1}) Uh + bh)
//   h_t = (1 - z_t) * h_{t-1} + z_t * hc
class GruLayer {
 public:
  GruLayer() = default;
  GruLayer(int in_dim, int hidden_dim, Rng& rng);

  // Returns the full hidden sequence T x B x H.
  Value forward(Graph& g, Value seq);
  ParamList params(const std::string& prefix);

  int hidden_dim() const { return hidden_; }

 private:
  int hidden_ = 0;
  Tensor wz_, wr_, wh_;  // in x H
  Tensor uz_, ur_, uh_;  // H x H
  Tensor bz_, br_, bh_;  // H
};

// Dilated 1-d convolution over frames (same padding), the TDNN building
// block. kernel taps {-d, 0, +d} for kernel size 3, or {0} for size 1.
class TdnnLayer {
 public:
  TdnnLayer() = default;
  TdnnLayer(int in_dim, int out_dim, int kernel, int dilation, Rng& rng);

  Value forward(Graph& g, Value x);  // B x T x in -> B x T x out
  ParamList params(const std::string& prefix);

 private:
  Tensor weight_;  // out x in x kernel
  Tensor bias_;
  int dilation_ = 1;
};

}  // namespace voxid::neuralcore

#endif  // VOXID_NEURALCORE_LAYERS_HPP_
