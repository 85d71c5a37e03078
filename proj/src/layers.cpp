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

#include "voxid/neuralcore/layers.hpp"

#include <cmath>

#include "voxid/errors.hpp"

namespace voxid::neuralcore {

void init_kaiming_uniform(Tensor& t, int fan_in, Rng& rng) {
  const double bound = std::sqrt(6.0 / fan_in);
  for (int64_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-bound, bound);
}

void init_uniform_fan(Tensor& t, int fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (int64_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-bound, bound);
}

// --- Dense -------------------------------------------------------------

Dense::Dense(int in_dim, int out_dim, Rng& rng) {
  weight_ = Tensor({in_dim, out_dim});
  bias_ = Tensor({out_dim});
  weight_.set_requires_grad(true);
  bias_.set_requires_grad(true);
  init_kaiming_uniform(weight_, in_dim, rng);
}

Value Dense::forward(Graph& g, Value x) {
  Value w = g.parameter(weight_);
  Value b = g.parameter(bias_);
  return g.add_row_bias(g.matmul(x, w), b);
}

ParamList Dense::params(const std::string& prefix) {
  return {{prefix + ".weight", &weight_}, {prefix + ".bias", &bias_}};
}

// --- Conv2d ------------------------------------------------------------

Conv2d::Conv2d(int in_channels, int out_channels, int kernel_h, int kernel_w,
               int stride, int padding, Rng& rng)
    : stride_(stride), padding_(padding) {
  weight_ = Tensor({out_channels, in_channels, kernel_h, kernel_w});
  bias_ = Tensor({out_channels});
  weight_.set_requires_grad(true);
  bias_.set_requires_grad(true);
  init_kaiming_uniform(weight_, in_channels * kernel_h * kernel_w, rng);
}

Value Conv2d::forward(Graph& g, Value x) {
  Value w = g.parameter(weight_);
  Value b = g.parameter(bias_);
  return g.conv2d(x, w, b, stride_, padding_);
}

ParamList Conv2d::params(const std::string& prefix) {
  return {{prefix + ".weight", &weight_}, {prefix + ".bias", &bias_}};
}

// --- BatchNorm2d ---------------------------------------------------------

BatchNorm2d::BatchNorm2d(int channels) {
  gamma_ = Tensor::full({channels}, 1.0);
  beta_ = Tensor({channels});
  running_mean_ = Tensor({channels});
  running_var_ = Tensor::full({channels}, 1.0);
  gamma_.set_requires_grad(true);
  beta_.set_requires_grad(true);
}

Value BatchNorm2d::forward(Graph& g, Value x, bool training) {
  Value gm = g.parameter(gamma_);
  Value bt = g.parameter(beta_);
  return g.batch_norm2d(x, gm, bt, running_mean_, running_var_, momentum, eps,
                        training);
}

ParamList BatchNorm2d::params(const std::string& prefix) {
  // Running statistics are part of the checkpoint even though no gradient
  // flows into them.
  return {{prefix + ".gamma", &gamma_},
          {prefix + ".beta", &beta_},
          {prefix + ".running_mean", &running_mean_},
          {prefix + ".running_var", &running_var_}};
}

// --- GruLayer -------------------------------------------------------------

GruLayer::GruLayer(int in_dim, int hidden_dim, Rng& rng) : hidden_(hidden_dim) {
  auto make = [&](int rows, int cols, int fan_in) {
    Tensor t({rows, cols});
    t.set_requires_grad(true);
    init_uniform_fan(t, fan_in, rng);
    return t;
  };
  wz_ = make(in_dim, hidden_dim, in_dim);
  wr_ = make(in_dim, hidden_dim, in_dim);
  wh_ = make(in_dim, hidden_dim, in_dim);
  uz_ = make(hidden_dim, hidden_dim, hidden_dim);
  ur_ = make(hidden_dim, hidden_dim, hidden_dim);
  uh_ = make(hidden_dim, hidden_dim, hidden_dim);
  bz_ = Tensor({hidden_dim});
  br_ = Tensor({hidden_dim});
  bh_ = Tensor({hidden_dim});
  bz_.set_requires_grad(true);
  br_.set_requires_grad(true);
  bh_.set_requires_grad(true);
}

Value GruLayer::forward(Graph& g, Value seq) {
  const Tensor& ts = g.value(seq);
  if (ts.ndim() != 3) throw ShapeError("GruLayer: expected T x B x D sequence");
  const int t_len = ts.dim(0), batch = ts.dim(1), in_dim = ts.dim(2);
  if (in_dim != wz_.dim(0)) {
    throw ShapeError("GruLayer: input width " + std::to_string(in_dim) +
                     " != expected " + std::to_string(wz_.dim(0)));
  }
  Value wz = g.parameter(wz_), wr = g.parameter(wr_), wh = g.parameter(wh_);
  Value uz = g.parameter(uz_), ur = g.parameter(ur_), uh = g.parameter(uh_);
  Value bz = g.parameter(bz_), br = g.parameter(br_), bh = g.parameter(bh_);

  Value h = g.input(Tensor({batch, hidden_}));  // zero initial state
  std::vector<Value> outputs;
  outputs.reserve(static_cast<size_t>(t_len));
  for (int t = 0; t < t_len; ++t) {
    Value x = g.select_time(seq, t);
    Value z = g.sigmoid(g.add_row_bias(g.add(g.matmul(x, wz), g.matmul(h, uz)), bz));
    Value r = g.sigmoid(g.add_row_bias(g.add(g.matmul(x, wr), g.matmul(h, ur)), br));
    Value hc = g.tanh_op(
        g.add_row_bias(g.add(g.matmul(x, wh), g.matmul(g.mul(r, h), uh)), bh));
    // h = h + z * (hc - h)
    h = g.add(h, g.mul(z, g.sub(hc, h)));
    outputs.push_back(h);
  }
  return g.stack_time(outputs);
}

ParamList GruLayer::params(const std::string& prefix) {
  return {{prefix + ".wz", &wz_}, {prefix + ".wr", &wr_}, {prefix + ".wh", &wh_},
          {prefix + ".uz", &uz_}, {prefix + ".ur", &ur_}, {prefix + ".uh", &uh_},
          {prefix + ".bz", &bz_}, {prefix + ".br", &br_}, {prefix + ".bh", &bh_}};
}

// --- TdnnLayer --------------------------------------------------------------

TdnnLayer::TdnnLayer(int in_dim, int out_dim, int kernel, int dilation, Rng& rng)
    : dilation_(dilation) {
  if (kernel != 1 && kernel != 3) {
    throw InvalidArgumentError("TdnnLayer: kernel must be 1 or 3");
  }
  weight_ = Tensor({out_dim, in_dim, kernel});
  bias_ = Tensor({out_dim});
  weight_.set_requires_grad(true);
  bias_.set_requires_grad(true);
  init_kaiming_uniform(weight_, in_dim * kernel, rng);
}

Value TdnnLayer::forward(Graph& g, Value x) {
  Value w = g.parameter(weight_);
  Value b = g.parameter(bias_);
  return g.conv1d_same(x, w, b, dilation_);
}

ParamList TdnnLayer::params(const std::string& prefix) {
  return {{prefix + ".weight", &weight_}, {prefix + ".bias", &bias_}};
}

}  // namespace voxid::neuralcore
