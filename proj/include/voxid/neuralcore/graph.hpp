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
//
// Reverse-mode automatic differentiation over a tape of recorded
// operations. The tape order is a topological order by construction;
// backward() walks it in exact reverse, accumulating gradients
// additively. A Graph instance is single-threaded; distinct Graphs may
// run on distinct threads.

#ifndef VOXID_NEURALCORE_GRAPH_HPP_
#define VOXID_NEURALCORE_GRAPH_HPP_

#include <cstdint>
#include <functional>
#include <vector>

#include "voxid/neuralcore/tensor.hpp"

namespace voxid::neuralcore {

class Graph;

// Lightweight handle to a node on a Graph's tape.
struct Value {
  int idx = -1;
  bool valid() const { return idx >= 0; }
};

class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  // When enabled (default), every op forward verifies its output is
  // finite and raises NumericError instead of propagating NaN/Inf.
  void set_finite_checks(bool enabled) { finite_checks_ = enabled; }

  // --- leaves ---------------------------------------------------------
  Value input(Tensor t);            // constant, never receives gradient
  Value parameter(Tensor& param);   // leaf bound to an external tensor;
                                    // backward() adds into param.grad()

  const Tensor& value(Value v) const { return nodes_[static_cast<size_t>(v.idx)].value; }
  // Gradient w.r.t. a node, valid after backward(). Empty if untouched.
  const std::vector<double>& grad_of(Value v) const {
    return nodes_[static_cast<size_t>(v.idx)].grad;
  }

  // --- elementwise / algebra -------------------------------------------
  Value add(Value a, Value b);
  Value sub(Value a, Value b);
  Value mul(Value a, Value b);
  Value scale(Value a, double c);
  Value matmul(Value a, Value b);          // (m x k) . (k x n)
  Value add_row_bias(Value x, Value bias); // (B x D) + broadcast (D)
  Value relu(Value x);
  Value sigmoid(Value x);
  Value tanh_op(Value x);

  // --- structure --------------------------------------------------------
  Value reshape(Value x, std::vector<int> shape);
  Value concat_cols(Value a, Value b);       // (B x Da) ++ (B x Db)
  Value concat_channels(Value a, Value b);   // N x (Ca+Cb) x H x W
  // (B x F) -> B x 1 x T x F, tiled along the new time axis.
  Value broadcast_time(Value x, int t_len);
  // N x C x H x W -> sequence H x N x (C*W): time-major feature rows.
  Value nchw_to_tbd(Value x);
  Value select_time(Value seq, int t);               // T x B x D -> B x D
  Value stack_time(const std::vector<Value>& steps); // T of (B x D)
  // Per-step feature concat: (T x B x D, B x E) -> T x B x (D+E).
  Value concat_time_aux(Value seq, Value aux);
  Value global_avg_pool(Value x);  // N x C x H x W -> N x C

  // --- neural ops -------------------------------------------------------
  Value conv2d(Value x, Value w, Value bias, int stride, int padding);
  // Same-padded 1-d dilated convolution over time:
  // (B x T x Cin, Cout x Cin x k) -> B x T x Cout. k must be odd.
  Value conv1d_same(Value x, Value w, Value bias, int dilation);
  Value max_pool2d(Value x, int pool_h, int pool_w);
  // Batch normalization over (N, H, W) per channel. In training mode the
  // batch statistics normalize the input and running stats are updated in
  // place; in eval mode the provided running stats are used.
  Value batch_norm2d(Value x, Value gamma, Value beta, Tensor& running_mean,
                     Tensor& running_var, double momentum, double eps,
                     bool training);
  Value dropout(Value x, double p, uint64_t seed);
  Value statistics_pooling(Value x);   // T x D -> {2D}: mean ++ stddev
  Value stats_pool_time(Value x);      // B x T x D -> B x 2D
  Value softmax_rows(Value x);         // B x K -> row softmax

  // --- losses / reductions ----------------------------------------------
  Value softmax_cross_entropy(Value logits, const std::vector<int>& labels);
  Value mse_loss(Value pred, const Tensor& target);
  Value sum_all(Value x);
  Value mean_all(Value x);
  Value weighted_sum(Value x, Tensor weights);  // fixed projection to scalar

  // Runs reverse-mode accumulation from a scalar loss, then adds leaf
  // gradients into their bound parameters. May be called once per Graph.
  void backward(Value loss);

  size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    std::vector<double> grad;
    Tensor* bound_param = nullptr;
    std::function<void(Graph&)> backfn;  // empty for leaves
    bool requires_grad = false;
    const char* op = "leaf";
  };

  Value push(Tensor value, bool requires_grad, const char* op,
             std::function<void(Graph&)> backfn);
  std::vector<double>& grad_buf(int idx);
  bool needs_grad(Value v) const {
    return nodes_[static_cast<size_t>(v.idx)].requires_grad;
  }
  const Tensor& val(int idx) const { return nodes_[static_cast<size_t>(idx)].value; }
  bool grad_pending(int idx) const { return !nodes_[static_cast<size_t>(idx)].grad.empty(); }

  std::vector<Node> nodes_;
  bool backward_called_ = false;
  bool finite_checks_ = true;
};

}  // namespace voxid::neuralcore

#endif  // VOXID_NEURALCORE_GRAPH_HPP_
