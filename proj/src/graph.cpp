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

#include "voxid/neuralcore/graph.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>

#include "voxid/errors.hpp"
#include "voxid/rng.hpp"

namespace voxid::neuralcore {

namespace {

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_str() +
                     " vs " + b.shape_str());
  }
}

void check_ndim(const Tensor& t, int ndim, const char* op) {
  if (t.ndim() != ndim) {
    throw ShapeError(std::string(op) + ": expected " + std::to_string(ndim) +
                     "-d tensor, got " + t.shape_str());
  }
}

}  // namespace

Value Graph::push(Tensor value, bool requires_grad, const char* op,
                  std::function<void(Graph&)> backfn) {
  if (finite_checks_ && !value.all_finite()) {
    throw NumericError(std::string(op) + " produced non-finite values");
  }
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  n.op = op;
  n.backfn = std::move(backfn);
  nodes_.push_back(std::move(n));
  return Value{static_cast<int>(nodes_.size()) - 1};
}

std::vector<double>& Graph::grad_buf(int idx) {
  Node& n = nodes_[static_cast<size_t>(idx)];
  if (n.grad.size() != static_cast<size_t>(n.value.size())) {
    n.grad.assign(static_cast<size_t>(n.value.size()), 0.0);
  }
  return n.grad;
}

Value Graph::input(Tensor t) { return push(std::move(t), false, "input", {}); }

Value Graph::parameter(Tensor& param) {
  if (!param.requires_grad()) {
    throw InvalidArgumentError("parameter leaf requires requires_grad");
  }
  // copy values only; the node's grad accumulator is separate
  Value v = push(Tensor::from_data(param.shape(), param.values()), true,
                 "parameter", {});
  nodes_.back().bound_param = &param;
  return v;
}

// --- elementwise -----------------------------------------------------------

namespace {
// helper: accumulate src into dst
inline void axpy(std::vector<double>& dst, const std::vector<double>& src) {
  for (size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}
}  // namespace

Value Graph::add(Value a, Value b) {
  const Tensor& ta = val(a.idx);
  const Tensor& tb = val(b.idx);
  check_same_shape(ta, tb, "add");
  Tensor out = ta;
  const double* pb = tb.data();
  double* po = out.data();
  for (int64_t i = 0; i < out.size(); ++i) po[i] += pb[i];
  bool rg = needs_grad(a) || needs_grad(b);
  int ai = a.idx, bi = b.idx;
  Value o = push(std::move(out), rg, "add", {});
  int oi = o.idx;
  nodes_[static_cast<size_t>(oi)].backfn = [ai, bi, oi](Graph& g) {
    const auto& go = g.nodes_[static_cast<size_t>(oi)].grad;
    if (g.nodes_[static_cast<size_t>(ai)].requires_grad) axpy(g.grad_buf(ai), go);
    if (g.nodes_[static_cast<size_t>(bi)].requires_grad) axpy(g.grad_buf(bi), go);
  };
  return o;
}

Value Graph::sub(Value a, Value b) {
  const Tensor& ta = val(a.idx);
  const Tensor& tb = val(b.idx);
  check_same_shape(ta, tb, "sub");
  Tensor out = ta;
  const double* pb = tb.data();
  double* po = out.data();
  for (int64_t i = 0; i < out.size(); ++i) po[i] -= pb[i];
  bool rg = needs_grad(a) || needs_grad(b);
  int ai = a.idx, bi = b.idx;
  Value o = push(std::move(out), rg, "sub", {});
  int oi = o.idx;
  nodes_[static_cast<size_t>(oi)].backfn = [ai, bi, oi](Graph& g) {
    const auto& go = g.nodes_[static_cast<size_t>(oi)].grad;
    if (g.nodes_[static_cast<size_t>(ai)].requires_grad) {
      auto& ga = g.grad_buf(ai);
      for (size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
    }
    if (g.nodes_[static_cast<size_t>(bi)].requires_grad) {
      auto& gb = g.grad_buf(bi);
      for (size_t i = 0; i < go.size(); ++i) gb[i] -= go[i];
    }
  };
  return o;
}

Value Graph::mul(Value a, Value b) {
  const Tensor& ta = val(a.idx);
  const Tensor& tb = val(b.idx);
  check_same_shape(ta, tb, "mul");
  Tensor out = ta;
  const double* pb = tb.data();
  double* po = out.data();
  for (int64_t i = 0; i < out.size(); ++i) po[i] *= pb[i];
  bool rg = needs_grad(a) || needs_grad(b);
  int ai = a.idx, bi = b.idx;
  Value o = push(std::move(out), rg, "mul", {});
  int oi = o.idx;
  nodes_[static_cast<size_t>(oi)].backfn = [ai, bi, oi](Graph& g) {
    const auto& go = g.nodes_[static_cast<size_t>(oi)].grad;
    const Tensor& ta2 = g.val(ai);
    const Tensor& tb2 = g.val(bi);
    if (g.nodes_[static_cast<size_t>(ai)].requires_grad) {
      auto& ga = g.grad_buf(ai);
      for (size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * tb2.data()[i];
    }
    if (g.nodes_[static_cast<size_t>(bi)].requires_grad) {
      auto& gb = g.grad_buf(bi);
      for (size_t i = 0; i < go.size(); ++i) gb[i] += go[i] * ta2.data()[i];
    }
  };
  return o;
}

Value Graph::scale(Value a, double c) {
  Tensor out = val(a.idx);
  double* po = out.data();
  for (int64_t i = 0; i < out.size(); ++i) po[i] *= c;
  int ai = a.idx;
  Value o = push(std::move(out), needs_grad(a), "scale", {});
  int oi = o.idx;
  nodes_[static_cast<size_t>(oi)].backfn = [ai, oi, c](Graph& g) {
    if (!g.nodes_[static_cast<size_t>(ai)].requires_grad) return;
    const auto& go = g.nodes_[static_cast<size_t>(oi)].grad;
    auto& ga = g.grad_buf(ai);
    for (size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * c;
  };
  return o;
}

Value Graph::matmul(Value a, Value b) {
  const Tensor& ta = val(a.idx);
  const Tensor& tb = val(b.idx);
  check_ndim(ta, 2, "matmul");
  check_ndim(tb, 2, "matmul");
  const int m = ta.dim(0), k = ta.dim(1), k2 = tb.dim(0), n = tb.dim(1);
  if (k != k2) {
    throw ShapeError("matmul: inner dims disagree " + ta.shape_str() + " . " +
                     tb.shape_str());
  }
  Tensor out({m, n});
  {
    const double* pa = ta.data();
    const double* pb = tb.data();
    double* po = out.data();
    for (int i = 0; i < m; ++i) {
      for (int l = 0; l < k; ++l) {
        const double av = pa[static_cast<size_t>(i) * k + l];
        const double* brow = pb + static_cast<size_t>(l) * n;
        double* orow = po + static_cast<size_t>(i) * n;
        for (int j = 0; j < n; ++j) orow[j] += av * brow[j];
      }
    }
  }
  bool rg = needs_grad(a) || needs_grad(b);
  int ai = a.idx, bi = b.idx;
  Value o = push(std::move(out), rg, "matmul", {});
  int oi = o.idx;
  nodes_[static_cast<size_t>(oi)].backfn = [ai, bi, oi, m, k, n](Graph& g) {
    const auto& go = g.nodes_[static_cast<size_t>(oi)].grad;
    const Tensor& ta2 = g.val(ai);
    const Tensor& tb2 = g.val(bi);
    if (g.nodes_[static_cast<size_t>(ai)].requires_grad) {
      auto& ga = g.grad_buf(ai);  // dA = G . B^T
      for (int i = 0; i < m; ++i) {
        for (int l = 0; l < k; ++l) {
          const double* grow = &go[static_cast<size_t>(i) * n];
          const double* brow = tb2.data() + static_cast<size_t>(l) * n;
          double acc = 0.0;
          for (int j = 0; j < n; ++j) acc += grow[j] * brow[j];
          ga[static_cast<size_t>(i) * k + l] += acc;
        }
      }
    }
    if (g.nodes_[static_cast<size_t>(bi)].requires_grad) {
      auto& gb = g.grad_buf(bi);  // dB = A^T . G
      for (int l = 0; l < k; ++l) {
        for (int i = 0; i < m; ++i) {
          const double av = ta2.data()[static_cast<size_t>(i) * k + l];
          const double* grow = &go[static_cast<size_t>(i) * n];
          double* brow = &gb[static_cast<size_t>(l) * n];
          for (int j = 0; j < n; ++j) brow[j] += av * grow[j];
        }
      }
    }
  };
  return o;
}

Value Graph::add_row_bias(Value x, Value bias) {
  const Tensor& tx = val(x.idx);
  const Tensor& tb = val(bias.idx);
  check_ndim(tx, 2, "add_row_bias");
  check_ndim(tb, 1, "add_row_bias");
  const int rows = tx.dim(0), cols = tx.dim(1);
  if (tb.dim(0) != cols) {
    throw ShapeError("add_row_bias: bias width " + tb.shape_str() +
                     " does not match " + tx.shape_str());
  }
  Tensor out = tx;
  for (int i = 0; i < rows; ++i) {
    double* row = out.data() + static_cast<size_t>(i) * cols;
    for (int j = 0; j < cols; ++j) row[j] += tb.data()[j];
  }
  bool rg = needs_grad(x) || needs_grad(bias);
  int xi = x.idx, bi = bias.idx;
  Value o = push(std::move(out), rg, "add_row_bias", {});
  int oi = o.idx;
  nodes_[static_cast<size_t>(oi)].backfn = [xi, bi, oi, rows, cols](Graph& g) {
    const auto& go = g.nodes_[static_cast<size_t>(oi)].grad;
    if (g.nodes_[static_cast<size_t>(xi)].requires_grad) {
      auto& gx = g.grad_buf(xi);
      axpy(gx, go);
    }
    if (g.nodes_[static_cast<size_t>(bi)].requires_grad) {
      auto& gb = g.grad_buf(bi);
      for (int i = 0; i < rows; ++i) {
        const double* row = &go[static_cast<size_t>(i) * cols];
        for (int j = 0; j < cols; ++j) gb[j] += row[j];
      }
    }
  };
  return o;
}

Value Graph::relu(Value x) {
  Tensor out = val(x.idx);
  double* po = out.data();
  for (int64_t i = 0; i < out.size(); ++i) po[i] = po[i] > 0.0 ? po[i] : 0.0;
  int xi = x.idx;
  Value o = push(std::move(out), needs_grad(x), "relu", {});
  int oi = o.idx;
  nodes_[static_cast<size_t>(oi)].backfn = [xi, oi](Graph& g) {
    if (!g.nodes_[static_cast<size_t>(xi)].requires_grad) return;
    const auto& go = g.nodes_[static_cast<size_t>(oi)].grad;
    const Tensor& tx = g.val(xi);
    auto& gx = g.grad_buf(xi);
    for (size_t i = 0; i < go.size(); ++i) {
      if (tx.data()[i] > 0.0) gx[i] += go[i];
    }
  };
  return o;
}

Value Graph::sigmoid(Value x) {
  Tensor out = val(x.idx);
  double* po = out.data();
  for (int64_t i = 0; i < out.size(); ++i) po[i] = 1.0 / (1.0 + std::exp(-po[i]));
  int xi = x.idx;
  Value o = push(std::move(out), needs_grad(x), "sigmoid", {});
  int oi = o.idx;
  nodes_[static_cast<size_t>(oi)].backfn = [xi, oi](Graph& g) {
    if (!g.nodes_[static_cast<size_t>(xi)].requires_grad) return;
    const auto& go = g.nodes_[static_cast<size_t>(oi)].grad;
    const Tensor& ty = g.val(oi);
    auto& gx = g.grad_buf(xi);
    for (size_t i = 0; i < go.size(); ++i) {
      const double y = ty.data()[i];
      gx[i] += go[i] * y * (1.0 - y);
    }
  };
  return o;
}

Value Graph::tanh_op(Value x) {
  Tensor out = val(x.idx);
  double* po = out.data();
  for (int64_t i = 0; i < out.size(); ++i) po[i] = std::tanh(po[i]);
  int xi = x.idx;
  Value o = push(std::move(out), needs_grad(x), "tanh", {});
  int oi = o.idx;
  nodes_[static_cast<size_t>(oi)].backfn = [xi, oi](Graph& g) {
    if (!g.nodes_[static_cast<size_t>(xi)].requires_grad) return;
    const auto& go = g.nodes_[static_cast<size_t>(oi)].grad;
    const Tensor& ty = g.val(oi);
    auto& gx = g.grad_buf(xi);
    for (size_t i = 0; i < go.size(); ++i) {
      const double y = ty.data()[i];
      gx[i] += go[i] * (1.0 - y * y);
    }
  };
  return o;
}

// --- structure ---------------------------------------------------------------

Value Graph::reshape(Value x, std::vector<int> shape) {
  const Tensor& tx = val(x.idx);
  if (shape_product(shape) != tx.size()) {
    throw ShapeError("reshape: element count mismatch");
  }
  Tensor out = Tensor::from_data(std::move(shape), tx.values());
  int xi = x.idx;
  Value o = push(std::move(out), needs_grad(x), "reshape", {});
  int oi = o.idx;
  nodes_[static_cast<size_t>(oi)].backfn = [xi, oi](Graph& g) {
    if (!g.nodes_[static_cast<size_t>(xi)].requires_grad) return;
    axpy(g.grad_buf(xi), g.nodes_[static_cast<size_t>(oi)].grad);
  };
  return o;
}

Value Graph::concat_cols(Value a, Value b) {
  const Tensor& ta = val(a.idx);
  const Tensor& tb = val(b.idx);
  check_ndim(ta, 2, "concat_cols");
  check_ndim(tb, 2, "concat_cols");
  if (ta.dim(0) != tb.dim(0)) {
    throw ShapeError("concat_cols: row counts disagree");
  }
  const int rows = ta.dim(0), ca = ta.dim(1), cb = tb.dim(1);
  Tensor out({rows, ca + cb});
  for (int i = 0; i < rows; ++i) {
    std::copy_n(ta.data() + static_cast<size_t>(i) * ca, ca,
                out.data() + static_cast<size_t>(i) * (ca + cb));
    std::copy_n(tb.data() + static_cast<size_t>(i) * cb, cb,
                out.data() + static_cast<size_t>(i) * (ca + cb) + ca);
  }
  bool rg = needs_grad(a) || needs_grad(b);
  int ai = a.idx, bi = b.idx;
  Value o = push(std::move(out), rg, "concat_cols", {});
  int oi = o.idx;
  nodes_[static_cast<size_t>(oi)].backfn = [ai, bi, oi, rows, ca, cb](Graph& g) {
    const auto& go = g.nodes_[static_cast<size_t>(oi)].grad;
    if (g.nodes_[static_cast<size_t>(ai)].requires_grad) {
      auto& ga = g.grad_buf(ai);
      for (int i = 0; i < rows; ++i) {
        for (int j = 0; j < ca; ++j) {
          ga[static_cast<size_t>(i) * ca + j] += go[static_cast<size_t>(i) * (ca + cb) + j];
        }
      }
    }
    if (g.nodes_[static_cast<size_t>(bi)].requires_grad) {
      auto& gb = g.grad_buf(bi);
      for (int i = 0; i < rows; ++i) {
        for (int j = 0; j < cb; ++j) {
          gb[static_cast<size_t>(i) * cb + j] +=
              go[static_cast<size_t>(i) * (ca + cb) + ca + j];
        }
      }
    }
  };
  return o;
}

Value Graph::concat_channels(Value a, Value b) {
  const Tensor& ta = val(a.idx);
  const Tensor& tb = val(b.idx);
  check_ndim(ta, 4, "concat_channels");
  check_ndim(tb, 4, "concat_channels");
  if (ta.dim(0) != tb.dim(0) || ta.dim(2) != tb.dim(2) || ta.dim(3) != tb.dim(3)) {
    throw ShapeError("concat_channels: N/H/W disagree: " + ta.shape_str() +
                     " vs " + tb.shape_str());
  }
  const int n = ta.dim(0), ca = ta.dim(1), cb = tb.dim(1);
  const int h = ta.dim(2), w = ta.dim(3);
  const size_t plane = static_cast<size_t>(h) * w;
  Tensor out({n, ca + cb, h, w});
  for (int i = 0; i < n; ++i) {
    std::copy_n(ta.data() + static_cast<size_t>(i) * ca * plane, ca * plane,
                out.data() + static_cast<size_t>(i) * (ca + cb) * plane);
    std::copy_n(tb.data() + static_cast<size_t>(i) * cb * plane, cb * plane,
                out.data() + static_cast<size_t>(i) * (ca + cb) * plane + ca * plane);
  }
  bool rg = needs_grad(a) || needs_grad(b);
  int ai = a.idx, bi = b.idx;
  Value o = push(std::move(out), rg, "concat_channels", {});
  int oi = o.idx;
  nodes_[static_cast<size_t>(oi)].backfn = [ai, bi, oi, n, ca, cb, plane](Graph& g) {
    const auto& go = g.nodes_[static_cast<size_t>(oi)].grad;
    if (g.nodes_[static_cast<size_t>(ai)].requires_grad) {
      auto& ga = g.grad_buf(ai);
      for (int i = 0; i < n; ++i) {
        const double* src = &go[static_cast<size_t>(i) * (ca + cb) * plane];
        double* dst = &ga[static_cast<size_t>(i) * ca * plane];
        for (size_t j = 0; j < ca * plane; ++j) dst[j] += src[j];
      }
    }
    if (g.nodes_[static_cast<size_t>(bi)].requires_grad) {
      auto& gb = g.grad_buf(bi);
      for (int i = 0; i < n; ++i) {
        const double* src = &go[static_cast<size_t>(i) * (ca + cb) * plane + ca * plane];
        double* dst = &gb[static_cast<size_t>(i) * cb * plane];
        for (size_t j = 0; j < cb * plane; ++j) dst[j] += src[j];
      }
    }
  };
  return o;
}

Value Graph::broadcast_time(Value x, int t_len) {
  const Tensor& tx = val(x.idx);
  check_ndim(tx, 2, "broadcast_time");
  if (t_len < 1) throw InvalidArgumentError("broadcast_time: t_len must be >= 1");
  const int b = tx.dim(0), f = tx.dim(1);
  Tensor out({b, 1, t_len, f});
  for (int i = 0; i < b; ++i) {
    for (int t = 0; t < t_len; ++t) {
      std::copy_n(tx.data() + static_cast<size_t>(i) * f, f,
                  out.data() + (static_cast<size_t>(i) * t_len + t) * f);
    }
  }
  int xi = x.idx;
  Value o = push(std::move(out), needs_grad(x), "broadcast_time", {});
  int oi = o.idx;
  nodes_[static_cast<size_t>(oi)].backfn = [xi, oi, b, f, t_len](Graph& g) {
    if (!g.nodes_[static_cast<size_t>(xi)].requires_grad) return;
    const auto& go = g.nodes_[static_cast<size_t>(oi)].grad;
    auto& gx = g.grad_buf(xi);
    for (int i = 0; i < b; ++i) {
      for (int t = 0; t < t_len; ++t) {
        const double* src = &go[(static_cast<size_t>(i) * t_len + t) * f];
        double* dst = &gx[static_cast<size_t>(i) * f];
        for (int j = 0; j < f; ++j) dst[j] += src[j];
      }
    }
  };
  return o;
}

Value Graph::nchw_to_tbd(Value x) {
  const Tensor& tx = val(x.idx);
  check_ndim(tx, 4, "nchw_to_tbd");
  const int n = tx.dim(0), c = tx.dim(1), h = tx.dim(2), w = tx.dim(3);
  Tensor out({h, n, c * w});
  for (int t = 0; t < h; ++t) {
    for (int i = 0; i < n; ++i) {
      for (int ch = 0; ch < c; ++ch) {
        const double* src = tx.data() + ((static_cast<size_t>(i) * c + ch) * h + t) * w;
        double* dst = out.data() +
                      (static_cast<size_t>(t) * n + i) * (static_cast<size_t>(c) * w) +
                      static_cast<size_t>(ch) * w;
        std::copy_n(src, w, dst);
      }
    }
  }
  int xi = x.idx;
  Value o = push(std::move(out), needs_grad(x), "nchw_to_tbd", {});
  int oi = o.idx;
  nodes_[static_cast<size_t>(oi)].backfn = [xi, oi, n, c, h, w](Graph& g) {
    if (!g.nodes_[static_cast<size_t>(xi)].requires_grad) return;
    const auto& go = g.nodes_[static_cast<size_t>(oi)].grad;
    auto& gx = g.grad_buf(xi);
    for (int t = 0; t < h; ++t) {
      for (int i = 0; i < n; ++i) {
        for (int ch = 0; ch < c; ++ch) {
          const double* src = &go[(static_cast<size_t>(t) * n + i) *
                                      (static_cast<size_t>(c) * w) +
                                  static_cast<size_t>(ch) * w];
          double* dst = &gx[((static_cast<size_t>(i) * c + ch) * h + t) * w];
          for (int j = 0; j < w; ++j) dst[j] += src[j];
        }
      }
    }
  };
  return o;
}

Value Graph::select_time(Value seq, int t) {
  const Tensor& ts = val(seq.idx);
  check_ndim(ts, 3, "select_time");
  const int tt = ts.dim(0), b = ts.dim(1), d = ts.dim(2);
  if (t < 0 || t >= tt) throw InvalidArgumentError("select_time: index out of range");
  Tensor out({b, d});
  std::copy_n(ts.data() + static_cast<size_t>(t) * b * d, static_cast<size_t>(b) * d,
              out.data());
  int si = seq.idx;
  Value o = push(std::move(out), needs_grad(seq), "select_time", {});
  int oi = o.idx;
  nodes_[static_cast<size_t>(oi)].backfn = [si, oi, t, b, d](Graph& g) {
    if (!g.nodes_[static_cast<size_t>(si)].requires_grad) return;
    const auto& go = g.nodes_[static_cast<size_t>(oi)].grad;
    auto& gs = g.grad_buf(si);
    double* dst = &gs[static_cast<size_t>(t) * b * d];
    for (size_t i = 0; i < static_cast<size_t>(b) * d; ++i) dst[i] += go[i];
  };
  return o;
}

Value Graph::stack_time(const std::vector<Value>& steps) {
  if (steps.empty()) throw InvalidArgumentError("stack_time: no steps");
  const Tensor& t0 = val(steps[0].idx);
  check_ndim(t0, 2, "stack_time");
  const int b = t0.dim(0), d = t0.dim(1);
  const int tt = static_cast<int>(steps.size());
  Tensor out({tt, b, d});
  bool rg = false;
  std::vector<int> idxs(steps.size());
  for (int t = 0; t < tt; ++t) {
    const Tensor& tv = val(steps[static_cast<size_t>(t)].idx);
    check_same_shape(tv, t0, "stack_time");
    std::copy_n(tv.data(), static_cast<size_t>(b) * d,
                out.data() + static_cast<size_t>(t) * b * d);
    rg = rg || needs_grad(steps[static_cast<size_t>(t)]);
    idxs[static_cast<size_t>(t)] = steps[static_cast<size_t>(t)].idx;
  }
  Value o = push(std::move(out), rg, "stack_time", {});
  int oi = o.idx;
  nodes_[static_cast<size_t>(oi)].backfn = [idxs, oi, b, d](Graph& g) {
    const auto& go = g.nodes_[static_cast<size_t>(oi)].grad;
    for (size_t t = 0; t < idxs.size(); ++t) {
      if (!g.nodes_[static_cast<size_t>(idxs[t])].requires_grad) continue;
      auto& gs = g.grad_buf(idxs[t]);
      const double* src = &go[t * static_cast<size_t>(b) * d];
      for (size_t i = 0; i < static_cast<size_t>(b) * d; ++i) gs[i] += src[i];
    }
  };
  return o;
}

Value Graph::concat_time_aux(Value seq, Value aux) {
  const Tensor& ts = val(seq.idx);
  const Tensor& ta = val(aux.idx);
  check_ndim(ts, 3, "concat_time_aux");
  check_ndim(ta, 2, "concat_time_aux");
  const int tt = ts.dim(0), b = ts.dim(1), d = ts.dim(2), e = ta.dim(1);
  if (ta.dim(0) != b) throw ShapeError("concat_time_aux: batch sizes disagree");
  Tensor out({tt, b, d + e});
  for (int t = 0; t < tt; ++t) {
    for (int i = 0; i < b; ++i) {
      const double* ss = ts.data() + (static_cast<size_t>(t) * b + i) * d;
      const double* sa = ta.data() + static_cast<size_t>(i) * e;
      double* dst = out.data() + (static_cast<size_t>(t) * b + i) * (d + e);
      std::copy_n(ss, d, dst);
      std::copy_n(sa, e, dst + d);
    }
  }
  bool rg = needs_grad(seq) || needs_grad(aux);
  int si = seq.idx, ai = aux.idx;
  Value o = push(std::move(out), rg, "concat_time_aux", {});
  int oi = o.idx;
  nodes_[static_cast<size_t>(oi)].backfn = [si, ai, oi, tt, b, d, e](Graph& g) {
    const auto& go = g.nodes_[static_cast<size_t>(oi)].grad;
    if (g.nodes_[static_cast<size_t>(si)].requires_grad) {
      auto& gs = g.grad_buf(si);
      for (int t = 0; t < tt; ++t) {
        for (int i = 0; i < b; ++i) {
          const double* src = &go[(static_cast<size_t>(t) * b + i) * (d + e)];
          double* dst = &gs[(static_cast<size_t>(t) * b + i) * d];
          for (int j = 0; j < d; ++j) dst[j] += src[j];
        }
      }
    }
    if (g.nodes_[static_cast<size_t>(ai)].requires_grad) {
      auto& ga = g.grad_buf(ai);
      for (int t = 0; t < tt; ++t) {
        for (int i = 0; i < b; ++i) {
          const double* src = &go[(static_cast<size_t>(t) * b + i) * (d + e) + d];
          double* dst = &ga[static_cast<size_t>(i) * e];
          for (int j = 0; j < e; ++j) dst[j] += src[j];
        }
      }
    }
  };
  return o;
}

Value Graph::global_avg_pool(Value x) {
  const Tensor& tx = val(x.idx);
  check_ndim(tx, 4, "global_avg_pool");
  const int n = tx.dim(0), c = tx.dim(1), h = tx.dim(2), w = tx.dim(3);
  const double inv = 1.0 / (static_cast<double>(h) * w);
  Tensor out({n, c});
  for (int i = 0; i < n; ++i) {
    for (int ch = 0; ch < c; ++ch) {
      const double* src = tx.data() + (static_cast<size_t>(i) * c + ch) *
                                          (static_cast<size_t>(h) * w);
      double acc = 0.0;
      for (int j = 0; j < h * w; ++j) acc += src[j];
      out.at(i, ch) = acc * inv;
    }
  }
  int xi = x.idx;
  Value o = push(std::move(out), needs_grad(x), "global_avg_pool", {});
  int oi = o.idx;
  nodes_[static_cast<size_t>(oi)].backfn = [xi, oi, n, c, h, w, inv](Graph& g) {
    if (!g.nodes_[static_cast<size_t>(xi)].requires_grad) return;
    const auto& go = g.nodes_[static_cast<size_t>(oi)].grad;
    auto& gx = g.grad_buf(xi);
    for (int i = 0; i < n; ++i) {
      for (int ch = 0; ch < c; ++ch) {
        const double gv = go[static_cast<size_t>(i) * c + ch] * inv;
        double* dst = &gx[(static_cast<size_t>(i) * c + ch) * (static_cast<size_t>(h) * w)];
        for (int j = 0; j < h * w; ++j) dst[j] += gv;
      }
    }
  };
  return o;
}

// --- neural ops ---------------------------------------------------------------

Value Graph::conv2d(Value x, Value w, Value bias, int stride, int padding) {
  const Tensor& tx = val(x.idx);
  const Tensor& tw = val(w.idx);
  const Tensor& tb = val(bias.idx);
  check_ndim(tx, 4, "conv2d");
  check_ndim(tw, 4, "conv2d");
  check_ndim(tb, 1, "conv2d");
  if (stride < 1) throw InvalidArgumentError("conv2d: stride must be >= 1");
  if (padding < 0) throw InvalidArgumentError("conv2d: padding must be >= 0");
  const int n = tx.dim(0), c = tx.dim(1), h = tx.dim(2), wd = tx.dim(3);
  const int k = tw.dim(0), cw = tw.dim(1), kh = tw.dim(2), kw = tw.dim(3);
  if (c != cw) {
    throw ShapeError("conv2d: channel mismatch, input " + tx.shape_str() +
                     " vs kernels " + tw.shape_str());
  }
  if (tb.dim(0) != k) throw ShapeError("conv2d: bias length != kernel count");
  const int oh = (h + 2 * padding - kh) / stride + 1;
  const int ow = (wd + 2 * padding - kw) / stride + 1;
  if (oh < 1 || ow < 1) {
    throw ShapeError("conv2d: output dims would be empty for input " + tx.shape_str());
  }

  Tensor out({n, k, oh, ow});
  const int p = padding, s = stride;
  {
    const double* px = tx.data();
    const double* pw = tw.data();
    double* po = out.data();
    for (int in = 0; in < n; ++in) {
      for (int ik = 0; ik < k; ++ik) {
        double* oplane = po + (static_cast<size_t>(in) * k + ik) *
                                  (static_cast<size_t>(oh) * ow);
        const double bv = tb.data()[ik];
        for (int i = 0; i < oh * ow; ++i) oplane[i] = bv;
        for (int ic = 0; ic < c; ++ic) {
          const double* xplane = px + (static_cast<size_t>(in) * c + ic) *
                                          (static_cast<size_t>(h) * wd);
          for (int dh = 0; dh < kh; ++dh) {
            for (int dw = 0; dw < kw; ++dw) {
              const double wv =
                  pw[((static_cast<size_t>(ik) * c + ic) * kh + dh) * kw + dw];
              if (wv == 0.0) continue;
              // valid output range for this kernel offset
              int oh_lo = 0, oh_hi = oh;
              int ow_lo = 0, ow_hi = ow;
              if (s == 1) {
                oh_lo = std::max(0, p - dh);
                oh_hi = std::min(oh, h + p - dh);
                ow_lo = std::max(0, p - dw);
                ow_hi = std::min(ow, wd + p - dw);
                for (int io = oh_lo; io < oh_hi; ++io) {
                  const double* xrow = xplane + static_cast<size_t>(io - p + dh) * wd +
                                       (ow_lo - p + dw);
                  double* orow = oplane + static_cast<size_t>(io) * ow + ow_lo;
                  for (int jo = 0; jo < ow_hi - ow_lo; ++jo) {
                    orow[jo] += wv * xrow[jo];
                  }
                }
              } else {
                for (int io = 0; io < oh; ++io) {
                  const int ih = io * s - p + dh;
                  if (ih < 0 || ih >= h) continue;
                  double* orow = oplane + static_cast<size_t>(io) * ow;
                  const double* xrow = xplane + static_cast<size_t>(ih) * wd;
                  for (int jo = 0; jo < ow; ++jo) {
                    const int iw = jo * s - p + dw;
                    if (iw < 0 || iw >= wd) continue;
                    orow[jo] += wv * xrow[iw];
                  }
                }
              }
            }
          }
        }
      }
    }
  }

  bool rg = needs_grad(x) || needs_grad(w) || needs_grad(bias);
  int xi = x.idx, wi = w.idx, bi = bias.idx;
  Value o = push(std::move(out), rg, "conv2d", {});
  int oi = o.idx;
  nodes_[static_cast<size_t>(oi)].backfn = [xi, wi, bi, oi, n, c, h, wd, k, kh, kw,
                                            oh, ow, p, s](Graph& g) {
    const auto& go = g.nodes_[static_cast<size_t>(oi)].grad;
    const Tensor& tx2 = g.val(xi);
    const Tensor& tw2 = g.val(wi);
    const bool need_x = g.nodes_[static_cast<size_t>(xi)].requires_grad;
    const bool need_w = g.nodes_[static_cast<size_t>(wi)].requires_grad;
    const bool need_b = g.nodes_[static_cast<size_t>(bi)].requires_grad;
    if (need_b) {
      auto& gb = g.grad_buf(bi);
      for (int in = 0; in < n; ++in) {
        for (int ik = 0; ik < k; ++ik) {
          const double* gplane = &go[(static_cast<size_t>(in) * k + ik) *
                                     (static_cast<size_t>(oh) * ow)];
          double acc = 0.0;
          for (int i = 0; i < oh * ow; ++i) acc += gplane[i];
          gb[ik] += acc;
        }
      }
    }
    if (!need_x && !need_w) return;
    auto* gx = need_x ? &g.grad_buf(xi) : nullptr;
    auto* gw = need_w ? &g.grad_buf(wi) : nullptr;
    for (int in = 0; in < n; ++in) {
      for (int ik = 0; ik < k; ++ik) {
        const double* gplane = &go[(static_cast<size_t>(in) * k + ik) *
                                   (static_cast<size_t>(oh) * ow)];
        for (int ic = 0; ic < c; ++ic) {
          const double* xplane = tx2.data() + (static_cast<size_t>(in) * c + ic) *
                                                  (static_cast<size_t>(h) * wd);
          double* gxplane =
              need_x ? &(*gx)[(static_cast<size_t>(in) * c + ic) *
                              (static_cast<size_t>(h) * wd)]
                     : nullptr;
          for (int dh = 0; dh < kh; ++dh) {
            for (int dw = 0; dw < kw; ++dw) {
              const size_t widx =
                  ((static_cast<size_t>(ik) * c + ic) * kh + dh) * kw + dw;
              const double wv = tw2.data()[widx];
              double wacc = 0.0;
              if (s == 1) {
                const int oh_lo = std::max(0, p - dh);
                const int oh_hi = std::min(oh, h + p - dh);
                const int ow_lo = std::max(0, p - dw);
                const int ow_hi = std::min(ow, wd + p - dw);
                for (int io = oh_lo; io < oh_hi; ++io) {
                  const double* grow = gplane + static_cast<size_t>(io) * ow + ow_lo;
                  const size_t xoff =
                      static_cast<size_t>(io - p + dh) * wd + (ow_lo - p + dw);
                  const double* xrow = xplane + xoff;
                  const int len = ow_hi - ow_lo;
                  if (need_w) {
                    double acc = 0.0;
                    for (int j = 0; j < len; ++j) acc += grow[j] * xrow[j];
                    wacc += acc;
                  }
                  if (need_x) {
                    double* gxrow = gxplane + xoff;
                    for (int j = 0; j < len; ++j) gxrow[j] += wv * grow[j];
                  }
                }
              } else {
                for (int io = 0; io < oh; ++io) {
                  const int ih = io * s - p + dh;
                  if (ih < 0 || ih >= h) continue;
                  const double* grow = gplane + static_cast<size_t>(io) * ow;
                  for (int jo = 0; jo < ow; ++jo) {
                    const int iw = jo * s - p + dw;
                    if (iw < 0 || iw >= wd) continue;
                    if (need_w) wacc += grow[jo] * xplane[static_cast<size_t>(ih) * wd + iw];
                    if (need_x) gxplane[static_cast<size_t>(ih) * wd + iw] += wv * grow[jo];
                  }
                }
              }
              if (need_w) (*gw)[widx] += wacc;
            }
          }
        }
      }
    }
  };
  return o;
}

Value Graph::conv1d_same(Value x, Value w, Value bias, int dilation) {
  const Tensor& tx = val(x.idx);
  const Tensor& tw = val(w.idx);
  const Tensor& tb = val(bias.idx);
  check_ndim(tx, 3, "conv1d_same");
  check_ndim(tw, 3, "conv1d_same");
  check_ndim(tb, 1, "conv1d_same");
  if (dilation < 1) throw InvalidArgumentError("conv1d_same: dilation must be >= 1");
  const int b = tx.dim(0), t = tx.dim(1), cin = tx.dim(2);
  const int cout = tw.dim(0), cin2 = tw.dim(1), kk = tw.dim(2);
  if (cin != cin2) throw ShapeError("conv1d_same: channel mismatch");
  if (kk % 2 == 0) throw InvalidArgumentError("conv1d_same: kernel size must be odd");
  if (tb.dim(0) != cout) throw ShapeError("conv1d_same: bias length != out channels");
  const int half = kk / 2;

  Tensor out({b, t, cout});
  {
    const double* px = tx.data();
    const double* pw = tw.data();
    double* po = out.data();
    for (int ib = 0; ib < b; ++ib) {
      for (int it = 0; it < t; ++it) {
        double* orow = po + (static_cast<size_t>(ib) * t + it) * cout;
        for (int oc = 0; oc < cout; ++oc) {
          double acc = tb.data()[oc];
          for (int j = 0; j < kk; ++j) {
            const int src_t = it + (j - half) * dilation;
            if (src_t < 0 || src_t >= t) continue;
            const double* xrow = px + (static_cast<size_t>(ib) * t + src_t) * cin;
            const double* wrow = pw + (static_cast<size_t>(oc) * cin) * kk + j;
            // weights laid out [cout][cin][k]; stride over cin is kk
            double dot = 0.0;
            for (int ic = 0; ic < cin; ++ic) dot += xrow[ic] * wrow[static_cast<size_t>(ic) * kk];
            acc += dot;
          }
          orow[oc] = acc;
        }
      }
    }
  }

  bool rg = needs_grad(x) || needs_grad(w) || needs_grad(bias);
  int xi = x.idx, wi = w.idx, bi = bias.idx;
  Value o = push(std::move(out), rg, "conv1d_same", {});
  int oi = o.idx;
  nodes_[static_cast<size_t>(oi)].backfn = [xi, wi, bi, oi, b, t, cin, cout, kk, half,
                                            dilation](Graph& g) {
    const auto& go = g.nodes_[static_cast<size_t>(oi)].grad;
    const Tensor& tx2 = g.val(xi);
    const Tensor& tw2 = g.val(wi);
    const bool need_x = g.nodes_[static_cast<size_t>(xi)].requires_grad;
    const bool need_w = g.nodes_[static_cast<size_t>(wi)].requires_grad;
    const bool need_b = g.nodes_[static_cast<size_t>(bi)].requires_grad;
    auto* gx = need_x ? &g.grad_buf(xi) : nullptr;
    auto* gw = need_w ? &g.grad_buf(wi) : nullptr;
    auto* gb = need_b ? &g.grad_buf(bi) : nullptr;
    for (int ib = 0; ib < b; ++ib) {
      for (int it = 0; it < t; ++it) {
        const double* grow = &go[(static_cast<size_t>(ib) * t + it) * cout];
        for (int oc = 0; oc < cout; ++oc) {
          const double gv = grow[oc];
          if (gv == 0.0) continue;
          if (need_b) (*gb)[oc] += gv;
          for (int j = 0; j < kk; ++j) {
            const int src_t = it + (j - half) * dilation;
            if (src_t < 0 || src_t >= t) continue;
            const size_t xoff = (static_cast<size_t>(ib) * t + src_t) * cin;
            for (int ic = 0; ic < cin; ++ic) {
              const size_t widx = (static_cast<size_t>(oc) * cin + ic) * kk + j;
              if (need_w) (*gw)[widx] += gv * tx2.data()[xoff + ic];
              if (need_x) (*gx)[xoff + ic] += gv * tw2.data()[widx];
            }
          }
        }
      }
    }
  };
  return o;
}

Value Graph::max_pool2d(Value x, int pool_h, int pool_w) {
  const Tensor& tx = val(x.idx);
  check_ndim(tx, 4, "max_pool2d");
  if (pool_h < 1 || pool_w < 1) {
    throw InvalidArgumentError("max_pool2d: pool dims must be >= 1");
  }
  const int n = tx.dim(0), c = tx.dim(1), h = tx.dim(2), w = tx.dim(3);
  const int oh = h / pool_h, ow = w / pool_w;
  if (oh < 1 || ow < 1) {
    throw ShapeError("max_pool2d: pool " + std::to_string(pool_h) + "x" +
                     std::to_string(pool_w) + " empties input " + tx.shape_str());
  }
  Tensor out({n, c, oh, ow});
  auto argmax = std::make_shared<std::vector<int64_t>>(
      static_cast<size_t>(n) * c * oh * ow);
  for (int in = 0; in < n; ++in) {
    for (int ic = 0; ic < c; ++ic) {
      const double* xplane =
          tx.data() + (static_cast<size_t>(in) * c + ic) * (static_cast<size_t>(h) * w);
      double* oplane = out.data() + (static_cast<size_t>(in) * c + ic) *
                                        (static_cast<size_t>(oh) * ow);
      int64_t* aplane = argmax->data() + (static_cast<size_t>(in) * c + ic) *
                                             (static_cast<size_t>(oh) * ow);
      for (int io = 0; io < oh; ++io) {
        for (int jo = 0; jo < ow; ++jo) {
          double best = -1e300;
          int64_t best_idx = 0;
          for (int di = 0; di < pool_h; ++di) {
            const int ih = io * pool_h + di;
            for (int dj = 0; dj < pool_w; ++dj) {
              const int iw = jo * pool_w + dj;
              const double v = xplane[static_cast<size_t>(ih) * w + iw];
              if (v > best) {
                best = v;
                best_idx = static_cast<int64_t>(ih) * w + iw;
              }
            }
          }
          oplane[static_cast<size_t>(io) * ow + jo] = best;
          aplane[static_cast<size_t>(io) * ow + jo] = best_idx;
        }
      }
    }
  }
  int xi = x.idx;
  Value o = push(std::move(out), needs_grad(x), "max_pool2d", {});
  int oi = o.idx;
  nodes_[static_cast<size_t>(oi)].backfn = [xi, oi, argmax, n, c, h, w, oh, ow](Graph& g) {
    if (!g.nodes_[static_cast<size_t>(xi)].requires_grad) return;
    const auto& go = g.nodes_[static_cast<size_t>(oi)].grad;
    auto& gx = g.grad_buf(xi);
    const size_t plane_in = static_cast<size_t>(h) * w;
    const size_t plane_out = static_cast<size_t>(oh) * ow;
    for (int in = 0; in < n; ++in) {
      for (int ic = 0; ic < c; ++ic) {
        const size_t base_in = (static_cast<size_t>(in) * c + ic) * plane_in;
        const size_t base_out = (static_cast<size_t>(in) * c + ic) * plane_out;
        for (size_t i = 0; i < plane_out; ++i) {
          gx[base_in + static_cast<size_t>((*argmax)[base_out + i])] += go[base_out + i];
        }
      }
    }
  };
  return o;
}

Value Graph::batch_norm2d(Value x, Value gamma, Value beta, Tensor& running_mean,
                          Tensor& running_var, double momentum, double eps,
                          bool training) {
  const Tensor& tx = val(x.idx);
  const Tensor& tg = val(gamma.idx);
  const Tensor& tb = val(beta.idx);
  check_ndim(tx, 4, "batch_norm2d");
  const int n = tx.dim(0), c = tx.dim(1), h = tx.dim(2), w = tx.dim(3);
  if (tg.ndim() != 1 || tg.dim(0) != c || tb.ndim() != 1 || tb.dim(0) != c ||
      running_mean.ndim() != 1 || running_mean.dim(0) != c ||
      running_var.ndim() != 1 || running_var.dim(0) != c) {
    throw ShapeError("batch_norm2d: per-channel vectors must have length " +
                     std::to_string(c));
  }
  const size_t plane = static_cast<size_t>(h) * w;
  const double m = static_cast<double>(n) * static_cast<double>(plane);

  auto mean = std::make_shared<std::vector<double>>(static_cast<size_t>(c), 0.0);
  auto var = std::make_shared<std::vector<double>>(static_cast<size_t>(c), 0.0);
  if (training) {
    for (int ic = 0; ic < c; ++ic) {
      double acc = 0.0;
      for (int in = 0; in < n; ++in) {
        const double* src = tx.data() + (static_cast<size_t>(in) * c + ic) * plane;
        for (size_t i = 0; i < plane; ++i) acc += src[i];
      }
      const double mu = acc / m;
      double vacc = 0.0;
      for (int in = 0; in < n; ++in) {
        const double* src = tx.data() + (static_cast<size_t>(in) * c + ic) * plane;
        for (size_t i = 0; i < plane; ++i) {
          const double d = src[i] - mu;
          vacc += d * d;
        }
      }
      (*mean)[ic] = mu;
      (*var)[ic] = vacc / m;  // population variance
    }
    for (int ic = 0; ic < c; ++ic) {
      running_mean[ic] = (1.0 - momentum) * running_mean[ic] + momentum * (*mean)[ic];
      running_var[ic] = (1.0 - momentum) * running_var[ic] + momentum * (*var)[ic];
    }
  } else {
    for (int ic = 0; ic < c; ++ic) {
      (*mean)[ic] = running_mean[ic];
      (*var)[ic] = running_var[ic];
    }
  }

  Tensor out(tx.shape());
  for (int in = 0; in < n; ++in) {
    for (int ic = 0; ic < c; ++ic) {
      const double inv_std = 1.0 / std::sqrt((*var)[ic] + eps);
      const double gv = tg.data()[ic], bv = tb.data()[ic], mu = (*mean)[ic];
      const double* src = tx.data() + (static_cast<size_t>(in) * c + ic) * plane;
      double* dst = out.data() + (static_cast<size_t>(in) * c + ic) * plane;
      for (size_t i = 0; i < plane; ++i) dst[i] = gv * (src[i] - mu) * inv_std + bv;
    }
  }

  bool rg = needs_grad(x) || needs_grad(gamma) || needs_grad(beta);
  int xi = x.idx, gi = gamma.idx, bi = beta.idx;
  Value o = push(std::move(out), rg, "batch_norm2d", {});
  int oi = o.idx;
  nodes_[static_cast<size_t>(oi)].backfn = [xi, gi, bi, oi, mean, var, n, c, plane, m,
                                            eps, training](Graph& g) {
    const auto& go = g.nodes_[static_cast<size_t>(oi)].grad;
    const Tensor& tx2 = g.val(xi);
    const Tensor& tg2 = g.val(gi);
    const bool need_x = g.nodes_[static_cast<size_t>(xi)].requires_grad;
    const bool need_g = g.nodes_[static_cast<size_t>(gi)].requires_grad;
    const bool need_b = g.nodes_[static_cast<size_t>(bi)].requires_grad;
    auto* gx = need_x ? &g.grad_buf(xi) : nullptr;
    auto* gg = need_g ? &g.grad_buf(gi) : nullptr;
    auto* gb = need_b ? &g.grad_buf(bi) : nullptr;
    for (int ic = 0; ic < c; ++ic) {
      const double mu = (*mean)[ic];
      const double inv_std = 1.0 / std::sqrt((*var)[ic] + eps);
      const double gv = tg2.data()[ic];
      // accumulate sums over the channel
      double sum_g = 0.0, sum_gxhat = 0.0;
      for (int in = 0; in < n; ++in) {
        const size_t base = (static_cast<size_t>(in) * c + ic) * plane;
        const double* src = tx2.data() + base;
        const double* grow = &go[base];
        for (size_t i = 0; i < plane; ++i) {
          sum_g += grow[i];
          sum_gxhat += grow[i] * (src[i] - mu) * inv_std;
        }
      }
      if (need_b) (*gb)[ic] += sum_g;
      if (need_g) (*gg)[ic] += sum_gxhat;
      if (need_x) {
        if (training) {
          const double inv_m = 1.0 / m;
          for (int in = 0; in < n; ++in) {
            const size_t base = (static_cast<size_t>(in) * c + ic) * plane;
            const double* src = tx2.data() + base;
            const double* grow = &go[base];
            double* dst = &(*gx)[base];
            for (size_t i = 0; i < plane; ++i) {
              const double xhat = (src[i] - mu) * inv_std;
              dst[i] += gv * inv_std *
                        (grow[i] - sum_g * inv_m - xhat * sum_gxhat * inv_m);
            }
          }
        } else {
          for (int in = 0; in < n; ++in) {
            const size_t base = (static_cast<size_t>(in) * c + ic) * plane;
            const double* grow = &go[base];
            double* dst = &(*gx)[base];
            for (size_t i = 0; i < plane; ++i) dst[i] += gv * inv_std * grow[i];
          }
        }
      }
    }
  };
  return o;
}

Value Graph::dropout(Value x, double p, uint64_t seed) {
  if (p < 0.0 || p >= 1.0) throw InvalidArgumentError("dropout: need 0 <= p < 1");
  if (p == 0.0) return x;  // identity, no node recorded
  const Tensor& tx = val(x.idx);
  auto mask = std::make_shared<std::vector<double>>(static_cast<size_t>(tx.size()));
  Rng rng(seed);
  const double keep_scale = 1.0 / (1.0 - p);
  for (auto& mv : *mask) mv = rng.uniform() >= p ? keep_scale : 0.0;
  Tensor out = tx;
  double* po = out.data();
  for (int64_t i = 0; i < out.size(); ++i) po[i] *= (*mask)[static_cast<size_t>(i)];
  int xi = x.idx;
  Value o = push(std::move(out), needs_grad(x), "dropout", {});
  int oi = o.idx;
  nodes_[static_cast<size_t>(oi)].backfn = [xi, oi, mask](Graph& g) {
    if (!g.nodes_[static_cast<size_t>(xi)].requires_grad) return;
    const auto& go = g.nodes_[static_cast<size_t>(oi)].grad;
    auto& gx = g.grad_buf(xi);
    for (size_t i = 0; i < go.size(); ++i) gx[i] += go[i] * (*mask)[i];
  };
  return o;
}

Value Graph::stats_pool_time(Value x) {
  const Tensor& tx = val(x.idx);
  check_ndim(tx, 3, "stats_pool_time");
  const int b = tx.dim(0), t = tx.dim(1), d = tx.dim(2);
  if (t < 1) throw InvalidArgumentError("stats_pool_time: need at least one frame");
  constexpr double kEps = 1e-8;
  Tensor out({b, 2 * d});
  for (int ib = 0; ib < b; ++ib) {
    for (int j = 0; j < d; ++j) {
      double acc = 0.0;
      for (int it = 0; it < t; ++it) acc += tx.at(ib, it, j);
      const double mu = acc / t;
      double vacc = 0.0;
      for (int it = 0; it < t; ++it) {
        const double dv = tx.at(ib, it, j) - mu;
        vacc += dv * dv;
      }
      out.at(ib, j) = mu;
      out.at(ib, d + j) = std::sqrt(vacc / t + kEps);
    }
  }
  int xi = x.idx;
  Value o = push(std::move(out), needs_grad(x), "stats_pool_time", {});
  int oi = o.idx;
  nodes_[static_cast<size_t>(oi)].backfn = [xi, oi, b, t, d](Graph& g) {
    if (!g.nodes_[static_cast<size_t>(xi)].requires_grad) return;
    const auto& go = g.nodes_[static_cast<size_t>(oi)].grad;
    const Tensor& tx2 = g.val(xi);
    const Tensor& ty = g.val(oi);
    auto& gx = g.grad_buf(xi);
    const double inv_t = 1.0 / t;
    for (int ib = 0; ib < b; ++ib) {
      for (int j = 0; j < d; ++j) {
        const double gmu = go[static_cast<size_t>(ib) * 2 * d + j];
        const double gsd = go[static_cast<size_t>(ib) * 2 * d + d + j];
        const double mu = ty.at(ib, j);
        const double sd = ty.at(ib, d + j);
        for (int it = 0; it < t; ++it) {
          const size_t idx = (static_cast<size_t>(ib) * t + it) * d + j;
          gx[idx] += gmu * inv_t + gsd * (tx2.data()[idx] - mu) * inv_t / sd;
        }
      }
    }
  };
  return o;
}

Value Graph::statistics_pooling(Value x) {
  // copy dims before pushing nodes: reshape() may reallocate the tape
  const int t = val(x.idx).dim(0), d = val(x.idx).dim(1);
  check_ndim(val(x.idx), 2, "statistics_pooling");
  Value batched = reshape(x, {1, t, d});
  Value pooled = stats_pool_time(batched);
  return reshape(pooled, {2 * d});
}

Value Graph::softmax_rows(Value x) {
  const Tensor& tx = val(x.idx);
  check_ndim(tx, 2, "softmax_rows");
  const int b = tx.dim(0), k = tx.dim(1);
  Tensor out(tx.shape());
  for (int i = 0; i < b; ++i) {
    const double* src = tx.data() + static_cast<size_t>(i) * k;
    double* dst = out.data() + static_cast<size_t>(i) * k;
    double mx = src[0];
    for (int j = 1; j < k; ++j) mx = std::max(mx, src[j]);
    double sum = 0.0;
    for (int j = 0; j < k; ++j) {
      dst[j] = std::exp(src[j] - mx);
      sum += dst[j];
    }
    for (int j = 0; j < k; ++j) dst[j] /= sum;
  }
  int xi = x.idx;
  Value o = push(std::move(out), needs_grad(x), "softmax_rows", {});
  int oi = o.idx;
  nodes_[static_cast<size_t>(oi)].backfn = [xi, oi, b, k](Graph& g) {
    if (!g.nodes_[static_cast<size_t>(xi)].requires_grad) return;
    const auto& go = g.nodes_[static_cast<size_t>(oi)].grad;
    const Tensor& ty = g.val(oi);
    auto& gx = g.grad_buf(xi);
    for (int i = 0; i < b; ++i) {
      const double* y = ty.data() + static_cast<size_t>(i) * k;
      const double* gr = &go[static_cast<size_t>(i) * k];
      double dot = 0.0;
      for (int j = 0; j < k; ++j) dot += gr[j] * y[j];
      for (int j = 0; j < k; ++j) gx[static_cast<size_t>(i) * k + j] += y[j] * (gr[j] - dot);
    }
  };
  return o;
}

// --- losses ---------------------------------------------------------------------

Value Graph::softmax_cross_entropy(Value logits, const std::vector<int>& labels) {
  const Tensor& tl = val(logits.idx);
  check_ndim(tl, 2, "softmax_cross_entropy");
  const int b = tl.dim(0), k = tl.dim(1);
  if (static_cast<int>(labels.size()) != b) {
    throw ShapeError("softmax_cross_entropy: label count != batch size");
  }
  for (int label : labels) {
    if (label < 0 || label >= k) {
      throw InvalidArgumentError("softmax_cross_entropy: label " +
                                 std::to_string(label) + " outside [0, " +
                                 std::to_string(k) + ")");
    }
  }
  auto probs = std::make_shared<std::vector<double>>(static_cast<size_t>(b) * k);
  double loss = 0.0;
  for (int i = 0; i < b; ++i) {
    const double* src = tl.data() + static_cast<size_t>(i) * k;
    double mx = src[0];
    for (int j = 1; j < k; ++j) mx = std::max(mx, src[j]);
    double sum = 0.0;
    for (int j = 0; j < k; ++j) sum += std::exp(src[j] - mx);
    const double log_sum = std::log(sum);
    loss += -(src[labels[static_cast<size_t>(i)]] - mx - log_sum);
    for (int j = 0; j < k; ++j) {
      (*probs)[static_cast<size_t>(i) * k + j] = std::exp(src[j] - mx) / sum;
    }
  }
  loss /= b;
  int li = logits.idx;
  auto labels_copy = std::make_shared<std::vector<int>>(labels);
  Value o = push(Tensor::scalar(loss), needs_grad(logits), "softmax_cross_entropy", {});
  int oi = o.idx;
  nodes_[static_cast<size_t>(oi)].backfn = [li, oi, probs, labels_copy, b, k](Graph& g) {
    if (!g.nodes_[static_cast<size_t>(li)].requires_grad) return;
    const double gl = g.nodes_[static_cast<size_t>(oi)].grad[0];
    auto& gx = g.grad_buf(li);
    const double inv_b = 1.0 / b;
    for (int i = 0; i < b; ++i) {
      for (int j = 0; j < k; ++j) {
        const double ind = j == (*labels_copy)[static_cast<size_t>(i)] ? 1.0 : 0.0;
        gx[static_cast<size_t>(i) * k + j] +=
            gl * ((*probs)[static_cast<size_t>(i) * k + j] - ind) * inv_b;
      }
    }
  };
  return o;
}

Value Graph::mse_loss(Value pred, const Tensor& target) {
  const Tensor& tp = val(pred.idx);
  check_same_shape(tp, target, "mse_loss");
  const double inv = 1.0 / static_cast<double>(tp.size());
  double loss = 0.0;
  for (int64_t i = 0; i < tp.size(); ++i) {
    const double d = tp[i] - target[i];
    loss += d * d;
  }
  loss *= inv;
  int pi = pred.idx;
  auto target_copy = std::make_shared<Tensor>(target);
  Value o = push(Tensor::scalar(loss), needs_grad(pred), "mse_loss", {});
  int oi = o.idx;
  nodes_[static_cast<size_t>(oi)].backfn = [pi, oi, target_copy, inv](Graph& g) {
    if (!g.nodes_[static_cast<size_t>(pi)].requires_grad) return;
    const double gl = g.nodes_[static_cast<size_t>(oi)].grad[0];
    const Tensor& tp2 = g.val(pi);
    auto& gx = g.grad_buf(pi);
    for (size_t i = 0; i < gx.size(); ++i) {
      gx[i] += gl * 2.0 * (tp2.data()[i] - target_copy->data()[i]) * inv;
    }
  };
  return o;
}

Value Graph::sum_all(Value x) {
  const Tensor& tx = val(x.idx);
  double acc = 0.0;
  for (int64_t i = 0; i < tx.size(); ++i) acc += tx[i];
  int xi = x.idx;
  Value o = push(Tensor::scalar(acc), needs_grad(x), "sum_all", {});
  int oi = o.idx;
  nodes_[static_cast<size_t>(oi)].backfn = [xi, oi](Graph& g) {
    if (!g.nodes_[static_cast<size_t>(xi)].requires_grad) return;
    const double gl = g.nodes_[static_cast<size_t>(oi)].grad[0];
    auto& gx = g.grad_buf(xi);
    for (auto& v : gx) v += gl;
  };
  return o;
}

Value Graph::mean_all(Value x) {
  Value s = sum_all(x);
  return scale(s, 1.0 / static_cast<double>(val(x.idx).size()));
}

Value Graph::weighted_sum(Value x, Tensor weights) {
  const Tensor& tx = val(x.idx);
  check_same_shape(tx, weights, "weighted_sum");
  double acc = 0.0;
  for (int64_t i = 0; i < tx.size(); ++i) acc += tx[i] * weights[i];
  int xi = x.idx;
  auto w_copy = std::make_shared<Tensor>(std::move(weights));
  Value o = push(Tensor::scalar(acc), needs_grad(x), "weighted_sum", {});
  int oi = o.idx;
  nodes_[static_cast<size_t>(oi)].backfn = [xi, oi, w_copy](Graph& g) {
    if (!g.nodes_[static_cast<size_t>(xi)].requires_grad) return;
    const double gl = g.nodes_[static_cast<size_t>(oi)].grad[0];
    auto& gx = g.grad_buf(xi);
    for (size_t i = 0; i < gx.size(); ++i) gx[i] += gl * w_copy->data()[i];
  };
  return o;
}

// --- backward ------------------------------------------------------------------

void Graph::backward(Value loss) {
  if (backward_called_) {
    throw StateError("backward called twice on the same graph without reset");
  }
  backward_called_ = true;
  Node& loss_node = nodes_[static_cast<size_t>(loss.idx)];
  if (loss_node.value.size() != 1) {
    throw InvalidArgumentError("backward: loss must be scalar, got " +
                               loss_node.value.shape_str());
  }
  grad_buf(loss.idx)[0] = 1.0;
  for (int i = loss.idx; i >= 0; --i) {
    Node& n = nodes_[static_cast<size_t>(i)];
    if (!n.requires_grad || n.grad.empty() || !n.backfn) continue;
    n.backfn(*this);
  }
  // fold leaf gradients into their bound parameters
  for (Node& n : nodes_) {
    if (n.bound_param != nullptr && !n.grad.empty()) {
      auto& pg = n.bound_param->grad();
      for (size_t i = 0; i < pg.size(); ++i) pg[i] += n.grad[i];
    }
  }
}

}  // namespace voxid::neuralcore
