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

#include <cmath>

#include "doctest.h"
#include "voxid/errors.hpp"
#include "voxid/neuralcore/graph.hpp"
#include "voxid/neuralcore/layers.hpp"
#include "voxid/neuralcore/optim.hpp"
#include "voxid/rng.hpp"

using namespace voxid;
using neuralcore::Graph;
using neuralcore::Tensor;
using neuralcore::Value;

TEST_CASE("tensor invariants") {
  Tensor t({2, 3});
  CHECK(t.size() == 6);
  CHECK(t.shape_str() == "[2x3]");
  CHECK_THROWS_AS(Tensor::from_data({2, 2}, {1.0, 2.0, 3.0}), ShapeError);
  t.at(1, 2) = 5.0;
  CHECK(t[5] == 5.0);
}

TEST_CASE("scalar product rule: d(x*y)/dx = y") {
  Graph g;
  Tensor xt = Tensor::scalar(3.0);
  Tensor yt = Tensor::scalar(-2.0);
  xt.set_requires_grad(true);
  yt.set_requires_grad(true);
  Value x = g.parameter(xt);
  Value y = g.parameter(yt);
  Value loss = g.sum_all(g.mul(x, y));
  g.backward(loss);
  CHECK(xt.grad()[0] == doctest::Approx(-2.0));
  CHECK(yt.grad()[0] == doctest::Approx(3.0));
}

TEST_CASE("backward twice is a state error") {
  Graph g;
  Tensor xt = Tensor::scalar(1.0);
  xt.set_requires_grad(true);
  Value x = g.parameter(xt);
  Value loss = g.sum_all(x);
  g.backward(loss);
  CHECK_THROWS_AS(g.backward(loss), StateError);
}

TEST_CASE("backward needs a scalar loss") {
  Graph g;
  Tensor xt({2, 2});
  xt.set_requires_grad(true);
  Value x = g.parameter(xt);
  CHECK_THROWS_AS(g.backward(x), InvalidArgumentError);
}

TEST_CASE("matmul known values and shape errors") {
  Graph g;
  Value a = g.input(Tensor::from_data({2, 2}, {1, 2, 3, 4}));
  Value b = g.input(Tensor::from_data({2, 2}, {5, 6, 7, 8}));
  const Tensor& c = g.value(g.matmul(a, b));
  CHECK(c.at(0, 0) == 19);
  CHECK(c.at(0, 1) == 22);
  CHECK(c.at(1, 0) == 43);
  CHECK(c.at(1, 1) == 50);
  Value bad = g.input(Tensor({3, 2}));
  CHECK_THROWS_AS(g.matmul(a, bad), ShapeError);
}

TEST_CASE("dense with identity weight and zero bias is identity") {
  Rng rng(0);
  neuralcore::Dense dense(3, 3, rng);
  dense.weight().values() = {1, 0, 0, 0, 1, 0, 0, 0, 1};
  dense.bias().values() = {0, 0, 0};
  Graph g;
  Tensor in = Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
  const Tensor& out = g.value(dense.forward(g, g.input(in)));
  CHECK(out.values() == in.values());
}

TEST_CASE("relu") {
  Graph g;
  const Tensor& out =
      g.value(g.relu(g.input(Tensor::from_data({4}, {-2.0, -0.1, 0.0, 3.5}))));
  CHECK(out.values() == std::vector<double>{0.0, 0.0, 0.0, 3.5});
}

TEST_CASE("conv2d known cases") {
  Graph g;
  SUBCASE("1x1 identity kernel reproduces the input") {
    Tensor x({1, 1, 3, 3});
    for (int i = 0; i < 9; ++i) x[i] = i + 1;
    Value w = g.input(Tensor::from_data({1, 1, 1, 1}, {1.0}));
    Value b = g.input(Tensor({1}));
    const Tensor& out = g.value(g.conv2d(g.input(x), w, b, 1, 0));
    CHECK(out.values() == x.values());
  }
  SUBCASE("all-ones 3x3 kernel on all-ones 3x3 input gives 9") {
    Value x = g.input(Tensor::full({1, 1, 3, 3}, 1.0));
    Value w = g.input(Tensor::full({1, 1, 3, 3}, 1.0));
    Value b = g.input(Tensor({1}));
    const Tensor& out = g.value(g.conv2d(x, w, b, 1, 0));
    REQUIRE(out.size() == 1);
    CHECK(out[0] == doctest::Approx(9.0));
  }
  SUBCASE("channel mismatch is a shape error") {
    Value x = g.input(Tensor({1, 2, 4, 4}));
    Value w = g.input(Tensor({3, 1, 3, 3}));
    Value b = g.input(Tensor({3}));
    CHECK_THROWS_AS(g.conv2d(x, w, b, 1, 1), ShapeError);
  }
}

TEST_CASE("conv2d matches a naive sextuple-loop oracle") {
  for (uint64_t seed = 0; seed < 8; ++seed) {
    Rng rng(seed);
    const int n = 1, c = 2, h = 5, w = 5, k = 3, kh = 3, kw = 3;
    const int stride = 1, pad = (seed % 2 == 0) ? 1 : 0;
    Tensor x({n, c, h, w}), kern({k, c, kh, kw}), bias({k});
    for (int64_t i = 0; i < x.size(); ++i) x[i] = rng.normal();
    for (int64_t i = 0; i < kern.size(); ++i) kern[i] = rng.normal();
    for (int64_t i = 0; i < bias.size(); ++i) bias[i] = rng.normal();

    Graph g;
    const Tensor& out =
        g.value(g.conv2d(g.input(x), g.input(kern), g.input(bias), stride, pad));

    const int oh = (h + 2 * pad - kh) / stride + 1;
    const int ow = (w + 2 * pad - kw) / stride + 1;
    for (int ik = 0; ik < k; ++ik) {
      for (int io = 0; io < oh; ++io) {
        for (int jo = 0; jo < ow; ++jo) {
          double acc = bias[ik];
          for (int ic = 0; ic < c; ++ic) {
            for (int dh = 0; dh < kh; ++dh) {
              for (int dw = 0; dw < kw; ++dw) {
                const int ih = io * stride - pad + dh;
                const int iw = jo * stride - pad + dw;
                if (ih < 0 || ih >= h || iw < 0 || iw >= w) continue;
                acc += kern.at(ik, ic, dh, dw) * x.at(0, ic, ih, iw);
              }
            }
          }
          CHECK(std::abs(out.at(0, ik, io, jo) - acc) <=
                1e-6 * std::max(1.0, std::abs(acc)));
        }
      }
    }
  }
}

TEST_CASE("max pool") {
  Graph g;
  Tensor x({1, 1, 2, 4});
  x.values() = {1, 5, 2, 3, 4, 0, -1, 7};
  const Tensor& out = g.value(g.max_pool2d(g.input(x), 2, 2));
  CHECK(out.values() == std::vector<double>{5, 7});
  CHECK_THROWS_AS(g.max_pool2d(g.input(Tensor({1, 1, 1, 1})), 2, 2), ShapeError);
}

TEST_CASE("batch norm eval mode with unit stats is identity") {
  neuralcore::BatchNorm2d bn(2);
  Graph g;
  Tensor x({2, 2, 2, 2});
  Rng rng(9);
  for (int64_t i = 0; i < x.size(); ++i) x[i] = rng.normal();
  const Tensor& out = g.value(bn.forward(g, g.input(x), /*training=*/false));
  for (int64_t i = 0; i < x.size(); ++i) {
    CHECK(out[i] == doctest::Approx(x[i]).epsilon(1e-5));
  }
}

TEST_CASE("batch norm training normalizes per channel") {
  neuralcore::BatchNorm2d bn(1);
  Graph g;
  Tensor x({1, 1, 2, 2});
  x.values() = {1.0, 2.0, 3.0, 4.0};
  const Tensor& out = g.value(bn.forward(g, g.input(x), /*training=*/true));
  double mean = 0.0;
  for (int64_t i = 0; i < out.size(); ++i) mean += out[i];
  CHECK(std::abs(mean) < 1e-9);
}

TEST_CASE("dropout") {
  Graph g;
  Tensor x = Tensor::full({100}, 1.0);
  x.set_requires_grad(true);
  SUBCASE("p = 0 is identity (no node recorded)") {
    Value in = g.input(x);
    Value out = g.dropout(in, 0.0, 123);
    CHECK(out.idx == in.idx);
  }
  SUBCASE("deterministic given seed") {
    Value a = g.dropout(g.input(x), 0.5, 99);
    Value b = g.dropout(g.input(x), 0.5, 99);
    CHECK(g.value(a).values() == g.value(b).values());
    Value c = g.dropout(g.input(x), 0.5, 100);
    CHECK(g.value(a).values() != g.value(c).values());
  }
  SUBCASE("kept entries are scaled by 1/(1-p)") {
    Value a = g.dropout(g.input(x), 0.25, 7);
    for (int64_t i = 0; i < g.value(a).size(); ++i) {
      const double v = g.value(a)[i];
      CHECK((v == 0.0 || v == doctest::Approx(1.0 / 0.75)));
    }
  }
}

TEST_CASE("statistics pooling") {
  Graph g;
  SUBCASE("constant frames: mean is the constant, stddev <= sqrt(eps)") {
    Value x = g.input(Tensor::full({5, 3}, 2.5));
    const Tensor& out = g.value(g.statistics_pooling(x));
    REQUIRE(out.size() == 6);
    for (int j = 0; j < 3; ++j) {
      CHECK(out[j] == doctest::Approx(2.5));
      CHECK(out[3 + j] <= std::sqrt(1e-8) + 1e-12);
    }
  }
  SUBCASE("frames [[0],[2]] give mean 1, std 1") {
    Value x = g.input(Tensor::from_data({2, 1}, {0.0, 2.0}));
    const Tensor& out = g.value(g.statistics_pooling(x));
    CHECK(out[0] == doctest::Approx(1.0));
    CHECK(out[1] == doctest::Approx(1.0).epsilon(1e-6));
  }
  SUBCASE("output length is 2D for any T") {
    for (int t : {1, 4, 17}) {
      Value x = g.input(Tensor({t, 6}));
      CHECK(g.value(g.statistics_pooling(x)).size() == 12);
    }
  }
  SUBCASE("invariant to frame permutation") {
    Rng rng(3);
    Tensor x({6, 4});
    for (int64_t i = 0; i < x.size(); ++i) x[i] = rng.normal();
    Tensor perm({6, 4});
    const int order[6] = {3, 0, 5, 1, 4, 2};
    for (int t = 0; t < 6; ++t) {
      for (int d = 0; d < 4; ++d) perm.at(t, d) = x.at(order[t], d);
    }
    const Tensor& a = g.value(g.statistics_pooling(g.input(x)));
    const Tensor& b = g.value(g.statistics_pooling(g.input(perm)));
    for (int64_t i = 0; i < a.size(); ++i) {
      CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("softmax cross entropy") {
  Graph g;
  SUBCASE("uniform logits, K = 20: loss = ln 20") {
    Tensor logits({3, 20});
    Value loss = g.softmax_cross_entropy(g.input(logits), {0, 5, 19});
    CHECK(g.value(loss)[0] == doctest::Approx(std::log(20.0)).epsilon(1e-12));
  }
  SUBCASE("huge correct margin drives loss to 0") {
    Tensor logits({1, 4});
    logits.values() = {50.0, 0.0, 0.0, 0.0};
    Value loss = g.softmax_cross_entropy(g.input(logits), {0});
    CHECK(g.value(loss)[0] < 1e-12);
  }
  SUBCASE("label out of range") {
    Tensor logits({2, 3});
    CHECK_THROWS_AS(g.softmax_cross_entropy(g.input(logits), {0, 3}),
                    InvalidArgumentError);
    CHECK_THROWS_AS(g.softmax_cross_entropy(g.input(logits), {-1, 0}),
                    InvalidArgumentError);
  }
}

TEST_CASE("gru with zero parameters outputs zeros") {
  Rng rng(1);
  neuralcore::GruLayer gru(3, 4, rng);
  for (auto& [name, p] : gru.params("g")) {
    (void)name;
    for (int64_t i = 0; i < p->size(); ++i) (*p)[i] = 0.0;
  }
  Graph g;
  Tensor seq({5, 2, 3});
  Rng rng2(2);
  for (int64_t i = 0; i < seq.size(); ++i) seq[i] = rng2.normal();
  const Tensor& out = g.value(gru.forward(g, g.input(seq)));
  CHECK(out.shape() == std::vector<int>{5, 2, 4});
  for (int64_t i = 0; i < out.size(); ++i) CHECK(out[i] == 0.0);
}

TEST_CASE("gru T=1 equals a single cell application") {
  Rng rng(4);
  neuralcore::GruLayer gru(3, 2, rng);
  Tensor seq1({1, 2, 3});
  Rng rng2(5);
  for (int64_t i = 0; i < seq1.size(); ++i) seq1[i] = rng2.normal();
  Tensor seq3({3, 2, 3});
  std::copy_n(seq1.data(), seq1.size(), seq3.data());  // step 0 identical

  Graph g1, g3;
  const Tensor& out1 = g1.value(gru.forward(g1, g1.input(seq1)));
  const Tensor& out3 = g3.value(gru.forward(g3, g3.input(seq3)));
  for (int i = 0; i < 2 * 2; ++i) {
    CHECK(out1[i] == doctest::Approx(out3[i]).epsilon(1e-15));
  }
}

TEST_CASE("adam first step moves by about -lr * sign(grad)") {
  Tensor p({3});
  p.values() = {1.0, 2.0, 3.0};
  p.set_requires_grad(true);
  p.grad() = {0.5, -1.25, 3.0};
  neuralcore::ParamList params{{"p", &p}};
  neuralcore::Adam adam(params, {1e-3, 0.9, 0.999, 1e-8});
  adam.step();
  CHECK(p[0] == doctest::Approx(1.0 - 1e-3).epsilon(1e-6));
  CHECK(p[1] == doctest::Approx(2.0 + 1e-3).epsilon(1e-6));
  CHECK(p[2] == doctest::Approx(3.0 - 1e-3).epsilon(1e-6));
}

TEST_CASE("sgd step") {
  Tensor p({2});
  p.values() = {1.0, -1.0};
  p.set_requires_grad(true);
  p.grad() = {10.0, -10.0};
  neuralcore::sgd_step({{"p", &p}}, 0.1);
  CHECK(p[0] == doctest::Approx(0.0));
  CHECK(p[1] == doctest::Approx(0.0));
}

TEST_CASE("finite guard raises instead of propagating NaN") {
  Graph g;
  Tensor x = Tensor::scalar(1e308);
  Value v = g.input(x);
  CHECK_THROWS_AS(g.mul(g.add(v, v), v), NumericError);
}

TEST_CASE("mse loss") {
  Graph g;
  Tensor pred = Tensor::from_data({2, 2}, {1.0, 2.0, 3.0, 4.0});
  Tensor target = Tensor::from_data({2, 2}, {1.0, 2.0, 3.0, 6.0});
  Value loss = g.mse_loss(g.input(pred), target);
  CHECK(g.value(loss)[0] == doctest::Approx(1.0));  // 4/4
}

TEST_CASE("structure ops round shapes correctly") {
  Graph g;
  SUBCASE("nchw_to_tbd") {
    Tensor x({2, 3, 4, 5});
    Rng rng(8);
    for (int64_t i = 0; i < x.size(); ++i) x[i] = rng.normal();
    const Tensor& seq = g.value(g.nchw_to_tbd(g.input(x)));
    CHECK(seq.shape() == std::vector<int>{4, 2, 15});
    // element check: seq[t][n][c*W + w] == x[n][c][t][w]
    CHECK(seq.at(2, 1, 1 * 5 + 3) == x.at(1, 1, 2, 3));
  }
  SUBCASE("broadcast_time") {
    Tensor x = Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
    const Tensor& out = g.value(g.broadcast_time(g.input(x), 4));
    CHECK(out.shape() == std::vector<int>{2, 1, 4, 3});
    CHECK(out.at(1, 0, 3, 2) == 6);
    CHECK(out.at(1, 0, 0, 2) == 6);
  }
  SUBCASE("concat_time_aux") {
    Tensor seq = Tensor::full({2, 2, 3}, 1.0);
    Tensor aux = Tensor::full({2, 2}, 5.0);
    const Tensor& out = g.value(g.concat_time_aux(g.input(seq), g.input(aux)));
    CHECK(out.shape() == std::vector<int>{2, 2, 5});
    CHECK(out.at(1, 1, 2) == 1.0);
    CHECK(out.at(1, 1, 3) == 5.0);
  }
}
