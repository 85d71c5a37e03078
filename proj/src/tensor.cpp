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

#include "voxid/neuralcore/tensor.hpp"

#include <cmath>
#include <sstream>

#include "voxid/errors.hpp"

namespace voxid::neuralcore {

int64_t shape_product(const std::vector<int>& shape) {
  int64_t p = 1;
  for (int d : shape) {
    if (d < 0) throw ShapeError("negative dimension in shape");
    p *= d;
  }
  return p;
}

Tensor::Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
  data_.assign(static_cast<size_t>(shape_product(shape_)), 0.0);
}

Tensor Tensor::full(std::vector<int> shape, double value) {
  Tensor t(std::move(shape));
  for (auto& v : t.data_) v = value;
  return t;
}

Tensor Tensor::from_data(std::vector<int> shape, std::vector<double> data) {
  if (shape_product(shape) != static_cast<int64_t>(data.size())) {
    throw ShapeError("from_data: shape/product mismatch");
  }
  Tensor t;
  t.shape_ = std::move(shape);
  t.data_ = std::move(data);
  return t;
}

void Tensor::set_requires_grad(bool flag) {
  requires_grad_ = flag;
  if (!flag) grad_.clear();
}

std::vector<double>& Tensor::grad() {
  if (grad_.size() != data_.size()) grad_.assign(data_.size(), 0.0);
  return grad_;
}

void Tensor::zero_grad() {
  grad_.assign(data_.size(), 0.0);
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape_.size(); ++i) {
    if (i) os << "x";
    os << shape_[i];
  }
  os << "]";
  return os.str();
}

bool Tensor::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

}  // namespace voxid::neuralcore
