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

#ifndef VOXID_NEURALCORE_OPTIM_HPP_
#define VOXID_NEURALCORE_OPTIM_HPP_

#include <cstdint>
#include <filesystem>
#include <vector>

#include "voxid/neuralcore/layers.hpp"
#include "voxid/neuralcore/tensor.hpp"

namespace voxid::neuralcore {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with bias correction. State shapes are pinned to the parameter list
// given at construction; the list order must not change between steps.
class Adam {
 public:
  Adam(const ParamList& params, AdamConfig config = {});

  // Applies one update from the accumulated gradients, then leaves the
  // gradients untouched (call zero_grads separately).
  void step();
  int64_t step_count() const { return step_count_; }

 private:
  std::vector<Tensor*> params_;
  AdamConfig config_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  int64_t step_count_ = 0;
};

void sgd_step(const ParamList& params, double lr);
void zero_grads(const ParamList& params);

// --- VXC1 checkpoint --------------------------------------------------------
//
// magic "VXC1", u32 LE param count, then per parameter: u32 name length,
// name bytes, u32 ndim, ndim u32 dims, u64 offset into the payload (in
// doubles); then u64 total payload length, f64 LE payload, u32 LE CRC32 of
// the payload bytes.

void save_checkpoint(const std::filesystem::path& path, const ParamList& params);

// Loads into the given parameters; names and shapes must match exactly.
void load_checkpoint(const std::filesystem::path& path, const ParamList& params);

}  // namespace voxid::neuralcore

#endif  // VOXID_NEURALCORE_OPTIM_HPP_
