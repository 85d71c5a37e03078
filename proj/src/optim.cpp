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

#include "voxid/neuralcore/optim.hpp"

#include <cmath>
#include <cstring>

#include "voxid/errors.hpp"
#include "voxid/io.hpp"

namespace voxid::neuralcore {

Adam::Adam(const ParamList& params, AdamConfig config) : config_(config) {
  params_.reserve(params.size());
  for (const auto& [name, p] : params) {
    (void)name;
    params_.push_back(p);
    m_.emplace_back(static_cast<size_t>(p->size()), 0.0);
    v_.emplace_back(static_cast<size_t>(p->size()), 0.0);
  }
}

void Adam::step() {
  ++step_count_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_count_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_count_));
  for (size_t pi = 0; pi < params_.size(); ++pi) {
    Tensor& p = *params_[pi];
    if (!p.requires_grad()) continue;
    auto& grad = p.grad();
    auto& m = m_[pi];
    auto& v = v_[pi];
    for (size_t i = 0; i < grad.size(); ++i) {
      const double gv = grad[i];
      m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * gv;
      v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * gv * gv;
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      p[static_cast<int64_t>(i)] -= config_.lr * m_hat / (std::sqrt(v_hat) + config_.eps);
    }
  }
}

void sgd_step(const ParamList& params, double lr) {
  for (const auto& [name, p] : params) {
    (void)name;
    if (!p->requires_grad()) continue;
    auto& grad = p->grad();
    for (size_t i = 0; i < grad.size(); ++i) {
      (*p)[static_cast<int64_t>(i)] -= lr * grad[i];
    }
  }
}

void zero_grads(const ParamList& params) {
  for (const auto& [name, p] : params) {
    (void)name;
    p->zero_grad();
  }
}

// --- checkpoint --------------------------------------------------------------

void save_checkpoint(const std::filesystem::path& path, const ParamList& params) {
  std::vector<uint8_t> out;
  out.insert(out.end(), {'V', 'X', 'C', '1'});
  io::put_u32le(out, static_cast<uint32_t>(params.size()));
  uint64_t offset = 0;
  for (const auto& [name, p] : params) {
    io::put_u32le(out, static_cast<uint32_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    io::put_u32le(out, static_cast<uint32_t>(p->ndim()));
    for (int i = 0; i < p->ndim(); ++i) {
      io::put_u32le(out, static_cast<uint32_t>(p->dim(i)));
    }
    io::put_u64le(out, offset);
    offset += static_cast<uint64_t>(p->size());
  }
  io::put_u64le(out, offset);
  const size_t payload_start = out.size();
  for (const auto& [name, p] : params) {
    (void)name;
    for (int64_t i = 0; i < p->size(); ++i) {
      uint64_t bits;
      const double dv = (*p)[i];
      std::memcpy(&bits, &dv, 8);
      io::put_u64le(out, bits);
    }
  }
  const uint32_t crc = io::crc32(out.data() + payload_start, out.size() - payload_start);
  io::put_u32le(out, crc);
  io::write_file_bytes(path, out);
}

void load_checkpoint(const std::filesystem::path& path, const ParamList& params) {
  std::vector<uint8_t> bytes = io::read_file_bytes(path);
  if (bytes.size() < 8 || std::memcmp(bytes.data(), "VXC1", 4) != 0) {
    throw CorruptFileError("bad VXC1 magic in " + path.string());
  }
  size_t pos = 4;
  auto need = [&](size_t n) {
    if (pos + n > bytes.size()) {
      throw CorruptFileError("truncated VXC1 file: " + path.string());
    }
  };
  need(4);
  const uint32_t count = io::get_u32le(bytes.data() + pos);
  pos += 4;
  if (count != params.size()) {
    throw DimensionError("checkpoint has " + std::to_string(count) +
                         " parameters, model expects " +
                         std::to_string(params.size()));
  }
  struct Entry {
    std::string name;
    std::vector<int> shape;
    uint64_t offset;
  };
  std::vector<Entry> entries(count);
  for (auto& e : entries) {
    need(4);
    const uint32_t name_len = io::get_u32le(bytes.data() + pos);
    pos += 4;
    need(name_len);
    e.name.assign(reinterpret_cast<const char*>(bytes.data() + pos), name_len);
    pos += name_len;
    need(4);
    const uint32_t ndim = io::get_u32le(bytes.data() + pos);
    pos += 4;
    e.shape.resize(ndim);
    for (uint32_t i = 0; i < ndim; ++i) {
      need(4);
      e.shape[i] = static_cast<int>(io::get_u32le(bytes.data() + pos));
      pos += 4;
    }
    need(8);
    e.offset = io::get_u64le(bytes.data() + pos);
    pos += 8;
  }
  need(8);
  const uint64_t total = io::get_u64le(bytes.data() + pos);
  pos += 8;
  const size_t payload_bytes = static_cast<size_t>(total) * 8;
  need(payload_bytes + 4);
  const uint32_t stored_crc = io::get_u32le(bytes.data() + pos + payload_bytes);
  const uint32_t actual_crc = io::crc32(bytes.data() + pos, payload_bytes);
  if (stored_crc != actual_crc) {
    throw CorruptFileError("VXC1 CRC mismatch in " + path.string());
  }
  for (size_t i = 0; i < entries.size(); ++i) {
    const Entry& e = entries[i];
    Tensor* p = params[i].second;
    if (e.name != params[i].first) {
      throw DimensionError("checkpoint parameter '" + e.name +
                           "' does not match model parameter '" + params[i].first + "'");
    }
    if (e.shape != p->shape()) {
      throw DimensionError("checkpoint shape mismatch for '" + e.name + "'");
    }
    const size_t base = pos + static_cast<size_t>(e.offset) * 8;
    if (base + static_cast<size_t>(p->size()) * 8 > pos + payload_bytes) {
      throw CorruptFileError("VXC1 payload overrun for '" + e.name + "'");
    }
    for (int64_t j = 0; j < p->size(); ++j) {
      const uint64_t bits = io::get_u64le(bytes.data() + base + static_cast<size_t>(j) * 8);
      double dv;
      std::memcpy(&dv, &bits, 8);
      (*p)[j] = dv;
    }
  }
}

}  // namespace voxid::neuralcore
