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

#ifndef VOXID_IO_HPP_
#define VOXID_IO_HPP_

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace voxid::io {

// CRC-32 (IEEE 802.3, reflected, poly 0xEDB88320).
uint32_t crc32(const void* data, size_t len, uint32_t seed = 0);

// --- WAV (PCM 16-bit) ---------------------------------------------------

struct WavData {
  std::vector<double> samples;  // mono, in [-1, 1]
  int sample_rate = 0;
};

// Reads a mono 16-bit PCM WAV file. Anything else (float/24-bit payloads,
// multi-channel audio) is a data error; sample-rate policy is the caller's.
WavData read_wav(const std::filesystem::path& path);

// Writes mono 16-bit PCM. Samples are clamped to [-1, 1] then scaled by
// 32767 and rounded.
void write_wav(const std::filesystem::path& path,
               const std::vector<double>& samples, int sample_rate);

// --- VXF1 feature cache file ---------------------------------------------
//
// Layout: magic "VXF1", u32 LE frames, u32 LE bins, row-major f32 LE
// payload, u32 LE CRC32 of the payload bytes. Embedding files are the
// frames=1 case.

struct FeatureMatrix {
  uint32_t frames = 0;
  uint32_t bins = 0;
  std::vector<float> values;  // row-major, frames x bins
};

void write_vxf(const std::filesystem::path& path, const FeatureMatrix& m);
FeatureMatrix read_vxf(const std::filesystem::path& path);

// --- little-endian byte helpers -------------------------------------------

void put_u32le(std::vector<uint8_t>& out, uint32_t v);
void put_u64le(std::vector<uint8_t>& out, uint64_t v);
uint32_t get_u32le(const uint8_t* p);
uint64_t get_u64le(const uint8_t* p);

std::vector<uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path,
                      const std::vector<uint8_t>& bytes);

// --- lock file -------------------------------------------------------------

// Single-writer guard: creates `path` exclusively, spinning until the
// holder releases it. Used by report writers that may run as concurrent
// processes appending to one table.
class FileLock {
 public:
  explicit FileLock(const std::filesystem::path& path);
  ~FileLock();
  FileLock(const FileLock&) = delete;
  FileLock& operator=(const FileLock&) = delete;

 private:
  std::filesystem::path path_;
  int fd_ = -1;
};

}  // namespace voxid::io

#endif  // VOXID_IO_HPP_
