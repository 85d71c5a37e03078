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

#include "voxid/io.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <thread>

#include "voxid/errors.hpp"

namespace voxid::io {

namespace {

std::array<uint32_t, 256> make_crc_table() {
  std::array<uint32_t, 256> table{};
  for (uint32_t i = 0; i < 256; ++i) {
    uint32_t c = i;
    for (int k = 0; k < 8; ++k) {
      c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : (c >> 1);
    }
    table[i] = c;
  }
  return table;
}

}  // namespace

uint32_t crc32(const void* data, size_t len, uint32_t seed) {
  static const std::array<uint32_t, 256> table = make_crc_table();
  uint32_t c = seed ^ 0xFFFFFFFFu;
  const auto* p = static_cast<const uint8_t*>(data);
  for (size_t i = 0; i < len; ++i) {
    c = table[(c ^ p[i]) & 0xFF] ^ (c >> 8);
  }
  return c ^ 0xFFFFFFFFu;
}

void put_u32le(std::vector<uint8_t>& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>((v >> (8 * i)) & 0xff));
}

void put_u64le(std::vector<uint8_t>& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<uint8_t>((v >> (8 * i)) & 0xff));
}

uint32_t get_u32le(const uint8_t* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

uint64_t get_u64le(const uint8_t* p) {
  uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

std::vector<uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open file: " + path.string());
  in.seekg(0, std::ios::end);
  auto size = in.tellg();
  in.seekg(0, std::ios::beg);
  std::vector<uint8_t> bytes(static_cast<size_t>(size));
  if (size > 0) in.read(reinterpret_cast<char*>(bytes.data()), size);
  if (!in) throw IoError("failed reading file: " + path.string());
  return bytes;
}

void write_file_bytes(const std::filesystem::path& path,
                      const std::vector<uint8_t>& bytes) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open file for writing: " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing file: " + path.string());
}

// --- WAV -------------------------------------------------------------------

namespace {

struct ChunkHeader {
  char id[4];
  uint32_t size;
};

}  // namespace

WavData read_wav(const std::filesystem::path& path) {
  std::vector<uint8_t> bytes = read_file_bytes(path);
  if (bytes.size() < 44 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw DataError("not a RIFF/WAVE file: " + path.string());
  }

  size_t pos = 12;
  int channels = 0, sample_rate = 0, bits = 0, format = 0;
  size_t data_pos = 0, data_len = 0;
  while (pos + 8 <= bytes.size()) {
    ChunkHeader ch;
    std::memcpy(ch.id, bytes.data() + pos, 4);
    ch.size = get_u32le(bytes.data() + pos + 4);
    pos += 8;
    if (pos + ch.size > bytes.size()) {
      throw CorruptFileError("truncated WAV chunk in " + path.string());
    }
    if (std::memcmp(ch.id, "fmt ", 4) == 0) {
      if (ch.size < 16) throw CorruptFileError("short fmt chunk in " + path.string());
      const uint8_t* f = bytes.data() + pos;
      format = f[0] | (f[1] << 8);
      channels = f[2] | (f[3] << 8);
      sample_rate = static_cast<int>(get_u32le(f + 4));
      bits = f[14] | (f[15] << 8);
    } else if (std::memcmp(ch.id, "data", 4) == 0) {
      data_pos = pos;
      data_len = ch.size;
    }
    pos += ch.size + (ch.size & 1);  // chunks are word-aligned
  }

  if (format != 1 || bits != 16) {
    throw DataError("expected 16-bit PCM WAV, got format=" +
                    std::to_string(format) + " bits=" + std::to_string(bits) +
                    " in " + path.string());
  }
  if (channels != 1) {
    throw DataError("expected mono WAV, got " + std::to_string(channels) +
                    " channels in " + path.string());
  }
  if (data_pos == 0) throw CorruptFileError("WAV has no data chunk: " + path.string());

  WavData out;
  out.sample_rate = sample_rate;
  size_t n = data_len / 2;
  out.samples.resize(n);
  const uint8_t* d = bytes.data() + data_pos;
  for (size_t i = 0; i < n; ++i) {
    int16_t s = static_cast<int16_t>(static_cast<uint16_t>(d[2 * i]) |
                                     (static_cast<uint16_t>(d[2 * i + 1]) << 8));
    out.samples[i] = static_cast<double>(s) / 32768.0;
  }
  return out;
}

void write_wav(const std::filesystem::path& path,
               const std::vector<double>& samples, int sample_rate) {
  const uint32_t data_bytes = static_cast<uint32_t>(samples.size() * 2);
  std::vector<uint8_t> out;
  out.reserve(44 + data_bytes);
  auto put_tag = [&out](const char* tag) {
    out.insert(out.end(), tag, tag + 4);
  };
  put_tag("RIFF");
  put_u32le(out, 36 + data_bytes);
  put_tag("WAVE");
  put_tag("fmt ");
  put_u32le(out, 16);
  out.push_back(1); out.push_back(0);   // PCM
  out.push_back(1); out.push_back(0);   // mono
  put_u32le(out, static_cast<uint32_t>(sample_rate));
  put_u32le(out, static_cast<uint32_t>(sample_rate * 2));  // byte rate
  out.push_back(2); out.push_back(0);   // block align
  out.push_back(16); out.push_back(0);  // bits per sample
  put_tag("data");
  put_u32le(out, data_bytes);
  for (double s : samples) {
    double c = std::clamp(s, -1.0, 1.0);
    auto v = static_cast<int16_t>(std::lround(c * 32767.0));
    out.push_back(static_cast<uint8_t>(static_cast<uint16_t>(v) & 0xff));
    out.push_back(static_cast<uint8_t>((static_cast<uint16_t>(v) >> 8) & 0xff));
  }
  write_file_bytes(path, out);
}

// --- VXF1 -------------------------------------------------------------------

void write_vxf(const std::filesystem::path& path, const FeatureMatrix& m) {
  if (static_cast<size_t>(m.frames) * m.bins != m.values.size()) {
    throw ShapeError("VXF payload size does not match frames*bins");
  }
  std::vector<uint8_t> out;
  out.reserve(12 + m.values.size() * 4 + 4);
  out.insert(out.end(), {'V', 'X', 'F', '1'});
  put_u32le(out, m.frames);
  put_u32le(out, m.bins);
  size_t payload_start = out.size();
  for (float v : m.values) {
    uint32_t u;
    std::memcpy(&u, &v, 4);
    put_u32le(out, u);
  }
  uint32_t crc = crc32(out.data() + payload_start, out.size() - payload_start);
  put_u32le(out, crc);
  write_file_bytes(path, out);
}

FeatureMatrix read_vxf(const std::filesystem::path& path) {
  std::vector<uint8_t> bytes = read_file_bytes(path);
  if (bytes.size() < 16 || std::memcmp(bytes.data(), "VXF1", 4) != 0) {
    throw CorruptFileError("bad VXF1 magic in " + path.string());
  }
  FeatureMatrix m;
  m.frames = get_u32le(bytes.data() + 4);
  m.bins = get_u32le(bytes.data() + 8);
  const size_t payload_len = static_cast<size_t>(m.frames) * m.bins * 4;
  if (bytes.size() != 12 + payload_len + 4) {
    throw CorruptFileError("truncated VXF1 file: " + path.string());
  }
  uint32_t stored = get_u32le(bytes.data() + 12 + payload_len);
  uint32_t actual = crc32(bytes.data() + 12, payload_len);
  if (stored != actual) {
    throw CorruptFileError("VXF1 CRC mismatch in " + path.string());
  }
  m.values.resize(static_cast<size_t>(m.frames) * m.bins);
  for (size_t i = 0; i < m.values.size(); ++i) {
    uint32_t u = get_u32le(bytes.data() + 12 + i * 4);
    float f;
    std::memcpy(&f, &u, 4);
    m.values[i] = f;
  }
  return m;
}

// --- FileLock ----------------------------------------------------------------

FileLock::FileLock(const std::filesystem::path& path) : path_(path) {
  if (path_.has_parent_path()) {
    std::filesystem::create_directories(path_.parent_path());
  }
  for (;;) {
    fd_ = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd_ >= 0) return;
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }
}

FileLock::~FileLock() {
  if (fd_ >= 0) {
    ::close(fd_);
    std::error_code ec;
    std::filesystem::remove(path_, ec);
  }
}

}  // namespace voxid::io
