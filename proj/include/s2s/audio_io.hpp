// Copyright 2026 The duplex-s2s Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace s2s {

struct PcmAudio {
  std::vector<std::int16_t> samples;
  int sample_rate = 16000;
};

// RIFF/WAVE, 16-bit little-endian mono. Throws Error(kIo) on anything else.
PcmAudio read_wav(const std::filesystem::path& path);
PcmAudio parse_wav(std::span<const std::uint8_t> bytes);
void write_wav(const std::filesystem::path& path,
               std::span<const std::int16_t> samples, int sample_rate);
std::vector<std::uint8_t> encode_wav(std::span<const std::int16_t> samples,
                                     int sample_rate);

// Headerless signed 16-bit little-endian.
std::vector<std::int16_t> read_raw_s16le(const std::filesystem::path& path);
std::vector<std::int16_t> decode_s16le(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_s16le(std::span<const std::int16_t> samples);

}  // namespace s2s
