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
#include <optional>
#include <span>
#include <vector>

#include "s2s/tensor.hpp"

namespace s2s {

inline constexpr int kInputSampleRate = 16000;
inline constexpr std::size_t kWindowSamples = 400;  // 25 ms
inline constexpr std::size_t kShiftSamples = 160;   // 10 ms
inline constexpr std::size_t kFftSize = 512;
inline constexpr std::size_t kNumMelBands = 80;
inline constexpr double kFrameShiftMs = 10.0;
inline constexpr double kWindowMs = 25.0;

// Log-mel frames at 100 Hz. `first_frame` is the global index of row 0 in
// the session's feature stream.
struct FeatureChunk {
  Tensor frames;  // [n, 80]
  std::size_t first_frame = 0;

  std::size_t size() const { return frames.rows(); }
};

// Frames fully covered by n_samples: 1 + (n - 400) / 160, or 0 below a window.
std::size_t num_frames(std::size_t n_samples);

// Hamming-windowed 512-point power spectrum, 80 triangular mel filters over
// 0-8 kHz, natural log floored at 1e-10.
FeatureChunk frame_features(std::span<const std::int16_t> pcm);

// Per-frame log energy summed across mel bands; what the VAD thresholds.
float frame_log_energy(std::span<const float> log_mel);

// Incremental framing over a continuous sample stream. Equivalent to calling
// frame_features on the concatenation of everything pushed so far.
class StreamingFrontend {
 public:
  FeatureChunk push(std::span<const std::int16_t> pcm);

  std::size_t frames_emitted() const { return next_frame_; }
  std::uint64_t samples_seen() const { return samples_seen_; }

  // Serialization access.
  const std::vector<std::int16_t>& pending() const { return pending_; }
  void restore(std::vector<std::int16_t> pending, std::size_t next_frame,
               std::uint64_t samples_seen);

 private:
  std::vector<std::int16_t> pending_;
  std::size_t next_frame_ = 0;
  std::uint64_t samples_seen_ = 0;
};

// Short-term energy detector standing in for a neural VAD.
struct VadState {
  bool triggered = false;
  int consecutive_active = 0;
  float energy_threshold = 0.0f;
  int activation_frames = 3;

  friend bool operator==(const VadState&, const VadState&) = default;
};

struct VadResult {
  VadState state;
  // Row index within the chunk where the trigger fired.
  std::optional<std::size_t> trigger_frame;
};

// Emits a trigger at most once per untriggered->triggered transition.
VadResult vad_step(const FeatureChunk& features, VadState state);
VadState vad_reset(VadState state);

}  // namespace s2s
