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

#include "s2s/frontend.hpp"

#include <fftw3.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <memory>
#include <mutex>
#include <numbers>

namespace s2s {

namespace {

constexpr std::size_t kNumBins = kFftSize / 2 + 1;
constexpr float kLogFloor = 1e-10f;

double hz_to_mel(double hz) { return 1127.0 * std::log(1.0 + hz / 700.0); }

struct MelBank {
  // Sparse triangle per band: first bin and weights.
  std::array<std::size_t, kNumMelBands> first{};
  std::array<std::vector<float>, kNumMelBands> weights;
  std::array<float, kWindowSamples> window{};
};

const MelBank& mel_bank() {
  static const MelBank bank = [] {
    MelBank b;
    const double lo = hz_to_mel(0.0);
    const double hi = hz_to_mel(kInputSampleRate / 2.0);
    const double step = (hi - lo) / (kNumMelBands + 1);
    for (std::size_t m = 0; m < kNumMelBands; ++m) {
      const double left = lo + step * m;
      const double center = left + step;
      const double right = center + step;
      bool started = false;
      for (std::size_t k = 0; k < kNumBins; ++k) {
        const double mel =
            hz_to_mel(static_cast<double>(k) * kInputSampleRate / kFftSize);
        double w = 0.0;
        if (mel > left && mel < right) {
          w = mel <= center ? (mel - left) / (center - left)
                            : (right - mel) / (right - center);
        }
        if (w > 0.0) {
          if (!started) {
            b.first[m] = k;
            started = true;
          }
          b.weights[m].push_back(static_cast<float>(w));
        } else if (started) {
          break;
        }
      }
    }
    for (std::size_t n = 0; n < kWindowSamples; ++n) {
      b.window[n] = static_cast<float>(
          0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * n /
                                 (kWindowSamples - 1)));
    }
    return b;
  }();
  return bank;
}

struct FftwDeleter {
  void operator()(void* p) const { fftwf_free(p); }
};

// FFTW planning is not thread-safe; execution with new arrays is.
fftwf_plan shared_plan() {
  static std::once_flag once;
  static fftwf_plan plan = nullptr;
  std::call_once(once, [] {
    float* in = fftwf_alloc_real(kFftSize);
    fftwf_complex* out = fftwf_alloc_complex(kNumBins);
    plan = fftwf_plan_dft_r2c_1d(static_cast<int>(kFftSize), in, out,
                                 FFTW_ESTIMATE);
    fftwf_free(in);
    fftwf_free(out);
  });
  return plan;
}

}  // namespace

std::size_t num_frames(std::size_t n_samples) {
  if (n_samples < kWindowSamples) return 0;
  return 1 + (n_samples - kWindowSamples) / kShiftSamples;
}

FeatureChunk frame_features(std::span<const std::int16_t> pcm) {
  const std::size_t n = num_frames(pcm.size());
  FeatureChunk out;
  out.frames = Tensor::zeros(n, kNumMelBands);
  if (n == 0) return out;

  const MelBank& bank = mel_bank();
  const fftwf_plan plan = shared_plan();
  std::unique_ptr<float, FftwDeleter> in(fftwf_alloc_real(kFftSize));
  std::unique_ptr<fftwf_complex, FftwDeleter> spec(
      fftwf_alloc_complex(kNumBins));
  std::array<float, kNumBins> power{};

  for (std::size_t f = 0; f < n; ++f) {
    const std::int16_t* src = pcm.data() + f * kShiftSamples;
    float* buf = in.get();
    double mean = 0.0;
    for (std::size_t i = 0; i < kWindowSamples; ++i) mean += src[i];
    mean /= kWindowSamples;
    for (std::size_t i = 0; i < kWindowSamples; ++i) {
      buf[i] = static_cast<float>((src[i] - mean) / 32768.0) * bank.window[i];
    }
    std::fill(buf + kWindowSamples, buf + kFftSize, 0.0f);
    fftwf_execute_dft_r2c(plan, buf, spec.get());
    for (std::size_t k = 0; k < kNumBins; ++k) {
      const float re = spec.get()[k][0];
      const float im = spec.get()[k][1];
      power[k] = re * re + im * im;
    }
    float* row = out.frames.row(f);
    for (std::size_t m = 0; m < kNumMelBands; ++m) {
      float e = 0.0f;
      const auto& w = bank.weights[m];
      for (std::size_t j = 0; j < w.size(); ++j) {
        e += w[j] * power[bank.first[m] + j];
      }
      row[m] = std::log(std::max(e, kLogFloor));
    }
  }
  return out;
}

float frame_log_energy(std::span<const float> log_mel) {
  double sum = 0.0;
  for (float v : log_mel) sum += std::exp(static_cast<double>(v));
  return static_cast<float>(std::log(std::max(sum, 1e-30)));
}

FeatureChunk StreamingFrontend::push(std::span<const std::int16_t> pcm) {
  pending_.insert(pending_.end(), pcm.begin(), pcm.end());
  samples_seen_ += pcm.size();
  FeatureChunk chunk = frame_features(pending_);
  chunk.first_frame = next_frame_;
  const std::size_t n = chunk.size();
  next_frame_ += n;
  pending_.erase(pending_.begin(),
                 pending_.begin() + static_cast<std::ptrdiff_t>(n * kShiftSamples));
  return chunk;
}

void StreamingFrontend::restore(std::vector<std::int16_t> pending,
                                std::size_t next_frame,
                                std::uint64_t samples_seen) {
  pending_ = std::move(pending);
  next_frame_ = next_frame;
  samples_seen_ = samples_seen;
}

VadResult vad_step(const FeatureChunk& features, VadState state) {
  VadResult result;
  for (std::size_t f = 0; f < features.size(); ++f) {
    const bool active =
        frame_log_energy(features.frames.row_span(f)) > state.energy_threshold;
    state.consecutive_active = active ? state.consecutive_active + 1 : 0;
    if (!state.triggered &&
        state.consecutive_active >= state.activation_frames) {
      state.triggered = true;
      if (!result.trigger_frame) result.trigger_frame = f;
    }
  }
  result.state = state;
  return result;
}

VadState vad_reset(VadState state) {
  state.triggered = false;
  state.consecutive_active = 0;
  return state;
}

}  // namespace s2s
