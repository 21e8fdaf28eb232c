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

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>

#include "doctest.h"
#include "oracles.hpp"
#include "s2s/frontend.hpp"

using namespace s2s;
namespace t = s2s::testing;

namespace {

double mel(double hz) { return 1127.0 * std::log(1.0 + hz / 700.0); }

// Direct DFT log-mel of one 400-sample frame.
std::vector<double> reference_logmel(const std::int16_t* x) {
  const int N = 512;
  std::vector<double> frame(N, 0.0);
  double mean = 0;
  for (int i = 0; i < 400; ++i) mean += x[i];
  mean /= 400;
  for (int i = 0; i < 400; ++i) {
    const double w = 0.54 - 0.46 * std::cos(2 * std::numbers::pi * i / 399.0);
    frame[i] = (x[i] - mean) / 32768.0 * w;
  }
  std::vector<double> power(N / 2 + 1);
  for (int k = 0; k <= N / 2; ++k) {
    std::complex<double> acc = 0;
    for (int n = 0; n < N; ++n) acc += frame[n] * std::polar(1.0, -2 * std::numbers::pi * k * n / N);
    power[k] = std::norm(acc);
  }
  const double top = mel(8000.0), step = top / 81.0;
  std::vector<double> out(80);
  for (int m = 0; m < 80; ++m) {
    const double l = step * m, c = l + step, r = c + step;
    double e = 0;
    for (int k = 0; k <= N / 2; ++k) {
      const double f = mel(k * 16000.0 / N);
      if (f > l && f <= c) e += power[k] * (f - l) / (c - l);
      if (f > c && f < r) e += power[k] * (r - f) / (r - c);
    }
    out[m] = std::log(std::max(e, 1e-10));
  }
  return out;
}

std::vector<std::int16_t> tone(std::size_t n, double hz, double amp = 0.3) {
  std::vector<std::int16_t> pcm(n);
  for (std::size_t i = 0; i < n; ++i) {
    pcm[i] = static_cast<std::int16_t>(std::lround(amp * 32767 * std::sin(2 * std::numbers::pi * hz * i / 16000.0)));
  }
  return pcm;
}

}  // namespace

TEST_CASE("frame count follows the 25 ms / 10 ms sliding window") {
  for (std::size_t n = 0; n < 5000; n += 37) CHECK(num_frames(n) == t::window_count(n, 400, 160));
  CHECK(num_frames(16000) == 98);
  CHECK(num_frames(399) == 0);
  CHECK(num_frames(400) == 1);
  CHECK(frame_features(std::vector<std::int16_t>(16000)).frames.rows() == 98);
}

TEST_CASE("log-mel features match a direct DFT reference") {
  const auto pcm = t::random_pcm(400 + 160 * 4, 21);
  const FeatureChunk f = frame_features(pcm);
  REQUIRE(f.size() == 5);
  for (std::size_t fr = 0; fr < f.size(); ++fr) {
    const auto ref = reference_logmel(pcm.data() + fr * 160);
    for (std::size_t m = 0; m < 80; ++m) CHECK(f.frames.row(fr)[m] == doctest::Approx(ref[m]).epsilon(1e-3));
  }
}

TEST_CASE("a pure tone peaks in the band around its frequency") {
  const FeatureChunk f = frame_features(tone(4000, 1000.0));
  const float* row = f.frames.row(3);
  const auto peak = static_cast<std::size_t>(std::max_element(row, row + 80) - row);
  const double step = mel(8000.0) / 81.0;
  const double centre = step * (peak + 1);
  CHECK(std::abs(centre - mel(1000.0)) < 2 * step);
}

TEST_CASE("silence sits at the log floor") {
  const FeatureChunk f = frame_features(std::vector<std::int16_t>(800));
  for (float v : f.frames.data()) CHECK(v == doctest::Approx(std::log(1e-10f)));
}

TEST_CASE("streaming framing equals one-shot framing for any packetisation") {
  const auto pcm = t::random_pcm(16000 + 123, 5);
  const FeatureChunk whole = frame_features(pcm);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    std::mt19937_64 rng(seed);
    StreamingFrontend fe;
    Tensor got = Tensor::zeros(0, 80);
    for (std::size_t at = 0; at < pcm.size();) {
      const std::size_t n = std::min<std::size_t>(pcm.size() - at, rng() % 700);
      const FeatureChunk c = fe.push(std::span(pcm).subspan(at, n));
      CHECK(c.first_frame == got.rows());
      got.append_rows(c.frames);
      at += n;
    }
    CHECK(got == whole.frames);
    CHECK(fe.samples_seen() == pcm.size());
    CHECK(fe.pending().size() < 400);
  }
}

TEST_CASE("VAD triggers once after three active frames and resets") {
  std::vector<std::int16_t> pcm(16000, 0);
  const auto t1 = tone(4800, 300.0);
  std::copy(t1.begin(), t1.end(), pcm.begin() + 3200);
  const FeatureChunk f = frame_features(pcm);

  const VadResult r = vad_step(f, VadState{});
  REQUIRE(r.trigger_frame.has_value());
  // Frame 18 is the first to overlap the tone; three active frames later is 20.
  CHECK(*r.trigger_frame >= 20);
  CHECK(*r.trigger_frame <= 22);
  CHECK(r.state.triggered);

  const VadResult again = vad_step(f, r.state);
  CHECK_FALSE(again.trigger_frame.has_value());

  const VadState reset = vad_reset(r.state);
  CHECK_FALSE(reset.triggered);
  CHECK(reset.consecutive_active == 0);
  CHECK(vad_step(f, reset).trigger_frame == r.trigger_frame);
}

TEST_CASE("VAD stays quiet on silence and on two-frame blips") {
  CHECK_FALSE(vad_step(frame_features(std::vector<std::int16_t>(16000)), VadState{}).trigger_frame);
  Tensor frames = Tensor::zeros(10, 80);
  for (auto& v : frames.data()) v = std::log(1e-10f);
  for (std::size_t m = 0; m < 80; ++m) frames.row(4)[m] = frames.row(5)[m] = 1.0f;
  CHECK_FALSE(vad_step(FeatureChunk{frames, 0}, VadState{}).trigger_frame);
}
