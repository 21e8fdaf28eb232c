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

// Scripted end-to-end runs. A scenario is JSON lines: an optional header
// object, then events placing audio on the input timeline, scripting states
// or responses, and asserting on the resulting event transcript.

#include <cstdint>
#include <filesystem>
#include <istream>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "s2s/duplex.hpp"
#include "s2s/latency.hpp"

namespace s2s {

struct ScenarioAudio {
  double at_ms = 0;
  std::vector<std::int16_t> pcm;  // 16 kHz
};

struct Expectation {
  std::size_t line = 0;
  nlohmann::json pattern;  // every key must equal the event's value
  enum class Kind { kNext, kNone, kCount } kind = Kind::kNext;
  std::size_t count = 0;
};

struct Scenario {
  std::uint64_t seed = 0;
  std::optional<std::size_t> chunk_size = 4;
  std::size_t speech_chunk = 40;
  std::size_t topk = 1;
  bool pre_network = false;
  double packet_ms = 20;
  double tail_ms = 1000;
  SessionPolicy policy;
  std::vector<ScenarioAudio> audio;
  std::vector<Expectation> expects;

  // Throws parse-error (with the line number) or io-error.
  static Scenario parse(std::istream& in, const std::filesystem::path& base_dir = {});
  static Scenario load(const std::filesystem::path& path);

  ModelConfig model_config() const;
  EngineConfig engine_config() const;
  // The full 16 kHz input: audio mixed at its offsets, silence elsewhere,
  // plus the trailing tail.
  std::vector<std::int16_t> timeline() const;
};

struct ScenarioResult {
  std::vector<TurnEvent> events;
  std::vector<std::int16_t> response;  // 24 kHz, every PCM chunk in order
  LatencyReport latency;
  std::vector<std::string> failures;   // unmet expectations

  bool passed() const { return failures.empty(); }
};

// Streams the timeline in packet_ms packets through one session, then
// finishes any response. `seed` overrides the scenario's.
ScenarioResult run_scenario(const Scenario& sc, std::optional<std::uint64_t> seed = {});

// Whole-transcript checks; one message per failed expectation.
std::vector<std::string> check_expectations(const std::vector<Expectation>& expects,
                                            const std::vector<TurnEvent>& events);

// Latency over the complete turns; an empty report when there are none.
LatencyReport latency_or_empty(const std::vector<TurnEvent>& events,
                               std::optional<double> chunk_ms);

// events.jsonl (no PCM payloads), out.wav (24 kHz) and latency.json.
void write_artifacts(const ScenarioResult& r, const std::filesystem::path& dir);

}  // namespace s2s
