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

#include "s2s/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <random>

#include "s2s/audio_io.hpp"
#include "s2s/base64.hpp"
#include "s2s/error.hpp"

namespace s2s {

using nlohmann::json;

namespace {

std::vector<std::int16_t> synthesize(const json& j) {
  const std::string kind = j.at("synth").get<std::string>();
  const double dur = j.value("duration_ms", 1000.0);
  if (dur < 0) throw Error(ErrorCode::kParseError, "duration_ms must be >= 0");
  const auto n = static_cast<std::size_t>(std::llround(dur * kInputSampleRate / 1000.0));
  const double amp = j.value("amp", 0.3);
  std::vector<std::int16_t> pcm(n, 0);
  auto put = [&](std::size_t i, double v) {
    pcm[i] = static_cast<std::int16_t>(std::lround(std::clamp(v, -1.0, 1.0) * 32767.0));
  };
  if (kind == "tone") {
    const double freq = j.value("freq", 220.0);
    for (std::size_t i = 0; i < n; ++i) {
      put(i, amp * std::sin(2.0 * std::numbers::pi * freq * static_cast<double>(i) /
                            kInputSampleRate));
    }
  } else if (kind == "noise") {
    std::mt19937_64 rng(j.value("seed", std::uint64_t{0}));
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (std::size_t i = 0; i < n; ++i) put(i, amp * u(rng));
  } else if (kind != "silence") {
    throw Error(ErrorCode::kParseError, "unknown synth kind '" + kind + "'");
  }
  return pcm;
}

std::vector<std::int16_t> load_audio(const std::string& ref, const std::filesystem::path& base) {
  static constexpr std::string_view kPrefix = "base64:";
  if (ref.rfind(kPrefix, 0) == 0) {
    const auto bytes = base64_decode(std::string_view(ref).substr(kPrefix.size()));
    if (bytes.size() >= 4 && std::equal(bytes.begin(), bytes.begin() + 4, "RIFF")) {
      return parse_wav(bytes).samples;
    }
    return decode_s16le(bytes);
  }
  std::filesystem::path path(ref);
  if (path.is_relative()) path = base / path;
  if (path.extension() == ".wav") {
    PcmAudio a = read_wav(path);
    if (a.sample_rate != kInputSampleRate) {
      throw Error(ErrorCode::kIo, path.string() + ": input audio must be 16 kHz");
    }
    return std::move(a.samples);
  }
  return read_raw_s16le(path);
}

DialogueState state_arg(const json& v) {
  const int s = v.get<int>();
  if (s < 0 || s > 2) throw Error(ErrorCode::kParseError, "state must be 0, 1 or 2");
  return static_cast<DialogueState>(s);
}

bool is_header(const json& j) {
  for (const char* k : {"audio", "synth", "force_state", "force_text", "endpoint_ms", "expect"}) {
    if (j.contains(k)) return false;
  }
  return true;
}

void read_header(Scenario& sc, const json& j, std::string& states) {
  sc.seed = j.value("seed", sc.seed);
  if (const auto it = j.find("chunk_size"); it != j.end()) {
    if (it->is_null() || (it->is_string() && it->get<std::string>() == "inf")) {
      sc.chunk_size.reset();
    } else {
      sc.chunk_size = it->get<std::size_t>();
    }
  }
  sc.speech_chunk = j.value("speech_chunk", sc.speech_chunk);
  sc.topk = j.value("topk", sc.topk);
  sc.pre_network = j.value("pre_network", sc.pre_network);
  sc.packet_ms = j.value("packet_ms", sc.packet_ms);
  sc.tail_ms = j.value("tail_ms", sc.tail_ms);
  states = j.value("states", std::string());
  if (!(sc.packet_ms > 0) || sc.tail_ms < 0) {
    throw Error(ErrorCode::kParseError, "packet_ms must be > 0 and tail_ms >= 0");
  }
}

}  // namespace

Scenario Scenario::parse(std::istream& in, const std::filesystem::path& base_dir) {
  Scenario sc;
  std::string states;
  bool scripted = false, endpointed = false;
  double last_at = -std::numeric_limits<double>::infinity();
  std::string line;
  std::size_t lineno = 0;
  bool first = true;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      if (!j.is_object()) throw Error(ErrorCode::kParseError, "expected a JSON object");
      if (first && is_header(j)) {
        read_header(sc, j, states);
        first = false;
        continue;
      }
      first = false;
      if (j.contains("audio") || j.contains("synth")) {
        const double at = j.value("at_ms", std::max(last_at, 0.0));
        if (at < 0 || at < last_at) throw Error(ErrorCode::kParseError, "at_ms must be monotone");
        last_at = at;
        sc.audio.push_back({at, j.contains("audio")
                                    ? load_audio(j.at("audio").get<std::string>(), base_dir)
                                    : synthesize(j)});
      } else if (j.contains("force_state")) {
        scripted = true;
        sc.policy.states.script[{j.value("turn", 0), j.at("at_chunk").get<std::size_t>()}] =
            state_arg(j.at("force_state"));
      } else if (j.contains("force_text")) {
        sc.policy.forced_text[j.value("turn", 0)] =
            encode_text(j.at("force_text").get<std::string>());
      } else if (j.contains("endpoint_ms")) {
        endpointed = true;
        sc.policy.states.endpoints.push_back(
            {j.at("endpoint_ms").get<double>(),
             j.contains("state") ? state_arg(j.at("state")) : DialogueState::kInterrupt});
      } else if (j.contains("expect")) {
        Expectation e;
        e.line = lineno;
        e.pattern = j.at("expect");
        if (!e.pattern.is_object()) throw Error(ErrorCode::kParseError, "expect needs an object");
        if (j.value("none", false)) {
          e.kind = Expectation::Kind::kNone;
        } else if (j.contains("count")) {
          e.kind = Expectation::Kind::kCount;
          e.count = j.at("count").get<std::size_t>();
        }
        sc.expects.push_back(std::move(e));
      } else {
        throw Error(ErrorCode::kParseError, "unrecognized scenario line");
      }
    } catch (const json::exception& e) {
      throw Error(ErrorCode::kParseError, "line " + std::to_string(lineno) + ": " + e.what());
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kParseError) throw;
      throw Error(ErrorCode::kParseError, "line " + std::to_string(lineno) + ": " +
                                              std::string(e.what()).substr(13));
    }
  }
  if (scripted && endpointed) {
    throw Error(ErrorCode::kParseError, "force_state and endpoint_ms cannot be combined");
  }
  if (states.empty()) states = scripted ? "script" : endpointed ? "endpoint" : "head";
  if (states == "head") {
    sc.policy.states.kind = StatePolicy::Kind::kHead;
  } else if (states == "script") {
    sc.policy.states.kind = StatePolicy::Kind::kScript;
  } else if (states == "endpoint") {
    sc.policy.states.kind = StatePolicy::Kind::kEndpoint;
    if (!sc.chunk_size) throw Error(ErrorCode::kParseError, "endpoint states need a finite chunk");
  } else {
    throw Error(ErrorCode::kParseError, "unknown states '" + states + "'");
  }
  std::sort(sc.policy.states.endpoints.begin(), sc.policy.states.endpoints.end(),
            [](const auto& a, const auto& b) { return a.ms < b.ms; });
  sc.policy.seed = sc.seed;
  sc.model_config().validate();
  sc.engine_config().validate();
  return sc;
}

Scenario Scenario::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  return parse(in, path.parent_path());
}

ModelConfig Scenario::model_config() const {
  ModelConfig m;
  m.encoder.chunk_size = chunk_size;
  m.decoder.pre_network = pre_network;
  return m;
}

EngineConfig Scenario::engine_config() const {
  EngineConfig e;
  e.speech_chunk = speech_chunk;
  e.topk = topk;
  return e;
}

std::vector<std::int16_t> Scenario::timeline() const {
  auto offset = [](double ms) {
    return static_cast<std::size_t>(std::llround(ms * kInputSampleRate / 1000.0));
  };
  std::size_t end = 0;
  for (const auto& a : audio) end = std::max(end, offset(a.at_ms) + a.pcm.size());
  end += offset(tail_ms);
  std::vector<std::int32_t> mix(end, 0);
  for (const auto& a : audio) {
    const std::size_t at = offset(a.at_ms);
    for (std::size_t i = 0; i < a.pcm.size(); ++i) mix[at + i] += a.pcm[i];
  }
  std::vector<std::int16_t> out(end);
  std::transform(mix.begin(), mix.end(), out.begin(), [](std::int32_t v) {
    return static_cast<std::int16_t>(std::clamp<std::int32_t>(v, -32768, 32767));
  });
  return out;
}

namespace {

bool matches(const json& pattern, const json& event) {
  for (const auto& [k, v] : pattern.items()) {
    const auto it = event.find(k);
    if (it == event.end() || *it != v) return false;
  }
  return true;
}

}  // namespace

std::vector<std::string> check_expectations(const std::vector<Expectation>& expects,
                                            const std::vector<TurnEvent>& events) {
  std::vector<json> js;
  js.reserve(events.size());
  for (const auto& ev : events) js.push_back(event_to_json(ev, false));
  std::vector<std::string> failures;
  std::size_t cursor = 0;  // first event not yet consumed by an ordered match
  for (const auto& e : expects) {
    const std::string where = "line " + std::to_string(e.line) + ": " + e.pattern.dump();
    switch (e.kind) {
      case Expectation::Kind::kNext: {
        std::size_t i = cursor;
        while (i < js.size() && !matches(e.pattern, js[i])) ++i;
        if (i == js.size()) {
          failures.push_back(where + " not found");
        } else {
          cursor = i + 1;
        }
        break;
      }
      case Expectation::Kind::kNone:
        for (std::size_t i = cursor; i < js.size(); ++i) {
          if (matches(e.pattern, js[i])) {
            failures.push_back(where + " unexpectedly matched " + dump_line(js[i]));
            break;
          }
        }
        break;
      case Expectation::Kind::kCount: {
        const auto n = static_cast<std::size_t>(
            std::count_if(js.begin(), js.end(), [&](const json& x) { return matches(e.pattern, x); }));
        if (n != e.count) {
          failures.push_back(where + " matched " + std::to_string(n) + " events, expected " +
                             std::to_string(e.count));
        }
        break;
      }
    }
  }
  return failures;
}

LatencyReport latency_or_empty(const std::vector<TurnEvent>& events,
                               std::optional<double> chunk_ms) {
  try {
    return measure_latency(events, chunk_ms);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kIncompleteTurn) throw;
  }
  LatencyReport r;
  r.chunk_ms = chunk_ms;
  for (const auto& ev : events) {
    const auto* st = ev.as<StateChanged>();
    if (!st || st->state == DialogueState::kContinue) continue;
    if (st->state == DialogueState::kInterrupt) ++r.incomplete_turns;
    if (st->endpoint_ms) r.detection_lags.push_back(st->audio_ms - *st->endpoint_ms);
  }
  return r;
}

ScenarioResult run_scenario(const Scenario& sc, std::optional<std::uint64_t> seed) {
  const std::uint64_t s = seed.value_or(sc.seed);
  const Models models = Models::build(sc.model_config(), s);
  const DuplexEngine engine(models, sc.engine_config());
  SessionPolicy policy = sc.policy;
  policy.seed = s;
  SessionCaches session = engine.new_session(policy);

  ScenarioResult r;
  const std::vector<std::int16_t> input = sc.timeline();
  const auto packet = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(sc.packet_ms * kInputSampleRate / 1000.0)));
  auto take = [&](std::vector<TurnEvent> evs) {
    for (auto& ev : evs) {
      if (const auto* p = ev.as<SpeechChunkEvent>()) {
        r.response.insert(r.response.end(), p->pcm.begin(), p->pcm.end());
      }
      r.events.push_back(std::move(ev));
    }
  };
  for (std::size_t off = 0; off < input.size(); off += packet) {
    const std::size_t n = std::min(packet, input.size() - off);
    take(engine.process_packet(std::span<const std::int16_t>(input.data() + off, n), session));
  }
  take(engine.finish(session));

  std::optional<double> chunk_ms;
  if (sc.chunk_size) chunk_ms = chunk_duration_ms(models.cfg.encoder);
  r.latency = latency_or_empty(r.events, chunk_ms);
  r.failures = check_expectations(sc.expects, r.events);
  return r;
}

void write_artifacts(const ScenarioResult& r, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream ev(dir / "events.jsonl", std::ios::binary);
    for (const auto& e : r.events) ev << dump_line(event_to_json(e, false)) << '\n';
    if (!ev) throw Error(ErrorCode::kIo, "cannot write events.jsonl");
  }
  write_wav(dir / "out.wav", r.response, kOutputSampleRate);
  std::ofstream lat(dir / "latency.json", std::ios::binary);
  lat << r.latency.to_json().dump(2) << '\n';
  if (!lat) throw Error(ErrorCode::kIo, "cannot write latency.json");
}

}  // namespace s2s
