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

#include "s2s/wire.hpp"

#include <algorithm>

#include "s2s/audio_io.hpp"
#include "s2s/base64.hpp"

namespace s2s {

using nlohmann::json;

std::string encode_pcm(std::span<const std::int16_t> pcm) {
  return base64_encode(encode_s16le(pcm));
}

std::vector<std::int16_t> decode_pcm(std::string_view b64) {
  const auto bytes = base64_decode(b64);
  if (bytes.size() % 2 != 0) throw Error(ErrorCode::kParseError, "odd pcm byte count");
  return decode_s16le(bytes);
}

namespace {

DialogueState state_value(const json& j) {
  const int v = j.get<int>();
  if (v < 0 || v > 2) throw Error(ErrorCode::kParseError, "state must be 0, 1 or 2");
  return static_cast<DialogueState>(v);
}

}  // namespace

SessionPolicy policy_from_json(const json& hello, std::uint64_t default_seed) {
  try {
    SessionPolicy p;
    p.seed = hello.value("seed", default_seed);
    const std::string kind = hello.value("states", std::string("head"));
    if (kind == "head") {
      p.states.kind = StatePolicy::Kind::kHead;
    } else if (kind == "script") {
      p.states.kind = StatePolicy::Kind::kScript;
    } else if (kind == "endpoint") {
      p.states.kind = StatePolicy::Kind::kEndpoint;
    } else {
      throw Error(ErrorCode::kParseError, "unknown state policy '" + kind + "'");
    }
    if (const auto it = hello.find("script"); it != hello.end()) {
      for (const auto& e : *it) {
        p.states.script[{e.at(0).get<int>(), e.at(1).get<std::size_t>()}] =
            state_value(e.at(2));
      }
    }
    if (const auto it = hello.find("endpoints"); it != hello.end()) {
      for (const auto& e : *it) {
        p.states.endpoints.push_back({e.at(0).get<double>(), state_value(e.at(1))});
      }
      std::sort(p.states.endpoints.begin(), p.states.endpoints.end(),
                [](const auto& a, const auto& b) { return a.ms < b.ms; });
    }
    if (const auto it = hello.find("force_text"); it != hello.end()) {
      for (const auto& e : *it) {
        p.forced_text[e.at(0).get<int>()] = encode_text(e.at(1).get<std::string>());
      }
    }
    return p;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParseError, std::string("hello: ") + e.what());
  }
}

json policy_to_json(const SessionPolicy& p) {
  static constexpr const char* kKinds[] = {"head", "script", "endpoint"};
  json j{{"seed", p.seed}, {"states", kKinds[static_cast<int>(p.states.kind)]}};
  json script = json::array();
  for (const auto& [key, st] : p.states.script) {
    script.push_back({key.first, key.second, static_cast<int>(st)});
  }
  json endpoints = json::array();
  for (const auto& e : p.states.endpoints) endpoints.push_back({e.ms, static_cast<int>(e.state)});
  json forced = json::array();
  for (const auto& [turn, toks] : p.forced_text) forced.push_back({turn, decode_tokens(toks)});
  j["script"] = std::move(script);
  j["endpoints"] = std::move(endpoints);
  j["force_text"] = std::move(forced);
  return j;
}

json make_hello(const std::string& session, std::uint64_t seq, const SessionPolicy& policy) {
  json j = policy_to_json(policy);
  j["type"] = "hello";
  j["session"] = session;
  j["seq"] = seq;
  return j;
}

json make_audio(const std::string& session, std::uint64_t seq,
                std::span<const std::int16_t> pcm) {
  return {{"type", "audio"}, {"session", session}, {"seq", seq}, {"pcm", encode_pcm(pcm)}};
}

json make_bye(const std::string& session, std::uint64_t seq) {
  return {{"type", "bye"}, {"session", session}, {"seq", seq}};
}

json make_error(const std::string& session, std::uint64_t seq, ErrorCode code,
                const std::string& message) {
  return {{"type", "error"},
          {"session", session},
          {"seq", seq},
          {"code", to_string(code)},
          {"message", message}};
}

json parse_message(const std::string& line) {
  json j = json::parse(line, nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    throw Error(ErrorCode::kParseError, "line is not a JSON object");
  }
  if (!j.contains("type") || !j["type"].is_string() || !j.contains("session") ||
      !j["session"].is_string() || !j.contains("seq") || !j["seq"].is_number_unsigned()) {
    throw Error(ErrorCode::kParseError, "message needs string type/session and unsigned seq");
  }
  return j;
}

}  // namespace s2s
