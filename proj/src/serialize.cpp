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

#include "s2s/serialize.hpp"

#include <cstring>

#include "json.hpp"
#include "s2s/error.hpp"

namespace s2s {
namespace {

using nlohmann::json;

json put(const Tensor& t) {
  std::vector<std::uint8_t> bytes(t.numel() * sizeof(float));
  if (!bytes.empty()) std::memcpy(bytes.data(), t.data().data(), bytes.size());
  return json{{"shape", t.shape()}, {"data", json::binary(std::move(bytes))}};
}

Tensor get_tensor(const json& j) {
  auto shape = j.at("shape").get<std::vector<std::size_t>>();
  const auto& bytes = j.at("data").get_binary();
  if (bytes.size() % sizeof(float) != 0) {
    throw Error(ErrorCode::kSessionCorrupt, "tensor payload size");
  }
  std::vector<float> data(bytes.size() / sizeof(float));
  if (!data.empty()) std::memcpy(data.data(), bytes.data(), bytes.size());
  if (shape.empty() && data.empty()) return Tensor();
  return Tensor(std::move(shape), std::move(data));
}

json put(const nn::KvCache& c) {
  json layers = json::array();
  for (const auto& l : c.layers) layers.push_back({{"k", put(l.keys)}, {"v", put(l.values)}});
  return json{{"n_past", c.n_past}, {"layers", std::move(layers)}};
}

nn::KvCache get_kv(const json& j) {
  nn::KvCache c;
  c.n_past = j.at("n_past").get<std::size_t>();
  for (const auto& l : j.at("layers")) {
    c.layers.push_back({get_tensor(l.at("k")), get_tensor(l.at("v"))});
  }
  return c;
}

json put(const std::vector<nn::ConvCache>& v) {
  json a = json::array();
  for (const auto& c : v) a.push_back({{"tail", put(c.tail)}, {"offset", c.offset}});
  return a;
}

std::vector<nn::ConvCache> get_convs(const json& j) {
  std::vector<nn::ConvCache> v;
  for (const auto& c : j) v.push_back({get_tensor(c.at("tail")), c.at("offset").get<std::size_t>()});
  return v;
}

json put(const EncoderCaches& c) {
  return json{{"convs", put(c.convs)},
              {"pending", put(c.pending)},
              {"attn", put(c.attn)},
              {"adapter_convs", put(c.adapter_convs)},
              {"frames_in", c.frames_in},
              {"encoder_frames", c.encoder_frames},
              {"embeddings_out", c.embeddings_out},
              {"chunks_done", c.chunks_done}};
}

EncoderCaches get_encoder(const json& j) {
  EncoderCaches c;
  c.convs = get_convs(j.at("convs"));
  c.pending = get_tensor(j.at("pending"));
  c.attn = get_kv(j.at("attn"));
  c.adapter_convs = get_convs(j.at("adapter_convs"));
  c.frames_in = j.at("frames_in").get<std::size_t>();
  c.encoder_frames = j.at("encoder_frames").get<std::size_t>();
  c.embeddings_out = j.at("embeddings_out").get<std::size_t>();
  c.chunks_done = j.at("chunks_done").get<std::size_t>();
  return c;
}

json put(const SessionPolicy& p) {
  json script = json::array();
  for (const auto& [key, st] : p.states.script) {
    script.push_back({key.first, key.second, static_cast<int>(st)});
  }
  json endpoints = json::array();
  for (const auto& e : p.states.endpoints) {
    endpoints.push_back({e.ms, static_cast<int>(e.state)});
  }
  json forced = json::array();
  for (const auto& [turn, toks] : p.forced_text) forced.push_back({turn, toks});
  return json{{"kind", static_cast<int>(p.states.kind)},
              {"script", std::move(script)},
              {"endpoints", std::move(endpoints)},
              {"forced_text", std::move(forced)},
              {"seed", p.seed}};
}

DialogueState get_state(const json& j) {
  const int v = j.get<int>();
  if (v < 0 || v > 2) throw Error(ErrorCode::kSessionCorrupt, "bad dialogue state");
  return static_cast<DialogueState>(v);
}

SessionPolicy get_policy(const json& j) {
  SessionPolicy p;
  const int kind = j.at("kind").get<int>();
  if (kind < 0 || kind > 2) throw Error(ErrorCode::kSessionCorrupt, "bad policy kind");
  p.states.kind = static_cast<StatePolicy::Kind>(kind);
  for (const auto& e : j.at("script")) {
    p.states.script[{e.at(0).get<int>(), e.at(1).get<std::size_t>()}] = get_state(e.at(2));
  }
  for (const auto& e : j.at("endpoints")) {
    p.states.endpoints.push_back({e.at(0).get<double>(), get_state(e.at(1))});
  }
  for (const auto& e : j.at("forced_text")) {
    p.forced_text[e.at(0).get<int>()] = e.at(1).get<std::vector<int>>();
  }
  p.seed = j.at("seed").get<std::uint64_t>();
  return p;
}

json put(const TextGenerator& g) {
  const TextSampler& s = g.sampler();
  return json{{"kind", static_cast<int>(s.kind)}, {"k", s.k},
              {"seed", s.seed},                   {"script", s.script},
              {"max_tokens", g.max_tokens()},     {"pending", g.pending()},
              {"emitted", g.emitted()},           {"done", g.done()}};
}

TextGenerator get_text(const json& j) {
  TextSampler s;
  const int kind = j.at("kind").get<int>();
  if (kind < 0 || kind > 2) throw Error(ErrorCode::kSessionCorrupt, "bad sampler kind");
  s.kind = static_cast<TextSampler::Kind>(kind);
  s.k = j.at("k").get<std::size_t>();
  s.seed = j.at("seed").get<std::uint64_t>();
  s.script = j.at("script").get<std::vector<int>>();
  TextGenerator g(std::move(s), j.at("max_tokens").get<std::size_t>());
  g.restore(j.at("pending").get<int>(), j.at("emitted").get<std::size_t>(),
            j.at("done").get<bool>());
  return g;
}

json put(const Generation& g) {
  json j{{"active", g.active},
         {"turn", g.turn},
         {"text", put(g.text)},
         {"splitter", g.splitter.buffered()},
         {"pending_hidden", g.pending_hidden},
         {"text_done", g.text_done},
         {"text_chunks", g.text_chunks},
         {"speech_chunks", g.speech_chunks},
         {"text_tokens", g.text_tokens},
         {"speech_tokens", g.speech_tokens},
         {"samples", g.samples},
         {"ar", nullptr}};
  if (g.ar) {
    j["ar"] = json{{"context", put(g.ar->context())}, {"k", g.ar->k()},
                   {"seed", g.ar->seed()},            {"max_len", g.ar->max_len()},
                   {"prev", g.ar->prev()},            {"emitted", g.ar->emitted()},
                   {"done", g.ar->done()}};
  }
  return j;
}

Generation get_generation(const json& j) {
  Generation g;
  g.active = j.at("active").get<bool>();
  g.turn = j.at("turn").get<int>();
  g.text = get_text(j.at("text"));
  g.splitter.restore(j.at("splitter").get<std::vector<int>>());
  g.pending_hidden = j.at("pending_hidden").get<std::vector<std::vector<float>>>();
  g.text_done = j.at("text_done").get<bool>();
  g.text_chunks = j.at("text_chunks").get<std::size_t>();
  g.speech_chunks = j.at("speech_chunks").get<std::size_t>();
  g.text_tokens = j.at("text_tokens").get<std::size_t>();
  g.speech_tokens = j.at("speech_tokens").get<std::size_t>();
  g.samples = j.at("samples").get<std::size_t>();
  if (const auto& a = j.at("ar"); !a.is_null()) {
    g.ar.emplace(get_kv(a.at("context")), a.at("k").get<std::size_t>(),
                 a.at("seed").get<std::uint64_t>(), a.at("max_len").get<std::size_t>());
    g.ar->restore(a.at("prev").get<int>(), a.at("emitted").get<std::size_t>(),
                  a.at("done").get<bool>());
  }
  return g;
}

template <typename F>
auto guarded(F&& f) {
  try {
    return f();
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    throw Error(ErrorCode::kSessionCorrupt, std::string("malformed snapshot: ") + e.what());
  }
}

constexpr int kFormatVersion = 1;

}  // namespace

std::vector<std::uint8_t> save_session(const SessionCaches& s) {
  json j{{"version", kFormatVersion},
         {"policy", put(s.policy)},
         {"now_ms", s.now_ms},
         {"frontend",
          {{"pending", s.frontend.pending()},
           {"frames", s.frontend.frames_emitted()},
           {"samples", s.frontend.samples_seen()}}},
         {"vad",
          {{"triggered", s.vad.triggered},
           {"active", s.vad.consecutive_active},
           {"threshold", s.vad.energy_threshold},
           {"activation", s.vad.activation_frames}}},
         {"preroll", put(s.preroll)},
         {"phase", static_cast<int>(s.phase)},
         {"turn", s.turn},
         {"turn_first_frame", s.turn_first_frame},
         {"turn_predictions", s.turn_predictions},
         {"encoder", put(s.encoder)},
         {"listen", put(s.listen)},
         {"backbone", put(s.backbone)},
         {"decoder_prefix", put(s.decoder_prefix)},
         {"fifo",
          {{"chunk", s.fifo.chunk_size()},
           {"tokens", s.fifo.snapshot()},
           {"closed", s.fifo.closed()}}},
         {"codec_tail", s.codec.tail},
         {"gen", put(s.gen)}};
  return json::to_cbor(j);
}

SessionCaches load_session(std::span<const std::uint8_t> bytes) {
  return guarded([&] {
    const json j = json::from_cbor(bytes.begin(), bytes.end());
    if (j.at("version").get<int>() != kFormatVersion) {
      throw Error(ErrorCode::kSessionCorrupt, "unsupported snapshot version");
    }
    SessionCaches s;
    s.policy = get_policy(j.at("policy"));
    s.now_ms = j.at("now_ms").get<double>();
    const auto& fe = j.at("frontend");
    s.frontend.restore(fe.at("pending").get<std::vector<std::int16_t>>(),
                       fe.at("frames").get<std::size_t>(),
                       fe.at("samples").get<std::uint64_t>());
    const auto& vad = j.at("vad");
    s.vad.triggered = vad.at("triggered").get<bool>();
    s.vad.consecutive_active = vad.at("active").get<int>();
    s.vad.energy_threshold = vad.at("threshold").get<float>();
    s.vad.activation_frames = vad.at("activation").get<int>();
    s.preroll = get_tensor(j.at("preroll"));
    const int phase = j.at("phase").get<int>();
    if (phase < 0 || phase > 2) throw Error(ErrorCode::kSessionCorrupt, "bad phase");
    s.phase = static_cast<Phase>(phase);
    s.turn = j.at("turn").get<int>();
    s.turn_first_frame = j.at("turn_first_frame").get<std::size_t>();
    s.turn_predictions = j.at("turn_predictions").get<std::size_t>();
    s.encoder = get_encoder(j.at("encoder"));
    s.listen = get_kv(j.at("listen"));
    s.backbone = get_kv(j.at("backbone"));
    s.decoder_prefix = get_kv(j.at("decoder_prefix"));
    const auto& fifo = j.at("fifo");
    s.fifo = TokenFifo(fifo.at("chunk").get<std::size_t>());
    s.fifo.restore(fifo.at("tokens").get<std::vector<int>>(), fifo.at("closed").get<bool>());
    s.codec.tail = j.at("codec_tail").get<std::vector<float>>();
    s.gen = get_generation(j.at("gen"));
    return s;
  });
}

std::vector<std::uint8_t> save_encoder_caches(const EncoderCaches& c) {
  return json::to_cbor(put(c));
}

EncoderCaches load_encoder_caches(std::span<const std::uint8_t> bytes) {
  return guarded([&] { return get_encoder(json::from_cbor(bytes.begin(), bytes.end())); });
}

}  // namespace s2s
