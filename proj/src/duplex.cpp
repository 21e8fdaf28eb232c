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

#include "s2s/duplex.hpp"

#include <algorithm>

#include "s2s/error.hpp"

namespace s2s {
namespace {

double stack_macs(const nn::StackConfig& c) {
  return static_cast<double>(c.n_layers) *
         (4.0 * c.hidden * c.hidden + 3.0 * c.hidden * c.ffn);
}

double numel(const Tensor& t) { return static_cast<double>(t.numel()); }

bool fits(const nn::KvCache& cache, const nn::StackConfig& cfg) {
  if (cache.layers.size() != cfg.n_layers || !cache.consistent()) return false;
  const std::vector<std::size_t> tail = {cfg.n_heads, cfg.head_dim()};
  return std::all_of(cache.layers.begin(), cache.layers.end(),
                     [&](const nn::LayerKv& l) {
                       return l.keys.rank() == 3 &&
                              std::equal(tail.begin(), tail.end(),
                                         l.keys.shape().begin() + 1);
                     });
}

void corrupt(const char* what) {
  throw Error(ErrorCode::kSessionCorrupt, what);
}

}  // namespace

void EngineConfig::validate() const {
  if (speech_chunk == 0) throw Error(ErrorCode::kInvalidConfig, "speech_chunk must be > 0");
  if (topk == 0) throw Error(ErrorCode::kInvalidK, "topk must be >= 1");
  if (max_text_tokens == 0 || speech_tokens_per_text_token == 0) {
    throw Error(ErrorCode::kInvalidConfig, "generation caps must be > 0");
  }
  if (!(sim_macs_per_ms > 0)) {
    throw Error(ErrorCode::kInvalidConfig, "sim_macs_per_ms must be > 0");
  }
  if (vad_activation_frames < 1) {
    throw Error(ErrorCode::kInvalidConfig, "vad_activation_frames must be >= 1");
  }
}

DuplexEngine::DuplexEngine(const Models& models, EngineConfig cfg)
    : models_(models), cfg_(cfg) {
  cfg_.validate();
  const auto& enc = models_.encoder;
  const auto& ecfg = models_.cfg.encoder;
  // Each layer runs at the input rate divided by the strides before it.
  double rate = 1.0;
  for (const auto& c : enc.convs) {
    rate /= static_cast<double>(c.stride);
    costs_.encoder_frame += numel(c.weight) * rate;
  }
  costs_.encoder_frame += stack_macs(ecfg.stack()) * rate;
  for (const auto& c : enc.adapter_convs) {
    rate /= static_cast<double>(c.stride);
    costs_.encoder_frame += numel(c.weight) * rate;
  }
  costs_.encoder_frame += numel(enc.adapter_proj.weight) * rate;

  const auto& bb = models_.backbone;
  costs_.backbone_pos = stack_macs(bb.cfg.stack());
  costs_.state_head = numel(bb.state_head.weight);
  costs_.text_step = costs_.backbone_pos + numel(bb.lm_head.weight);

  const auto& dec = models_.decoder;
  costs_.prefix_pos = numel(dec.prefix_in.weight) + stack_macs(dec.prefix.cfg);
  costs_.nar_pos = numel(dec.nar_in.weight) + stack_macs(dec.shared.cfg);
  if (dec.pre_network) costs_.nar_pos += stack_macs(dec.pre_network->cfg);
  costs_.ar_step = stack_macs(dec.shared.cfg) + numel(dec.ar_head.weight);

  const auto& codec = models_.codec;
  double frames = 1.0;
  costs_.codec_token = static_cast<double>(codec.cfg.dim);
  for (const auto& l : codec.layers) {
    costs_.codec_token += numel(l.weight) * frames;
    frames *= static_cast<double>(l.weight.dim(2));
  }
  costs_.codec_token += numel(codec.tail_head.weight);
}

SessionCaches DuplexEngine::new_session(SessionPolicy policy) const {
  SessionCaches s;
  s.policy = std::move(policy);
  s.vad.energy_threshold = cfg_.vad_threshold;
  s.vad.activation_frames = cfg_.vad_activation_frames;
  s.encoder = EncoderCaches::fresh(models_.encoder);
  s.backbone = nn::KvCache::empty(models_.backbone.cfg.stack());
  s.listen = s.backbone;
  s.decoder_prefix = nn::KvCache::empty(models_.decoder.prefix.cfg);
  s.fifo = TokenFifo(cfg_.speech_chunk);
  return s;
}

void DuplexEngine::check_session(const SessionCaches& s) const {
  const auto bb = models_.backbone.cfg.stack();
  if (!fits(s.backbone, bb)) corrupt("backbone cache does not fit the model");
  if (!fits(s.listen, bb)) corrupt("listening cache does not fit the model");
  if (!fits(s.decoder_prefix, models_.decoder.prefix.cfg)) {
    corrupt("decoder prefix cache does not fit the model");
  }
  if (!fits(s.encoder.attn, models_.cfg.encoder.stack()) ||
      s.encoder.convs.size() != models_.encoder.convs.size() ||
      s.encoder.adapter_convs.size() != models_.encoder.adapter_convs.size()) {
    corrupt("encoder caches do not fit the model");
  }
  if (s.fifo.chunk_size() != cfg_.speech_chunk) corrupt("speech chunk mismatch");
  if (s.gen.active && s.gen.turn < 0) corrupt("generation without a turn");
  if (s.phase == Phase::kGenerating && !s.gen.active) {
    corrupt("generating phase without a response");
  }
  if (s.preroll.rows() >= static_cast<std::size_t>(cfg_.vad_activation_frames)) {
    corrupt("pre-roll longer than the VAD window");
  }
}

void DuplexEngine::charge(SessionCaches& s, double macs) const {
  s.now_ms += macs / cfg_.sim_macs_per_ms;
}

std::vector<TurnEvent> DuplexEngine::on_audio_chunk(
    std::span<const std::int16_t> pcm, SessionCaches& s) const {
  check_session(s);
  std::vector<TurnEvent> out;
  const FeatureChunk feat = s.frontend.push(pcm);
  const double arrived_ms =
      static_cast<double>(s.frontend.samples_seen()) * 1000.0 / kInputSampleRate;
  s.now_ms = std::max(s.now_ms, arrived_ms);
  const std::size_t keep = static_cast<std::size_t>(cfg_.vad_activation_frames) - 1;

  for (std::size_t r = 0; r < feat.size(); ++r) {
    const std::size_t g = feat.first_frame + r;
    Tensor row = feat.frames.slice_rows(r, r + 1);
    if (s.phase == Phase::kListening) {
      forward_frames(s, row, g, out);
      continue;
    }
    const VadResult v = vad_step(FeatureChunk{row, g}, s.vad);
    s.vad = v.state;
    if (v.trigger_frame) {
      Tensor rows = std::move(s.preroll);
      s.preroll = Tensor();
      const std::size_t first = g - rows.rows();
      rows.append_rows(row);
      start_turn(s, first, out);
      out.push_back({s.turn, s.now_ms,
                     VadTriggered{g, kFrameShiftMs * static_cast<double>(g) + kWindowMs}});
      forward_frames(s, rows, first, out);
    } else if (keep > 0) {
      s.preroll.append_rows(row);
      if (s.preroll.rows() > keep) s.preroll.drop_front_rows(s.preroll.rows() - keep);
    }
  }
  return out;
}

void DuplexEngine::start_turn(SessionCaches& s, std::size_t first_frame,
                              std::vector<TurnEvent>& /*out*/) const {
  s.turn += 1;
  s.phase = Phase::kListening;
  s.turn_first_frame = first_frame;
  s.turn_predictions = 0;
  s.encoder = EncoderCaches::fresh(models_.encoder);
  if (!s.gen.active && s.backbone.n_past > cfg_.max_context) {
    s.backbone = nn::KvCache::empty(models_.backbone.cfg.stack());
  }
  s.listen = s.backbone;
}

bool DuplexEngine::forward_frames(SessionCaches& s, const Tensor& rows,
                                  std::size_t first_frame,
                                  std::vector<TurnEvent>& out) const {
  const auto& ecfg = models_.cfg.encoder;
  const EncoderOutput enc =
      encode_chunk(FeatureChunk{rows, first_frame}, models_.encoder, s.encoder, ecfg);
  charge(s, costs_.encoder_frame * static_cast<double>(rows.rows()));
  const double audio_ms =
      kFrameShiftMs * static_cast<double>(first_frame + rows.rows() - 1) + kWindowMs;

  std::size_t begin = 0;
  for (const std::size_t end : enc.chunk_ends) {
    if (end == begin) continue;  // a chunk the adapter turned into nothing
    EmbeddingChunk chunk{enc.embeddings.embeddings.slice_rows(begin, end),
                         enc.embeddings.last_frame_index -
                             static_cast<std::int64_t>(enc.embeddings.size() - end)};
    begin = end;
    const bool first = s.turn_predictions == 0;
    const StatePrediction pred =
        prefill_speech_chunk(chunk, models_.backbone, s.listen, first);
    const std::size_t positions =
        chunk.size() + (first ? models_.backbone.cfg.prompt_len : 0);
    charge(s, costs_.backbone_pos * static_cast<double>(positions) + costs_.state_head);

    bool forced = false;
    std::optional<double> endpoint;
    const DialogueState state = decide(s, pred, audio_ms, forced, endpoint);
    out.push_back({s.turn, s.now_ms,
                   StateChanged{state, s.turn_predictions, audio_ms, pred.logits,
                                forced, endpoint}});
    s.turn_predictions += 1;
    if (state == DialogueState::kContinue) continue;

    s.vad = vad_reset(s.vad);
    s.encoder = EncoderCaches::fresh(models_.encoder);
    if (state == DialogueState::kInterrupt) {
      if (s.gen.active) interrupt(s, out);
      s.backbone = std::move(s.listen);
      start_generation(s, s.turn);
    }
    s.listen = nn::KvCache::empty(models_.backbone.cfg.stack());
    s.phase = s.gen.active ? Phase::kGenerating : Phase::kIdle;
    return true;
  }
  return false;
}

DialogueState DuplexEngine::decide(const SessionCaches& s,
                                   const StatePrediction& pred, double audio_ms,
                                   bool& forced,
                                   std::optional<double>& endpoint) const {
  const StatePolicy& p = s.policy.states;
  switch (p.kind) {
    case StatePolicy::Kind::kHead:
      return pred.state;
    case StatePolicy::Kind::kScript: {
      const auto it = p.script.find({s.turn, s.turn_predictions});
      if (it == p.script.end()) return DialogueState::kContinue;
      forced = true;
      return it->second;
    }
    case StatePolicy::Kind::kEndpoint: {
      const double start_ms = kFrameShiftMs * static_cast<double>(s.turn_first_frame);
      const auto it = std::find_if(p.endpoints.begin(), p.endpoints.end(),
                                   [&](const auto& e) { return e.ms >= start_ms; });
      if (it == p.endpoints.end()) return DialogueState::kContinue;
      endpoint = it->ms;
      // An ideal detector needs one whole chunk of evidence past the endpoint.
      if (audio_ms - it->ms < chunk_duration_ms(models_.cfg.encoder)) {
        return DialogueState::kContinue;
      }
      forced = true;
      return it->state;
    }
  }
  return DialogueState::kContinue;
}

void DuplexEngine::start_generation(SessionCaches& s, int turn) const {
  Generation g;
  g.active = true;
  g.turn = turn;
  TextSampler sampler;
  std::size_t cap = cfg_.max_text_tokens;
  if (const auto it = s.policy.forced_text.find(turn);
      it != s.policy.forced_text.end()) {
    sampler = TextSampler::scripted(it->second);
    cap = std::max(cap, it->second.size() + 1);
  } else if (cfg_.topk > 1) {
    sampler = {TextSampler::Kind::kTopK, cfg_.topk,
               nn::derive_seed(s.policy.seed, {1, static_cast<std::uint64_t>(turn)}),
               {}};
  }
  g.text = TextGenerator(std::move(sampler), cap);
  s.gen = std::move(g);
  s.fifo = TokenFifo(cfg_.speech_chunk);
  s.codec = CodecState{};
  s.decoder_prefix = nn::KvCache::empty(models_.decoder.prefix.cfg);
}

void DuplexEngine::interrupt(SessionCaches& s, std::vector<TurnEvent>& out) const {
  GenerationInterrupted ev{s.gen.speech_tokens, s.fifo.size()};
  s.fifo.flush();
  out.push_back({s.gen.turn, s.now_ms, ev});
  s.gen = Generation{};
}

void DuplexEngine::emit_speech(SessionCaches& s, const std::vector<int>& tokens,
                               double ready_ms, std::vector<TurnEvent>& out) const {
  SpeechChunkEvent ev;
  ev.index = s.gen.speech_chunks++;
  ev.n_tokens = tokens.size();
  ev.pcm = codec_decode(tokens, models_.codec, s.codec);
  ev.tokens_ready_ms = ready_ms;
  charge(s, costs_.codec_token * static_cast<double>(tokens.size()));
  s.gen.samples += ev.pcm.size();
  out.push_back({s.gen.turn, s.now_ms, std::move(ev)});
}

std::vector<TurnEvent> DuplexEngine::step_generation(SessionCaches& s) const {
  std::vector<TurnEvent> out;
  Generation& g = s.gen;
  if (!g.active) return out;
  const auto& bb = models_.backbone;
  const auto& dec = models_.decoder;

  if (g.ar && !g.ar->done()) {
    const std::optional<int> tok = g.ar->next(dec);
    charge(s, costs_.ar_step);
    if (tok) {
      s.fifo.push(*tok);
      g.speech_tokens += 1;
      if (auto chunk = s.fifo.pop_chunk()) emit_speech(s, *chunk, s.now_ms, out);
    }
    return out;
  }

  if (!g.text_done) {
    std::optional<std::vector<int>> chunk;
    while (!chunk) {
      std::optional<TextToken> t = g.text.next(bb, s.backbone);
      charge(s, costs_.text_step);
      if (!t) {
        chunk = g.splitter.flush();
        g.text_done = true;
        break;
      }
      g.text_tokens += 1;
      g.pending_hidden.push_back(std::move(t->hidden));
      chunk = g.splitter.push(t->id);
    }
    if (chunk && !chunk->empty()) {
      const std::size_t n = chunk->size();
      const double text_ms = s.now_ms;
      Tensor hidden({n, bb.cfg.hidden});
      for (std::size_t i = 0; i < n; ++i) {
        std::copy(g.pending_hidden[i].begin(), g.pending_hidden[i].end(), hidden.row(i));
      }
      g.pending_hidden.erase(g.pending_hidden.begin(),
                             g.pending_hidden.begin() + static_cast<std::ptrdiff_t>(n));
      nar_prefix_prefill(hidden, dec, s.decoder_prefix);
      charge(s, costs_.prefix_pos * static_cast<double>(n));
      nn::KvCache ctx = nar_prefill(*chunk, bb, dec, &s.decoder_prefix);
      charge(s, costs_.nar_pos * static_cast<double>(n));

      TextChunkEvent ev{g.text_chunks, *chunk, decode_tokens(*chunk), s.now_ms};
      out.push_back({g.turn, text_ms, std::move(ev)});
      g.ar.emplace(std::move(ctx), cfg_.topk,
                   nn::derive_seed(s.policy.seed,
                                   {2, static_cast<std::uint64_t>(g.turn), g.text_chunks}),
                   n * cfg_.speech_tokens_per_text_token);
      g.text_chunks += 1;
    }
    return out;
  }

  s.fifo.close();
  while (auto chunk = s.fifo.pop_chunk()) emit_speech(s, *chunk, s.now_ms, out);
  out.push_back({g.turn, s.now_ms, TurnEnded{g.text_tokens, g.speech_tokens, g.samples}});
  g.active = false;
  g.ar.reset();
  if (s.phase == Phase::kGenerating) s.phase = Phase::kIdle;
  return out;
}

std::vector<TurnEvent> DuplexEngine::run_generation(SessionCaches& s) const {
  std::vector<TurnEvent> out;
  while (s.gen.active) {
    auto ev = step_generation(s);
    out.insert(out.end(), std::make_move_iterator(ev.begin()),
               std::make_move_iterator(ev.end()));
  }
  return out;
}

std::vector<TurnEvent> DuplexEngine::process_packet(
    std::span<const std::int16_t> pcm, SessionCaches& s) const {
  check_session(s);
  const double arrive_ms =
      static_cast<double>(s.frontend.samples_seen() + pcm.size()) * 1000.0 /
      kInputSampleRate;
  std::vector<TurnEvent> out;
  while (s.gen.active && s.now_ms < arrive_ms) {
    auto ev = step_generation(s);
    out.insert(out.end(), std::make_move_iterator(ev.begin()),
               std::make_move_iterator(ev.end()));
  }
  auto ev = on_audio_chunk(pcm, s);
  out.insert(out.end(), std::make_move_iterator(ev.begin()),
             std::make_move_iterator(ev.end()));
  return out;
}

std::vector<TurnEvent> DuplexEngine::finish(SessionCaches& s) const {
  check_session(s);
  return run_generation(s);
}

}  // namespace s2s
