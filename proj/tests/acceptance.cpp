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

// Acceptance checks: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

#include "harness.hpp"
#include "oracles.hpp"
#include "s2s/error.hpp"
#include "s2s/scenario.hpp"
#include "s2s/server.hpp"
#include "s2s/trainplan.hpp"
#include "s2s/wire.hpp"

using namespace s2s;
using namespace s2s::testing;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok && pass) {
      pass = false;
      detail = what;
    }
  }
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double a, double b = 0, double c = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

const Models& default_models() {
  static const Models m = Models::build(ModelConfig{}, 1);
  return m;
}

std::size_t halve(std::size_t n) { return (n + 1) / 2; }

// Rate chain on one second of audio.
Outcome rate_chain() {
  Outcome o;
  const auto t0 = Clock::now();
  EncoderConfig cfg;
  const EncoderParams p = EncoderParams::init(cfg, nn::ParamInit(1));
  const FeatureChunk f = frame_features(random_pcm(16000, 1));
  EncoderCaches c = EncoderCaches::fresh(p);
  const auto a = encode_chunk(f, p, c, cfg);
  const auto b = encode_flush(p, c, cfg);
  const std::size_t emb = a.embeddings.size() + b.embeddings.size();

  // Oracle: the stride-2 padded convolutions over the actual feature count.
  Tensor h = f.frames;
  for (const auto& conv : p.convs) h = conv_full(h, conv);
  const std::size_t enc_oracle = h.rows();
  for (const auto& conv : p.adapter_convs) h = conv_full(h, conv);
  const std::size_t emb_oracle = h.rows();

  o.require(f.size() == 98, "feature frames " + std::to_string(f.size()) + " != 98");
  o.require(c.encoder_frames == enc_oracle && enc_oracle == halve(halve(98)),
            "encoder frames disagree with the conv oracle");
  o.require(emb == emb_oracle, "embeddings disagree with the conv oracle");
  o.require(enc_oracle >= 23 && enc_oracle <= 25, "encoder frames outside 24 +/- 1");
  o.require(emb_oracle >= 11 && emb_oracle <= 13, "embeddings outside 12 +/- 1");
  const double s = seconds_since(t0);
  o.require(s < 1.0, "runtime over 1 s");
  if (o.pass) {
    o.detail = "98 frames -> " + std::to_string(c.encoder_frames) + " encoder frames -> " +
               std::to_string(emb) + " embeddings" + fmt(" (%.3f s)", s);
  }
  return o;
}

// Streaming equivalence for the encoder at chunk = inf and the backbone prefill.
Outcome streaming_equivalence() {
  Outcome o;
  const auto t0 = Clock::now();
  EncoderConfig ecfg;
  ecfg.chunk_size.reset();
  const EncoderParams ep = EncoderParams::init(ecfg, nn::ParamInit(2));
  const BackboneParams bp = BackboneParams::init(BackboneConfig{}, nn::ParamInit(3));
  std::mt19937_64 rng(4);
  double enc_full = 0, enc_ref = 0, bb_full = 0, bb_ref = 0;
  for (int trial = 0; trial < 50; ++trial) {
    // Encoder: random packets through the streaming path, then one flush.
    const Tensor feats = random_tensor(16 + rng() % 80, 80, 100 + trial);
    EncoderCaches c = EncoderCaches::fresh(ep);
    Tensor got = Tensor::zeros(0, 64);
    for (std::size_t at = 0; at < feats.rows();) {
      const std::size_t n = std::min<std::size_t>(feats.rows() - at, 1 + rng() % 13);
      got.append_rows(encode_chunk(FeatureChunk{feats.slice_rows(at, at + n), at}, ep, c, ecfg)
                          .embeddings.embeddings);
      at += n;
    }
    got.append_rows(encode_flush(ep, c, ecfg).embeddings.embeddings);
    // Full-sequence forward with the same float kernels.
    Tensor h = feats;
    for (const auto& conv : ep.convs) {
      nn::ConvCache cc = nn::ConvCache::fresh(conv);
      h = relu(nn::conv1d_chunk(h, conv, cc));
    }
    nn::KvCache kv = nn::KvCache::empty(ep.blocks.cfg);
    h = ep.norm.apply(nn::block_forward(h, ep.blocks, kv, nn::AttnMask::full()));
    for (const auto& conv : ep.adapter_convs) {
      nn::ConvCache cc = nn::ConvCache::fresh(conv);
      h = relu(nn::conv1d_chunk(h, conv, cc));
    }
    const Tensor full = ep.adapter_proj.apply(h);
    const Tensor ref = reference_encoder(feats, ep, ecfg);
    if (got.rows() != full.rows() || got.rows() != ref.rows()) {
      o.require(false, "encoder row count mismatch");
      break;
    }
    enc_full = std::max(enc_full, double(max_abs_diff(got, full)));
    enc_ref = std::max(enc_ref, double(max_abs_diff(got, ref)));

    // Backbone: random chunked prefill against one-shot prefill.
    const std::size_t T = 4 + rng() % 40;
    const Tensor x = random_tensor(T, 64, 200 + trial, 0.5f);
    nn::KvCache chunked = nn::KvCache::empty(bp.cfg.stack());
    Tensor hc = Tensor::zeros(0, 64);
    for (std::size_t at = 0; at < T;) {
      const std::size_t n = std::min<std::size_t>(T - at, 1 + rng() % 8);
      hc.append_rows(nn::block_forward(x.slice_rows(at, at + n), bp.stack, chunked, nn::AttnMask::causal_only()));
      at += n;
    }
    nn::KvCache once = nn::KvCache::empty(bp.cfg.stack());
    const Tensor hf = nn::block_forward(x, bp.stack, once, nn::AttnMask::causal_only());
    const Tensor hr = stack_full(x, bp.stack, [](std::size_t q, std::size_t k) { return k <= q; });
    bb_full = std::max(bb_full, double(max_abs_diff(hc, hf)));
    for (std::size_t l = 0; l < once.layers.size(); ++l) {
      bb_full = std::max(bb_full, double(max_abs_diff(chunked.layers[l].keys, once.layers[l].keys)));
      bb_full = std::max(bb_full, double(max_abs_diff(chunked.layers[l].values, once.layers[l].values)));
    }
    bb_ref = std::max(bb_ref, double(max_abs_diff(hc, hr)));
  }
  const double s = seconds_since(t0);
  o.require(enc_full <= 1e-5, fmt("encoder streaming vs full-sequence max-abs %.2e > 1e-5", enc_full));
  o.require(bb_full <= 1e-5, fmt("backbone chunked vs one-shot max-abs %.2e > 1e-5", bb_full));
  o.require(enc_ref <= 1e-5, fmt("encoder vs double reference max-abs %.2e > 1e-5", enc_ref));
  o.require(bb_ref <= 1e-5, fmt("backbone vs double reference max-abs %.2e > 1e-5", bb_ref));
  o.require(s < 10.0, "runtime over 10 s");
  if (o.pass) {
    o.detail = fmt("50 inputs; max-abs encoder %.1e, backbone %.1e", enc_full, bb_full) +
               fmt("; vs double reference %.1e / %.1e", enc_ref, bb_ref) + fmt(" (%.2f s)", s);
  }
  return o;
}

// State semantics, checked packet by packet, plus the bundled scenario suite.
Outcome duplex_conformance(const fs::path& scenario_dir) {
  Outcome o;
  const DuplexEngine eng(default_models(), EngineConfig{});
  auto step_until = [&](SessionCaches& s, const std::vector<std::int16_t>& pcm, std::size_t& at,
                        const std::function<bool(const TurnEvent&)>& stop) {
    std::vector<TurnEvent> seen;
    for (; at < pcm.size(); at += 320) {
      auto evs = eng.process_packet(std::span(pcm).subspan(at, 320), s);
      bool hit = false;
      for (auto& e : evs) {
        hit = hit || stop(e);
        seen.push_back(std::move(e));
      }
      if (hit) {
        at += 320;
        break;
      }
    }
    return seen;
  };
  auto is_state = [](DialogueState st) {
    return [st](const TurnEvent& e) {
      const auto* p = e.as<StateChanged>();
      return p && p->state == st;
    };
  };

  {  // state 0 keeps listening; state 1 stops, resets VAD, starts generation
    SessionPolicy pol;
    pol.states = script({{0, 2, 1}});
    pol.forced_text[0] = encode_text(std::string(80, 'w') + ".");
    SessionCaches s = eng.new_session(pol);
    const auto pcm = timeline(4000, {{200, 400}});
    std::size_t at = 0;
    step_until(s, pcm, at, is_state(DialogueState::kContinue));
    o.require(s.phase == Phase::kListening && !s.gen.active, "state 0 did not keep listening");
    step_until(s, pcm, at, is_state(DialogueState::kInterrupt));
    o.require(s.gen.active && s.phase == Phase::kGenerating, "state 1 did not start generation");
    o.require(!s.vad.triggered && s.vad.consecutive_active == 0, "state 1 did not reset the VAD");
    o.require(s.encoder.frames_in == 0, "state 1 did not stop streaming into the encoder");
  }
  {  // state 2 stops, resets VAD, starts nothing
    SessionPolicy pol;
    pol.states = script({{0, 1, 2}});
    SessionCaches s = eng.new_session(pol);
    const auto pcm = timeline(3000, {{200, 200}});
    std::size_t at = 0;
    step_until(s, pcm, at, is_state(DialogueState::kEndNoInterrupt));
    o.require(s.phase == Phase::kIdle && !s.gen.active, "state 2 started generation");
    o.require(!s.vad.triggered, "state 2 did not reset the VAD");
    o.require(s.encoder.frames_in == 0, "state 2 did not stop streaming into the encoder");
    const auto rest = drive(eng, s, std::span(pcm).subspan(at));
    o.require(of_type<TextChunkEvent>(rest).empty() && of_type<SpeechChunkEvent>(rest).empty(),
              "state 2 produced a response");
  }
  {  // an interrupt during generation aborts it and flushes the FIFO
    SessionPolicy pol;
    pol.states = script({{0, 2, 1}, {1, 2, 1}});
    pol.forced_text[0] = encode_text(std::string(200, 'z') + ".");
    pol.forced_text[1] = encode_text("Yes.");
    SessionCaches s = eng.new_session(pol);
    const auto pcm = timeline(4000, {{200, 400}, {1300, 400}});
    std::size_t at = 0;
    std::vector<TurnEvent> seen = step_until(s, pcm, at, [](const TurnEvent& e) {
      return e.as<GenerationInterrupted>() != nullptr;
    });
    const auto cut = of_type<GenerationInterrupted>(seen);
    o.require(cut.size() == 1, "no interrupt event during generation");
    o.require(s.gen.turn == 1 && s.fifo.size() == 0, "FIFO not flushed on interrupt");
    auto rest = drive(eng, s, std::span(pcm).subspan(at));
    seen.insert(seen.end(), rest.begin(), rest.end());
    o.require(of_type<TurnEnded>(seen, 0).empty(), "interrupted turn still finished");
    o.require(of_type<TurnEnded>(seen, 1).size() == 1, "barge-in turn did not finish");
  }

  std::size_t total = 0, passed = 0;
  for (const auto& entry : fs::directory_iterator(scenario_dir)) {
    if (entry.path().extension() != ".jsonl") continue;
    ++total;
    const ScenarioResult r = run_scenario(Scenario::load(entry.path()));
    if (r.passed()) ++passed;
    else o.require(false, entry.path().filename().string() + ": " + r.failures.front());
  }
  o.require(total >= 5, "scenario suite missing");
  if (o.pass) o.detail = "states 0/1/2 and barge-in semantics; " + std::to_string(passed) + "/" +
                         std::to_string(total) + " scenarios pass";
  return o;
}

// Samples = 600 x tokens for every turn of every run.
Outcome conservation(const fs::path& scenario_dir) {
  Outcome o;
  std::size_t turns = 0, tokens = 0;
  auto check = [&](const std::vector<TurnEvent>& evs) {
    std::map<int, std::size_t> tok, smp;
    for (const auto& e : evs) {
      if (const auto* p = e.as<SpeechChunkEvent>()) {
        tok[e.turn] += p->n_tokens;
        smp[e.turn] += p->pcm.size();
        o.require(p->pcm.size() == 600 * p->n_tokens, "pcm chunk size != 600 x tokens");
      }
      if (const auto* end = e.as<TurnEnded>()) {
        ++turns;
        tokens += end->speech_tokens;
        o.require(end->speech_tokens == tok[e.turn] && end->samples == smp[e.turn],
                  "turn totals disagree with emitted chunks");
        o.require(end->samples == 600 * end->speech_tokens, "samples != 600 x speech tokens");
      }
    }
  };
  for (const auto& entry : fs::directory_iterator(scenario_dir)) {
    if (entry.path().extension() == ".jsonl") check(run_scenario(Scenario::load(entry.path())).events);
  }
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    EngineConfig cfg;
    cfg.topk = 8;
    const DuplexEngine eng(default_models(), cfg);
    SessionPolicy pol;
    pol.seed = seed;
    pol.states = script({{0, 2, 1}, {1, 1, 1}});
    SessionCaches s = eng.new_session(pol);
    check(drive(eng, s, timeline(4000, {{200, 400}, {2000, 300}})));
  }
  CodecState st;
  std::vector<int> forty(40);
  for (int i = 0; i < 40; ++i) forty[i] = (i * 37) % kCodebookSize;
  const auto pcm = codec_decode(forty, default_models().codec, st);
  o.require(pcm.size() == 24000, "40 tokens did not decode to 24000 samples");
  o.require(turns > 0, "no completed turns");
  if (o.pass) o.detail = std::to_string(turns) + " turns, " + std::to_string(tokens) +
                         " speech tokens; 40 tokens -> 24000 samples";
  return o;
}

// Latency report shape and endpoint-detection lag over 20 turns.
Outcome latency(const fs::path& scenario_dir) {
  Outcome o;
  const ScenarioResult r = run_scenario(Scenario::load(scenario_dir / "interrupt_and_answer.jsonl"));
  const auto j = r.latency.to_json();
  std::vector<std::string> names;
  for (const auto& s : j["segments"]) names.push_back(s["name"]);
  o.require(names == std::vector<std::string>(kLatencySegments.begin(), kLatencySegments.end()),
            "latency.json segments differ from the four named segments");
  for (const auto& t : r.latency.turns) {
    double sum = 0;
    for (double v : t.segments) sum += v;
    o.require(std::abs(sum - t.total) < 1e-9, "Total != sum of segments");
  }
  o.require(!r.latency.turns.empty(), "no measured turn");

  // Twenty turns, each ending at a known endpoint.
  StatePolicy st;
  st.kind = StatePolicy::Kind::kEndpoint;
  std::vector<Tone> tones;
  std::mt19937_64 rng(6);
  for (int i = 0; i < 20; ++i) {
    const double start = 200 + 1500.0 * i;
    const double len = 200 + static_cast<double>(rng() % 400);
    tones.push_back({start, len, 200.0 + 20 * i});
    st.endpoints.push_back({start + len, i % 4 == 3 ? DialogueState::kEndNoInterrupt
                                                   : DialogueState::kInterrupt});
  }
  SessionPolicy pol;
  pol.states = st;
  for (int i = 0; i < 20; ++i) pol.forced_text[i] = encode_text("Ok.");
  const DuplexEngine eng(default_models(), EngineConfig{});
  SessionCaches s = eng.new_session(pol);
  const auto evs = drive(eng, s, timeline(1500.0 * 20 + 500, tones));
  const LatencyReport rep = measure_latency(evs, chunk_duration_ms(default_models().cfg.encoder));
  const auto lj = rep.to_json();
  o.require(rep.detection_lags.size() == 20,
            "expected 20 detected endpoints, got " + std::to_string(rep.detection_lags.size()));
  double lo = 1e9, hi = -1e9;
  for (double l : rep.detection_lags) {
    lo = std::min(lo, l);
    hi = std::max(hi, l);
  }
  o.require(lo >= 160 && hi <= 320, fmt("detection lag range [%.0f, %.0f] ms outside [160, 320]", lo, hi));
  o.require(lj["detection_lag"]["within_one_to_two_chunks"] == true, "report flags lag out of range");
  if (o.pass) {
    o.detail = "4 segments + Total; " + std::to_string(rep.detection_lags.size()) +
               fmt(" endpoint lags in [%.0f, %.0f] ms, p50 %.0f ms", lo, hi, rep.to_json()["detection_lag"]["p50"].get<double>());
  }
  return o;
}

struct WireClient {
  std::string id;
  SessionPolicy policy;
  std::vector<std::int16_t> pcm;

  std::string input() const {
    std::string s = make_hello(id, 0, policy).dump() + "\n";
    std::uint64_t seq = 1;
    for (std::size_t at = 0; at < pcm.size(); at += 320) {
      s += make_audio(id, seq++, std::span(pcm).subspan(at, std::min<std::size_t>(320, pcm.size() - at))).dump() + "\n";
    }
    return s + make_bye(id, seq).dump() + "\n";
  }
};

std::string serve(Scheduler& sched, const std::string& input) {
  std::istringstream in(input);
  std::ostringstream out;
  serve_stream(sched, in, out);
  return out.str();
}

// Wire transcripts across pool sizes, worker assignments and concurrency.
Outcome server_invariance() {
  Outcome o;
  const auto t0 = Clock::now();
  std::vector<WireClient> cs;
  for (int i = 0; i < 3; ++i) {
    WireClient c;
    c.id = "client" + std::to_string(i);
    c.policy.states = script({{0, 2, 1}});
    c.policy.forced_text[0] = encode_text(i == 0 ? "Sure. Here it is." : i == 1 ? "No!" : "Maybe?");
    c.policy.seed = 40 + i;
    c.pcm = timeline(2000, {{200.0 + 150 * i, 300}});
    cs.push_back(std::move(c));
  }
  ServerConfig base;
  base.seed = 5;

  std::vector<std::string> solo;
  for (const auto& c : cs) {
    WorkerPool pool(base);
    Scheduler sched(pool, base);
    sched.start();
    solo.push_back(serve(sched, c.input()));
  }
  for (std::size_t workers : {1u, 2u, 4u}) {
    ServerConfig cfg = base;
    cfg.workers = workers;
    WorkerPool pool(cfg);
    Scheduler sched(pool, cfg);
    sched.start();
    std::vector<std::string> got(cs.size());
    std::vector<std::thread> threads;
    for (std::size_t i = 0; i < cs.size(); ++i) {
      threads.emplace_back([&, i] { got[i] = serve(sched, cs[i].input()); });
    }
    for (auto& t : threads) t.join();
    for (std::size_t i = 0; i < cs.size(); ++i) {
      o.require(got[i] == solo[i], "pool of " + std::to_string(workers) + ": " + cs[i].id +
                                       " transcript differs from its solo run");
    }
  }
  // Forced assignment: every job pinned to worker 0 versus rotated over 4.
  auto forced = [&](const std::function<std::size_t(std::size_t)>& pick) {
    ServerConfig cfg = base;
    cfg.workers = 4;
    WorkerPool pool(cfg);
    Scheduler sched(pool, cfg);
    std::vector<std::string> out(cs.size());
    std::vector<SeqStamper> stampers(cs.size());
    std::vector<std::vector<std::string>> lines(cs.size());
    for (std::size_t i = 0; i < cs.size(); ++i) {
      std::istringstream in(cs[i].input());
      std::string l;
      while (std::getline(in, l)) lines[i].push_back(l);
    }
    std::size_t n = 0;
    for (std::size_t row = 0;; ++row) {
      bool any = false;
      for (std::size_t i = 0; i < cs.size(); ++i) {
        if (row >= lines[i].size()) continue;
        any = true;
        for (auto& m : sched.handle_on(pick(n++), parse_message(lines[i][row]))) {
          stampers[i].stamp(m);
          out[i] += dump_line(m) + "\n";
        }
      }
      if (!any) break;
    }
    return out;
  };
  const auto pinned = forced([](std::size_t) { return 0; });
  const auto rotated = forced([](std::size_t n) { return n % 4; });
  for (std::size_t i = 0; i < cs.size(); ++i) {
    o.require(pinned[i] == solo[i], cs[i].id + ": pinned-worker transcript differs");
    o.require(rotated[i] == solo[i], cs[i].id + ": rotated-worker transcript differs");
  }
  const double s = seconds_since(t0);
  o.require(s < 30.0, "runtime over 30 s");
  if (o.pass) o.detail = "3 sessions byte-identical across pools {1,2,4}, pinned and rotated workers" +
                         fmt(" (%.2f s)", s);
  return o;
}

// Backbone parameters unchanged by serving; training plan keeps the LLM frozen.
Outcome frozenness() {
  Outcome o;
  const Models& m = default_models();
  const std::string before = backbone_fingerprint(m.backbone);
  const DuplexEngine eng(m, EngineConfig{});
  std::size_t turns = 0;
  std::vector<std::thread> threads;
  std::vector<std::size_t> per(4, 0);
  for (int sess = 0; sess < 4; ++sess) {
    threads.emplace_back([&, sess] {
      SessionPolicy pol;
      pol.seed = static_cast<std::uint64_t>(sess);
      pol.states.kind = StatePolicy::Kind::kScript;
      std::vector<Tone> tones;
      for (int t = 0; t < 25; ++t) {
        pol.states.script[{t, 1}] = (t + sess) % 3 == 0 ? DialogueState::kEndNoInterrupt
                                                        : DialogueState::kInterrupt;
        pol.forced_text[t] = encode_text("Ok.");
        tones.push_back({200.0 + 1000 * t, 200, 250.0 + 10 * sess});
      }
      SessionCaches s = eng.new_session(pol);
      const auto evs = drive(eng, s, timeline(25 * 1000 + 500, tones), 320);
      per[sess] = of_type<VadTriggered>(evs).size();
    });
  }
  for (auto& t : threads) t.join();
  for (std::size_t n : per) turns += n;
  o.require(turns == 100, "expected 100 turns, got " + std::to_string(turns));
  try {
    assert_frozen(m.backbone, before);
  } catch (const Error& e) {
    o.require(false, e.what());
  }
  const ParamRegistry reg = ParamRegistry::from_models(m);
  const auto stages = builtin_stages();
  o.require(stages.size() == 6, "expected six stages");
  for (const auto& st : stages) {
    o.require(validate(st, reg).empty(), st.id + " does not validate");
    o.require(st.frozen.count("llm") == 1, st.id + " leaves llm trainable");
  }
  o.require(stages.back().id == "output_3" &&
                stages.back().trainable == std::set<std::string>{"nar_prefix"},
            "output_3 trainable set is not {nar_prefix}");
  if (o.pass) o.detail = "fingerprint " + before.substr(0, 12) + " unchanged after " +
                         std::to_string(turns) + " turns in 4 sessions; 6 stages valid";
  return o;
}

// The pre-network adds two decoder layers and both configurations generate.
Outcome pre_network(const fs::path& scenario_dir) {
  Outcome o;
  ModelConfig with;
  with.decoder.pre_network = true;
  const Models a = Models::build(ModelConfig{}, 1);
  const Models b = Models::build(with, 1);
  const std::size_t block = a.cfg.decoder.pre_network_stack().block_param_count();
  const std::size_t delta = b.decoder.param_count() - a.decoder.param_count();
  o.require(delta == 2 * block, "parameter delta " + std::to_string(delta) + " != 2 x " + std::to_string(block));
  for (bool on : {false, true}) {
    Scenario sc = Scenario::load(scenario_dir / "interrupt_and_answer.jsonl");
    sc.pre_network = on;
    const ScenarioResult r = run_scenario(sc);
    std::size_t tokens = 0;
    for (const auto* p : of_type<SpeechChunkEvent>(r.events)) tokens += p->n_tokens;
    o.require(r.passed(), std::string("scenario fails with pre-network ") + (on ? "on" : "off"));
    o.require(tokens > 0 && r.response.size() == 600 * tokens, "invalid generation");
  }
  if (o.pass) o.detail = "+" + std::to_string(delta) + " params = 2 x " + std::to_string(block) +
                         "; generation valid with and without";
  return o;
}

// Top-k membership and argmax tie-breaking.
Outcome sampling() {
  Outcome o;
  std::mt19937_64 rng(9);
  std::normal_distribution<float> n(0, 2);
  for (int draw = 0; draw < 10000; ++draw) {
    std::vector<float> logits(2 + rng() % 100);
    for (float& v : logits) v = n(rng);
    // Duplicates make ties at the top-k boundary.
    if (draw % 3 == 0) logits[rng() % logits.size()] = logits[rng() % logits.size()];
    const std::size_t k = 1 + rng() % logits.size();
    std::vector<std::size_t> idx(logits.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](auto x, auto y) { return logits[x] > logits[y]; });
    const std::set<std::size_t> allowed(idx.begin(), idx.begin() + static_cast<long>(k));
    const std::size_t id = nn::top_k_sample(logits, k, static_cast<std::uint64_t>(draw));
    if (!allowed.count(id)) {
      o.require(false, "draw " + std::to_string(draw) + " left the top-k set");
      break;
    }
  }
  const std::vector<float> tie = {0.5f, 2.0f, -1.0f, 2.0f, 2.0f};
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    o.require(nn::top_k_sample(tie, 1, seed) == 1, "k = 1 tie not broken to the lowest index");
  }
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<float> logits(1 + rng() % 50);
    for (float& v : logits) v = std::round(n(rng));
    const auto best = std::max_element(logits.begin(), logits.end()) - logits.begin();
    o.require(nn::top_k_sample(logits, 1, rng()) == static_cast<std::size_t>(best), "k = 1 != argmax");
  }
  if (o.pass) o.detail = "10000 draws inside the top-k set; k = 1 is argmax, lowest index on ties";
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path scenarios = argc > 1 ? fs::path(argv[1]) : fs::path(S2S_SCENARIO_DIR);
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"rate chain", rate_chain},
      {"streaming equivalence", streaming_equivalence},
      {"duplex conformance", [&] { return duplex_conformance(scenarios); }},
      {"token/sample conservation", [&] { return conservation(scenarios); }},
      {"latency decomposition", [&] { return latency(scenarios); }},
      {"server invariance", server_invariance},
      {"frozenness", frozenness},
      {"pre-network structure", [&] { return pre_network(scenarios); }},
      {"sampling contract", sampling},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    std::printf("criterion %zu %-26s %s  %s\n", i + 1, criteria[i].first, o.pass ? "PASS" : "FAIL",
                o.detail.c_str());
    std::fflush(stdout);
    failed += o.pass ? 0 : 1;
  }
  return failed == 0 ? 0 : 1;
}
