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

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <string>

#include "s2s/error.hpp"
#include "s2s/scenario.hpp"
#include "s2s/serialize.hpp"
#include "s2s/trainplan.hpp"
#include "s2s/wire.hpp"

namespace py = pybind11;
using namespace s2s;

namespace {

py::object to_py(const nlohmann::json& j) {
  return py::module_::import("json").attr("loads")(dump_line(j));
}

nlohmann::json from_py(const py::object& o) {
  const auto text = py::module_::import("json").attr("dumps")(o).cast<std::string>();
  return nlohmann::json::parse(text);
}

std::vector<std::int16_t> as_pcm(const py::array_t<std::int16_t, py::array::c_style | py::array::forcecast>& a) {
  return {a.data(), a.data() + a.size()};
}

py::array_t<float> as_array(const Tensor& t) {
  py::array_t<float> out(std::vector<py::ssize_t>(t.shape().begin(), t.shape().end()));
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

py::array_t<std::int16_t> as_array(const std::vector<std::int16_t>& v) {
  py::array_t<std::int16_t> out(static_cast<py::ssize_t>(v.size()));
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

py::list events_to_py(const std::vector<TurnEvent>& events, bool with_pcm) {
  py::list out;
  for (const auto& ev : events) out.append(to_py(event_to_json(ev, with_pcm)));
  return out;
}

// A session bundled with the models it runs on, for interactive use.
class PySession {
 public:
  PySession(std::uint64_t seed, std::optional<std::size_t> chunk_size, std::size_t topk,
            bool pre_network, const py::object& policy)
      : models_([&] {
          ModelConfig cfg;
          cfg.encoder.chunk_size = chunk_size;
          cfg.decoder.pre_network = pre_network;
          return Models::build(cfg, seed);
        }()),
        engine_(models_, [&] {
          EngineConfig e;
          e.topk = topk;
          return e;
        }()),
        caches_(engine_.new_session(
            policy.is_none() ? SessionPolicy{{}, {}, seed} : policy_from_json(from_py(policy), seed))) {}

  py::list push(const py::array_t<std::int16_t, py::array::c_style | py::array::forcecast>& pcm,
                bool with_pcm) {
    const auto samples = as_pcm(pcm);
    std::vector<TurnEvent> evs;
    {
      py::gil_scoped_release release;
      evs = engine_.process_packet(samples, caches_);
    }
    return events_to_py(evs, with_pcm);
  }

  py::list finish(bool with_pcm) { return events_to_py(engine_.finish(caches_), with_pcm); }

  py::bytes save() const {
    const auto b = save_session(caches_);
    return {reinterpret_cast<const char*>(b.data()), b.size()};
  }

  void load(const py::bytes& data) {
    const std::string s = data;
    SessionCaches c = load_session(
        std::span(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
    engine_.check_session(c);
    caches_ = std::move(c);
  }

  std::string phase() const {
    switch (caches_.phase) {
      case Phase::kIdle: return "idle";
      case Phase::kListening: return "listening";
      case Phase::kGenerating: return "generating";
    }
    return "idle";
  }
  double now_ms() const { return caches_.now_ms; }
  std::string fingerprint() const { return models_.fingerprint(); }

 private:
  Models models_;
  DuplexEngine engine_;
  SessionCaches caches_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Native core of duplex_s2s";

  py::register_exception<Error>(m, "S2SError", PyExc_RuntimeError);

  m.def("num_frames", &num_frames, py::arg("n_samples"));
  m.def(
      "frame_features",
      [](const py::array_t<std::int16_t, py::array::c_style | py::array::forcecast>& pcm) {
        return as_array(frame_features(as_pcm(pcm)).frames);
      },
      py::arg("pcm"), "Log-mel features [frames, 80] of 16 kHz PCM.");

  m.def(
      "encode",
      [](const py::array_t<float, py::array::c_style | py::array::forcecast>& feats,
         std::optional<std::size_t> chunk_size, std::uint64_t seed) {
        if (feats.ndim() != 2) throw Error(ErrorCode::kBandMismatch, "features must be 2-D");
        ModelConfig cfg;
        cfg.encoder.chunk_size = chunk_size;
        const Models models = Models::build(cfg, seed);
        Tensor t({static_cast<std::size_t>(feats.shape(0)), static_cast<std::size_t>(feats.shape(1))},
                 std::vector<float>(feats.data(), feats.data() + feats.size()));
        EncoderCaches caches = EncoderCaches::fresh(models.encoder);
        Tensor out = encode_chunk({t, 0}, models.encoder, caches, cfg.encoder).embeddings.embeddings;
        out.append_rows(encode_flush(models.encoder, caches, cfg.encoder).embeddings.embeddings);
        return as_array(out);
      },
      py::arg("features"), py::arg("chunk_size") = 4, py::arg("seed") = 0,
      "Streams features through a seeded encoder and adapter; returns embeddings.");

  m.def(
      "top_k_sample",
      [](const std::vector<float>& logits, std::size_t k, std::uint64_t seed) {
        return nn::top_k_sample(logits, k, seed);
      },
      py::arg("logits"), py::arg("k"), py::arg("seed"));
  m.def(
      "top_k_indices",
      [](const std::vector<float>& logits, std::size_t k) { return nn::top_k_indices(logits, k); },
      py::arg("logits"), py::arg("k"));

  m.def(
      "sentence_split",
      [](const std::string& text) {
        std::vector<std::string> out;
        for (const auto& c : sentence_split(encode_text(text))) {
          const std::string s = decode_tokens(c);
          out.push_back(s);
        }
        return out;
      },
      py::arg("text"));

  m.def(
      "codec_decode",
      [](const std::vector<int>& tokens, std::uint64_t seed) {
        const Models models = Models::build(ModelConfig{}, seed);
        CodecState state;
        return as_array(codec_decode(tokens, models.codec, state));
      },
      py::arg("tokens"), py::arg("seed") = 0, "24 kHz PCM, 600 samples per token.");

  py::class_<TokenFifo>(m, "TokenFifo")
      .def(py::init<std::size_t>(), py::arg("chunk_size") = 40)
      .def("push", &TokenFifo::push)
      .def("pop_chunk", &TokenFifo::pop_chunk)
      .def("close", &TokenFifo::close)
      .def("flush", &TokenFifo::flush)
      .def("__len__", &TokenFifo::size)
      .def_property_readonly("closed", &TokenFifo::closed)
      .def_property_readonly("chunk_size", &TokenFifo::chunk_size);

  m.def("builtin_stages", [] {
    py::list out;
    for (const auto& s : builtin_stages()) out.append(to_py(s.to_json()));
    return out;
  });
  m.def(
      "validate_stage",
      [](const py::object& stage, std::uint64_t seed) {
        const Models models = Models::build(ModelConfig{}, seed);
        py::list out;
        for (const auto& v : validate(StageConfig::from_json(from_py(stage)),
                                      ParamRegistry::from_models(models))) {
          out.append(py::make_tuple(v.code, v.detail));
        }
        return out;
      },
      py::arg("stage"), py::arg("seed") = 0);
  m.def(
      "param_registry",
      [](std::uint64_t seed, bool pre_network) {
        ModelConfig cfg;
        cfg.decoder.pre_network = pre_network;
        return to_py(ParamRegistry::from_models(Models::build(cfg, seed)).to_json());
      },
      py::arg("seed") = 0, py::arg("pre_network") = false);

  m.def(
      "run_scenario",
      [](const std::string& path, std::optional<std::string> out_dir,
         std::optional<std::uint64_t> seed) {
        const Scenario sc = Scenario::load(path);
        ScenarioResult r;
        {
          py::gil_scoped_release release;
          r = run_scenario(sc, seed);
          if (out_dir) write_artifacts(r, *out_dir);
        }
        py::dict d;
        d["events"] = events_to_py(r.events, false);
        d["samples"] = r.response.size();
        d["failures"] = r.failures;
        d["passed"] = r.passed();
        d["latency"] = to_py(r.latency.to_json());
        return d;
      },
      py::arg("path"), py::arg("out_dir") = py::none(), py::arg("seed") = py::none());

  py::class_<PySession>(m, "Session")
      .def(py::init<std::uint64_t, std::optional<std::size_t>, std::size_t, bool, py::object>(),
           py::arg("seed") = 0, py::arg("chunk_size") = 4, py::arg("topk") = 1,
           py::arg("pre_network") = false, py::arg("policy") = py::none())
      .def("push", &PySession::push, py::arg("pcm"), py::arg("with_pcm") = false)
      .def("finish", &PySession::finish, py::arg("with_pcm") = false)
      .def("save", &PySession::save)
      .def("load", &PySession::load)
      .def_property_readonly("phase", &PySession::phase)
      .def_property_readonly("now_ms", &PySession::now_ms)
      .def_property_readonly("fingerprint", &PySession::fingerprint);
}
