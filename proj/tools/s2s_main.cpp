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

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>

#include "CLI11.hpp"
#include "s2s/error.hpp"
#include "s2s/scenario.hpp"
#include "s2s/server.hpp"
#include "s2s/trainplan.hpp"

namespace {

using namespace s2s;

int cmd_run(const std::string& scenario, const std::string& out,
            std::optional<std::uint64_t> seed) {
  const Scenario sc = Scenario::load(scenario);
  const ScenarioResult r = run_scenario(sc, seed);
  write_artifacts(r, out);
  std::cout << r.events.size() << " events, " << r.response.size()
            << " samples at 24 kHz, " << r.latency.turns.size() << " complete turns\n";
  for (const auto& f : r.failures) std::cerr << "expectation failed: " << f << '\n';
  return r.passed() ? 0 : 1;
}

int cmd_latency(const std::string& scenario, std::size_t repeats,
                std::optional<std::uint64_t> seed, const std::string& out) {
  const Scenario sc = Scenario::load(scenario);
  const std::uint64_t base = seed.value_or(sc.seed);
  std::vector<LatencyReport> runs;
  for (std::size_t i = 0; i < repeats; ++i) runs.push_back(run_scenario(sc, base + i).latency);
  const LatencyReport merged = merge_reports(runs);
  const std::string text = merged.to_json().dump(2);
  if (out.empty()) {
    std::cout << text << '\n';
  } else {
    std::ofstream(out) << text << '\n';
  }
  std::fprintf(stderr, "%-46s %9s %9s %9s\n", "segment (ms)", "avg", "p50", "p90");
  for (std::size_t i = 0; i < 4; ++i) {
    std::fprintf(stderr, "%-46s %9.2f %9.2f %9.2f\n", std::string(kLatencySegments[i]).c_str(),
                 merged.segments[i].avg, merged.segments[i].p50, merged.segments[i].p90);
  }
  std::fprintf(stderr, "%-46s %9.2f %9.2f %9.2f\n", "total", merged.total.avg,
               merged.total.p50, merged.total.p90);
  return 0;
}

int cmd_trainplan_validate(const std::string& file, bool as_json) {
  std::vector<StageConfig> stages;
  if (file.empty()) {
    stages = builtin_stages();
  } else {
    std::ifstream in(file);
    if (!in) throw Error(ErrorCode::kIo, "cannot open " + file);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::kParseError, e.what());
    }
    // A list of stages, {"stages": [...]} as printed by `trainplan dump`, or one stage.
    const nlohmann::json list = j.is_array()                               ? j
                                : j.is_object() && j.contains("stages") ? j["stages"]
                                                                          : nlohmann::json::array({j});
    for (const auto& s : list) stages.push_back(StageConfig::from_json(s));
  }
  const Models models = Models::build(ModelConfig{}, 0);
  const ParamRegistry registry = ParamRegistry::from_models(models);
  bool ok = true;
  nlohmann::json report = nlohmann::json::array();
  for (const auto& s : stages) {
    const auto violations = validate(s, registry);
    ok = ok && violations.empty();
    nlohmann::json v = nlohmann::json::array();
    for (const auto& x : violations) v.push_back({{"code", x.code}, {"detail", x.detail}});
    report.push_back({{"stage", s.id}, {"ok", violations.empty()}, {"violations", v}});
    if (as_json) continue;
    std::string trainable;
    for (const auto& g : s.trainable) trainable += (trainable.empty() ? "" : ",") + g;
    std::printf("%-9s %-5s loss=%-31s trainable={%s}\n", s.id.c_str(),
                violations.empty() ? "OK" : "FAIL", to_string(s.loss).c_str(),
                trainable.c_str());
    for (const auto& x : violations) {
      std::printf("          %s: %s\n", x.code.c_str(), x.detail.c_str());
    }
  }
  if (as_json) std::cout << report.dump(2) << '\n';
  return ok ? 0 : 1;
}

int cmd_trainplan_dump() {
  nlohmann::json stages = nlohmann::json::array();
  for (const auto& s : builtin_stages()) stages.push_back(s.to_json());
  const Models models = Models::build(ModelConfig{}, 0);
  std::cout << nlohmann::json{{"stages", stages},
                              {"registry", ParamRegistry::from_models(models).to_json()}}
                   .dump(2)
            << '\n';
  return 0;
}

int cmd_serve(ServerConfig cfg, std::uint16_t port, bool use_stdio) {
  WorkerPool pool(cfg);
  Scheduler scheduler(pool, cfg);
  scheduler.start();
  if (use_stdio) {
    serve_stream(scheduler, std::cin, std::cout);
    return 0;
  }
  TcpServer server(scheduler, port);
  std::cerr << "listening on 127.0.0.1:" << server.port() << " with " << pool.size()
            << " workers, fingerprint " << pool.fingerprint().substr(0, 16) << '\n';
  server.run();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Full-duplex speech-to-speech pipeline around a frozen toy language model"};
  app.require_subcommand(1);

  std::string scenario, out_dir, out_file, plan_file;
  std::optional<std::uint64_t> seed;
  std::size_t repeats = 20;
  bool as_json = false;

  auto* run = app.add_subcommand("run", "Run a scenario; writes events.jsonl, out.wav, latency.json");
  run->add_option("--scenario", scenario, "Scenario file (JSON lines)")->required();
  run->add_option("--out", out_dir, "Output directory")->required();
  run->add_option("--seed", seed, "Override the scenario seed");

  auto* lat = app.add_subcommand("latency", "Aggregate latency over repeated runs (seed, seed+1, ...)");
  lat->add_option("--scenario", scenario, "Scenario file (JSON lines)")->required();
  lat->add_option("--repeats", repeats, "Number of runs")->check(CLI::PositiveNumber);
  lat->add_option("--seed", seed, "Base seed (default: the scenario's)");
  lat->add_option("--out", out_file, "Write the report here instead of stdout");

  ServerConfig scfg;
  int port = 7070;
  bool use_stdio = false;
  std::size_t chunk = 4;
  auto* serve = app.add_subcommand("serve", "Serve line-delimited JSON sessions");
  serve->add_option("--port", port, "TCP port on 127.0.0.1 (0 = ephemeral)")->check(CLI::Range(0, 65535));
  serve->add_option("--workers", scfg.workers, "Model workers")->check(CLI::PositiveNumber);
  serve->add_option("--seed", scfg.seed, "Parameter seed shared by all workers");
  serve->add_option("--chunk-size", chunk, "Encoder chunk in 25 Hz frames")->check(CLI::PositiveNumber);
  serve->add_option("--speech-chunk", scfg.engine.speech_chunk, "Speech tokens per codec chunk")->check(CLI::PositiveNumber);
  serve->add_option("--topk", scfg.engine.topk, "Top-k for text and speech sampling")->check(CLI::PositiveNumber);
  serve->add_option("--queue-limit", scfg.queue_limit, "Pending chunks per session")->check(CLI::PositiveNumber);
  serve->add_flag("--pre-network", scfg.models.decoder.pre_network, "Enable the NAR pre-network");
  serve->add_flag("--stdio", use_stdio, "Serve one connection on stdin/stdout");

  auto* plan = app.add_subcommand("trainplan", "Training-stage plans");
  plan->require_subcommand(1);
  auto* validate_cmd = plan->add_subcommand("validate", "Validate stages against the parameter registry");
  validate_cmd->add_option("--file", plan_file, "Stage configs (JSON array or {\"stages\": [...]}); default: builtin");
  validate_cmd->add_flag("--json", as_json, "Machine-readable report");
  auto* dump = plan->add_subcommand("dump", "Print builtin stages and the registry as JSON");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return cmd_run(scenario, out_dir, seed);
    if (*lat) return cmd_latency(scenario, repeats, seed, out_file);
    if (*serve) {
      scfg.models.encoder.chunk_size = chunk;
      return cmd_serve(scfg, static_cast<std::uint16_t>(port), use_stdio);
    }
    if (*validate_cmd) return cmd_trainplan_validate(plan_file, as_json);
    if (*dump) return cmd_trainplan_dump();
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.code() == ErrorCode::kParseError ? 2 : 3;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: parse-error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
