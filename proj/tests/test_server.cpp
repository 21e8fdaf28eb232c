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

#include <boost/asio.hpp>
#include <chrono>
#include <sstream>
#include <thread>

#include "doctest.h"
#include "harness.hpp"
#include "s2s/server.hpp"
#include "s2s/wire.hpp"

using namespace s2s;
using namespace s2s::testing;
using nlohmann::json;

namespace {

struct Client {
  std::string id;
  SessionPolicy policy;
  std::vector<std::int16_t> pcm;
};

std::vector<Client> clients() {
  std::vector<Client> out;
  const std::vector<std::pair<double, std::string>> specs = {
      {200, "First one."}, {350, "Second!"}, {500, "Third? Yes."}};
  for (std::size_t i = 0; i < specs.size(); ++i) {
    Client c;
    c.id = "s" + std::to_string(i);
    c.policy.states = script({{0, 2, 1}});
    c.policy.forced_text[0] = encode_text(specs[i].second);
    c.policy.seed = 100 + i;
    c.pcm = timeline(1600, {{specs[i].first, 300}});
    out.push_back(std::move(c));
  }
  return out;
}

using Transcript = std::vector<std::string>;

// What a session must produce: the engine run directly on one thread.
Transcript reference(const Client& c, const ServerConfig& cfg) {
  const Models m = Models::build(cfg.models, cfg.seed);
  const DuplexEngine eng(m, cfg.engine);
  SessionCaches s = eng.new_session(c.policy);
  Transcript out;
  for (const auto& e : drive(eng, s, c.pcm, 320)) {
    json j = event_to_json(e, true);
    j["session"] = c.id;
    out.push_back(dump_line(j));
  }
  return out;
}

void append(Transcript& t, const Scheduler::Reply& r) {
  for (const auto& j : r) t.push_back(dump_line(j));
}

ServerConfig config(std::size_t workers) {
  ServerConfig cfg;
  cfg.workers = workers;
  cfg.seed = 3;
  return cfg;
}

// Interleaves the clients packet by packet through the scheduler.
std::map<std::string, Transcript> run_interleaved(
    Scheduler& sched, const std::vector<Client>& cs,
    const std::function<Scheduler::Reply(std::size_t, const json&)>& send) {
  std::map<std::string, Transcript> out;
  std::uint64_t seq = 0;
  for (const auto& c : cs) CHECK(send(0, make_hello(c.id, seq, c.policy)).empty());
  std::size_t step = 0;
  for (std::size_t at = 0; at < cs[0].pcm.size(); at += 320, ++step) {
    ++seq;
    for (std::size_t i = 0; i < cs.size(); ++i) {
      append(out[cs[i].id], send(step + i, make_audio(cs[i].id, seq, std::span(cs[i].pcm).subspan(at, 320))));
    }
  }
  ++seq;
  for (std::size_t i = 0; i < cs.size(); ++i) append(out[cs[i].id], send(i, make_bye(cs[i].id, seq)));
  CHECK(sched.session_count() == 0);
  return out;
}

}  // namespace

TEST_CASE("sessions are isolated and independent of pool size") {
  const auto cs = clients();
  std::map<std::string, Transcript> expected;
  for (const auto& c : cs) expected[c.id] = reference(c, config(1));
  for (const auto& [id, t] : expected) CHECK(t.size() > 5);

  for (std::size_t workers : {1u, 2u, 4u}) {
    CAPTURE(workers);
    const ServerConfig cfg = config(workers);
    WorkerPool pool(cfg);
    Scheduler sched(pool, cfg);
    sched.start();
    // Submit all sessions' packets before collecting, so workers overlap.
    std::map<std::string, Transcript> got;
    std::vector<std::pair<std::string, std::future<Scheduler::Reply>>> futures;
    for (const auto& c : cs) CHECK(sched.handle(make_hello(c.id, 0, c.policy)).empty());
    std::uint64_t seq = 1;
    for (std::size_t at = 0; at < cs[0].pcm.size(); at += 320 * 4) {
      for (std::size_t k = 0; k < 4 && at + k * 320 < cs[0].pcm.size(); ++k, ++seq) {
        for (const auto& c : cs) {
          futures.emplace_back(c.id, sched.submit(make_audio(c.id, seq, std::span(c.pcm).subspan(at + k * 320, 320))));
        }
      }
      for (auto& [id, f] : futures) append(got[id], f.get());
      futures.clear();
    }
    for (const auto& c : cs) append(got[c.id], sched.handle(make_bye(c.id, seq)));
    CHECK(got == expected);
    CHECK(sched.session_count() == 0);
  }
}

TEST_CASE("forced worker assignment does not change output") {
  const auto cs = clients();
  const ServerConfig cfg = config(3);
  std::map<std::string, Transcript> pinned, rotated;
  {
    WorkerPool pool(cfg);
    Scheduler sched(pool, cfg);
    pinned = run_interleaved(sched, cs, [&](std::size_t, const json& m) { return sched.handle_on(0, m); });
    const auto jobs = sched.jobs_per_worker();
    CHECK(jobs[1] == 0);
    CHECK(jobs[2] == 0);
  }
  {
    WorkerPool pool(cfg);
    Scheduler sched(pool, cfg);
    rotated = run_interleaved(sched, cs, [&](std::size_t w, const json& m) { return sched.handle_on(w % 3, m); });
    for (std::size_t n : sched.jobs_per_worker()) CHECK(n > 10);
  }
  CHECK(pinned == rotated);
  for (const auto& c : cs) CHECK(pinned[c.id] == reference(c, cfg));
}

TEST_CASE("a replaced worker serves existing sessions unchanged") {
  const auto cs = clients();
  const ServerConfig cfg = config(2);
  WorkerPool pool(cfg);
  Scheduler sched(pool, cfg);
  std::size_t calls = 0;
  const auto got = run_interleaved(sched, cs, [&](std::size_t w, const json& m) {
    if (++calls == 40) pool.replace(1);
    return sched.handle_on(w % 2, m);
  });
  for (const auto& c : cs) CHECK(got.at(c.id) == reference(c, cfg));
}

TEST_CASE("protocol errors") {
  const ServerConfig cfg = config(1);
  WorkerPool pool(cfg);
  Scheduler sched(pool, cfg);
  auto code = [](const Scheduler::Reply& r) {
    REQUIRE(r.size() == 1);
    CHECK(r[0]["type"] == "error");
    return r[0]["code"].get<std::string>();
  };
  const std::vector<std::int16_t> pkt(320, 0);
  CHECK(code(sched.handle(make_audio("ghost", 1, pkt))) == "unknown-session");
  CHECK(sched.handle(make_hello("a", 0, {})).empty());
  CHECK(code(sched.handle(make_hello("a", 1, {}))) == "duplicate-session");
  CHECK(code(sched.handle(make_audio("a", 0, pkt))) == "bad-seq");
  CHECK(code(sched.handle(json{{"type", "audio"}, {"session", "a"}})) == "parse-error");
  CHECK(code(sched.handle(json{{"type", "dance"}, {"session", "a"}, {"seq", 9}})) == "parse-error");
  CHECK(code(sched.handle(json{{"type", "audio"}, {"session", "a"}, {"seq", 10}, {"pcm", "!!"}})) ==
        "parse-error");
  json bad = make_hello("b", 0, {});
  bad["states"] = "psychic";
  CHECK(code(sched.handle(bad)) == "parse-error");
  CHECK_THROWS_AS(parse_message("{not json"), Error);
}

TEST_CASE("a full session queue answers overload") {
  ServerConfig cfg = config(1);
  cfg.queue_limit = 8;
  WorkerPool pool(cfg);
  Scheduler sched(pool, cfg);  // not started: nothing drains the queue
  CHECK(sched.handle(make_hello("a", 0, {})).empty());
  const std::vector<std::int16_t> pkt(320, 0);
  std::vector<std::future<Scheduler::Reply>> queued;
  for (std::uint64_t seq = 1; seq <= 8; ++seq) queued.push_back(sched.submit(make_audio("a", seq, pkt)));
  const auto over = sched.submit(make_audio("a", 9, pkt)).get();
  REQUIRE(over.size() == 1);
  CHECK(over[0]["code"] == "overload");
  sched.evict("a");
  for (auto& f : queued) CHECK(f.get()[0]["code"] == "unknown-session");
  CHECK_FALSE(sched.has_session("a"));
}

TEST_CASE("stream transport stamps per-session seq and closes on bye") {
  const auto cs = clients();
  const ServerConfig cfg = config(2);
  WorkerPool pool(cfg);
  Scheduler sched(pool, cfg);
  sched.start();
  std::stringstream in, out;
  const Client& c = cs[0];
  in << make_hello(c.id, 0, c.policy).dump() << "\n\n";
  std::uint64_t seq = 1;
  for (std::size_t at = 0; at < c.pcm.size(); at += 320) {
    in << make_audio(c.id, seq++, std::span(c.pcm).subspan(at, 320)).dump() << "\n";
  }
  in << make_bye(c.id, seq).dump() << "\n";
  in << make_audio(c.id, seq + 1, std::span(c.pcm).first(320)).dump() << "\n";
  serve_stream(sched, in, out);

  Transcript got;
  std::uint64_t expect_seq = 0;
  std::string line;
  while (std::getline(out, line)) {
    json j = json::parse(line);
    CHECK(j["seq"] == expect_seq++);
    j.erase("seq");
    got.push_back(dump_line(j));
  }
  CHECK(got == reference(c, cfg));
  CHECK(sched.session_count() == 0);
}

TEST_CASE("TCP clients are served concurrently and dropped clients evicted") {
  const auto cs = clients();
  const ServerConfig cfg = config(2);
  WorkerPool pool(cfg);
  Scheduler sched(pool, cfg);
  sched.start();
  TcpServer server(sched, 0);
  std::thread acceptor([&] { server.run(); });
  const std::uint16_t port = server.port();
  CHECK(port != 0);
  CHECK_THROWS_AS(TcpServer(sched, port), Error);

  std::vector<Transcript> got(2);
  std::vector<std::thread> threads;
  for (std::size_t i = 0; i < 2; ++i) {
    threads.emplace_back([&, i] {
      const Client& c = cs[i];
      boost::asio::ip::tcp::iostream s("127.0.0.1", std::to_string(port));
      s << make_hello(c.id, 0, c.policy).dump() << "\n";
      std::uint64_t seq = 1;
      for (std::size_t at = 0; at < c.pcm.size(); at += 320) {
        s << make_audio(c.id, seq++, std::span(c.pcm).subspan(at, 320)).dump() << "\n";
      }
      s << make_bye(c.id, seq).dump() << "\n" << std::flush;
      std::string line;
      while (std::getline(s, line)) {
        json j = json::parse(line);
        j.erase("seq");
        got[i].push_back(dump_line(j));
      }
    });
  }
  for (auto& t : threads) t.join();
  CHECK(got[0] == reference(cs[0], cfg));
  CHECK(got[1] == reference(cs[1], cfg));

  {
    boost::asio::ip::tcp::iostream s("127.0.0.1", std::to_string(port));
    s << make_hello("dropper", 0, {}).dump() << "\n" << std::flush;
    const auto deadline = std::chrono::steady_clock::now() + std::chrono::seconds(5);
    while (!sched.has_session("dropper") && std::chrono::steady_clock::now() < deadline) {
      std::this_thread::sleep_for(std::chrono::milliseconds(5));
    }
    CHECK(sched.has_session("dropper"));
  }
  const auto deadline = std::chrono::steady_clock::now() + std::chrono::seconds(5);
  while (sched.has_session("dropper") && std::chrono::steady_clock::now() < deadline) {
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }
  CHECK_FALSE(sched.has_session("dropper"));
  server.stop();
  acceptor.join();
}
