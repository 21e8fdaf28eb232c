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

// Model-as-a-server: interchangeable workers with identical immutable models,
// a session registry holding every SessionCaches, and a dispatcher that hands
// a session's next job to whichever worker is idle.

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <future>
#include <iosfwd>
#include <map>
#include <optional>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "s2s/duplex.hpp"

namespace s2s {

struct ServerConfig {
  std::size_t workers = 1;
  std::uint64_t seed = 0;
  ModelConfig models;
  EngineConfig engine;
  std::size_t queue_limit = 8;
};

struct Worker {
  Worker(const ModelConfig& cfg, std::uint64_t seed, const EngineConfig& ecfg)
      : models(Models::build(cfg, seed)), engine(models, ecfg) {}
  Models models;
  DuplexEngine engine;
};

class WorkerPool {
 public:
  // Throws invalid-config if the workers' fingerprints diverge.
  explicit WorkerPool(const ServerConfig& cfg);

  std::size_t size() const { return workers_.size(); }
  Worker& at(std::size_t i) { return *workers_.at(i); }
  const std::string& fingerprint() const { return fingerprint_; }
  // Swaps worker i for a freshly built one.
  void replace(std::size_t i);

 private:
  ServerConfig cfg_;
  std::vector<std::unique_ptr<Worker>> workers_;
  std::string fingerprint_;
};

// Session registry plus dispatcher. Jobs of one session run strictly in order
// and one at a time; different sessions interleave freely across workers.
class Scheduler {
 public:
  using Reply = std::vector<nlohmann::json>;

  Scheduler(WorkerPool& pool, const ServerConfig& cfg);
  ~Scheduler();
  Scheduler(const Scheduler&) = delete;
  Scheduler& operator=(const Scheduler&) = delete;

  // Spawns one dispatch thread per worker. Without start(), only handle_on()
  // can make progress.
  void start();
  void stop();

  // Any client message. hello and protocol errors reply immediately; audio and
  // bye are queued for the next idle worker. Replies carry no seq yet; see
  // SeqStamper.
  std::future<Reply> submit(const nlohmann::json& msg);
  Reply handle(const nlohmann::json& msg) { return submit(msg).get(); }
  // Runs the message inline on a chosen worker (assignment tests).
  Reply handle_on(std::size_t worker, const nlohmann::json& msg);

  // Drops a session and its queued jobs; an in-flight job's result is
  // discarded at checkin.
  void evict(const std::string& session);
  bool has_session(const std::string& session) const;
  std::size_t session_count() const;
  // Jobs served per worker since construction.
  std::vector<std::size_t> jobs_per_worker() const;

 private:
  struct Job {
    bool finish = false;
    std::vector<std::int16_t> pcm;
    std::promise<Reply> done;
  };
  struct Entry {
    std::unique_ptr<SessionCaches> caches;  // null while checked out
    std::deque<Job> pending;
    bool in_flight = false;
    bool queued = false;
    std::int64_t last_in_seq = -1;
    std::uint64_t generation = 0;  // distinguishes re-registered ids
  };

  Reply execute(Worker& w, const std::string& session, SessionCaches& caches,
                const Job& job);
  // Runs one ready job on `worker`: the queue head, or `only` when given.
  // Called with the lock held; returns with it held.
  bool run_one(std::size_t worker, std::unique_lock<std::mutex>& lock,
               const std::string* only);
  void run_worker(std::size_t index);

  WorkerPool& pool_;
  ServerConfig cfg_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::map<std::string, Entry> sessions_;
  std::deque<std::string> ready_;
  std::vector<std::thread> threads_;
  std::vector<std::size_t> served_;
  std::uint64_t next_generation_ = 0;
  bool stopping_ = false;
};

// Stamps the outbound per-session seq (0, 1, 2, ...) onto replies, in the
// order they are written.
class SeqStamper {
 public:
  void stamp(nlohmann::json& msg);

 private:
  std::map<std::string, std::uint64_t> next_;
};

// One connection: reads client lines, writes reply lines in request order.
// Sessions opened on the stream are evicted when it ends. Returns after EOF,
// or once every session it opened has said bye.
void serve_stream(Scheduler& scheduler, std::istream& in, std::ostream& out);

// Blocking TCP front end on 127.0.0.1 (thread per connection).
class TcpServer {
 public:
  // Throws bind-failure. Port 0 picks an ephemeral port.
  TcpServer(Scheduler& scheduler, std::uint16_t port);
  ~TcpServer();
  std::uint16_t port() const;
  // Accepts until stop().
  void run();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace s2s
