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

#include "s2s/server.hpp"

#include <algorithm>
#include <atomic>
#include <istream>
#include <ostream>
#include <set>

#include <boost/asio.hpp>

#include "s2s/wire.hpp"

namespace s2s {

using nlohmann::json;

WorkerPool::WorkerPool(const ServerConfig& cfg) : cfg_(cfg) {
  if (cfg.workers == 0) throw Error(ErrorCode::kInvalidConfig, "pool needs a worker");
  for (std::size_t i = 0; i < cfg.workers; ++i) {
    workers_.push_back(std::make_unique<Worker>(cfg.models, cfg.seed, cfg.engine));
    const std::string fp = workers_.back()->models.fingerprint();
    if (i == 0) {
      fingerprint_ = fp;
    } else if (fp != fingerprint_) {
      throw Error(ErrorCode::kInvalidConfig, "worker parameters diverge");
    }
  }
}

void WorkerPool::replace(std::size_t i) {
  auto fresh = std::make_unique<Worker>(cfg_.models, cfg_.seed, cfg_.engine);
  if (fresh->models.fingerprint() != fingerprint_) {
    throw Error(ErrorCode::kInvalidConfig, "replacement worker diverges");
  }
  workers_.at(i) = std::move(fresh);
}

namespace {

std::future<Scheduler::Reply> ready(Scheduler::Reply reply) {
  std::promise<Scheduler::Reply> p;
  p.set_value(std::move(reply));
  return p.get_future();
}

}  // namespace

Scheduler::Scheduler(WorkerPool& pool, const ServerConfig& cfg)
    : pool_(pool), cfg_(cfg), served_(pool.size(), 0) {}

Scheduler::~Scheduler() { stop(); }

void Scheduler::start() {
  std::lock_guard lock(mu_);
  if (!threads_.empty()) return;
  stopping_ = false;
  for (std::size_t i = 0; i < pool_.size(); ++i) {
    threads_.emplace_back([this, i] { run_worker(i); });
  }
}

void Scheduler::stop() {
  {
    std::lock_guard lock(mu_);
    stopping_ = true;
  }
  cv_.notify_all();
  for (auto& t : threads_) t.join();
  threads_.clear();
}

std::future<Scheduler::Reply> Scheduler::submit(const json& msg) {
  const std::string session = msg.value("session", std::string());
  auto fail = [&](ErrorCode code, const std::string& what) {
    return ready({make_error(session, 0, code, what)});
  };
  const std::string type = msg.value("type", std::string());
  if (!msg.contains("seq") || !msg["seq"].is_number_unsigned()) {
    return fail(ErrorCode::kParseError, "missing seq");
  }
  const auto seq = static_cast<std::int64_t>(msg["seq"].get<std::uint64_t>());

  std::unique_lock lock(mu_);
  if (type == "hello") {
    if (sessions_.count(session)) {
      return fail(ErrorCode::kDuplicateSession, "session already registered");
    }
    SessionPolicy policy;
    try {
      policy = policy_from_json(msg, cfg_.seed);
    } catch (const Error& e) {
      return fail(e.code(), e.what());
    }
    Entry e;
    e.caches = std::make_unique<SessionCaches>(pool_.at(0).engine.new_session(policy));
    e.last_in_seq = seq;
    e.generation = next_generation_++;
    sessions_.emplace(session, std::move(e));
    return ready({});
  }

  const auto it = sessions_.find(session);
  if (it == sessions_.end()) {
    return fail(ErrorCode::kUnknownSession, "session '" + session + "' is not registered");
  }
  Entry& entry = it->second;
  if (seq <= entry.last_in_seq) return fail(ErrorCode::kBadSeq, "seq must increase");
  entry.last_in_seq = seq;

  Job job;
  if (type == "audio") {
    try {
      job.pcm = decode_pcm(msg.value("pcm", std::string()));
    } catch (const Error& e) {
      return fail(e.code(), e.what());
    }
  } else if (type == "bye") {
    job.finish = true;
  } else {
    return fail(ErrorCode::kParseError, "unknown message type '" + type + "'");
  }
  if (entry.pending.size() >= cfg_.queue_limit) {
    return fail(ErrorCode::kOverload, "session queue is full");
  }
  auto future = job.done.get_future();
  entry.pending.push_back(std::move(job));
  if (!entry.in_flight && !entry.queued) {
    entry.queued = true;
    ready_.push_back(session);
    cv_.notify_one();
  }
  return future;
}

Scheduler::Reply Scheduler::handle_on(std::size_t worker, const json& msg) {
  auto future = submit(msg);
  if (future.wait_for(std::chrono::seconds(0)) == std::future_status::ready) {
    return future.get();
  }
  const std::string session = msg.value("session", std::string());
  {
    std::unique_lock lock(mu_);
    while (future.wait_for(std::chrono::seconds(0)) != std::future_status::ready &&
           run_one(worker, lock, &session)) {
    }
  }
  return future.get();
}

Scheduler::Reply Scheduler::execute(Worker& w, const std::string& session,
                                    SessionCaches& caches, const Job& job) {
  Reply reply;
  try {
    const auto events =
        job.finish ? w.engine.finish(caches) : w.engine.process_packet(job.pcm, caches);
    for (const auto& ev : events) {
      json j = event_to_json(ev, true);
      j["session"] = session;
      reply.push_back(std::move(j));
    }
  } catch (const Error& e) {
    reply.push_back(make_error(session, 0, e.code(), e.what()));
  }
  return reply;
}

bool Scheduler::run_one(std::size_t worker, std::unique_lock<std::mutex>& lock,
                        const std::string* only) {
  auto pick = only ? std::find(ready_.begin(), ready_.end(), *only) : ready_.begin();
  if (pick == ready_.end()) return false;
  const std::string session = *pick;
  ready_.erase(pick);
  auto it = sessions_.find(session);
  if (it == sessions_.end() || it->second.pending.empty()) return true;

  Entry& entry = it->second;
  entry.queued = false;
  entry.in_flight = true;
  Job job = std::move(entry.pending.front());
  entry.pending.pop_front();
  std::unique_ptr<SessionCaches> caches = std::move(entry.caches);
  const std::uint64_t generation = entry.generation;
  served_[worker] += 1;
  lock.unlock();

  Reply reply = execute(pool_.at(worker), session, *caches, job);

  lock.lock();
  std::vector<Job> orphans;
  it = sessions_.find(session);
  if (it != sessions_.end() && it->second.generation == generation) {
    Entry& e = it->second;
    e.in_flight = false;
    if (job.finish) {
      for (auto& j : e.pending) orphans.push_back(std::move(j));
      sessions_.erase(it);
    } else {
      e.caches = std::move(caches);
      if (!e.pending.empty()) {
        e.queued = true;
        ready_.push_back(session);
        cv_.notify_one();
      }
    }
  }
  job.done.set_value(std::move(reply));
  for (auto& j : orphans) {
    j.done.set_value({make_error(session, 0, ErrorCode::kUnknownSession, "session closed")});
  }
  return true;
}

void Scheduler::run_worker(std::size_t index) {
  std::unique_lock lock(mu_);
  for (;;) {
    cv_.wait(lock, [&] { return stopping_ || !ready_.empty(); });
    if (stopping_) return;
    run_one(index, lock, nullptr);
  }
}

void Scheduler::evict(const std::string& session) {
  std::vector<Job> dropped;
  {
    std::lock_guard lock(mu_);
    const auto it = sessions_.find(session);
    if (it == sessions_.end()) return;
    for (auto& j : it->second.pending) dropped.push_back(std::move(j));
    sessions_.erase(it);
    ready_.erase(std::remove(ready_.begin(), ready_.end(), session), ready_.end());
  }
  for (auto& j : dropped) {
    j.done.set_value({make_error(session, 0, ErrorCode::kUnknownSession, "session evicted")});
  }
}

bool Scheduler::has_session(const std::string& session) const {
  std::lock_guard lock(mu_);
  return sessions_.count(session) > 0;
}

std::size_t Scheduler::session_count() const {
  std::lock_guard lock(mu_);
  return sessions_.size();
}

std::vector<std::size_t> Scheduler::jobs_per_worker() const {
  std::lock_guard lock(mu_);
  return served_;
}

void SeqStamper::stamp(json& msg) {
  const std::string session = msg.value("session", std::string());
  msg["seq"] = next_[session]++;
}

void serve_stream(Scheduler& scheduler, std::istream& in, std::ostream& out) {
  SeqStamper stamper;
  std::set<std::string> opened;
  bool said_bye = false;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    Scheduler::Reply reply;
    std::string type, session;
    try {
      const json msg = parse_message(line);
      type = msg["type"].get<std::string>();
      session = msg["session"].get<std::string>();
      reply = scheduler.submit(msg).get();
    } catch (const Error& e) {
      reply = {make_error(session, 0, e.code(), e.what())};
    }
    const bool failed = !reply.empty() && reply.front().value("type", "") == "error";
    if (type == "hello" && !failed) opened.insert(session);
    if (type == "bye" && !failed) {
      opened.erase(session);
      said_bye = true;
    }
    for (auto& m : reply) {
      stamper.stamp(m);
      out << dump_line(m) << '\n';
    }
    out.flush();
    if (said_bye && opened.empty()) break;
  }
  for (const auto& s : opened) scheduler.evict(s);
}

namespace asio = boost::asio;
using asio::ip::tcp;

struct TcpServer::Impl {
  Scheduler& scheduler;
  asio::io_context io;
  tcp::acceptor acceptor{io};
  std::atomic<bool> stopping{false};
  std::mutex mu;
  std::vector<std::thread> threads;
  std::vector<std::shared_ptr<tcp::iostream>> streams;

  explicit Impl(Scheduler& s) : scheduler(s) {}
};

TcpServer::TcpServer(Scheduler& scheduler, std::uint16_t port)
    : impl_(std::make_unique<Impl>(scheduler)) {
  boost::system::error_code ec;
  const tcp::endpoint ep(asio::ip::make_address("127.0.0.1"), port);
  impl_->acceptor.open(ep.protocol(), ec);
  if (!ec) impl_->acceptor.set_option(tcp::acceptor::reuse_address(true), ec);
  if (!ec) impl_->acceptor.bind(ep, ec);
  if (!ec) impl_->acceptor.listen(asio::socket_base::max_listen_connections, ec);
  if (ec) {
    throw Error(ErrorCode::kBindFailure,
                "127.0.0.1:" + std::to_string(port) + ": " + ec.message());
  }
}

TcpServer::~TcpServer() { stop(); }

std::uint16_t TcpServer::port() const { return impl_->acceptor.local_endpoint().port(); }

void TcpServer::run() {
  while (!impl_->stopping) {
    tcp::socket socket(impl_->io);
    boost::system::error_code ec;
    impl_->acceptor.accept(socket, ec);
    if (impl_->stopping) break;
    if (ec) continue;
    auto stream = std::make_shared<tcp::iostream>(std::move(socket));
    std::lock_guard lock(impl_->mu);
    impl_->streams.push_back(stream);
    impl_->threads.emplace_back([this, stream] {
      serve_stream(impl_->scheduler, *stream, *stream);
      boost::system::error_code ignored;
      stream->socket().shutdown(tcp::socket::shutdown_both, ignored);
    });
  }
}

void TcpServer::stop() {
  if (!impl_ || impl_->stopping.exchange(true)) return;
  // Wake a blocking accept() with a throwaway connection.
  {
    boost::system::error_code ec;
    tcp::socket poke(impl_->io);
    poke.connect(impl_->acceptor.local_endpoint(), ec);
  }
  std::vector<std::thread> threads;
  {
    std::lock_guard lock(impl_->mu);
    for (auto& s : impl_->streams) {
      boost::system::error_code ignored;
      s->socket().shutdown(tcp::socket::shutdown_both, ignored);
    }
    threads = std::move(impl_->threads);
  }
  for (auto& t : threads) t.join();
  boost::system::error_code ignored;
  impl_->acceptor.close(ignored);
}

}  // namespace s2s
