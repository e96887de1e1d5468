#pragma once

#include <algorithm>
#include <chrono>
#include <map>
#include <memory>
#include <set>
#include <thread>

#include "esrl/channel.hpp"
#include "esrl/es.hpp"
#include "esrl/novelty.hpp"
#include "esrl/protocol.hpp"
#include "esrl/worker.hpp"

namespace esrl {

enum class Algorithm { Es, NsEs, NsrEs };

inline std::string to_string(Algorithm a) {
  switch (a) {
    case Algorithm::Es: return "es";
    case Algorithm::NsEs: return "ns-es";
    case Algorithm::NsrEs: return "nsr-es";
  }
  return "?";
}

inline Algorithm algorithm_from_string(std::string_view s) {
  if (s == "es") return Algorithm::Es;
  if (s == "ns-es") return Algorithm::NsEs;
  if (s == "nsr-es") return Algorithm::NsrEs;
  throw ValidationError("unknown algorithm: '" + std::string(s) + "'");
}

// ---- aggregation -----------------------------------------------------------

struct AggregateResult {
  Vec scores;                  // 2n combined shaped scores, pair-major (+ then -)
  std::vector<PairTerm> terms; // per-pair shaped scores for the estimator
  double pop_fitness_mean = 0.0;
  std::vector<int> pop_steps;  // canonical order, for runtime logging
};

// Builds the canonical 2n score list from one iteration's reports. ES scores
// by fitness, the novelty variant by per-perturbation novelty against the
// iteration-start archive snapshot, and the blended variant by averaging the
// two after each is rank-shaped.
inline AggregateResult aggregate(std::vector<ResultReport> reports, Algorithm alg,
                                 const Archive& snapshot, double w) {
  if (reports.empty()) throw ValidationError("no reports to aggregate");
  std::sort(reports.begin(), reports.end(),
            [](const ResultReport& a, const ResultReport& b) {
              return a.pair_id < b.pair_id;
            });
  for (std::size_t i = 1; i < reports.size(); ++i)
    if (reports[i].pair_id == reports[i - 1].pair_id)
      throw StructuralError("duplicate pair in aggregation");

  const std::size_t n2 = 2 * reports.size();
  Vec fitness(n2);
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const auto& r = reports[i];
    if (!std::isfinite(r.fitness_pos) || !std::isfinite(r.fitness_neg))
      throw InputError("non-finite fitness in report");
    fitness[2 * i] = r.fitness_pos;
    fitness[2 * i + 1] = r.fitness_neg;
  }

  AggregateResult out;
  if (alg == Algorithm::Es) {
    out.scores = shape_scores(fitness);
  } else {
    Vec novelty(n2);
    for (std::size_t i = 0; i < reports.size(); ++i) {
      const auto& r = reports[i];
      if (!std::isfinite(r.bc_pos.x) || !std::isfinite(r.bc_pos.y) ||
          !std::isfinite(r.bc_neg.x) || !std::isfinite(r.bc_neg.y))
        throw InputError("missing or non-finite behavior characteristic in report");
      novelty[2 * i] = snapshot.novelty(r.bc_pos);
      novelty[2 * i + 1] = snapshot.novelty(r.bc_neg);
    }
    if (alg == Algorithm::NsEs)
      out.scores = shape_scores(novelty);
    else
      out.scores = combine_scores(shape_scores(fitness), shape_scores(novelty), w);
  }

  out.terms.reserve(reports.size());
  for (std::size_t i = 0; i < reports.size(); ++i)
    out.terms.push_back({reports[i].noise_index, reports[i].pair_id, out.scores[2 * i],
                         out.scores[2 * i + 1]});
  for (double f : fitness) out.pop_fitness_mean += f;
  out.pop_fitness_mean /= static_cast<double>(n2);
  out.pop_steps.reserve(n2);
  for (const auto& r : reports) {
    out.pop_steps.push_back(r.steps_pos);
    out.pop_steps.push_back(r.steps_neg);
  }
  return out;
}

// ---- worker pools -----------------------------------------------------------

struct IterationOutcome {
  std::vector<ResultReport> reports;  // unique pairs, ordered by pair_id
  std::vector<int> dropped_pairs;
};

class WorkerPool {
 public:
  virtual ~WorkerPool() = default;
  virtual IterationOutcome run_iteration(const TaskAnnouncement& ann, const Vec& theta) = 0;
  virtual int worker_count() const = 0;
};

// Reference semantics: everything computed inline through the same message
// structures, one logical worker, nothing dropped.
class SequentialPool : public WorkerPool {
 public:
  SequentialPool(const WorkerSetup& setup, std::shared_ptr<const NoiseTable> table)
      : ctx_(WorkerContext::from_setup(setup, 0, std::move(table))) {}

  IterationOutcome run_iteration(const TaskAnnouncement& ann, const Vec& theta) override {
    IterationOutcome out;
    out.reports = worker_execute(ctx_, ann, theta);
    std::sort(out.reports.begin(), out.reports.end(),
              [](const ResultReport& a, const ResultReport& b) {
                return a.pair_id < b.pair_id;
              });
    return out;
  }

  int worker_count() const override { return 1; }

 private:
  WorkerContext ctx_;
};

// Master side of a set of message channels (in-process queues or TCP). One
// reader thread per worker feeds a shared inbox; the iteration loop assigns
// pairs round-robin, collects results, honors mean re-requests, and applies
// the symmetric straggler-drop policy at the deadline.
class ChannelPool : public WorkerPool {
 public:
  ChannelPool(std::vector<std::unique_ptr<MessageChannel>> channels,
              const WorkerSetup& setup, int straggler_ms)
      : setup_(setup), straggler_ms_(straggler_ms) {
    if (channels.empty()) throw ValidationError("worker pool needs at least one worker");
    for (std::size_t i = 0; i < channels.size(); ++i) {
      auto hello = channels[i]->recv(-1);
      if (!hello) throw ProtocolError("worker vanished during registration");
      msg::check(*hello, "HELLO");
      if (!channels[i]->send(msg::hello_reply(setup_, static_cast<int>(i))))
        throw ProtocolError("failed to complete worker registration");
    }
    workers_.reserve(channels.size());
    for (std::size_t i = 0; i < channels.size(); ++i) {
      workers_.push_back(Worker{std::move(channels[i]), true});
    }
    for (std::size_t i = 0; i < workers_.size(); ++i) {
      readers_.emplace_back([this, i] {
        while (true) {
          std::optional<json> m;
          try {
            m = workers_[i].ch->recv(-1);
          } catch (const ProtocolError&) {
            m.reset();
          }
          const bool closing = !m.has_value();
          inbox_.push(Event{static_cast<int>(i), std::move(m)});
          if (closing) return;
        }
      });
    }
  }

  ~ChannelPool() override { shutdown(); }

  void shutdown() {
    if (down_) return;
    down_ = true;
    for (auto& w : workers_)
      if (w.alive) w.ch->send(msg::shutdown());
    for (auto& w : workers_) w.ch->begin_close();
    for (auto& t : readers_)
      if (t.joinable()) t.join();
    for (auto& w : workers_) w.ch->close();
  }

  int worker_count() const override { return static_cast<int>(workers_.size()); }

  int live_workers() const {
    int n = 0;
    for (const auto& w : workers_) n += w.alive ? 1 : 0;
    return n;
  }

  IterationOutcome run_iteration(const TaskAnnouncement& ann, const Vec& theta) override {
    std::vector<int> alive;
    for (std::size_t i = 0; i < workers_.size(); ++i)
      if (workers_[i].alive) alive.push_back(static_cast<int>(i));
    if (alive.empty()) throw ProtocolError("no live workers");

    // round-robin partition in worker-id order
    std::map<int, std::vector<PairAssignment>> slices;
    std::map<int, std::set<int>> owed;
    for (std::size_t i = 0; i < ann.pairs.size(); ++i) {
      const int wid = alive[i % alive.size()];
      slices[wid].push_back(ann.pairs[i]);
      owed[wid].insert(ann.pairs[i].pair_id);
    }
    const json mean_msg = msg::mean(ann.run_id, ann.iteration, ann.theta_version, theta);
    for (const int wid : alive) {
      if (slices[wid].empty()) continue;
      auto& w = workers_[wid];
      if (!w.ch->send(mean_msg) || !w.ch->send(msg::assign(ann, slices[wid]))) {
        mark_dead(wid);
      }
    }

    IterationOutcome out;
    std::set<int> seen;
    std::set<int> dropped;
    auto note_dead_worker = [&](int wid) {
      mark_dead(wid);
      for (const int pid : owed[wid])
        if (!seen.contains(pid)) dropped.insert(pid);
    };
    for (const int wid : alive)
      if (!workers_[wid].alive) note_dead_worker(wid);

    const auto deadline =
        std::chrono::steady_clock::now() + std::chrono::milliseconds(straggler_ms_);
    const std::size_t want = ann.pairs.size();
    while (seen.size() + dropped.size() < want) {
      const auto now = std::chrono::steady_clock::now();
      if (now >= deadline) break;
      const int wait_ms = static_cast<int>(
          std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now).count() +
          1);
      auto ev = inbox_.pop(wait_ms);
      if (!ev) break;  // deadline
      if (!ev->msg) {
        note_dead_worker(ev->wid);
        continue;
      }
      const std::string type = msg::type_of(*ev->msg);
      if (type == "RESULT") {
        if (ev->msg->at("run_id").get<std::string>() != ann.run_id ||
            ev->msg->at("iteration").get<std::int64_t>() != ann.iteration)
          continue;  // stale
        const ResultReport r = msg::parse_result(*ev->msg);
        if (seen.contains(r.pair_id) || dropped.contains(r.pair_id)) {
          duplicate_reports_ += 1;  // first report wins
          continue;
        }
        seen.insert(r.pair_id);
        owed[ev->wid].erase(r.pair_id);
        out.reports.push_back(r);
      } else if (type == "HELLO") {
        if (ev->msg->contains("resend_mean")) workers_[ev->wid].ch->send(mean_msg);
      } else {
        throw ProtocolError("unexpected message from worker: " + type);
      }
    }

    // deadline or dead workers: drop what never arrived, symmetrically by pair
    for (const auto& pa : ann.pairs)
      if (!seen.contains(pa.pair_id)) dropped.insert(pa.pair_id);
    if (!dropped.empty()) {
      const std::vector<int> drop_list(dropped.begin(), dropped.end());
      const json drop_msg = msg::drop(ann.run_id, ann.iteration, drop_list);
      for (const int wid : alive)
        if (workers_[wid].alive) workers_[wid].ch->send(drop_msg);
      out.dropped_pairs = drop_list;
    }
    std::sort(out.reports.begin(), out.reports.end(),
              [](const ResultReport& a, const ResultReport& b) {
                return a.pair_id < b.pair_id;
              });
    return out;
  }

  long duplicate_reports() const { return duplicate_reports_; }

 private:
  struct Worker {
    std::unique_ptr<MessageChannel> ch;
    bool alive = true;
  };
  struct Event {
    int wid;
    std::optional<json> msg;
  };
  struct EventQueue {
    std::mutex mu;
    std::condition_variable cv;
    std::deque<Event> items;

    void push(Event e) {
      {
        std::lock_guard lk(mu);
        items.push_back(std::move(e));
      }
      cv.notify_one();
    }
    std::optional<Event> pop(int timeout_ms) {
      std::unique_lock lk(mu);
      if (!cv.wait_for(lk, std::chrono::milliseconds(timeout_ms),
                       [this] { return !items.empty(); }))
        return std::nullopt;
      Event e = std::move(items.front());
      items.pop_front();
      return e;
    }
  };

  void mark_dead(int wid) {
    if (workers_[wid].alive) {
      workers_[wid].alive = false;
      workers_[wid].ch->begin_close();
    }
  }

  WorkerSetup setup_;
  int straggler_ms_;
  std::vector<Worker> workers_;
  std::vector<std::thread> readers_;
  EventQueue inbox_;
  long duplicate_reports_ = 0;
  bool down_ = false;
};

// In-process workers on threads, exchanging the same message objects through
// queues; they share one immutable noise table.
class ThreadedPool : public WorkerPool {
 public:
  ThreadedPool(int n, const WorkerSetup& setup, std::shared_ptr<const NoiseTable> table,
               int straggler_ms) {
    if (n < 1) throw ValidationError("need at least one worker");
    std::vector<std::unique_ptr<MessageChannel>> master_ends;
    for (int i = 0; i < n; ++i) {
      auto [a, b] = make_inproc_pair();
      master_ends.push_back(std::move(a));
      auto worker_end = std::shared_ptr<MessageChannel>(std::move(b));
      threads_.emplace_back(
          [worker_end, table] { worker_main(*worker_end, table); });
    }
    pool_ = std::make_unique<ChannelPool>(std::move(master_ends), setup, straggler_ms);
  }

  ~ThreadedPool() override {
    pool_->shutdown();
    for (auto& t : threads_)
      if (t.joinable()) t.join();
  }

  IterationOutcome run_iteration(const TaskAnnouncement& ann, const Vec& theta) override {
    return pool_->run_iteration(ann, theta);
  }

  int worker_count() const override { return pool_->worker_count(); }

 private:
  std::unique_ptr<ChannelPool> pool_;
  std::vector<std::thread> threads_;
};

// Accepts `expected` TCP workers, then behaves like any channel pool.
class TcpPool : public WorkerPool {
 public:
  TcpPool(TcpListener& listener, int expected, const WorkerSetup& setup,
          int straggler_ms, int accept_timeout_ms = 120000) {
    std::vector<std::unique_ptr<MessageChannel>> chans;
    const auto deadline = std::chrono::steady_clock::now() +
                          std::chrono::milliseconds(accept_timeout_ms);
    while (static_cast<int>(chans.size()) < expected) {
      const auto now = std::chrono::steady_clock::now();
      if (now >= deadline) throw ProtocolError("timed out waiting for workers");
      const int wait = static_cast<int>(
          std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now).count());
      auto ch = listener.accept(wait);
      if (ch) chans.push_back(std::move(ch));
    }
    pool_ = std::make_unique<ChannelPool>(std::move(chans), setup, straggler_ms);
  }

  IterationOutcome run_iteration(const TaskAnnouncement& ann, const Vec& theta) override {
    return pool_->run_iteration(ann, theta);
  }

  int worker_count() const override { return pool_->worker_count(); }

 private:
  std::unique_ptr<ChannelPool> pool_;
};

// The coordinator's work order for one iteration: noise offsets are drawn
// from the per-iteration counter stream, never stored.
inline TaskAnnouncement make_announcement(const std::string& run_id,
                                          std::uint64_t run_seed, std::int64_t iteration,
                                          int member_index, const EsState& member,
                                          double rtg_target, int archive_version,
                                          const std::string& env_id,
                                          std::size_t table_len) {
  TaskAnnouncement ann;
  ann.run_id = run_id;
  ann.run_seed = run_seed;
  ann.iteration = iteration;
  ann.member_index = member_index;
  ann.theta_version = vec_digest(member.theta);
  ann.sigma = member.sigma;
  ann.rtg_target = rtg_target;
  ann.archive_version = archive_version;
  ann.env_id = env_id;
  ann.pairs.reserve(member.pop_pairs);
  for (int p = 0; p < member.pop_pairs; ++p)
    ann.pairs.push_back(
        {p, draw_noise_index(run_seed, iteration, p, table_len, member.theta.size())});
  return ann;
}

}  // namespace esrl
