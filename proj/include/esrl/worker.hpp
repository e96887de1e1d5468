#pragma once

#include <map>
#include <memory>
#include <set>

#include "esrl/channel.hpp"
#include "esrl/es.hpp"
#include "esrl/protocol.hpp"
#include "esrl/runner.hpp"

namespace esrl {

// Everything a worker needs to evaluate assignments for one run.
struct WorkerContext {
  WorkerSetup setup;
  std::shared_ptr<const NoiseTable> table;
  int worker_id = 0;

  static WorkerContext from_setup(WorkerSetup s, int worker_id,
                                  std::shared_ptr<const NoiseTable> shared_table = {}) {
    WorkerContext ctx;
    if (shared_table && shared_table->seed() == s.noise_seed &&
        shared_table->size() == s.noise_len) {
      ctx.table = std::move(shared_table);
    } else {
      ctx.table = std::make_shared<NoiseTable>(s.noise_seed, s.noise_len);
    }
    ctx.setup = std::move(s);
    ctx.worker_id = worker_id;
  return ctx;
  }
};

// Evaluates theta +/- sigma*eps for one pair; episode seeds derive from
// (run_seed, iteration, pair_id, sign) so results are location-independent.
inline ResultReport evaluate_pair(const WorkerContext& ctx, const TaskAnnouncement& ann,
                                  std::span<const double> theta, PolicyEvaluator& ev,
                                  const PairAssignment& pa) {
  const std::size_t len = theta.size();
  if (pa.noise_index + len > ctx.table->size())
    throw ProtocolError("noise index out of range");
  ResultReport r;
  r.pair_id = pa.pair_id;
  r.noise_index = pa.noise_index;
  r.worker_id = ctx.worker_id;
  const Vec up = perturb(theta, *ctx.table, pa.noise_index, +1, ann.sigma);
  const auto pos =
      ev.run_episode(up, episode_seed(ann.run_seed, ann.iteration, pa.pair_id, +1));
  const Vec dn = perturb(theta, *ctx.table, pa.noise_index, -1, ann.sigma);
  const auto neg =
      ev.run_episode(dn, episode_seed(ann.run_seed, ann.iteration, pa.pair_id, -1));
  r.fitness_pos = pos.ret;
  r.fitness_neg = neg.ret;
  r.bc_pos = pos.bc;
  r.bc_neg = neg.bc;
  r.steps_pos = pos.steps;
  r.steps_neg = neg.steps;
  return r;
}

inline std::vector<ResultReport> worker_execute(const WorkerContext& ctx,
                                                const TaskAnnouncement& ann,
                                                std::span<const double> theta) {
  PolicyEvaluator ev(ctx.setup.policy, ctx.setup.env, ctx.setup.normalizer,
                     ann.rtg_target);
  std::vector<ResultReport> out;
  out.reserve(ann.pairs.size());
  for (const auto& pa : ann.pairs) out.push_back(evaluate_pair(ctx, ann, theta, ev, pa));
  return out;
}

// Connect-side loop: HELLO handshake, then serve ASSIGN/MEAN/DROP until
// SHUTDOWN or the channel closes. A shared noise table may be supplied for
// in-process workers; otherwise the table is rebuilt from the setup seed.
inline void worker_main(MessageChannel& ch,
                        std::shared_ptr<const NoiseTable> shared_table = {}) {
  if (!ch.send(msg::hello())) return;
  const auto reply = ch.recv(-1);
  if (!reply) return;
  auto [setup, worker_id] = msg::parse_hello_reply(*reply);
  WorkerContext ctx = WorkerContext::from_setup(std::move(setup), worker_id,
                                                std::move(shared_table));

  struct MeanState {
    std::int64_t iteration = -1;
    std::string version;
    Vec theta;
  } mean;
  std::optional<json> pending_assign;
  int resend_attempts = 0;

  auto execute = [&](const json& assign_msg) {
    const TaskAnnouncement ann = msg::parse_assign(assign_msg, ctx.setup.run_seed);
    PolicyEvaluator ev(ctx.setup.policy, ctx.setup.env, ctx.setup.normalizer,
                       ann.rtg_target);
    std::set<int> dropped;
    for (const auto& pa : ann.pairs) {
      // drain control traffic between pairs so a DROP can cancel queued work
      while (auto m = ch.recv(0)) {
        const std::string t = msg::type_of(*m);
        if (t == "DROP" && (*m).at("iteration").get<std::int64_t>() == ann.iteration) {
          for (const auto& id : (*m).at("pair_ids")) dropped.insert(id.get<int>());
        } else if (t == "SHUTDOWN") {
          return false;
        }
      }
      if (dropped.contains(pa.pair_id)) continue;
      const ResultReport r = evaluate_pair(ctx, ann, mean.theta, ev, pa);
      if (!ch.send(msg::result(ann.run_id, ann.iteration, ann.member_index, r)))
        return false;
    }
    return true;
  };

  while (true) {
    const auto m = ch.recv(-1);
    if (!m) return;
    const std::string type = msg::type_of(*m);
    if (type == "SHUTDOWN") return;
    if (type == "DROP") continue;  // stale; per-pair drains handle live ones
    if (type == "MEAN") {
      msg::check(*m, "MEAN");
      Vec theta = b64_to_theta(m->at("theta_b64").get<std::string>());
      const auto version = m->at("theta_version").get<std::string>();
      if (vec_digest(theta) != version)
        throw ProtocolError("mean payload does not match its announced version");
      mean = {m->at("iteration").get<std::int64_t>(), version, std::move(theta)};
      if (pending_assign &&
          pending_assign->at("theta_version").get<std::string>() == mean.version) {
        const json todo = *pending_assign;
        pending_assign.reset();
        resend_attempts = 0;
        if (!execute(todo)) return;
      }
      continue;
    }
    if (type == "ASSIGN") {
      if (m->at("theta_version").get<std::string>() == mean.version) {
        resend_attempts = 0;
        if (!execute(*m)) return;
      } else {
        // refuse and re-request the mean
        if (++resend_attempts > 3)
          throw ProtocolError("mean version repeatedly out of sync");
        pending_assign = *m;
        if (!ch.send(msg::hello_resend_mean(m->at("iteration").get<std::int64_t>())))
          return;
      }
      continue;
    }
    throw ProtocolError("unexpected message type for a worker: " + type);
  }
}

}  // namespace esrl
