#pragma once

#include <filesystem>
#include <fstream>

#include "esrl/checkpoint.hpp"
#include "esrl/config.hpp"
#include "esrl/runner.hpp"
#include "esrl/train.hpp"

namespace esrl {

// Frozen teacher rollouts: raw observations, teacher actions, raw rewards.
struct PretrainDataset {
  struct Episode {
    std::vector<Vec> obs;
    std::vector<Vec> act;
    std::vector<double> reward;
    Vec rtg;  // scaled return-to-go prefix, rtg[0] = rtg_target
  };
  std::vector<Episode> episodes;
  std::vector<std::pair<int, int>> index;  // flattened (episode, t)
};

inline PretrainDataset collect_teacher_rollouts(const Checkpoint& teacher,
                                                const EnvSpec& env, double rtg_target,
                                                std::uint64_t seed, int episodes) {
  PolicyEvaluator ev(teacher.spec, env, teacher.normalizer, rtg_target);
  PretrainDataset ds;
  for (int e = 0; e < episodes; ++e) {
    PretrainDataset::Episode ep;
    const PolicyEvaluator::StepHook hook = [&ep](const Vec& obs, const Vec& act,
                                                 double reward) {
      ep.obs.push_back(obs);
      ep.act.push_back(act);
      ep.reward.push_back(reward);
    };
    ev.run_episode(teacher.theta,
                   mix_key({seed, seed_tag::pretrain_data, static_cast<std::uint64_t>(e)}),
                   nullptr, &hook);
    ep.rtg.resize(ep.obs.size());
    double g = rtg_target;
    for (std::size_t t = 0; t < ep.obs.size(); ++t) {
      ep.rtg[t] = g;
      g -= ep.reward[t] / env.reward_scale;
    }
    const int ei = static_cast<int>(ds.episodes.size());
    for (std::size_t t = 0; t < ep.obs.size(); ++t)
      ds.index.emplace_back(ei, static_cast<int>(t));
    ds.episodes.push_back(std::move(ep));
  }
  return ds;
}

// Mean squared action error of the student on a fixed set of dataset tuples
// (negated, so higher is better and the ES machinery applies unchanged).
class ImitationFitness {
 public:
  ImitationFitness(PolicySpec student, const PretrainDataset& ds)
      : spec_(std::move(student)), ds_(ds) {
    if (spec_.kind == PolicyKind::Mlp)
      mlp_lo_ = mlp_layout(spec_);
    else
      dt_lo_ = dt_layout(spec_);
  }

  double operator()(std::span<const double> params,
                    std::span<const std::pair<int, int>> tuples) {
    double err = 0.0;
    Vec action(spec_.act_dim);
    for (const auto& [ei, t] : tuples) {
      const auto& ep = ds_.episodes[ei];
      if (spec_.kind == PolicyKind::Mlp) {
        mlp_forward_ws(mlp_lo_, params, ep.obs[t], action, buf_a_, buf_b_);
      } else {
        const int k = spec_.dt_context_len;
        const int lo = std::max(0, t - k + 1);
        DtContext ctx;
        ctx.timestep = t;
        ctx.current_rtg = ep.rtg[t];
        for (int s = lo; s <= t; ++s)
          ctx.triplets.push_back({ep.rtg[s], ep.obs[s],
                                  s == t ? Vec(spec_.act_dim, 0.0) : ep.act[s]});
        dt_forward_ws(spec_, dt_lo_, params, ctx, ep.obs[t], ws_, action);
      }
      for (int c = 0; c < spec_.act_dim; ++c) {
        const double d = action[c] - ds_.episodes[ei].act[t][c];
        err += d * d;
      }
    }
    return -err / static_cast<double>(tuples.size());
  }

 private:
  PolicySpec spec_;
  const PretrainDataset& ds_;
  MlpLayout mlp_lo_;
  DtLayout dt_lo_;
  DtWorkspace ws_;
  Vec buf_a_, buf_b_;
};

struct PretrainOutcome {
  std::string checkpoint_path;
  Vec mean_fitness;  // per logged iteration, starting at iteration 0
};

// Behavior cloning toward the teacher, run with the same derivative-free
// optimizer: ES over -MSE on a counter-keyed minibatch schedule.
inline PretrainOutcome pretrain(const std::string& teacher_path,
                                const PolicySpec& student_spec, RunConfig cfg,
                                const std::string& out_dir,
                                const std::string& init_from = "",
                                std::ostream* progress = nullptr) {
  const Checkpoint teacher = Checkpoint::load(teacher_path);
  if (teacher.spec.act_dim != student_spec.act_dim)
    throw ValidationError("teacher and student action dimensions differ");
  if (teacher.spec.obs_dim != student_spec.obs_dim)
    throw ValidationError("teacher and student observation dimensions differ");
  student_spec.validate();
  const EnvSpec env = cfg.env_spec();
  if (cfg.noise_len < student_spec.param_count() + 1)
    throw ValidationError("noise_len must exceed the student genome length");

  const PretrainDataset ds = collect_teacher_rollouts(teacher, env, cfg.rtg_target,
                                                      cfg.seed, cfg.pretrain_episodes);
  ImitationFitness fitness(student_spec, ds);

  Vec theta;
  if (!init_from.empty()) {
    Checkpoint init = Checkpoint::load(init_from);
    if (!(init.spec == student_spec))
      throw ValidationError("init checkpoint does not match the student spec");
    theta = std::move(init.theta);
  } else {
    theta = init_params(student_spec, mix_key({cfg.seed, seed_tag::weight_init, 0}));
  }
  EsState es = EsState::make(std::move(theta), cfg.sigma, cfg.lr, cfg.weight_decay,
                             cfg.pop_pairs);
  NoiseTable table(cfg.seed, cfg.noise_len);

  std::filesystem::create_directories(out_dir);
  std::ofstream log(out_dir + "/pretrain_log.jsonl");
  PretrainOutcome out;

  auto minibatch = [&](std::int64_t iter) {
    CounterRng rng(mix_key({cfg.seed, seed_tag::pretrain_batch,
                            static_cast<std::uint64_t>(iter)}));
    std::vector<std::pair<int, int>> tuples(cfg.pretrain_batch);
    for (auto& t : tuples) t = ds.index[rng.next_below(ds.index.size())];
    return tuples;
  };

  auto log_record = [&](std::int64_t iter, double mean_fit, double pop_fit) {
    log << json{{"iter", iter}, {"mean_fit", mean_fit}, {"pop_fit_mean", pop_fit}}.dump()
        << "\n";
    out.mean_fitness.push_back(mean_fit);
    if (progress) (*progress) << "pretrain iter " << iter << " fit " << mean_fit << "\n";
  };

  log_record(0, fitness(es.theta, minibatch(1)), 0.0);

  const std::size_t len = es.theta.size();
  for (std::int64_t iter = 1; iter <= cfg.iterations; ++iter) {
    const auto tuples = minibatch(iter);
    Vec raw(2 * es.pop_pairs);
    std::vector<std::size_t> idx(raw.size());
    std::vector<int> signs(raw.size());
    for (int p = 0; p < es.pop_pairs; ++p) {
      const std::size_t at = draw_noise_index(cfg.seed, iter, p, table.size(), len);
      raw[2 * p] = fitness(perturb(es.theta, table, at, +1, es.sigma), tuples);
      raw[2 * p + 1] = fitness(perturb(es.theta, table, at, -1, es.sigma), tuples);
      idx[2 * p] = idx[2 * p + 1] = at;
      signs[2 * p] = 1;
      signs[2 * p + 1] = -1;
    }
    double pop_fit = 0;
    for (double f : raw) pop_fit += f / static_cast<double>(raw.size());
    const Vec g = estimate_update(shape_scores(raw), idx, signs, table, es.sigma, len);
    adam_step(es, g);
    log_record(iter, fitness(es.theta, tuples), pop_fit);
  }

  Checkpoint student;
  student.spec = student_spec;
  student.theta = es.theta;
  student.pretrained = true;
  out.checkpoint_path = out_dir + "/student.ckpt";
  student.save(out.checkpoint_path);
  return out;
}

}  // namespace esrl
