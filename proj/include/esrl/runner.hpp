#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <span>

#include "esrl/decision_transformer.hpp"
#include "esrl/env.hpp"
#include "esrl/mlp.hpp"
#include "esrl/normalizer.hpp"
#include "esrl/novelty.hpp"
#include "esrl/policy_spec.hpp"

namespace esrl {

inline std::uint64_t episode_seed(std::uint64_t run_seed, std::int64_t iteration,
                                  int pair_id, int sign) {
  return mix_key({run_seed, seed_tag::episode, static_cast<std::uint64_t>(iteration),
                  static_cast<std::uint64_t>(pair_id), sign > 0 ? 1ull : 2ull});
}

inline std::uint64_t mean_eval_seed(std::uint64_t run_seed, std::int64_t iteration,
                                    int episode) {
  return mix_key({run_seed, seed_tag::mean_eval, static_cast<std::uint64_t>(iteration),
                  static_cast<std::uint64_t>(episode)});
}

struct EpisodeResult {
  double ret = 0.0;  // scaled units (raw return / reward_scale)
  int steps = 0;
  BehaviorCharacteristic bc;
  double distance_traveled = 0.0;  // displacement from the episode start
};

struct EvalSummary {
  double mean_return = 0.0;
  double mean_steps = 0.0;
  double mean_distance = 0.0;
  BehaviorCharacteristic mean_bc;
  std::vector<EpisodeResult> episodes;
};

// Runs episodes for one policy architecture in one environment, reusing
// forward-pass workspaces across calls.
class PolicyEvaluator {
 public:
  PolicyEvaluator(PolicySpec spec, EnvSpec env, std::optional<ObsNormalizer> norm,
                  double rtg_target)
      : spec_(std::move(spec)),
        env_(std::move(env)),
        norm_(std::move(norm)),
        rtg_target_(rtg_target) {
    spec_.validate();
    env_.validate();
    if (spec_.obs_dim != EnvSpec::kObsDim || spec_.act_dim != EnvSpec::kActDim)
      throw ValidationError("policy dims do not match the environment");
    if (norm_ && norm_->mean.size() != static_cast<std::size_t>(spec_.obs_dim))
      throw ValidationError("normalizer dim does not match the observation");
    if (spec_.kind == PolicyKind::Mlp) {
      mlp_lo_ = mlp_layout(spec_);
    } else {
      dt_lo_ = dt_layout(spec_);
      if (env_.max_steps > spec_.dt_max_ep_len)
        throw ValidationError("dt_max_ep_len must cover max_steps");
    }
  }

  const PolicySpec& spec() const { return spec_; }
  const EnvSpec& env() const { return env_; }

  // Called once per step with the raw observation the policy acted on, the
  // action it chose, and the raw reward.
  using StepHook = std::function<void(const Vec&, const Vec&, double)>;

  EpisodeResult run_episode(std::span<const double> params, std::uint64_t seed,
                            std::ostream* traj = nullptr, const StepHook* hook = nullptr) {
    if (params.size() != (spec_.kind == PolicyKind::Mlp ? mlp_lo_.total : dt_lo_.total))
      throw StructuralError("parameter vector length mismatch");
    Vec obs_raw(EnvSpec::kObsDim);
    EnvState st = env_reset(env_, seed, obs_raw);
    Vec pobs = normalized(obs_raw);
    Vec action(EnvSpec::kActDim);
    DtContext ctx;
    const bool dt = spec_.kind == PolicyKind::DecisionTransformer;
    if (dt) ctx = DtContext::start(spec_, rtg_target_, pobs);

    double total_raw = 0.0;
    Vec obs_before;
    while (!st.done) {
      if (hook) obs_before = obs_raw;
      if (dt) {
        dt_forward_ws(spec_, dt_lo_, params, ctx, pobs, dt_ws_, action);
      } else {
        mlp_forward_ws(mlp_lo_, params, pobs, action, mlp_a_, mlp_b_);
      }
      const double reward = env_step(env_, st, action, obs_raw);
      total_raw += reward;
      if (hook) (*hook)(obs_before, action, reward);
      if (traj)
        (*traj) << st.steps << " " << format_double(st.x) << " " << format_double(st.y)
                << " " << format_double(reward) << "\n";
      pobs = normalized(obs_raw);
      if (dt) update_context(spec_, ctx, action, reward / env_.reward_scale, pobs);
    }

    EpisodeResult r;
    r.ret = total_raw / env_.reward_scale;
    r.steps = st.steps;
    r.bc = {st.x, st.y};
    r.distance_traveled = std::hypot(st.x - st.ep_start_x, st.y - st.ep_start_y);
    return r;
  }

  EvalSummary evaluate(std::span<const double> params,
                       std::span<const std::uint64_t> seeds) {
    if (seeds.empty()) throw ValidationError("evaluate needs at least one episode");
    EvalSummary s;
    for (auto seed : seeds) {
      EpisodeResult r = run_episode(params, seed);
      s.mean_return += r.ret;
      s.mean_steps += static_cast<double>(r.steps);
      s.mean_distance += r.distance_traveled;
      s.mean_bc.x += r.bc.x;
      s.mean_bc.y += r.bc.y;
      s.episodes.push_back(r);
    }
    const double n = static_cast<double>(seeds.size());
    s.mean_return /= n;
    s.mean_steps /= n;
    s.mean_distance /= n;
    s.mean_bc.x /= n;
    s.mean_bc.y /= n;
    return s;
  }

 private:
  Vec normalized(const Vec& raw) const { return norm_ ? norm_->apply(raw) : raw; }

  PolicySpec spec_;
  EnvSpec env_;
  std::optional<ObsNormalizer> norm_;
  double rtg_target_;
  MlpLayout mlp_lo_;
  DtLayout dt_lo_;
  DtWorkspace dt_ws_;
  Vec mlp_a_, mlp_b_;
};

inline EpisodeResult run_episode(const PolicySpec& spec, std::span<const double> params,
                                 const std::optional<ObsNormalizer>& norm,
                                 const EnvSpec& env, std::uint64_t seed, double rtg_target,
                                 std::ostream* traj = nullptr) {
  PolicyEvaluator ev(spec, env, norm, rtg_target);
  return ev.run_episode(params, seed, traj);
}

// Raw observations gathered by a uniform-random policy; the reference batch
// for the frozen observation normalizer.
inline std::vector<Vec> collect_reference_observations(const EnvSpec& env,
                                                       std::uint64_t run_seed,
                                                       std::size_t count) {
  std::vector<Vec> rows;
  rows.reserve(count);
  std::uint64_t episode = 0;
  while (rows.size() < count) {
    CounterRng rng(mix_key({run_seed, seed_tag::normalizer_fit, episode}));
    Vec obs(EnvSpec::kObsDim);
    EnvState st = env_reset(env, rng.next_u64(), obs);
    rows.push_back(obs);
    Vec action(EnvSpec::kActDim);
    while (!st.done && rows.size() < count) {
      action[0] = rng.next_uniform(-1.0, 1.0);
      action[1] = rng.next_uniform(-1.0, 1.0);
      env_step(env, st, action, obs);
      rows.push_back(obs);
    }
    episode += 1;
  }
  return rows;
}

}  // namespace esrl
