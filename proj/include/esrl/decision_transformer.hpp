#pragma once

#include <cmath>
#include <deque>
#include <span>

#include "esrl/attention.hpp"
#include "esrl/common.hpp"
#include "esrl/weights.hpp"

namespace esrl {

// One timestep of history: return-to-go (scaled units), the observation the
// policy saw, and the action taken (zero placeholder until update_context
// fills it in).
struct DtTriplet {
  double rtg = 0.0;
  Vec obs;
  Vec act;
};

// Sliding window of up to K timesteps. The newest triplet is the current
// timestep: its action slot holds the zero placeholder.
struct DtContext {
  std::deque<DtTriplet> triplets;
  double current_rtg = 0.0;
  int timestep = 0;  // absolute timestep of the newest triplet

  static DtContext start(const PolicySpec& spec, double rtg_target,
                         std::span<const double> first_obs) {
    if (first_obs.size() != static_cast<std::size_t>(spec.obs_dim))
      throw StructuralError("observation dim mismatch");
    DtContext ctx;
    ctx.current_rtg = rtg_target;
    ctx.timestep = 0;
    ctx.triplets.push_back(
        {rtg_target, Vec(first_obs.begin(), first_obs.end()), Vec(spec.act_dim, 0.0)});
    return ctx;
  }
};

// Records the executed action, advances the return-to-go recursion
// (g_{t+1} = g_t - r_t), appends the next timestep and trims the window.
inline void update_context(const PolicySpec& spec, DtContext& ctx,
                           std::span<const double> executed_action, double reward,
                           std::span<const double> next_obs) {
  if (!std::isfinite(reward)) throw InputError("reward: non-finite value");
  if (executed_action.size() != static_cast<std::size_t>(spec.act_dim) ||
      next_obs.size() != static_cast<std::size_t>(spec.obs_dim))
    throw StructuralError("context update dim mismatch");
  if (ctx.triplets.empty()) throw StructuralError("context has no current triplet");
  ctx.triplets.back().act.assign(executed_action.begin(), executed_action.end());
  const double new_rtg = ctx.current_rtg - reward;
  ctx.triplets.push_back(
      {new_rtg, Vec(next_obs.begin(), next_obs.end()), Vec(spec.act_dim, 0.0)});
  while (ctx.triplets.size() > static_cast<std::size_t>(spec.dt_context_len))
    ctx.triplets.pop_front();
  ctx.current_rtg = new_rtg;
  ctx.timestep += 1;
}

struct DtWorkspace {
  Vec x;       // L*d residual stream
  Vec h;       // L*d pre-norm buffer
  Vec k, v;    // L*d
  Vec q;       // d
  Vec att;     // d
  Vec logits;  // L
  Vec ff;      // 4d
  Vec norm;    // d
};

namespace detail {

inline void affine(std::span<const double> params, const DtLayout::Lin& lin,
                   const double* in, double* out) {
  const double* w = params.data() + lin.w;
  const double* b = params.data() + lin.b;
  for (int i = 0; i < lin.out; ++i) {
    double acc = b[i];
    const double* row = w + static_cast<std::size_t>(i) * lin.in;
    for (int j = 0; j < lin.in; ++j) acc += row[j] * in[j];
    out[i] = acc;
  }
}

inline void check_dt_inputs(const PolicySpec& spec, const DtLayout& lo,
                            std::span<const double> params, const DtContext& ctx,
                            std::span<const double> current_obs) {
  if (params.size() != lo.total) throw StructuralError("parameter vector length mismatch");
  if (current_obs.size() != static_cast<std::size_t>(spec.obs_dim))
    throw StructuralError("observation dim mismatch");
  require_finite(current_obs, "observation");
  if (ctx.triplets.empty()) throw StructuralError("empty context");
  if (ctx.triplets.size() > static_cast<std::size_t>(lo.ctx))
    throw StructuralError("context length exceeds K");
  if (ctx.timestep >= lo.max_t)
    throw StructuralError("timestep " + std::to_string(ctx.timestep) +
                          " outside positional table of " + std::to_string(lo.max_t));
}

// Token embeddings for the (g, s, a) sequence. All three tokens of a timestep
// receive the same positional row. The newest timestep uses (current_rtg,
// current_obs) and the zero action placeholder.
inline void embed_tokens(const DtLayout& lo, std::span<const double> params,
                         const DtContext& ctx, std::span<const double> current_obs,
                         bool add_positions, Vec& out) {
  const int steps = static_cast<int>(ctx.triplets.size());
  const int d = lo.d;
  out.assign(static_cast<std::size_t>(3 * steps) * d, 0.0);
  for (int i = 0; i < steps; ++i) {
    const bool newest = (i == steps - 1);
    const DtTriplet& tr = ctx.triplets[i];
    const double rtg = newest ? ctx.current_rtg : tr.rtg;
    const double* obs = newest ? current_obs.data() : tr.obs.data();
    double* tok_g = out.data() + static_cast<std::size_t>(3 * i) * d;
    double* tok_s = tok_g + d;
    double* tok_a = tok_s + d;
    affine(params, lo.embed_rtg, &rtg, tok_g);
    affine(params, lo.embed_obs, obs, tok_s);
    affine(params, lo.embed_act, tr.act.data(), tok_a);
    if (add_positions) {
      const int t = ctx.timestep - (steps - 1 - i);
      const double* pos = params.data() + lo.positional_row(t);
      for (int c = 0; c < d; ++c) {
        tok_g[c] += pos[c];
        tok_s[c] += pos[c];
        tok_a[c] += pos[c];
      }
    }
  }
}

// Runs the causal blocks over an embedded sequence and decodes the requested
// state positions. When decode_all is false only the final state token is
// decoded, and the last block restricts its per-position work to that token
// (identical arithmetic, so the two modes agree bitwise where they overlap).
inline void dt_run(const DtLayout& lo, std::span<const double> params, int steps,
                   bool decode_all, DtWorkspace& ws, Vec& actions_out) {
  const int d = lo.d;
  const int rows = 3 * steps;
  const int decode_pos = 3 * (steps - 1) + 1;
  const int n_blocks = static_cast<int>(lo.blocks.size());
  const double scale = 1.0 / std::sqrt(static_cast<double>(lo.head_dim));

  ws.h.resize(ws.x.size());
  ws.k.resize(ws.x.size());
  ws.v.resize(ws.x.size());
  ws.q.resize(d);
  ws.att.resize(d);
  ws.logits.resize(rows);
  ws.ff.resize(lo.ff);
  ws.norm.resize(d);

  auto row = [d](Vec& m, int p) { return m.data() + static_cast<std::size_t>(p) * d; };

  for (int b = 0; b < n_blocks; ++b) {
    const auto& blk = lo.blocks[b];
    const bool full = decode_all || b + 1 < n_blocks;
    for (int p = 0; p < rows; ++p) {
      layer_norm({row(ws.x, p), (std::size_t)d},
                 {params.data() + blk.ln1.gamma, (std::size_t)d},
                 {params.data() + blk.ln1.beta, (std::size_t)d},
                 {row(ws.h, p), (std::size_t)d});
      affine(params, blk.key, row(ws.h, p), row(ws.k, p));
      affine(params, blk.value, row(ws.h, p), row(ws.v, p));
    }
    for (int p = full ? 0 : decode_pos; p < rows; ++p) {
      affine(params, blk.query, row(ws.h, p), ws.q.data());
      for (int head = 0; head < lo.heads; ++head) {
        const int c0 = head * lo.head_dim;
        for (int j = 0; j <= p; ++j) {
          const double* kj = row(ws.k, j) + c0;
          double dot = 0.0;
          for (int c = 0; c < lo.head_dim; ++c) dot += ws.q[c0 + c] * kj[c];
          ws.logits[j] = dot * scale;
        }
        softmax_inplace(std::span<double>(ws.logits.data(), p + 1));
        for (int c = 0; c < lo.head_dim; ++c) ws.att[c0 + c] = 0.0;
        for (int j = 0; j <= p; ++j) {
          const double w = ws.logits[j];
          const double* vj = row(ws.v, j) + c0;
          for (int c = 0; c < lo.head_dim; ++c) ws.att[c0 + c] += w * vj[c];
        }
      }
      affine(params, blk.proj, ws.att.data(), ws.norm.data());
      double* xp = row(ws.x, p);
      for (int c = 0; c < d; ++c) xp[c] += ws.norm[c];
      if (!full) break;
    }
    for (int p = full ? 0 : decode_pos; p < rows; ++p) {
      double* xp = row(ws.x, p);
      layer_norm({xp, (std::size_t)d}, {params.data() + blk.ln2.gamma, (std::size_t)d},
                 {params.data() + blk.ln2.beta, (std::size_t)d},
                 {ws.norm.data(), (std::size_t)d});
      affine(params, blk.ff_in, ws.norm.data(), ws.ff.data());
      for (int c = 0; c < lo.ff; ++c) ws.ff[c] = std::tanh(ws.ff[c]);
      affine(params, blk.ff_out, ws.ff.data(), ws.norm.data());
      for (int c = 0; c < d; ++c) xp[c] += ws.norm[c];
      if (!full) break;
    }
  }

  const int first = decode_all ? 0 : steps - 1;
  actions_out.resize(static_cast<std::size_t>(steps - first) * lo.act);
  for (int t = first; t < steps; ++t) {
    layer_norm({row(ws.x, 3 * t + 1), (std::size_t)d},
               {params.data() + lo.ln_final.gamma, (std::size_t)d},
               {params.data() + lo.ln_final.beta, (std::size_t)d},
               {ws.norm.data(), (std::size_t)d});
    double* act = actions_out.data() + static_cast<std::size_t>(t - first) * lo.act;
    affine(params, lo.decoder, ws.norm.data(), act);
    for (int c = 0; c < lo.act; ++c) act[c] = std::tanh(act[c]);
  }
}

}  // namespace detail

// Decodes the next action from the output token aligned with the last state.
inline void dt_forward_ws(const PolicySpec& spec, const DtLayout& lo,
                          std::span<const double> params, const DtContext& ctx,
                          std::span<const double> current_obs, DtWorkspace& ws,
                          Vec& action_out) {
  detail::check_dt_inputs(spec, lo, params, ctx, current_obs);
  detail::embed_tokens(lo, params, ctx, current_obs, true, ws.x);
  detail::dt_run(lo, params, static_cast<int>(ctx.triplets.size()), false, ws, action_out);
}

inline Vec dt_forward(const PolicySpec& spec, std::span<const double> params,
                      const DtContext& ctx, std::span<const double> current_obs) {
  const DtLayout lo = dt_layout(spec);
  DtWorkspace ws;
  Vec action;
  dt_forward_ws(spec, lo, params, ctx, current_obs, ws, action);
  return action;
}

// Decoded action at every state token (one row per timestep in the window).
inline Vec dt_forward_all(const PolicySpec& spec, std::span<const double> params,
                          const DtContext& ctx, std::span<const double> current_obs) {
  const DtLayout lo = dt_layout(spec);
  detail::check_dt_inputs(spec, lo, params, ctx, current_obs);
  DtWorkspace ws;
  detail::embed_tokens(lo, params, ctx, current_obs, true, ws.x);
  Vec actions;
  detail::dt_run(lo, params, static_cast<int>(ctx.triplets.size()), true, ws, actions);
  return actions;
}

// Token embeddings exposed for inspection (tests assert the shared-positional
// property on these).
inline Vec dt_embed_tokens(const PolicySpec& spec, std::span<const double> params,
                           const DtContext& ctx, std::span<const double> current_obs,
                           bool add_positions) {
  const DtLayout lo = dt_layout(spec);
  detail::check_dt_inputs(spec, lo, params, ctx, current_obs);
  Vec out;
  detail::embed_tokens(lo, params, ctx, current_obs, add_positions, out);
  return out;
}

}  // namespace esrl
