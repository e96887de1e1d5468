#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "esrl/common.hpp"
#include "esrl/policy_spec.hpp"
#include "esrl/rng.hpp"

namespace esrl {

// Structured weight containers. Matrices are row-major, shape out x in; the
// flat layout is layer-major with weights before biases (docs/formats.md).

struct LinearLayer {
  int out = 0;
  int in = 0;
  Vec w;  // out*in, row-major
  Vec b;  // out

  static LinearLayer zeros(int out, int in) {
    LinearLayer l;
    l.out = out;
    l.in = in;
    l.w.assign(static_cast<std::size_t>(out) * in, 0.0);
    l.b.assign(out, 0.0);
    return l;
  }
};

struct LayerNormParams {
  Vec gamma;  // ones at init
  Vec beta;   // zeros at init

  static LayerNormParams identity(int dim) {
    LayerNormParams p;
    p.gamma.assign(dim, 1.0);
    p.beta.assign(dim, 0.0);
    return p;
  }
};

struct MlpWeights {
  std::vector<LinearLayer> layers;
};

struct DtBlockWeights {
  LayerNormParams ln1;
  LinearLayer query, key, value, proj;
  LayerNormParams ln2;
  LinearLayer ff_in, ff_out;
};

struct DtWeights {
  LinearLayer embed_rtg, embed_obs, embed_act;
  Vec positional;  // dt_max_ep_len x dt_embed_dim, row-major
  std::vector<DtBlockWeights> blocks;
  LayerNormParams ln_final;
  LinearLayer decoder;
};

// ---- Flat-vector offsets -------------------------------------------------

struct MlpLayout {
  struct Layer {
    std::size_t w = 0, b = 0;
    int in = 0, out = 0;
  };
  std::vector<Layer> layers;
  std::size_t total = 0;
};

inline MlpLayout mlp_layout(const PolicySpec& spec) {
  spec.validate();
  MlpLayout lo;
  std::size_t off = 0;
  int in = spec.obs_dim;
  std::vector<int> outs = spec.mlp_hidden;
  outs.push_back(spec.act_dim);
  for (int out : outs) {
    MlpLayout::Layer l;
    l.in = in;
    l.out = out;
    l.w = off;
    off += static_cast<std::size_t>(out) * in;
    l.b = off;
    off += out;
    lo.layers.push_back(l);
    in = out;
  }
  lo.total = off;
  return lo;
}

struct DtLayout {
  struct Lin {
    std::size_t w = 0, b = 0;
    int out = 0, in = 0;
  };
  struct Ln {
    std::size_t gamma = 0, beta = 0;
  };
  struct Block {
    Ln ln1;
    Lin query, key, value, proj;
    Ln ln2;
    Lin ff_in, ff_out;
  };

  int d = 0, heads = 0, head_dim = 0, ctx = 0, max_t = 0, obs = 0, act = 0, ff = 0;
  Lin embed_rtg, embed_obs, embed_act;
  std::size_t positional = 0;
  std::vector<Block> blocks;
  Ln ln_final;
  Lin decoder;
  std::size_t total = 0;

  std::size_t positional_row(int t) const {
    return positional + static_cast<std::size_t>(t) * d;
  }
};

inline DtLayout dt_layout(const PolicySpec& spec) {
  spec.validate();
  if (spec.kind != PolicyKind::DecisionTransformer)
    throw StructuralError("dt_layout requires a dt spec");
  DtLayout lo;
  lo.d = spec.dt_embed_dim;
  lo.heads = spec.dt_heads;
  lo.head_dim = lo.d / lo.heads;
  lo.ctx = spec.dt_context_len;
  lo.max_t = spec.dt_max_ep_len;
  lo.obs = spec.obs_dim;
  lo.act = spec.act_dim;
  lo.ff = 4 * lo.d;

  std::size_t off = 0;
  auto lin = [&off](int out, int in) {
    DtLayout::Lin l;
    l.out = out;
    l.in = in;
    l.w = off;
    off += static_cast<std::size_t>(out) * in;
    l.b = off;
    off += out;
    return l;
  };
  auto ln = [&off](int dim) {
    DtLayout::Ln l;
    l.gamma = off;
    off += dim;
    l.beta = off;
    off += dim;
    return l;
  };

  lo.embed_rtg = lin(lo.d, 1);
  lo.embed_obs = lin(lo.d, lo.obs);
  lo.embed_act = lin(lo.d, lo.act);
  lo.positional = off;
  off += static_cast<std::size_t>(lo.max_t) * lo.d;
  for (int b = 0; b < spec.dt_layers; ++b) {
    DtLayout::Block blk;
    blk.ln1 = ln(lo.d);
    blk.query = lin(lo.d, lo.d);
    blk.key = lin(lo.d, lo.d);
    blk.value = lin(lo.d, lo.d);
    blk.proj = lin(lo.d, lo.d);
    blk.ln2 = ln(lo.d);
    blk.ff_in = lin(lo.ff, lo.d);
    blk.ff_out = lin(lo.d, lo.ff);
    lo.blocks.push_back(blk);
  }
  lo.ln_final = ln(lo.d);
  lo.decoder = lin(lo.act, lo.d);
  lo.total = off;
  return lo;
}

// ---- vectorize / devectorize ----------------------------------------------

namespace detail {

inline void append_linear(const LinearLayer& l, int want_out, int want_in, Vec& out,
                          const char* what) {
  if (l.out != want_out || l.in != want_in ||
      l.w.size() != static_cast<std::size_t>(want_out) * want_in ||
      l.b.size() != static_cast<std::size_t>(want_out))
    throw StructuralError(std::string("weight shape mismatch in ") + what);
  out.insert(out.end(), l.w.begin(), l.w.end());
  out.insert(out.end(), l.b.begin(), l.b.end());
}

inline void append_ln(const LayerNormParams& p, int dim, Vec& out, const char* what) {
  if (p.gamma.size() != static_cast<std::size_t>(dim) ||
      p.beta.size() != static_cast<std::size_t>(dim))
    throw StructuralError(std::string("layer norm shape mismatch in ") + what);
  out.insert(out.end(), p.gamma.begin(), p.gamma.end());
  out.insert(out.end(), p.beta.begin(), p.beta.end());
}

struct Reader {
  std::span<const double> v;
  std::size_t pos = 0;

  Vec take(std::size_t n) {
    if (pos + n > v.size()) throw StructuralError("parameter vector too short");
    Vec out(v.begin() + pos, v.begin() + pos + n);
    pos += n;
    return out;
  }
  LinearLayer take_linear(int out, int in) {
    LinearLayer l;
    l.out = out;
    l.in = in;
    l.w = take(static_cast<std::size_t>(out) * in);
    l.b = take(out);
    return l;
  }
  LayerNormParams take_ln(int dim) {
    LayerNormParams p;
    p.gamma = take(dim);
    p.beta = take(dim);
    return p;
  }
};

}  // namespace detail

inline Vec vectorize(const PolicySpec& spec, const MlpWeights& w) {
  const MlpLayout lo = mlp_layout(spec);
  if (w.layers.size() != lo.layers.size())
    throw StructuralError("mlp layer count mismatch");
  Vec out;
  out.reserve(lo.total);
  for (std::size_t i = 0; i < lo.layers.size(); ++i)
    detail::append_linear(w.layers[i], lo.layers[i].out, lo.layers[i].in, out, "mlp layer");
  return out;
}

inline Vec vectorize(const PolicySpec& spec, const DtWeights& w) {
  const DtLayout lo = dt_layout(spec);
  if (w.blocks.size() != lo.blocks.size())
    throw StructuralError("dt block count mismatch");
  if (w.positional.size() != static_cast<std::size_t>(lo.max_t) * lo.d)
    throw StructuralError("positional table shape mismatch");
  Vec out;
  out.reserve(lo.total);
  detail::append_linear(w.embed_rtg, lo.d, 1, out, "rtg embedding");
  detail::append_linear(w.embed_obs, lo.d, lo.obs, out, "obs embedding");
  detail::append_linear(w.embed_act, lo.d, lo.act, out, "act embedding");
  out.insert(out.end(), w.positional.begin(), w.positional.end());
  for (const auto& blk : w.blocks) {
    detail::append_ln(blk.ln1, lo.d, out, "ln1");
    detail::append_linear(blk.query, lo.d, lo.d, out, "query");
    detail::append_linear(blk.key, lo.d, lo.d, out, "key");
    detail::append_linear(blk.value, lo.d, lo.d, out, "value");
    detail::append_linear(blk.proj, lo.d, lo.d, out, "proj");
    detail::append_ln(blk.ln2, lo.d, out, "ln2");
    detail::append_linear(blk.ff_in, lo.ff, lo.d, out, "ff_in");
    detail::append_linear(blk.ff_out, lo.d, lo.ff, out, "ff_out");
  }
  detail::append_ln(w.ln_final, lo.d, out, "ln_final");
  detail::append_linear(w.decoder, lo.act, lo.d, out, "decoder");
  return out;
}

inline MlpWeights devectorize_mlp(const PolicySpec& spec, std::span<const double> v) {
  const MlpLayout lo = mlp_layout(spec);
  if (v.size() != lo.total)
    throw StructuralError("parameter vector length " + std::to_string(v.size()) +
                          " != expected " + std::to_string(lo.total));
  detail::Reader r{v};
  MlpWeights w;
  for (const auto& l : lo.layers) w.layers.push_back(r.take_linear(l.out, l.in));
  return w;
}

inline DtWeights devectorize_dt(const PolicySpec& spec, std::span<const double> v) {
  const DtLayout lo = dt_layout(spec);
  if (v.size() != lo.total)
    throw StructuralError("parameter vector length " + std::to_string(v.size()) +
                          " != expected " + std::to_string(lo.total));
  detail::Reader r{v};
  DtWeights w;
  w.embed_rtg = r.take_linear(lo.d, 1);
  w.embed_obs = r.take_linear(lo.d, lo.obs);
  w.embed_act = r.take_linear(lo.d, lo.act);
  w.positional = r.take(static_cast<std::size_t>(lo.max_t) * lo.d);
  for (std::size_t b = 0; b < lo.blocks.size(); ++b) {
    DtBlockWeights blk;
    blk.ln1 = r.take_ln(lo.d);
    blk.query = r.take_linear(lo.d, lo.d);
    blk.key = r.take_linear(lo.d, lo.d);
    blk.value = r.take_linear(lo.d, lo.d);
    blk.proj = r.take_linear(lo.d, lo.d);
    blk.ln2 = r.take_ln(lo.d);
    blk.ff_in = r.take_linear(lo.ff, lo.d);
    blk.ff_out = r.take_linear(lo.d, lo.ff);
    w.blocks.push_back(std::move(blk));
  }
  w.ln_final = r.take_ln(lo.d);
  w.decoder = r.take_linear(lo.act, lo.d);
  return w;
}

// ---- Random initialization --------------------------------------------------

namespace detail {

inline LinearLayer init_linear(int out, int in, CounterRng& rng) {
  LinearLayer l = LinearLayer::zeros(out, in);
  const double scale = 1.0 / std::sqrt(static_cast<double>(in));
  for (auto& x : l.w) x = scale * rng.next_normal();
  return l;  // biases zero
}

}  // namespace detail

// Deterministic init: fan-in scaled normals for matrices, zero biases,
// small normals for the positional table, identity layer norms.
inline Vec init_params(const PolicySpec& spec, std::uint64_t key) {
  CounterRng rng(key);
  if (spec.kind == PolicyKind::Mlp) {
    const MlpLayout lo = mlp_layout(spec);
    MlpWeights w;
    for (const auto& l : lo.layers) w.layers.push_back(detail::init_linear(l.out, l.in, rng));
    return vectorize(spec, w);
  }
  const DtLayout lo = dt_layout(spec);
  DtWeights w;
  w.embed_rtg = detail::init_linear(lo.d, 1, rng);
  w.embed_obs = detail::init_linear(lo.d, lo.obs, rng);
  w.embed_act = detail::init_linear(lo.d, lo.act, rng);
  w.positional.resize(static_cast<std::size_t>(lo.max_t) * lo.d);
  for (auto& x : w.positional) x = 0.02 * rng.next_normal();
  for (std::size_t b = 0; b < lo.blocks.size(); ++b) {
    DtBlockWeights blk;
    blk.ln1 = LayerNormParams::identity(lo.d);
    blk.query = detail::init_linear(lo.d, lo.d, rng);
    blk.key = detail::init_linear(lo.d, lo.d, rng);
    blk.value = detail::init_linear(lo.d, lo.d, rng);
    blk.proj = detail::init_linear(lo.d, lo.d, rng);
    blk.ln2 = LayerNormParams::identity(lo.d);
    blk.ff_in = detail::init_linear(lo.ff, lo.d, rng);
    blk.ff_out = detail::init_linear(lo.d, lo.ff, rng);
    w.blocks.push_back(std::move(blk));
  }
  w.ln_final = LayerNormParams::identity(lo.d);
  w.decoder = detail::init_linear(lo.act, lo.d, rng);
  return vectorize(spec, w);
}

}  // namespace esrl
