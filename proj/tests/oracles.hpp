// Independent reference implementations used only by tests. These re-derive
// results from the documented flat layout and plain formulas, sharing no code
// with the library paths they check.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <vector>

#include "esrl/policy_spec.hpp"

namespace oracle {

using std::size_t;
using std::vector;

// ---- dense-algebra MLP oracle ------------------------------------------------
// Walks the layout by hand: per layer, weights row-major (out x in) then biases.
inline vector<double> mlp_forward_naive(int obs_dim, const vector<int>& hidden,
                                        int act_dim, const vector<double>& params,
                                        const vector<double>& obs) {
  vector<int> dims;
  dims.push_back(obs_dim);
  for (int h : hidden) dims.push_back(h);
  dims.push_back(act_dim);
  size_t cursor = 0;
  vector<double> x = obs;
  for (size_t l = 0; l + 1 < dims.size(); ++l) {
    const int in = dims[l], out = dims[l + 1];
    vector<double> y(out, 0.0);
    for (int i = 0; i < out; ++i)
      for (int j = 0; j < in; ++j) y[i] += params[cursor + (size_t)i * in + j] * x[j];
    cursor += (size_t)out * in;
    for (int i = 0; i < out; ++i) y[i] += params[cursor + i];
    cursor += out;
    for (auto& v : y) v = std::tanh(v);
    x = y;
  }
  return x;
}

// ---- step-by-step Decision Transformer oracle ---------------------------------
// Token inputs are given explicitly: per timestep i, (rtg[i], obs[i], act[i])
// with absolute timestep time_index[i]. Returns the decoded action at the last
// state token. Full sequence, full attention, no shortcuts.
struct DtOracleConfig {
  int obs_dim, act_dim, d, heads, layers, max_ep_len;
};

inline vector<double> dt_forward_naive(const DtOracleConfig& c, const vector<double>& p,
                                       const vector<double>& rtgs,
                                       const vector<vector<double>>& obs,
                                       const vector<vector<double>>& acts,
                                       const vector<int>& time_index) {
  const int T = static_cast<int>(rtgs.size());
  const int L = 3 * T;
  const int d = c.d;
  size_t cur = 0;
  auto take = [&cur](size_t n) {
    const size_t at = cur;
    cur += n;
    return at;
  };
  auto matvec = [&p](size_t w_at, size_t b_at, int out, int in, const double* x,
                     vector<double>& y) {
    y.assign(out, 0.0);
    for (int i = 0; i < out; ++i) {
      double acc = p[b_at + i];
      for (int j = 0; j < in; ++j) acc += p[w_at + (size_t)i * in + j] * x[j];
      y[i] = acc;
    }
  };
  auto lnorm = [&p, d](size_t g_at, size_t b_at, vector<double>& x) {
    double mean = std::accumulate(x.begin(), x.end(), 0.0) / d;
    double var = 0.0;
    for (double v : x) var += (v - mean) * (v - mean);
    var /= d;
    const double inv = 1.0 / std::sqrt(var + 1e-5);
    for (int i = 0; i < d; ++i) x[i] = (x[i] - mean) * inv * p[g_at + i] + p[b_at + i];
  };

  const size_t wg = take((size_t)d * 1), bg = take(d);
  const size_t ws = take((size_t)d * c.obs_dim), bs = take(d);
  const size_t wa = take((size_t)d * c.act_dim), ba = take(d);
  const size_t pos = take((size_t)c.max_ep_len * d);

  vector<vector<double>> x(L, vector<double>(d, 0.0));
  vector<double> tmp;
  for (int t = 0; t < T; ++t) {
    matvec(wg, bg, d, 1, &rtgs[t], tmp);
    x[3 * t] = tmp;
    matvec(ws, bs, d, c.obs_dim, obs[t].data(), tmp);
    x[3 * t + 1] = tmp;
    matvec(wa, ba, d, c.act_dim, acts[t].data(), tmp);
    x[3 * t + 2] = tmp;
    for (int tok = 0; tok < 3; ++tok)
      for (int i = 0; i < d; ++i)
        x[3 * t + tok][i] += p[pos + (size_t)time_index[t] * d + i];
  }

  const int hd = d / c.heads;
  for (int blk = 0; blk < c.layers; ++blk) {
    const size_t g1 = take(d), b1 = take(d);
    const size_t wq = take((size_t)d * d), bq = take(d);
    const size_t wk = take((size_t)d * d), bk = take(d);
    const size_t wv = take((size_t)d * d), bv = take(d);
    const size_t wo = take((size_t)d * d), bo = take(d);
    const size_t g2 = take(d), b2 = take(d);
    const size_t wf1 = take((size_t)4 * d * d), bf1 = take((size_t)4 * d);
    const size_t wf2 = take((size_t)d * 4 * d), bf2 = take(d);

    vector<vector<double>> q(L), k(L), v(L), h(L);
    for (int i = 0; i < L; ++i) {
      h[i] = x[i];
      lnorm(g1, b1, h[i]);
      matvec(wq, bq, d, d, h[i].data(), q[i]);
      matvec(wk, bk, d, d, h[i].data(), k[i]);
      matvec(wv, bv, d, d, h[i].data(), v[i]);
    }
    for (int i = 0; i < L; ++i) {
      vector<double> mixed(d, 0.0);
      for (int head = 0; head < c.heads; ++head) {
        const int c0 = head * hd;
        vector<double> logits(i + 1);
        for (int j = 0; j <= i; ++j) {
          double dot = 0.0;
          for (int e = 0; e < hd; ++e) dot += q[i][c0 + e] * k[j][c0 + e];
          logits[j] = dot / std::sqrt((double)hd);
        }
        const double mx = *std::max_element(logits.begin(), logits.end());
        double z = 0.0;
        for (auto& lv : logits) {
          lv = std::exp(lv - mx);
          z += lv;
        }
        for (int j = 0; j <= i; ++j)
          for (int e = 0; e < hd; ++e) mixed[c0 + e] += logits[j] / z * v[j][c0 + e];
      }
      vector<double> o;
      matvec(wo, bo, d, d, mixed.data(), o);
      for (int e = 0; e < d; ++e) x[i][e] += o[e];
    }
    for (int i = 0; i < L; ++i) {
      vector<double> hh = x[i];
      lnorm(g2, b2, hh);
      vector<double> f1;
      matvec(wf1, bf1, 4 * d, d, hh.data(), f1);
      for (auto& e : f1) e = std::tanh(e);
      vector<double> f2;
      matvec(wf2, bf2, d, 4 * d, f1.data(), f2);
      for (int e = 0; e < d; ++e) x[i][e] += f2[e];
    }
  }

  const size_t gf = take(d), bf = take(d);
  const size_t wd_ = take((size_t)c.act_dim * d), bd_ = take((size_t)c.act_dim);
  vector<double> last = x[L - 2];  // final state token
  lnorm(gf, bf, last);
  vector<double> action;
  matvec(wd_, bd_, c.act_dim, d, last.data(), action);
  for (auto& a : action) a = std::tanh(a);
  return action;
}

// ---- centered-rank oracle ------------------------------------------------
inline vector<double> centered_ranks_naive(const vector<double>& raw) {
  const size_t n = raw.size();
  vector<double> shaped(n);
  for (size_t i = 0; i < n; ++i) {
    double below = 0.0, equal = 0.0;
    for (size_t j = 0; j < n; ++j) {
      if (raw[j] < raw[i]) below += 1.0;
      if (raw[j] == raw[i]) equal += 1.0;
    }
    const double avg_rank = below + (equal - 1.0) / 2.0;
    shaped[i] = avg_rank / (double)(n - 1) - 0.5;
  }
  return shaped;
}

// ---- brute-force k-NN novelty ------------------------------------------------
inline double novelty_naive(double qx, double qy,
                            const vector<std::pair<double, double>>& archive, int k) {
  if (archive.empty()) return std::numeric_limits<double>::infinity();
  vector<double> dist;
  dist.reserve(archive.size());
  for (auto& [x, y] : archive) dist.push_back(std::hypot(qx - x, qy - y));
  std::sort(dist.begin(), dist.end());
  const size_t kk = std::min((size_t)k, dist.size());
  double sum = 0.0;
  for (size_t i = 0; i < kk; ++i) sum += dist[i];
  return sum / (double)kk;
}

// ---- parametric axis-aligned segment intersection ----------------------------
// Wall must be axis-aligned; movement segment arbitrary. Inclusive bounds.
inline bool crosses_axis_aligned_wall(double px, double py, double qx, double qy,
                                      double wx1, double wy1, double wx2, double wy2) {
  if (wx1 == wx2) {  // vertical wall
    const double c = wx1;
    if ((px - c) * (qx - c) > 0) return false;  // both strictly one side
    if (px == qx) {                             // movement parallel
      if (px != c) return false;
      const double lo = std::min(wy1, wy2), hi = std::max(wy1, wy2);
      return std::max(py, qy) >= lo && std::min(py, qy) <= hi;
    }
    const double t = (c - px) / (qx - px);
    if (t < 0 || t > 1) return false;
    const double y = py + t * (qy - py);
    return y >= std::min(wy1, wy2) && y <= std::max(wy1, wy2);
  }
  if (wy1 == wy2) {  // horizontal wall
    const double c = wy1;
    if ((py - c) * (qy - c) > 0) return false;
    if (py == qy) {
      if (py != c) return false;
      const double lo = std::min(wx1, wx2), hi = std::max(wx1, wx2);
      return std::max(px, qx) >= lo && std::min(px, qx) <= hi;
    }
    const double t = (c - py) / (qy - py);
    if (t < 0 || t > 1) return false;
    const double x = px + t * (qx - px);
    return x >= std::min(wx1, wx2) && x <= std::max(wx1, wx2);
  }
  throw std::logic_error("oracle only handles axis-aligned walls");
}

// ---- order statistics ------------------------------------------------
// Linear-interpolation quantile on a sorted copy (the "type 7" convention).
inline double quantile_naive(vector<double> xs, double q) {
  std::sort(xs.begin(), xs.end());
  const double pos = q * (double)(xs.size() - 1);
  const size_t lo = (size_t)pos;
  if (lo + 1 >= xs.size()) return xs.back();
  const double frac = pos - (double)lo;
  return xs[lo] + (xs[lo + 1] - xs[lo]) * frac;
}

}  // namespace oracle
