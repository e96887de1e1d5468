#pragma once

#include <cmath>
#include <span>

#include "esrl/common.hpp"
#include "esrl/weights.hpp"

namespace esrl {

// Affine stack with tanh after every layer, output included, so each action
// component lands in (-1, 1).
inline void mlp_forward_ws(const MlpLayout& lo, std::span<const double> params,
                           std::span<const double> obs, std::span<double> action_out,
                           Vec& buf_a, Vec& buf_b) {
  buf_a.assign(obs.begin(), obs.end());
  Vec* in = &buf_a;
  Vec* out = &buf_b;
  for (const auto& l : lo.layers) {
    out->resize(l.out);
    const double* w = params.data() + l.w;
    const double* b = params.data() + l.b;
    for (int i = 0; i < l.out; ++i) {
      double acc = b[i];
      const double* row = w + static_cast<std::size_t>(i) * l.in;
      for (int j = 0; j < l.in; ++j) acc += row[j] * (*in)[j];
      (*out)[i] = std::tanh(acc);
    }
    std::swap(in, out);
  }
  for (std::size_t i = 0; i < action_out.size(); ++i) action_out[i] = (*in)[i];
}

inline Vec mlp_forward(const PolicySpec& spec, std::span<const double> params,
                       std::span<const double> obs) {
  const MlpLayout lo = mlp_layout(spec);
  if (params.size() != lo.total) throw StructuralError("parameter vector length mismatch");
  if (obs.size() != static_cast<std::size_t>(spec.obs_dim))
    throw StructuralError("observation dim mismatch");
  require_finite(obs, "observation");
  Vec action(spec.act_dim), a, b;
  mlp_forward_ws(lo, params, obs, action, a, b);
  return action;
}

}  // namespace esrl
