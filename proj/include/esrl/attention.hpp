#pragma once

#include <cmath>
#include <span>

#include "esrl/common.hpp"

namespace esrl {

inline void softmax_inplace(std::span<double> logits) {
  double mx = logits[0];
  for (double v : logits) mx = std::max(mx, v);
  double sum = 0.0;
  for (auto& v : logits) {
    v = std::exp(v - mx);
    sum += v;
  }
  for (auto& v : logits) v /= sum;
}

// Scaled dot-product attention over L rows of width d (row-major). With the
// causal flag, position i places weight exactly 0 on positions j > i.
inline void attention(std::span<const double> queries, std::span<const double> keys,
                      std::span<const double> values, int rows, int d, bool causal,
                      std::span<double> out) {
  const std::size_t need = static_cast<std::size_t>(rows) * d;
  if (queries.size() != need || keys.size() != need || values.size() != need ||
      out.size() != need)
    throw StructuralError("attention input shape mismatch");
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  Vec logits(rows);
  for (int i = 0; i < rows; ++i) {
    const int limit = causal ? i + 1 : rows;
    const double* qi = queries.data() + static_cast<std::size_t>(i) * d;
    for (int j = 0; j < limit; ++j) {
      const double* kj = keys.data() + static_cast<std::size_t>(j) * d;
      double dot = 0.0;
      for (int c = 0; c < d; ++c) dot += qi[c] * kj[c];
      logits[j] = dot * scale;
    }
    softmax_inplace(std::span<double>(logits.data(), limit));
    double* oi = out.data() + static_cast<std::size_t>(i) * d;
    for (int c = 0; c < d; ++c) oi[c] = 0.0;
    for (int j = 0; j < limit; ++j) {
      const double w = logits[j];
      const double* vj = values.data() + static_cast<std::size_t>(j) * d;
      for (int c = 0; c < d; ++c) oi[c] += w * vj[c];
    }
  }
}

inline constexpr double kLayerNormEps = 1e-5;

inline void layer_norm(std::span<const double> x, std::span<const double> gamma,
                       std::span<const double> beta, std::span<double> out) {
  const std::size_t d = x.size();
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(d);
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= static_cast<double>(d);
  const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
  for (std::size_t i = 0; i < d; ++i) out[i] = (x[i] - mean) * inv * gamma[i] + beta[i];
}

}  // namespace esrl
