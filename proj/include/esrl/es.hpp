#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include "esrl/common.hpp"
#include "esrl/noise_table.hpp"

namespace esrl {

// Search-distribution state for one mean, plus its Adam accumulator.
struct EsState {
  Vec theta;
  double sigma = 0.05;
  double lr = 0.01;
  double weight_decay = 0.0;
  int pop_pairs = 0;
  Vec adam_m, adam_v;
  std::int64_t adam_t = 0;

  static EsState make(Vec theta, double sigma, double lr, double weight_decay,
                      int pop_pairs) {
    if (sigma <= 0 || lr <= 0) throw ValidationError("sigma and lr must be positive");
    if (weight_decay < 0) throw ValidationError("weight_decay must be >= 0");
    EsState s;
    s.adam_m.assign(theta.size(), 0.0);
    s.adam_v.assign(theta.size(), 0.0);
    s.theta = std::move(theta);
    s.sigma = sigma;
    s.lr = lr;
    s.weight_decay = weight_decay;
    s.pop_pairs = pop_pairs;
    return s;
  }
};

inline Vec perturb(std::span<const double> theta, const NoiseTable& table,
                   std::size_t index, int sign, double sigma) {
  auto eps = table.slice(index, theta.size());
  Vec out(theta.size());
  const double s = sign >= 0 ? sigma : -sigma;
  for (std::size_t i = 0; i < theta.size(); ++i) out[i] = theta[i] + s * eps[i];
  return out;
}

// Centered ranks in [-0.5, 0.5]; ties get the average of their rank positions,
// so the shaped scores always sum to zero.
inline Vec shape_scores(std::span<const double> raw) {
  const std::size_t n = raw.size();
  if (n < 2) throw ValidationError("rank shaping needs at least two scores");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return raw[a] < raw[b]; });
  Vec shaped(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && raw[order[j + 1]] == raw[order[i]]) ++j;
    const double avg_rank = 0.5 * (static_cast<double>(i) + static_cast<double>(j));
    const double value = avg_rank / static_cast<double>(n - 1) - 0.5;
    for (std::size_t r = i; r <= j; ++r) shaped[order[r]] = value;
    i = j + 1;
  }
  return shaped;
}

// One mirrored pair's shaped scores, keyed by its noise slice.
struct PairTerm {
  std::size_t noise_index = 0;
  int pair_id = 0;
  double shaped_pos = 0.0;
  double shaped_neg = 0.0;
};

// g = (1/(n sigma)) sum_i shaped_i * sign_i * table[index_i : index_i + len].
// Terms are accumulated in ascending (noise_index, pair_id) order, positive
// sign before negative, so aggregation is bit-reproducible regardless of the
// order results arrived in.
inline Vec estimate_update(std::vector<PairTerm> terms, const NoiseTable& table,
                           double sigma, std::size_t genome_len) {
  if (terms.empty()) throw ValidationError("no pair terms to aggregate");
  if (sigma <= 0) throw ValidationError("sigma must be positive");
  std::sort(terms.begin(), terms.end(), [](const PairTerm& a, const PairTerm& b) {
    return a.noise_index != b.noise_index ? a.noise_index < b.noise_index
                                          : a.pair_id < b.pair_id;
  });
  Vec g(genome_len, 0.0);
  for (const auto& t : terms) {
    auto eps = table.slice(t.noise_index, genome_len);
    const double c = t.shaped_pos - t.shaped_neg;
    if (c == 0.0) continue;
    for (std::size_t i = 0; i < genome_len; ++i) g[i] += c * eps[i];
  }
  const double inv = 1.0 / (static_cast<double>(2 * terms.size()) * sigma);
  for (auto& x : g) x *= inv;
  return g;
}

// Flat-list form: entries must arrive pair-major (+ then -) with matching
// noise indices per pair.
inline Vec estimate_update(std::span<const double> shaped,
                           std::span<const std::size_t> noise_indices,
                           std::span<const int> signs, const NoiseTable& table,
                           double sigma, std::size_t genome_len) {
  const std::size_t n = shaped.size();
  if (noise_indices.size() != n || signs.size() != n)
    throw StructuralError("score/index/sign lengths disagree");
  if (n < 2 || n % 2 != 0) throw StructuralError("expected mirrored evaluations");
  std::vector<PairTerm> terms;
  terms.reserve(n / 2);
  for (std::size_t i = 0; i < n; i += 2) {
    if (noise_indices[i] != noise_indices[i + 1] || signs[i] != 1 || signs[i + 1] != -1)
      throw StructuralError("entries are not canonical mirrored pairs");
    terms.push_back({noise_indices[i], static_cast<int>(i / 2), shaped[i], shaped[i + 1]});
  }
  return estimate_update(std::move(terms), table, sigma, genome_len);
}

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEps = 1e-8;

// Ascent step with bias-corrected moments; weight decay shrinks theta before
// the step.
inline void adam_step(EsState& s, std::span<const double> gradient) {
  if (gradient.size() != s.theta.size())
    throw StructuralError("gradient length mismatch");
  if (s.weight_decay != 0.0) {
    const double keep = 1.0 - s.weight_decay;
    for (auto& t : s.theta) t *= keep;
  }
  s.adam_t += 1;
  const double bc1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(s.adam_t));
  const double bc2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(s.adam_t));
  for (std::size_t i = 0; i < s.theta.size(); ++i) {
    const double g = gradient[i];
    s.adam_m[i] = kAdamBeta1 * s.adam_m[i] + (1.0 - kAdamBeta1) * g;
    s.adam_v[i] = kAdamBeta2 * s.adam_v[i] + (1.0 - kAdamBeta2) * g * g;
    const double mh = s.adam_m[i] / bc1;
    const double vh = s.adam_v[i] / bc2;
    s.theta[i] += s.lr * mh / (std::sqrt(vh) + kAdamEps);
  }
}

}  // namespace esrl
