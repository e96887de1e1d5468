#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "esrl/common.hpp"

namespace esrl {

// What an agent did: its final position in the arena.
struct BehaviorCharacteristic {
  double x = 0.0;
  double y = 0.0;
};

inline double bc_distance(const BehaviorCharacteristic& a, const BehaviorCharacteristic& b) {
  return std::hypot(a.x - b.x, a.y - b.y);
}

// Append-only store of the behaviors of past distribution means.
struct Archive {
  std::vector<BehaviorCharacteristic> entries;
  int k = 10;
  int version = 0;  // bumps on every append

  void add(const BehaviorCharacteristic& bc) {
    if (!std::isfinite(bc.x) || !std::isfinite(bc.y))
      throw InputError("behavior characteristic: non-finite value");
    entries.push_back(bc);
    version += 1;
  }

  // Mean distance to the min(k, size) nearest entries; +infinity when empty.
  // Distances are summed in ascending order so the value matches a full-sort
  // oracle exactly.
  double novelty(const BehaviorCharacteristic& bc) const {
    if (entries.empty()) return std::numeric_limits<double>::infinity();
    const std::size_t kk = std::min(static_cast<std::size_t>(k), entries.size());
    std::vector<double> dist(entries.size());
    for (std::size_t i = 0; i < entries.size(); ++i) dist[i] = bc_distance(bc, entries[i]);
    std::nth_element(dist.begin(), dist.begin() + (kk - 1), dist.end());
    std::sort(dist.begin(), dist.begin() + kk);
    double sum = 0.0;
    for (std::size_t i = 0; i < kk; ++i) sum += dist[i];
    return sum / static_cast<double>(kk);
  }

  // Text format: "<k> <count>" header, then one "x y" pair per line.
  void save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot write archive file: " + path);
    out << k << " " << entries.size() << "\n";
    for (const auto& e : entries)
      out << format_double(e.x) << " " << format_double(e.y) << "\n";
  }

  static Archive load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot read archive file: " + path);
    Archive a;
    std::size_t count = 0;
    std::string k_tok, n_tok;
    if (!(in >> k_tok >> n_tok)) throw ValidationError("archive header malformed: " + path);
    a.k = static_cast<int>(parse_int(k_tok));
    count = static_cast<std::size_t>(parse_int(n_tok));
    if (a.k < 1) throw ValidationError("archive k must be >= 1");
    a.entries.reserve(count);
    std::string x_tok, y_tok;
    for (std::size_t i = 0; i < count; ++i) {
      if (!(in >> x_tok >> y_tok))
        throw ValidationError("archive truncated at entry " + std::to_string(i));
      a.entries.push_back({parse_double(x_tok), parse_double(y_tok)});
    }
    a.version = static_cast<int>(count);
    return a;
  }
};

// Novelty-proportional choice given one uniform draw in [0,1). All-zero
// novelties fall back to uniform; infinite novelties split uniformly among
// the infinite entries.
inline std::size_t select_member(std::span<const double> novelties, double unit_draw) {
  if (novelties.empty()) throw ValidationError("empty metapopulation");
  for (double n : novelties)
    if (n < 0 || std::isnan(n)) throw ValidationError("novelty must be >= 0");
  std::vector<std::size_t> infinite;
  for (std::size_t i = 0; i < novelties.size(); ++i)
    if (std::isinf(novelties[i])) infinite.push_back(i);
  if (!infinite.empty()) {
    const auto pick = std::min(static_cast<std::size_t>(unit_draw * infinite.size()),
                               infinite.size() - 1);
    return infinite[pick];
  }
  double total = 0.0;
  for (double n : novelties) total += n;
  if (total <= 0.0) {
    return std::min(static_cast<std::size_t>(unit_draw * novelties.size()),
                    novelties.size() - 1);
  }
  double acc = 0.0;
  const double target = unit_draw * total;
  for (std::size_t i = 0; i < novelties.size(); ++i) {
    acc += novelties[i];
    if (target < acc) return i;
  }
  return novelties.size() - 1;
}

// w * fitness + (1 - w) * novelty, elementwise, on already-shaped inputs.
// w = 1 is plain ES scoring, w = 0 pure novelty, w = 0.5 the blended variant.
inline Vec combine_scores(std::span<const double> fitness_shaped,
                          std::span<const double> novelty_shaped, double w) {
  if (fitness_shaped.size() != novelty_shaped.size())
    throw StructuralError("score lengths disagree");
  if (w < 0.0 || w > 1.0) throw ValidationError("combine weight must be in [0,1]");
  Vec out(fitness_shaped.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = w * fitness_shaped[i] + (1.0 - w) * novelty_shaped[i];
  return out;
}

}  // namespace esrl
