#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "esrl/common.hpp"
#include "esrl/rng.hpp"

namespace esrl {

// Shared table of standard-normal draws. Workers rebuild it from (seed, length)
// and afterwards perturbations travel as offsets into it, never as vectors.
class NoiseTable {
 public:
  NoiseTable(std::uint64_t seed, std::size_t length) : seed_(seed) {
    if (length == 0) throw ValidationError("noise table length must be positive");
    entries_.resize(length);
    CounterRng rng(mix_key({seed, seed_tag::noise_table}));
    for (auto& e : entries_) e = rng.next_normal();
  }

  std::uint64_t seed() const { return seed_; }
  std::size_t size() const { return entries_.size(); }

  std::span<const double> slice(std::size_t index, std::size_t len) const {
    if (index + len > entries_.size())
      throw StructuralError("noise slice [" + std::to_string(index) + ", +" +
                            std::to_string(len) + ") exceeds table of " +
                            std::to_string(entries_.size()));
    return {entries_.data() + index, len};
  }

  double operator[](std::size_t i) const { return entries_[i]; }

 private:
  std::uint64_t seed_;
  std::vector<double> entries_;
};

// Uniform slice offset for one mirrored pair, keyed by (run_seed, iteration).
inline std::size_t draw_noise_index(std::uint64_t run_seed, std::int64_t iteration,
                                    int pair_id, std::size_t table_len,
                                    std::size_t genome_len) {
  if (table_len < genome_len) throw ValidationError("noise table shorter than genome");
  CounterRng rng(mix_key({run_seed, seed_tag::pair_index,
                          static_cast<std::uint64_t>(iteration),
                          static_cast<std::uint64_t>(pair_id)}));
  return static_cast<std::size_t>(rng.next_below(table_len - genome_len + 1));
}

}  // namespace esrl
