#pragma once

#include <cmath>
#include <span>
#include <sstream>
#include <vector>

#include "esrl/common.hpp"

namespace esrl {

// Frozen reference-batch observation standardizer. Fitted once at run start
// from random-policy rollouts, then apply-only.
struct ObsNormalizer {
  Vec mean;
  Vec std;
  bool frozen = false;

  static constexpr double kStdFloor = 1e-6;

  static ObsNormalizer fit(const std::vector<Vec>& batch) {
    if (batch.empty()) throw ValidationError("normalizer fit needs a nonempty batch");
    const std::size_t dim = batch.front().size();
    ObsNormalizer n;
    n.mean.assign(dim, 0.0);
    n.std.assign(dim, 0.0);
    for (const auto& row : batch) {
      if (row.size() != dim) throw StructuralError("normalizer batch rows disagree");
      for (std::size_t i = 0; i < dim; ++i) n.mean[i] += row[i];
    }
    for (auto& m : n.mean) m /= static_cast<double>(batch.size());
    for (const auto& row : batch)
      for (std::size_t i = 0; i < dim; ++i) {
        const double d = row[i] - n.mean[i];
        n.std[i] += d * d;
      }
    for (auto& s : n.std) s = std::max(std::sqrt(s / static_cast<double>(batch.size())), kStdFloor);
    n.frozen = true;
    return n;
  }

  void apply(std::span<const double> obs, std::span<double> out) const {
    for (std::size_t i = 0; i < obs.size(); ++i) out[i] = (obs[i] - mean[i]) / std[i];
  }

  Vec apply(std::span<const double> obs) const {
    Vec out(obs.size());
    apply(obs, out);
    return out;
  }

  std::string to_text() const {
    std::ostringstream os;
    os << "norm_mean";
    for (double v : mean) os << " " << format_double(v);
    os << "\nnorm_std";
    for (double v : std) os << " " << format_double(v);
    os << "\n";
    return os.str();
  }

  static ObsNormalizer from_text_lines(const std::string& mean_line,
                                       const std::string& std_line) {
    ObsNormalizer n;
    auto parse = [](const std::string& line, const char* prefix) {
      std::istringstream is(line);
      std::string key;
      is >> key;
      if (key != prefix) throw ValidationError("bad normalizer line");
      Vec out;
      std::string tok;
      while (is >> tok) out.push_back(parse_double(tok));
      return out;
    };
    n.mean = parse(mean_line, "norm_mean");
    n.std = parse(std_line, "norm_std");
    if (n.mean.size() != n.std.size()) throw StructuralError("normalizer dims disagree");
    n.frozen = true;
    return n;
  }
};

}  // namespace esrl
